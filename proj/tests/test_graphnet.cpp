#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "dancegen/errors.hpp"
#include "dancegen/graphnet.hpp"
#include "dancegen/rng.hpp"
#include "fd_check.hpp"

using namespace dancegen;

namespace {

double mask_at(const Tensor& m, int k, int i, int j) {
  return m.at({k, i, j});
}

int count_ones(const Tensor& m) {
  int n = 0;
  for (int i = 0; i < m.numel(); ++i)
    if (m.data()[static_cast<std::size_t>(i)] == 1.0) ++n;
  return n;
}

}  // namespace

TEST_CASE("body pyramid has the four resolutions with tree-like coarse graphs") {
  const auto& p = GraphPyramid::body25();
  REQUIRE(p.levels.size() == 4);
  CHECK(p.levels[0].vertex_count == 1);
  CHECK(p.levels[1].vertex_count == 3);
  CHECK(p.levels[2].vertex_count == 11);
  CHECK(p.levels[3].vertex_count == 25);

  auto off_diag_links = [](const Mat& a) {
    int n = 0;
    for (int i = 0; i < a.rows; ++i)
      for (int j = 0; j < a.cols; ++j)
        if (i != j && a.at(i, j) > 0.0) ++n;
    return n / 2;
  };
  CHECK(off_diag_links(p.levels[3].adjacency) == 24);
  CHECK(off_diag_links(p.levels[2].adjacency) == 10);
  CHECK(off_diag_links(p.levels[1].adjacency) == 2);
  CHECK(off_diag_links(p.levels[0].adjacency) == 0);

  // The 3-vertex graph is a star around the core.
  CHECK(p.levels[1].adjacency.at(0, 1) == 1.0);
  CHECK(p.levels[1].adjacency.at(0, 2) == 1.0);
  CHECK(p.levels[1].adjacency.at(1, 2) == 0.0);

  // Left and right limb chains never touch in the 11-vertex graph.
  CHECK(p.levels[2].adjacency.at(2, 4) == 0.0);
  CHECK(p.levels[2].adjacency.at(1, 2) == 1.0);
  CHECK(p.levels[2].adjacency.at(1, 10) == 1.0);
  CHECK(p.levels[2].adjacency.at(10, 6) == 1.0);
}

TEST_CASE("growing one vertex to three frees exactly the worked-example weights") {
  Tensor m = upsample_mask(GraphPyramid::body25(), 0);
  REQUIRE(m.shape() == Shape{2, 3, 1});
  CHECK(mask_at(m, 0, 0, 0) == 1.0);
  CHECK(mask_at(m, 0, 1, 0) == 0.0);
  CHECK(mask_at(m, 0, 2, 0) == 0.0);
  CHECK(mask_at(m, 1, 0, 0) == 1.0);
  CHECK(mask_at(m, 1, 1, 0) == 1.0);
  CHECK(mask_at(m, 1, 2, 0) == 1.0);
  CHECK(count_ones(m) == 4);
}

TEST_CASE("three-to-eleven mask frees members plus the representative's neighborhood") {
  Tensor m = upsample_mask(GraphPyramid::body25(), 1);
  REQUIRE(m.shape() == Shape{2, 11, 3});
  // Direct class: one representative per group (torso, right upper arm,
  // left upper arm).
  CHECK(mask_at(m, 0, 1, 0) == 1.0);
  CHECK(mask_at(m, 0, 2, 1) == 1.0);
  CHECK(mask_at(m, 0, 4, 2) == 1.0);
  int direct = 0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 3; ++j) direct += mask_at(m, 0, i, j) == 1.0 ? 1 : 0;
  CHECK(direct == 3);

  // Core group reaches its members (head, torso, hips) and the torso's
  // neighbors (both upper arms).
  for (int i : {0, 1, 2, 4, 10}) CHECK(mask_at(m, 1, i, 0) == 1.0);
  CHECK(mask_at(m, 1, 6, 0) == 0.0);
  CHECK(mask_at(m, 1, 3, 0) == 0.0);
  // Right group: members {2,3,6,7} plus the torso next to the right arm.
  for (int i : {1, 2, 3, 6, 7}) CHECK(mask_at(m, 1, i, 1) == 1.0);
  CHECK(mask_at(m, 1, 4, 1) == 0.0);
  CHECK(count_ones(m) == 18);
}

TEST_CASE("collapse masks are the transpose of the growth masks") {
  const auto& p = GraphPyramid::body25();
  for (int s = 0; s < 3; ++s) {
    Tensor up = upsample_mask(p, s);
    Tensor down = downsample_mask(p, s);
    const int vout = up.shape()[1], vin = up.shape()[2];
    REQUIRE(down.shape() == Shape{2, vin, vout});
    for (int k = 0; k < 2; ++k)
      for (int i = 0; i < vout; ++i)
        for (int j = 0; j < vin; ++j) CHECK(mask_at(up, k, i, j) == mask_at(down, k, j, i));
  }
}

TEST_CASE("aggregation reproduces the single-source worked example") {
  Rng rng(5);
  AggregationMatrix a("agg", upsample_mask(GraphPyramid::body25(), 0), rng);
  Tensor wt = a.parameters()[0].tensor;
  auto* w = wt.mutable_data().data();
  // Layout (k, i, j) with V_out=3, V_in=1.
  const double a000 = 0.7, a100 = -0.3, a110 = 0.45, a120 = 1.25;
  w[0] = a000;
  w[3] = a100;
  w[4] = a110;
  w[5] = a120;
  Tensor f = Tensor::from_data({1, 2, 1}, {2.0, -1.5});
  Tensor out = a.apply(f);
  REQUIRE(out.shape() == Shape{1, 2, 3});
  CHECK(out.at({0, 0, 0}) == doctest::Approx((a000 + a100) * 2.0).epsilon(1e-12));
  CHECK(out.at({0, 0, 1}) == doctest::Approx(a110 * 2.0).epsilon(1e-12));
  CHECK(out.at({0, 0, 2}) == doctest::Approx(a120 * 2.0).epsilon(1e-12));
  CHECK(out.at({0, 1, 0}) == doctest::Approx((a000 + a100) * -1.5).epsilon(1e-12));
}

TEST_CASE("aggregation with an identity pattern is the identity") {
  std::vector<double> mv(2 * 3 * 3, 0.0);
  for (int i = 0; i < 3; ++i) mv[static_cast<std::size_t>(i * 3 + i)] = 1.0;
  Tensor mask = Tensor::from_data({2, 3, 3}, std::move(mv));
  Rng rng(6);
  AggregationMatrix a("ident", mask, rng);
  Tensor wt = a.parameters()[0].tensor;
  for (int i = 0; i < 3; ++i) wt.mutable_data()[static_cast<std::size_t>(i * 3 + i)] = 1.0;
  Rng frng(7);
  Tensor f = testsupport::random_tensor({4, 5, 3}, frng, false);
  Tensor out = a.apply(f);
  for (int i = 0; i < f.numel(); ++i)
    CHECK(out.data()[static_cast<std::size_t>(i)] ==
          doctest::Approx(f.data()[static_cast<std::size_t>(i)]).epsilon(1e-12));
}

TEST_CASE("aggregation matches the brute-force triple loop") {
  const auto& p = GraphPyramid::body25();
  Rng rng(8);
  AggregationMatrix up("u", upsample_mask(p, 1), rng);
  AggregationMatrix down("d", downsample_mask(p, 2), rng);
  Rng frng(9);
  Tensor f3 = testsupport::random_tensor({2, 3, 3}, frng, false);
  Tensor f25 = testsupport::random_tensor({2, 3, 25}, frng, false);

  auto brute = [](const AggregationMatrix& a, const Tensor& f) {
    const int c = f.shape()[0], t = f.shape()[1];
    const int vout = a.mask().shape()[1], vin = a.mask().shape()[2];
    std::vector<double> out(static_cast<std::size_t>(c) * t * vout, 0.0);
    for (int ci = 0; ci < c; ++ci)
      for (int ti = 0; ti < t; ++ti)
        for (int i = 0; i < vout; ++i) {
          double acc = 0.0;
          for (int k = 0; k < 2; ++k)
            for (int j = 0; j < vin; ++j)
              acc += a.mask().at({k, i, j}) * a.weights().at({k, i, j}) * f.at({ci, ti, j});
          out[(static_cast<std::size_t>(ci) * t + ti) * vout + i] = acc;
        }
    return out;
  };

  Tensor got_up = up.apply(f3);
  auto want_up = brute(up, f3);
  REQUIRE(got_up.shape() == Shape{2, 3, 11});
  for (int i = 0; i < got_up.numel(); ++i)
    CHECK(std::abs(got_up.data()[static_cast<std::size_t>(i)] -
                   want_up[static_cast<std::size_t>(i)]) < 1e-12);

  Tensor got_down = down.apply(f25);
  auto want_down = brute(down, f25);
  REQUIRE(got_down.shape() == Shape{2, 3, 11});
  for (int i = 0; i < got_down.numel(); ++i)
    CHECK(std::abs(got_down.data()[static_cast<std::size_t>(i)] -
                   want_down[static_cast<std::size_t>(i)]) < 1e-12);
}

TEST_CASE("masked aggregation weights stay exactly zero through gradient steps") {
  const auto& p = GraphPyramid::body25();
  Rng rng(10);
  AggregationMatrix a("frozen", upsample_mask(p, 1), rng);
  Rng frng(11);
  for (int step = 0; step < 3; ++step) {
    Tensor f = testsupport::random_tensor({2, 2, 3}, frng, false);
    Tensor loss = sum(a.apply(f));
    backward(loss);
    Tensor wt = a.parameters()[0].tensor;
    auto& w = wt.mutable_data();
    const auto& g = wt.grad();
    for (int idx = 0; idx < a.weights().numel(); ++idx) {
      if (a.mask().data()[static_cast<std::size_t>(idx)] == 0.0) {
        CHECK(g[static_cast<std::size_t>(idx)] == 0.0);
      }
      w[static_cast<std::size_t>(idx)] -= 0.05 * g[static_cast<std::size_t>(idx)];
    }
  }
  int zeros = 0;
  for (int idx = 0; idx < a.weights().numel(); ++idx) {
    if (a.mask().data()[static_cast<std::size_t>(idx)] == 0.0) {
      CHECK(a.weights().data()[static_cast<std::size_t>(idx)] == 0.0);
      ++zeros;
    }
  }
  CHECK(zeros == 2 * 11 * 3 - 18);
}

TEST_CASE("aggregation gradients agree with finite differences") {
  const auto& p = GraphPyramid::body25();
  Rng rng(12);
  AggregationMatrix a("fd", upsample_mask(p, 0), rng);
  Rng frng(13);
  Tensor f = testsupport::random_tensor({2, 3, 1}, frng, true);
  Rng wrng(14);
  Tensor w = testsupport::random_tensor({2, 3, 3}, wrng, false);
  auto loss_fn = [&]() { return testsupport::weighted_sum(a.apply(f), w); };
  double err = testsupport::fd_max_rel_error(loss_fn, {f, a.weights()});
  CHECK(err < 1e-7);
}

TEST_CASE("neighbor normalization: path graph flips and isolated vertex zeroes") {
  Mat a(2, 2);
  a.at(0, 0) = a.at(1, 1) = a.at(0, 1) = a.at(1, 0) = 1.0;
  Mat n = neighbor_normalized(a);
  CHECK(n.at(0, 0) == 0.0);
  CHECK(n.at(1, 1) == 0.0);
  CHECK(n.at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(n.at(1, 0) == doctest::Approx(1.0).epsilon(1e-12));

  Mat lone(1, 1);
  lone.at(0, 0) = 1.0;
  Mat nl = neighbor_normalized(lone);
  CHECK(nl.at(0, 0) == 0.0);
}

TEST_CASE("single-vertex graph conv reduces to its temporal path") {
  Mat lone(1, 1);
  lone.at(0, 0) = 1.0;
  Rng rng(15);
  StGraphConv conv("lone", 1, 1, lone, 0.2, 0.0, rng);
  auto params = conv.parameters();
  // Identity temporal kernel: center tap of the 9-wide filter.
  for (auto& p : params) {
    auto& d = p.tensor.mutable_data();
    if (p.name == "lone.self") d[0] = 1.0;
    if (p.name == "lone.neighbor") d[0] = 5.0;
    if (p.name == "lone.tkernel") {
      std::fill(d.begin(), d.end(), 0.0);
      d[4] = 1.0;
    }
    if (p.name == "lone.tbias") d[0] = 0.0;
  }
  Tensor x = Tensor::from_data({1, 4, 1}, {0.5, -0.25, 1.5, 2.0});
  Tensor out = conv.forward(x, false, nullptr);
  REQUIRE(out.shape() == Shape{1, 4, 1});
  const double scale = 1.0 / std::sqrt(1.0 + 1e-5);
  for (int t = 0; t < 4; ++t) {
    double pre = x.at({0, t, 0}) * scale;
    double want = pre > 0 ? pre : 0.2 * pre;
    CHECK(out.at({0, t, 0}) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("two-node path conv matches hand-computed propagation") {
  Mat path(2, 2);
  path.at(0, 0) = path.at(1, 1) = path.at(0, 1) = path.at(1, 0) = 1.0;
  Rng rng(16);
  StGraphConv conv("path", 1, 1, path, 0.2, 0.0, rng);
  const double w_self = 0.8, w_nb = -0.5;
  for (auto& p : conv.parameters()) {
    auto& d = p.tensor.mutable_data();
    if (p.name == "path.self") d[0] = w_self;
    if (p.name == "path.neighbor") d[0] = w_nb;
    if (p.name == "path.tkernel") {
      std::fill(d.begin(), d.end(), 0.0);
      d[4] = 1.0;
    }
  }
  const double fa = 1.2, fb = -0.4;
  Tensor x = Tensor::from_data({1, 1, 2}, {fa, fb});
  Tensor out = conv.forward(x, false, nullptr);
  const double scale = 1.0 / std::sqrt(1.0 + 1e-5);
  auto post = [&](double v) {
    double z = v * scale;
    return z > 0 ? z : 0.2 * z;
  };
  CHECK(out.at({0, 0, 0}) == doctest::Approx(post(w_self * fa + w_nb * fb)).epsilon(1e-12));
  CHECK(out.at({0, 0, 1}) == doctest::Approx(post(w_self * fb + w_nb * fa)).epsilon(1e-12));
}

TEST_CASE("graph conv keeps (T,V) and changes channels") {
  const auto& p = GraphPyramid::body25();
  Rng rng(17);
  StGraphConv conv("shape", 3, 5, p.levels[2].adjacency, 0.2, 0.0, rng);
  Rng frng(18);
  Tensor x = testsupport::random_tensor({3, 7, 11}, frng, false);
  Tensor out = conv.forward(x, false, nullptr);
  CHECK(out.shape() == Shape{5, 7, 11});
  CHECK_THROWS_AS(conv.forward(Tensor::zeros({3, 7, 25}), false, nullptr), ShapeError);
  CHECK_THROWS_AS(conv.forward(Tensor::zeros({4, 7, 11}), false, nullptr), ShapeError);
}

TEST_CASE("graph conv gradients agree with finite differences in train mode") {
  Mat path(2, 2);
  path.at(0, 0) = path.at(1, 1) = path.at(0, 1) = path.at(1, 0) = 1.0;
  Rng rng(19);
  StGraphConv conv("fdconv", 2, 2, path, 0.2, 0.0, rng);
  Rng frng(20);
  Tensor x = testsupport::random_tensor({2, 5, 2}, frng, true);
  Rng wrng(21);
  Tensor w = testsupport::random_tensor({2, 5, 2}, wrng, false);
  std::vector<Tensor> leaves = {x};
  for (auto& p : conv.parameters()) leaves.push_back(p.tensor);
  auto loss_fn = [&]() { return testsupport::weighted_sum(conv.forward(x, true, nullptr), w); };
  double err = testsupport::fd_max_rel_error(loss_fn, leaves);
  CHECK(err < 1e-6);
}

TEST_CASE("generator maps latent steps to sixteenfold frames on 25 joints") {
  NetConfig cfg;
  cfg.latent_channels = 8;
  cfg.taper = {6, 5, 4, 4};
  cfg.dropout = 0.0;
  Rng rng(22);
  Generator g(cfg, rng);
  for (int steps : {1, 2, 3}) {
    Tensor latent = Tensor::zeros({8, steps, 1});
    Tensor out = g.forward(latent, false, nullptr);
    CHECK(out.shape() == Shape{2, 16 * steps, 25});
  }
  CHECK_THROWS_AS(g.forward(Tensor::zeros({8, 2, 2}), false, nullptr), ShapeError);
  CHECK_THROWS_AS(g.forward(Tensor::zeros({7, 2, 1}), false, nullptr), ShapeError);
}

TEST_CASE("full-width generator and discriminator satisfy the default shape contract") {
  NetConfig cfg;
  Rng rng(23);
  Generator g(cfg, rng);
  Rng lrng(24);
  Tensor latent = testsupport::random_tensor({1024, 4, 1}, lrng, false);
  Tensor motion = g.forward(latent, false, nullptr);
  REQUIRE(motion.shape() == Shape{2, 64, 25});

  Rng drng(25);
  Discriminator d(cfg, drng);
  Tensor score = d.forward(motion, StyleLabel::Ballet, false, nullptr);
  REQUIRE(score.shape() == Shape{1});
  CHECK(score.at({0}) > 0.0);
  CHECK(score.at({0}) < 1.0);
  assert_mirror(g, d);
}

TEST_CASE("generator construction and forward are deterministic under a fixed seed") {
  NetConfig cfg;
  cfg.latent_channels = 6;
  cfg.taper = {5, 4, 3, 3};
  cfg.dropout = 0.0;
  Rng ra(31), rb(31);
  Generator ga(cfg, ra), gb(cfg, rb);
  Rng la(32), lb(32);
  Tensor za = testsupport::random_tensor({6, 2, 1}, la, false);
  Tensor zb = testsupport::random_tensor({6, 2, 1}, lb, false);
  Tensor oa = ga.forward(za, false, nullptr);
  Tensor ob = gb.forward(zb, false, nullptr);
  for (int i = 0; i < oa.numel(); ++i)
    CHECK(oa.data()[static_cast<std::size_t>(i)] == ob.data()[static_cast<std::size_t>(i)]);
}

TEST_CASE("miniature generator passes an end-to-end finite-difference check") {
  NetConfig cfg;
  cfg.latent_channels = 4;
  cfg.taper = {3, 3, 2, 2};
  cfg.dropout = 0.0;
  Rng rng(26);
  Generator g(cfg, rng);
  Rng lrng(27);
  Tensor latent = testsupport::random_tensor({4, 1, 1}, lrng, true);
  Rng wrng(28);
  Tensor w = testsupport::random_tensor({2, 16, 25}, wrng, false);
  std::vector<Tensor> leaves = {latent};
  for (auto& p : g.parameters()) leaves.push_back(p.tensor);
  auto loss_fn = [&]() { return testsupport::weighted_sum(g.forward(latent, true, nullptr), w); };
  double err = testsupport::fd_max_rel_error(loss_fn, leaves);
  CHECK(err < 1e-4);
}

TEST_CASE("generator batch norm tracks running statistics only in training mode") {
  NetConfig cfg;
  cfg.latent_channels = 4;
  cfg.taper = {3, 3, 2, 2};
  cfg.dropout = 0.0;
  Rng rng(29);
  Generator g(cfg, rng);
  auto buffers = g.buffers();
  REQUIRE(!buffers.empty());
  std::vector<double> before = *buffers[0].values;
  Rng lrng(30);
  Tensor latent = testsupport::random_tensor({4, 2, 1}, lrng, false);
  g.forward(latent, false, nullptr);
  CHECK(*buffers[0].values == before);
  g.forward(latent, true, nullptr);
  CHECK(*buffers[0].values != before);
}

TEST_CASE("discriminator rejects frame counts that are not multiples of sixteen") {
  NetConfig cfg;
  cfg.latent_channels = 8;
  cfg.taper = {6, 5, 4, 4};
  Rng rng(33);
  Discriminator d(cfg, rng);
  CHECK_THROWS_AS(d.forward(Tensor::zeros({2, 24, 25}), StyleLabel::MJ, false, nullptr),
                  ShapeError);
  CHECK_THROWS_AS(d.forward(Tensor::zeros({2, 0, 25}), StyleLabel::MJ, false, nullptr),
                  ShapeError);
  CHECK_THROWS_AS(d.forward(Tensor::zeros({3, 32, 25}), StyleLabel::MJ, false, nullptr),
                  ShapeError);
}

TEST_CASE("untrained discriminators score random motion away from the extremes") {
  NetConfig cfg;
  cfg.latent_channels = 32;
  cfg.taper = {16, 12, 8, 8};
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed) + 1000);
    Discriminator d(cfg, rng);
    Rng mrng(static_cast<std::uint64_t>(seed) + 5000);
    Tensor motion = testsupport::random_tensor({2, 32, 25}, mrng, false);
    StyleLabel style = style_from_index(seed % 3);
    double score = d.forward(motion, style, false, nullptr).at({0});
    CHECK(score > 0.01);
    CHECK(score < 0.99);
  }
}

TEST_CASE("style conditioning adds the class either as index channel or one hot") {
  Tensor motion = Tensor::full({2, 16, 4}, 0.25);
  Tensor scalar = with_class_channel(motion, StyleLabel::Salsa, false);
  REQUIRE(scalar.shape() == Shape{3, 16, 4});
  CHECK(scalar.at({2, 0, 0}) == 1.0);
  Tensor mid = with_class_channel(motion, StyleLabel::MJ, false);
  CHECK(mid.at({2, 3, 1}) == 0.5);
  CHECK(mid.at({0, 3, 1}) == 0.25);

  Tensor hot = with_class_channel(motion, StyleLabel::MJ, true);
  REQUIRE(hot.shape() == Shape{5, 16, 4});
  CHECK(hot.at({2, 0, 0}) == 0.0);
  CHECK(hot.at({3, 0, 0}) == 1.0);
  CHECK(hot.at({4, 0, 0}) == 0.0);
}

TEST_CASE("discriminator responds to the style condition") {
  NetConfig cfg;
  cfg.latent_channels = 16;
  cfg.taper = {8, 6, 4, 4};
  Rng rng(34);
  Discriminator d(cfg, rng);
  Rng mrng(35);
  Tensor motion = testsupport::random_tensor({2, 16, 25}, mrng, false);
  double a = d.forward(motion, StyleLabel::Ballet, false, nullptr).at({0});
  double b = d.forward(motion, StyleLabel::Salsa, false, nullptr).at({0});
  double a2 = d.forward(motion, StyleLabel::Ballet, false, nullptr).at({0});
  CHECK(a == a2);
  CHECK(a != b);
}

TEST_CASE("mirror assertion rejects mismatched generator and discriminator") {
  NetConfig ga;
  ga.latent_channels = 8;
  ga.taper = {6, 5, 4, 4};
  NetConfig db = ga;
  db.taper = {6, 5, 4, 3};
  Rng r1(36), r2(37);
  Generator g(ga, r1);
  Discriminator d(db, r2);
  CHECK_THROWS_AS(assert_mirror(g, d), ShapeError);
}

TEST_CASE("discriminator gradients flow through every parameter") {
  NetConfig cfg;
  cfg.latent_channels = 8;
  cfg.taper = {6, 5, 4, 4};
  cfg.dropout = 0.0;
  Rng rng(38);
  Discriminator d(cfg, rng);
  Rng mrng(39);
  // 16 frames would leave one value per channel at the last stage, which
  // training-mode batch norm rejects; 32 frames is the training minimum.
  CHECK_THROWS_AS(d.forward(Tensor::zeros({2, 16, 25}), StyleLabel::Ballet, true, nullptr),
                  NumericError);
  Tensor motion = testsupport::random_tensor({2, 32, 25}, mrng, true);
  Tensor score = d.forward(motion, StyleLabel::Ballet, true, nullptr);
  backward(score);
  int nonzero_params = 0;
  for (auto& p : d.parameters()) {
    bool any = false;
    for (double v : p.tensor.grad())
      if (v != 0.0) any = true;
    if (any) ++nonzero_params;
  }
  // Every tensor except frozen mask slots should receive some gradient.
  CHECK(nonzero_params == static_cast<int>(d.parameters().size()));
  bool motion_grad = false;
  for (double v : motion.grad())
    if (v != 0.0) motion_grad = true;
  CHECK(motion_grad);
}
