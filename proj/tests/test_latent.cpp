#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "dancegen/errors.hpp"
#include "dancegen/latent.hpp"
#include "dancegen/linalg.hpp"
#include "dancegen/rng.hpp"

using namespace dancegen;

TEST_CASE("gp config invariants are enforced") {
  CHECK_THROWS_AS(GpSampler({0, 4, 1, 200.0}), ConfigError);
  CHECK_THROWS_AS(GpSampler({8, 0, 1, 200.0}), ConfigError);
  CHECK_THROWS_AS(GpSampler({8, 4, 2, 200.0}), ConfigError);
  CHECK_THROWS_AS(GpSampler({8, 4, 1, 0.0}), ConfigError);
  CHECK_THROWS_AS(GpSampler({8, 4, 1, -1.0}), ConfigError);
}

TEST_CASE("channel bandwidth scales linearly and the kernel matches by hand") {
  GpSampler s({512, 4, 1, 200.0});
  CHECK(s.channel_sigma(256) == 100.0);
  CHECK(s.channel_sigma(512 / 2) == doctest::Approx(100.0));
  CHECK(s.channel_sigma(0) == 0.0);

  Mat k = s.kernel(256);
  CHECK(k.at(0, 0) == 1.0);
  CHECK(k.at(3, 3) == 1.0);
  CHECK(k.at(0, 3) == doctest::Approx(std::exp(-9.0 / 20000.0)).epsilon(1e-14));
  CHECK(k.at(0, 3) == doctest::Approx(0.99955).epsilon(1e-5));
  CHECK(k.at(0, 3) == k.at(3, 0));
}

TEST_CASE("channel zero degenerates to white noise") {
  GpSampler s({8, 5, 1, 4.0});
  Mat k = s.kernel(0);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      CHECK(k.at(i, j) == (i == j ? 1.0 : 0.0));
    }
  }
  const Mat& l = s.factor(0);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      CHECK(l.at(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("cholesky factors reconstruct their kernels") {
  GpSampler s({16, 6, 1, 12.0});
  for (int c : {1, 4, 8, 15}) {
    Mat k = s.kernel(c);
    const Mat& l = s.factor(c);
    Mat lt = mat_transpose(l);
    Mat back = mat_mul(l, lt);
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j < 6; ++j) {
        CHECK(std::abs(back.at(i, j) - k.at(i, j)) < 1e-8);
      }
    }
  }
}

TEST_CASE("very wide kernels survive via jitter") {
  // sigma_c near 200 makes the kernel almost rank one; the sampler must
  // still produce usable factors for every channel.
  GpSampler s({512, 4, 1, 200.0});
  const Mat& l = s.factor(511);
  double diag_min = 1e300;
  for (int i = 0; i < 4; ++i) diag_min = std::min(diag_min, l.at(i, i));
  CHECK(diag_min > 0.0);
  CHECK(std::isfinite(l.at(3, 0)));
}

TEST_CASE("expected path roughness decreases monotonically across channels") {
  GpSampler s({512, 4, 1, 200.0});
  auto diff_energy = [&](int c) {
    const Mat& l = s.factor(c);
    double e = 0.0;
    for (int t = 0; t + 1 < l.rows; ++t) {
      for (int k = 0; k < l.cols; ++k) {
        double d = l.at(t + 1, k) - l.at(t, k);
        e += d * d;
      }
    }
    return e;
  };
  double prev = diff_energy(0);
  for (int c = 1; c < 512; ++c) {
    double cur = diff_energy(c);
    CHECK(cur <= prev + 1e-9);
    prev = cur;
  }
}

TEST_CASE("sampled paths get smoother as the channel index grows") {
  // Shared standard normal draws across channels make adjacent comparisons
  // near deterministic.
  GpConfig cfg{16, 8, 1, 20.0};
  GpSampler s(cfg);
  Rng rng(1234);
  std::vector<double> mean_abs_diff(static_cast<std::size_t>(cfg.channels), 0.0);
  const int draws = 2000;
  std::vector<double> eps(static_cast<std::size_t>(cfg.steps));
  std::vector<double> z(static_cast<std::size_t>(cfg.steps));
  for (int d = 0; d < draws; ++d) {
    for (auto& e : eps) e = rng.normal();
    for (int c = 0; c < cfg.channels; ++c) {
      const Mat& l = s.factor(c);
      for (int t = 0; t < cfg.steps; ++t) {
        double acc = 0.0;
        for (int k = 0; k <= t; ++k) acc += l.at(t, k) * eps[static_cast<std::size_t>(k)];
        z[static_cast<std::size_t>(t)] = acc;
      }
      for (int t = 0; t + 1 < cfg.steps; ++t)
        mean_abs_diff[static_cast<std::size_t>(c)] +=
            std::abs(z[static_cast<std::size_t>(t + 1)] - z[static_cast<std::size_t>(t)]);
    }
  }
  int ok = 0;
  for (int c = 0; c + 1 < cfg.channels; ++c) {
    if (mean_abs_diff[static_cast<std::size_t>(c + 1)] <=
        mean_abs_diff[static_cast<std::size_t>(c)])
      ++ok;
  }
  CHECK(ok >= 15);
}

TEST_CASE("empirical covariance of 20000 draws matches the kernel within 0.05") {
  GpConfig cfg{16, 4, 1, 8.0};
  GpSampler s(cfg);
  const int channel = 8;
  Mat k = s.kernel(channel);
  const Mat& l = s.factor(channel);
  Rng rng(99);
  Mat cov(4, 4);
  std::vector<double> z(4);
  const int draws = 20000;
  for (int d = 0; d < draws; ++d) {
    double e0 = rng.normal(), e1 = rng.normal(), e2 = rng.normal(), e3 = rng.normal();
    const double eps[4] = {e0, e1, e2, e3};
    for (int t = 0; t < 4; ++t) {
      double acc = 0.0;
      for (int j = 0; j <= t; ++j) acc += l.at(t, j) * eps[j];
      z[static_cast<std::size_t>(t)] = acc;
    }
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) cov.at(i, j) += z[static_cast<std::size_t>(i)] * z[static_cast<std::size_t>(j)];
  }
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      CHECK(std::abs(cov.at(i, j) / draws - k.at(i, j)) < 0.05);
    }
  }
}

TEST_CASE("sample returns the configured shape deterministically") {
  GpConfig cfg{32, 4, 1, 50.0};
  GpSampler s(cfg);
  Rng a(7), b(7), c(8);
  Tensor ta = s.sample(a);
  Tensor tb = s.sample(b);
  Tensor tc = s.sample(c);
  REQUIRE(ta.shape() == Shape{32, 4, 1});
  CHECK(!ta.requires_grad());
  bool identical = true, differs = false;
  for (int i = 0; i < ta.numel(); ++i) {
    if (ta.data()[static_cast<std::size_t>(i)] != tb.data()[static_cast<std::size_t>(i)])
      identical = false;
    if (ta.data()[static_cast<std::size_t>(i)] != tc.data()[static_cast<std::size_t>(i)])
      differs = true;
  }
  CHECK(identical);
  CHECK(differs);
}

TEST_CASE("style embedding gathers rows per step") {
  Rng rng(11);
  StyleEmbedding emb(6, rng);
  REQUIRE(emb.table().shape() == Shape{3, 6});
  Tensor out = emb.embed({StyleLabel::Ballet, StyleLabel::Ballet, StyleLabel::Salsa,
                          StyleLabel::Salsa});
  REQUIRE(out.shape() == Shape{6, 4, 1});
  for (int ch = 0; ch < 6; ++ch) {
    CHECK(out.at({ch, 0, 0}) == emb.table().at({0, ch}));
    CHECK(out.at({ch, 1, 0}) == out.at({ch, 0, 0}));
    CHECK(out.at({ch, 2, 0}) == emb.table().at({2, ch}));
  }
  // Steps with different labels differ somewhere in the embedded block.
  bool any_diff = false;
  for (int ch = 0; ch < 6; ++ch) {
    if (out.at({ch, 1, 0}) != out.at({ch, 2, 0})) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("assemble_latent stacks noise over style rows") {
  Rng rng(12);
  StyleEmbedding emb(2, rng);
  Tensor noise = Tensor::from_data({2, 1, 1}, {1.5, -2.25});
  Tensor latent = assemble_latent(noise, {StyleLabel::MJ}, emb);
  REQUIRE(latent.shape() == Shape{4, 1, 1});
  CHECK(latent.at({0, 0, 0}) == 1.5);
  CHECK(latent.at({1, 0, 0}) == -2.25);
  CHECK(latent.at({2, 0, 0}) == emb.table().at({1, 0}));
  CHECK(latent.at({3, 0, 0}) == emb.table().at({1, 1}));
}

TEST_CASE("assemble_latent validates shapes and step counts") {
  Rng rng(13);
  StyleEmbedding emb(4, rng);
  CHECK_THROWS_AS(assemble_latent(Tensor::zeros({4, 2, 1}), {StyleLabel::Ballet}, emb),
                  ShapeError);
  CHECK_THROWS_AS(assemble_latent(Tensor::zeros({5, 1, 1}), {StyleLabel::Ballet}, emb),
                  ShapeError);
  CHECK_THROWS_AS(assemble_latent(Tensor::zeros({4, 1, 2}), {StyleLabel::Ballet}, emb),
                  ShapeError);
}

TEST_CASE("gradients reach the embedding table through assembled latents") {
  Rng rng(14);
  StyleEmbedding emb(3, rng);
  Tensor noise = Tensor::zeros({3, 4, 1});
  std::vector<StyleLabel> styles = {StyleLabel::Ballet, StyleLabel::Ballet, StyleLabel::Salsa,
                                    StyleLabel::MJ};
  Tensor latent = assemble_latent(noise, styles, emb);

  Rng wrng(15);
  Tensor w = Tensor::zeros({6, 4, 1});
  for (int i = 0; i < w.numel(); ++i) w.mutable_data()[static_cast<std::size_t>(i)] = wrng.uniform(-1.0, 1.0);
  Tensor loss = sum(mul(latent, w));
  backward(loss);

  Tensor table = emb.parameters()[0].tensor;
  // Ballet row collects steps 0 and 1, Salsa step 2, MJ step 3; weights are
  // read from the style half of the latent block.
  for (int ch = 0; ch < 3; ++ch) {
    double ballet = w.at({3 + ch, 0, 0}) + w.at({3 + ch, 1, 0});
    double mj = w.at({3 + ch, 3, 0});
    double salsa = w.at({3 + ch, 2, 0});
    CHECK(table.grad()[static_cast<std::size_t>(0 * 3 + ch)] == doctest::Approx(ballet).epsilon(1e-12));
    CHECK(table.grad()[static_cast<std::size_t>(1 * 3 + ch)] == doctest::Approx(mj).epsilon(1e-12));
    CHECK(table.grad()[static_cast<std::size_t>(2 * 3 + ch)] == doctest::Approx(salsa).epsilon(1e-12));
  }
}

TEST_CASE("latent step count is frame count over sixteen") {
  CHECK(latent_length_for(64) == 4);
  CHECK(latent_length_for(16) == 1);
  CHECK(latent_length_for(192) == 12);
  CHECK_THROWS_AS(latent_length_for(63), ConfigError);
  CHECK_THROWS_AS(latent_length_for(0), ConfigError);
  CHECK_THROWS_AS(latent_length_for(-16), ConfigError);
}
