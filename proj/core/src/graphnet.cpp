#include "dancegen/graphnet.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>
#include <utility>

#include "dancegen/errors.hpp"

namespace dancegen {

namespace {

Mat adjacency_from_edges(int n, const std::vector<std::pair<int, int>>& edges) {
  Mat a(n, n);
  for (int i = 0; i < n; ++i) a.at(i, i) = 1.0;
  for (auto [u, v] : edges) {
    a.at(u, v) = 1.0;
    a.at(v, u) = 1.0;
  }
  return a;
}

Mat coarsen_adjacency(const Mat& fine, const std::vector<std::vector<int>>& members) {
  const int n = static_cast<int>(members.size());
  Mat a(n, n);
  for (int i = 0; i < n; ++i) a.at(i, i) = 1.0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      bool touch = false;
      for (int u : members[static_cast<std::size_t>(i)]) {
        for (int v : members[static_cast<std::size_t>(j)]) {
          if (fine.at(u, v) > 0.0) touch = true;
        }
      }
      if (touch) {
        a.at(i, j) = 1.0;
        a.at(j, i) = 1.0;
      }
    }
  }
  return a;
}

void check_level(const GraphLevel& level, const char* what) {
  const int n = level.vertex_count;
  if (level.adjacency.rows != n || level.adjacency.cols != n)
    throw ShapeError(std::string("GraphPyramid: ") + what + " adjacency size mismatch");
  for (int i = 0; i < n; ++i) {
    if (level.adjacency.at(i, i) != 1.0)
      throw DataError(std::string("GraphPyramid: ") + what + " is missing a self loop");
    for (int j = 0; j < n; ++j) {
      if (level.adjacency.at(i, j) != level.adjacency.at(j, i))
        throw DataError(std::string("GraphPyramid: ") + what + " adjacency not symmetric");
    }
  }
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  std::deque<int> queue{0};
  seen[0] = true;
  int count = 0;
  while (!queue.empty()) {
    int u = queue.front();
    queue.pop_front();
    ++count;
    for (int v = 0; v < n; ++v) {
      if (level.adjacency.at(u, v) > 0.0 && !seen[static_cast<std::size_t>(v)]) {
        seen[static_cast<std::size_t>(v)] = true;
        queue.push_back(v);
      }
    }
  }
  if (count != n) throw DataError(std::string("GraphPyramid: ") + what + " is disconnected");
}

std::size_t mask_index(int k, int i, int j, int vout, int vin) {
  return (static_cast<std::size_t>(k) * vout + i) * vin + j;
}

}  // namespace

const GraphPyramid& GraphPyramid::body25() {
  static const GraphPyramid pyramid = [] {
    GraphPyramid p;
    const auto& topo = SkeletonTopology::body25();
    Mat a25 = adjacency_from_edges(topo.joint_count, topo.edges);

    // 25 -> 11: anatomically contiguous groups, each carried by one joint.
    std::vector<std::vector<int>> m11 = {
        {0, 15, 16, 17, 18},  // head
        {1},                  // torso
        {2, 3},               // right upper arm
        {4},                  // right forearm and hand
        {5, 6},               // left upper arm
        {7},                  // left forearm and hand
        {9, 10},              // right thigh
        {11, 22, 23, 24},     // right shin and foot
        {12, 13},             // left thigh
        {14, 19, 20, 21},     // left shin and foot
        {8},                  // hips
    };
    std::vector<int> r11 = {0, 1, 2, 4, 5, 7, 9, 11, 12, 14, 8};
    Mat a11 = coarsen_adjacency(a25, m11);

    // 11 -> 3: core, right limbs, left limbs.
    std::vector<std::vector<int>> m3 = {{0, 1, 10}, {2, 3, 6, 7}, {4, 5, 8, 9}};
    std::vector<int> r3 = {1, 2, 4};
    Mat a3 = coarsen_adjacency(a11, m3);

    std::vector<std::vector<int>> m1 = {{0, 1, 2}};
    std::vector<int> r1 = {0};
    Mat a1 = coarsen_adjacency(a3, m1);

    p.levels = {{1, a1}, {3, a3}, {11, a11}, {25, a25}};
    p.members = {m1, m3, m11};
    p.rep = {r1, r3, r11};

    const char* names[] = {"level 1", "level 3", "level 11", "level 25"};
    for (std::size_t s = 0; s < p.levels.size(); ++s) check_level(p.levels[s], names[s]);
    for (std::size_t s = 0; s < p.members.size(); ++s) {
      const int fine_count = p.levels[s + 1].vertex_count;
      std::vector<bool> used(static_cast<std::size_t>(fine_count), false);
      for (std::size_t g = 0; g < p.members[s].size(); ++g) {
        bool rep_inside = false;
        for (int v : p.members[s][g]) {
          if (used[static_cast<std::size_t>(v)])
            throw DataError("GraphPyramid: vertex assigned to two groups");
          used[static_cast<std::size_t>(v)] = true;
          if (v == p.rep[s][g]) rep_inside = true;
        }
        if (!rep_inside) throw DataError("GraphPyramid: group representative outside group");
      }
      for (bool u : used)
        if (!u) throw DataError("GraphPyramid: vertex missing from every group");
    }
    return p;
  }();
  return pyramid;
}

static void check_pyramid_level(const GraphPyramid& pyramid, int coarse, const char* who) {
  if (coarse < 0 || coarse + 1 >= static_cast<int>(pyramid.levels.size()))
    throw ShapeError(std::string(who) + ": no level pair at coarse index " +
                     std::to_string(coarse));
}

Tensor upsample_mask(const GraphPyramid& pyramid, int coarse) {
  check_pyramid_level(pyramid, coarse, "upsample_mask");
  const int vin = pyramid.levels[static_cast<std::size_t>(coarse)].vertex_count;
  const int vout = pyramid.levels[static_cast<std::size_t>(coarse + 1)].vertex_count;
  const Mat& fine = pyramid.levels[static_cast<std::size_t>(coarse + 1)].adjacency;
  std::vector<double> m(static_cast<std::size_t>(2) * vout * vin, 0.0);
  for (int j = 0; j < vin; ++j) {
    const int rep = pyramid.rep[static_cast<std::size_t>(coarse)][static_cast<std::size_t>(j)];
    m[mask_index(0, rep, j, vout, vin)] = 1.0;
    for (int i : pyramid.members[static_cast<std::size_t>(coarse)][static_cast<std::size_t>(j)])
      m[mask_index(1, i, j, vout, vin)] = 1.0;
    for (int i = 0; i < vout; ++i) {
      if (fine.at(rep, i) > 0.0) m[mask_index(1, i, j, vout, vin)] = 1.0;
    }
  }
  return Tensor::from_data({2, vout, vin}, std::move(m));
}

Tensor downsample_mask(const GraphPyramid& pyramid, int coarse) {
  check_pyramid_level(pyramid, coarse, "downsample_mask");
  const int vout = pyramid.levels[static_cast<std::size_t>(coarse)].vertex_count;
  const int vin = pyramid.levels[static_cast<std::size_t>(coarse + 1)].vertex_count;
  const Mat& fine = pyramid.levels[static_cast<std::size_t>(coarse + 1)].adjacency;
  std::vector<double> m(static_cast<std::size_t>(2) * vout * vin, 0.0);
  for (int i = 0; i < vout; ++i) {
    const int rep = pyramid.rep[static_cast<std::size_t>(coarse)][static_cast<std::size_t>(i)];
    m[mask_index(0, i, rep, vout, vin)] = 1.0;
    for (int j : pyramid.members[static_cast<std::size_t>(coarse)][static_cast<std::size_t>(i)])
      m[mask_index(1, i, j, vout, vin)] = 1.0;
    for (int j = 0; j < vin; ++j) {
      if (fine.at(rep, j) > 0.0) m[mask_index(1, i, j, vout, vin)] = 1.0;
    }
  }
  return Tensor::from_data({2, vout, vin}, std::move(m));
}

Mat neighbor_normalized(const Mat& adjacency) {
  if (adjacency.rows != adjacency.cols)
    throw ShapeError("neighbor_normalized: adjacency must be square");
  const int n = adjacency.rows;
  Mat nb = adjacency;
  for (int i = 0; i < n; ++i) nb.at(i, i) = 0.0;
  std::vector<double> dinv(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    double deg = 0.0;
    for (int j = 0; j < n; ++j) deg += nb.at(i, j);
    if (deg > 0.0) dinv[static_cast<std::size_t>(i)] = 1.0 / std::sqrt(deg);
  }
  Mat out(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      out.at(i, j) = dinv[static_cast<std::size_t>(i)] * nb.at(i, j) *
                     dinv[static_cast<std::size_t>(j)];
    }
  }
  return out;
}

// -------------------- aggregation --------------------

AggregationMatrix::AggregationMatrix(std::string name, const Tensor& mask, Rng& rng)
    : name_(std::move(name)), mask_(mask) {
  const Shape& s = mask_.shape();
  if (s.size() != 3 || s[0] != 2)
    throw ShapeError("AggregationMatrix: mask must be (2, V_out, V_in), got " + shape_str(s));
  const int vout = s[1], vin = s[2];
  weights_ = Tensor::zeros(s, true);
  for (int i = 0; i < vout; ++i) {
    int fan_in = 0;
    for (int k = 0; k < 2; ++k) {
      for (int j = 0; j < vin; ++j) {
        if (mask_.data()[mask_index(k, i, j, vout, vin)] > 0.0) ++fan_in;
      }
    }
    if (fan_in == 0)
      throw DataError("AggregationMatrix: output vertex " + std::to_string(i) +
                      " receives no input under the mask");
    const double limit = std::sqrt(1.0 / fan_in);
    for (int k = 0; k < 2; ++k) {
      for (int j = 0; j < vin; ++j) {
        const std::size_t idx = mask_index(k, i, j, vout, vin);
        if (mask_.data()[idx] > 0.0)
          weights_.mutable_data()[idx] = rng.uniform(-limit, limit);
      }
    }
  }
}

int AggregationMatrix::vertices_out() const { return mask_.shape()[1]; }
int AggregationMatrix::vertices_in() const { return mask_.shape()[2]; }

Tensor AggregationMatrix::apply(const Tensor& f) const {
  const Shape& s = f.shape();
  if (s.size() != 3 || s[2] != vertices_in())
    throw ShapeError(name_ + ": expected (C,T," + std::to_string(vertices_in()) + "), got " +
                     shape_str(s));
  Tensor effective = mul(weights_, mask_);
  Tensor summed = sum_axis0(effective);
  return tensordot(f, summed, {{2, 1}});
}

ParamList AggregationMatrix::parameters() {
  return {{name_ + ".weights", weights_}};
}

// -------------------- st graph conv --------------------

StGraphConv::StGraphConv(std::string name, int in_channels, int out_channels,
                         const Mat& adjacency, double leaky_slope, double dropout_p, Rng& rng)
    : name_(std::move(name)),
      in_channels_(in_channels),
      out_channels_(out_channels),
      leaky_slope_(leaky_slope),
      dropout_p_(dropout_p) {
  if (in_channels < 1 || out_channels < 1)
    throw ConfigError(name_ + ": channel counts must be positive");
  Mat ahat = neighbor_normalized(adjacency);
  std::vector<double> flat(static_cast<std::size_t>(ahat.rows) * ahat.cols);
  for (int i = 0; i < ahat.rows; ++i)
    for (int j = 0; j < ahat.cols; ++j)
      flat[static_cast<std::size_t>(i) * ahat.cols + j] = ahat.at(i, j);
  ahat_ = Tensor::from_data({ahat.rows, ahat.cols}, std::move(flat));

  w_self_ = Tensor::zeros({out_channels, in_channels}, true);
  w_neighbor_ = Tensor::zeros({out_channels, in_channels}, true);
  init_uniform_fan_in(w_self_, in_channels * 2, rng);
  init_uniform_fan_in(w_neighbor_, in_channels * 2, rng);
  t_kernel_ = Tensor::zeros({out_channels, out_channels, 9}, true);
  init_uniform_fan_in(t_kernel_, out_channels * 9, rng);
  t_bias_ = Tensor::zeros({out_channels}, true);
  bn_gamma_ = Tensor::full({out_channels}, 1.0, true);
  bn_beta_ = Tensor::zeros({out_channels}, true);
  bn_state_.init(out_channels);
}

Tensor StGraphConv::forward(const Tensor& x, bool training, Rng* dropout_rng) const {
  const Shape& s = x.shape();
  if (s.size() != 3 || s[0] != in_channels_ || s[2] != ahat_.shape()[0])
    throw ShapeError(name_ + ": expected (" + std::to_string(in_channels_) + ",T," +
                     std::to_string(ahat_.shape()[0]) + "), got " + shape_str(s));
  Tensor y = tensordot(w_self_, x, {{1, 0}});
  Tensor neighbor = tensordot(w_neighbor_, x, {{1, 0}});
  neighbor = tensordot(neighbor, ahat_, {{2, 1}});
  y = add(y, neighbor);
  y = conv2d(y, t_kernel_, t_bias_, 1, 4);
  y = batch_norm(y, bn_gamma_, bn_beta_, bn_state_, training);
  y = leaky_relu(y, leaky_slope_);
  if (training && dropout_p_ > 0.0) {
    if (dropout_rng == nullptr)
      throw ConfigError(name_ + ": training forward needs a dropout rng");
    y = dropout(y, dropout_p_, true, *dropout_rng);
  }
  return y;
}

ParamList StGraphConv::parameters() {
  return {{name_ + ".self", w_self_},       {name_ + ".neighbor", w_neighbor_},
          {name_ + ".tkernel", t_kernel_},  {name_ + ".tbias", t_bias_},
          {name_ + ".bn.gamma", bn_gamma_}, {name_ + ".bn.beta", bn_beta_}};
}

BufferList StGraphConv::buffers() {
  return {{name_ + ".bn.mean", &bn_state_.running_mean},
          {name_ + ".bn.var", &bn_state_.running_var}};
}

// -------------------- shared config checks --------------------

namespace {

void validate_net_config(const NetConfig& c, const char* who) {
  if (c.latent_channels < 2 || c.latent_channels % 2 != 0)
    throw ConfigError(std::string(who) + ": latent_channels must be a positive even number, got " +
                      std::to_string(c.latent_channels));
  for (int t : c.taper) {
    if (t < 1) throw ConfigError(std::string(who) + ": taper widths must be positive");
  }
  if (c.dropout < 0.0 || c.dropout >= 1.0)
    throw ConfigError(std::string(who) + ": dropout must lie in [0,1)");
  if (c.leaky_slope <= 0.0 || c.leaky_slope >= 1.0)
    throw ConfigError(std::string(who) + ": leaky_slope must lie in (0,1)");
}

}  // namespace

// -------------------- generator --------------------

Generator::Generator(const NetConfig& config, Rng& rng) : config_(config) {
  validate_net_config(config_, "Generator");
  const auto& pyramid = GraphPyramid::body25();
  int cin = config_.latent_channels;
  for (int s = 0; s < 4; ++s) {
    const int cout = config_.taper[static_cast<std::size_t>(s)];
    TemporalUp up;
    up.kernel = Tensor::zeros({cin, cout, 4}, true);
    init_uniform_fan_in(up.kernel, cin * 4, rng);
    up.bias = Tensor::zeros({cout}, true);
    up.bn_gamma = Tensor::full({cout}, 1.0, true);
    up.bn_beta = Tensor::zeros({cout}, true);
    up.bn_state.init(cout);
    ups_.push_back(std::move(up));
    if (s < 3)
      grows_.emplace_back("g.grow" + std::to_string(s), upsample_mask(pyramid, s), rng);
    const int level = std::min(s + 1, 3);
    convs_.emplace_back("g.st" + std::to_string(s), cout, cout,
                        pyramid.levels[static_cast<std::size_t>(level)].adjacency,
                        config_.leaky_slope, config_.dropout, rng);
    cin = cout;
  }
  head_kernel_ = Tensor::zeros({2, config_.taper[3], 1}, true);
  init_uniform_fan_in(head_kernel_, config_.taper[3], rng);
  head_bias_ = Tensor::zeros({2}, true);
}

Tensor Generator::run_temporal_up(const TemporalUp& up, const Tensor& x, bool training) const {
  Tensor y = transposed_conv2d(x, up.kernel, up.bias, 2, 1);
  y = batch_norm(y, up.bn_gamma, up.bn_beta, up.bn_state, training);
  return leaky_relu(y, config_.leaky_slope);
}

Tensor Generator::forward(const Tensor& latent, bool training, Rng* dropout_rng) const {
  const Shape& s = latent.shape();
  if (s.size() != 3 || s[0] != config_.latent_channels || s[2] != 1)
    throw ShapeError("Generator: expected latent (" + std::to_string(config_.latent_channels) +
                     ",T,1), got " + shape_str(s));
  if (s[1] < 1) throw ShapeError("Generator: latent needs at least one step");
  Tensor x = latent;
  for (int stage = 0; stage < 4; ++stage) {
    x = run_temporal_up(ups_[static_cast<std::size_t>(stage)], x, training);
    if (stage < 3) x = grows_[static_cast<std::size_t>(stage)].apply(x);
    x = convs_[static_cast<std::size_t>(stage)].forward(x, training, dropout_rng);
  }
  return conv2d(x, head_kernel_, head_bias_, 1, 0);
}

ParamList Generator::parameters() {
  ParamList out;
  for (int s = 0; s < 4; ++s) {
    auto& up = ups_[static_cast<std::size_t>(s)];
    const std::string base = "g.up" + std::to_string(s);
    out.push_back({base + ".kernel", up.kernel});
    out.push_back({base + ".bias", up.bias});
    out.push_back({base + ".bn.gamma", up.bn_gamma});
    out.push_back({base + ".bn.beta", up.bn_beta});
    if (s < 3) {
      for (auto& p : grows_[static_cast<std::size_t>(s)].parameters()) out.push_back(p);
    }
    for (auto& p : convs_[static_cast<std::size_t>(s)].parameters()) out.push_back(p);
  }
  out.push_back({"g.head.kernel", head_kernel_});
  out.push_back({"g.head.bias", head_bias_});
  return out;
}

BufferList Generator::buffers() {
  BufferList out;
  for (int s = 0; s < 4; ++s) {
    auto& up = ups_[static_cast<std::size_t>(s)];
    const std::string base = "g.up" + std::to_string(s);
    out.push_back({base + ".bn.mean", &up.bn_state.running_mean});
    out.push_back({base + ".bn.var", &up.bn_state.running_var});
    for (auto& b : convs_[static_cast<std::size_t>(s)].buffers()) out.push_back(b);
  }
  return out;
}

std::vector<std::pair<int, int>> Generator::stage_trace() const {
  return {{config_.latent_channels, 1}, {config_.taper[0], 3},  {config_.taper[1], 11},
          {config_.taper[2], 25},       {config_.taper[3], 25}, {2, 25}};
}

// -------------------- discriminator --------------------

Discriminator::Discriminator(const NetConfig& config, Rng& rng) : config_(config) {
  validate_net_config(config_, "Discriminator");
  const auto& pyramid = GraphPyramid::body25();
  const int cond = condition_channels();
  const auto& taper = config_.taper;

  stem_kernel_ = Tensor::zeros({taper[3], 2 + cond, 1}, true);
  init_uniform_fan_in(stem_kernel_, 2 + cond, rng);
  stem_bias_ = Tensor::zeros({taper[3]}, true);

  const Mat& a25 = pyramid.levels[3].adjacency;
  const Mat& a11 = pyramid.levels[2].adjacency;
  const Mat& a3 = pyramid.levels[1].adjacency;
  convs_.emplace_back("d.st0", taper[3], taper[3], a25, config_.leaky_slope, config_.dropout,
                      rng);
  convs_.emplace_back("d.st1", taper[2], taper[2], a25, config_.leaky_slope, config_.dropout,
                      rng);
  convs_.emplace_back("d.st2", taper[1], taper[1], a11, config_.leaky_slope, config_.dropout,
                      rng);
  convs_.emplace_back("d.st3", taper[0], taper[0], a3, config_.leaky_slope, config_.dropout,
                      rng);

  const int down_in[4] = {taper[3], taper[2], taper[1], taper[0]};
  const int down_out[4] = {taper[2], taper[1], taper[0], config_.latent_channels};
  for (int s = 0; s < 4; ++s) {
    TemporalDown down;
    down.kernel = Tensor::zeros({down_out[s], down_in[s], 4}, true);
    init_uniform_fan_in(down.kernel, down_in[s] * 4, rng);
    down.bias = Tensor::zeros({down_out[s]}, true);
    down.bn_gamma = Tensor::full({down_out[s]}, 1.0, true);
    down.bn_beta = Tensor::zeros({down_out[s]}, true);
    down.bn_state.init(down_out[s]);
    downs_.push_back(std::move(down));
  }

  shrinks_.emplace_back("d.shrink0", downsample_mask(pyramid, 2), rng);
  shrinks_.emplace_back("d.shrink1", downsample_mask(pyramid, 1), rng);
  shrinks_.emplace_back("d.shrink2", downsample_mask(pyramid, 0), rng);

  out_weight_ = Tensor::zeros({1, config_.latent_channels}, true);
  init_uniform_fan_in(out_weight_, config_.latent_channels, rng);
  out_bias_ = Tensor::zeros({1}, true);
}

int Discriminator::condition_channels() const { return config_.one_hot_class ? kNumStyles : 1; }

Tensor Discriminator::run_temporal_down(const TemporalDown& down, const Tensor& x,
                                        bool training) const {
  Tensor y = conv2d(x, down.kernel, down.bias, 2, 1);
  y = batch_norm(y, down.bn_gamma, down.bn_beta, down.bn_state, training);
  return leaky_relu(y, config_.leaky_slope);
}

Tensor Discriminator::forward(const Tensor& motion, StyleLabel style, bool training,
                              Rng* dropout_rng) const {
  const Shape& s = motion.shape();
  if (s.size() != 3 || s[0] != 2 || s[2] != 25)
    throw ShapeError("Discriminator: expected motion (2,N,25), got " + shape_str(s));
  if (s[1] < 16 || s[1] % 16 != 0)
    throw ShapeError("Discriminator: frame count " + std::to_string(s[1]) +
                     " must be a positive multiple of 16");

  Tensor x = with_class_channel(motion, style, config_.one_hot_class);
  x = conv2d(x, stem_kernel_, stem_bias_, 1, 0);
  x = leaky_relu(x, config_.leaky_slope);

  x = convs_[0].forward(x, training, dropout_rng);
  x = run_temporal_down(downs_[0], x, training);
  x = convs_[1].forward(x, training, dropout_rng);
  x = shrinks_[0].apply(x);
  x = run_temporal_down(downs_[1], x, training);
  x = convs_[2].forward(x, training, dropout_rng);
  x = shrinks_[1].apply(x);
  x = run_temporal_down(downs_[2], x, training);
  x = convs_[3].forward(x, training, dropout_rng);
  x = shrinks_[2].apply(x);
  x = run_temporal_down(downs_[3], x, training);

  const int steps = x.shape()[1];
  Tensor pool = Tensor::full({steps, 1}, 1.0 / steps);
  Tensor features = tensordot(x, pool, {{1, 0}, {2, 1}});
  Tensor logit = add(tensordot(out_weight_, features, {{1, 0}}), out_bias_);
  return sigmoid(logit);
}

ParamList Discriminator::parameters() {
  ParamList out;
  out.push_back({"d.stem.kernel", stem_kernel_});
  out.push_back({"d.stem.bias", stem_bias_});
  for (auto& conv : convs_) {
    for (auto& p : conv.parameters()) out.push_back(p);
  }
  for (int s = 0; s < 4; ++s) {
    auto& down = downs_[static_cast<std::size_t>(s)];
    const std::string base = "d.down" + std::to_string(s);
    out.push_back({base + ".kernel", down.kernel});
    out.push_back({base + ".bias", down.bias});
    out.push_back({base + ".bn.gamma", down.bn_gamma});
    out.push_back({base + ".bn.beta", down.bn_beta});
  }
  for (auto& shrink : shrinks_) {
    for (auto& p : shrink.parameters()) out.push_back(p);
  }
  out.push_back({"d.out.weight", out_weight_});
  out.push_back({"d.out.bias", out_bias_});
  return out;
}

BufferList Discriminator::buffers() {
  BufferList out;
  for (auto& conv : convs_) {
    for (auto& b : conv.buffers()) out.push_back(b);
  }
  for (int s = 0; s < 4; ++s) {
    auto& down = downs_[static_cast<std::size_t>(s)];
    const std::string base = "d.down" + std::to_string(s);
    out.push_back({base + ".bn.mean", &down.bn_state.running_mean});
    out.push_back({base + ".bn.var", &down.bn_state.running_var});
  }
  return out;
}

std::vector<std::pair<int, int>> Discriminator::stage_trace() const {
  return {{2, 25},
          {config_.taper[3], 25},
          {config_.taper[2], 25},
          {config_.taper[1], 11},
          {config_.taper[0], 3},
          {config_.latent_channels, 1}};
}

// -------------------- conditioning and structure checks --------------------

Tensor with_class_channel(const Tensor& motion, StyleLabel style, bool one_hot) {
  const Shape& s = motion.shape();
  if (s.size() != 3) throw ShapeError("with_class_channel: expected rank 3, got " + shape_str(s));
  const int idx = static_cast<int>(style);
  Tensor out = motion;
  if (one_hot) {
    for (int c = 0; c < kNumStyles; ++c) {
      out = concat_axis0(out, Tensor::full({1, s[1], s[2]}, c == idx ? 1.0 : 0.0));
    }
  } else {
    const double value = static_cast<double>(idx) / (kNumStyles - 1);
    out = concat_axis0(out, Tensor::full({1, s[1], s[2]}, value));
  }
  return out;
}

void assert_mirror(const Generator& g, const Discriminator& d) {
  auto gt = g.stage_trace();
  auto dt = d.stage_trace();
  if (gt.size() != dt.size())
    throw ShapeError("assert_mirror: stage counts differ (" + std::to_string(gt.size()) +
                     " vs " + std::to_string(dt.size()) + ")");
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const auto& a = gt[i];
    const auto& b = dt[dt.size() - 1 - i];
    if (a != b)
      throw ShapeError("assert_mirror: stage " + std::to_string(i) + " is (" +
                       std::to_string(a.first) + "," + std::to_string(a.second) +
                       ") in the generator but mirrors to (" + std::to_string(b.first) + "," +
                       std::to_string(b.second) + ") in the discriminator");
  }
}

}  // namespace dancegen
