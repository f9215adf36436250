#include "dancegen/latent.hpp"

#include <cmath>
#include <string>

#include "dancegen/errors.hpp"

namespace dancegen {

namespace {

void validate(const GpConfig& c) {
  if (c.channels < 1)
    throw ConfigError("GpSampler: channels must be >= 1, got " + std::to_string(c.channels));
  if (c.steps < 1)
    throw ConfigError("GpSampler: steps must be >= 1, got " + std::to_string(c.steps));
  if (c.vertices != 1)
    throw ConfigError("GpSampler: vertices must be 1, got " + std::to_string(c.vertices));
  if (!(c.sigma > 0.0)) throw ConfigError("GpSampler: sigma must be positive");
}

constexpr double kDegenerateSigma = 1e-12;

}  // namespace

Mat gp_rbf_kernel(int steps, double sigma) {
  if (steps < 1)
    throw ConfigError("gp_rbf_kernel: steps must be >= 1, got " + std::to_string(steps));
  if (sigma < 0.0) throw ConfigError("gp_rbf_kernel: sigma must be non-negative");
  if (sigma < kDegenerateSigma) return Mat::identity(steps);
  Mat k(steps, steps);
  for (int i = 0; i < steps; ++i) {
    for (int j = 0; j < steps; ++j) {
      const double d = static_cast<double>(i - j);
      k.at(i, j) = std::exp(-(d * d) / (2.0 * sigma * sigma));
    }
  }
  return k;
}

Mat gp_rbf_factor(int steps, double sigma) {
  const Mat kernel = gp_rbf_kernel(steps, sigma);
  Mat lower(kernel.rows, kernel.cols);
  if (cholesky(kernel, lower)) return lower;
  for (double jitter = 1e-10; jitter <= 1e-6; jitter *= 10.0) {
    Mat bumped = kernel;
    for (int i = 0; i < bumped.rows; ++i) bumped.at(i, i) *= 1.0 + jitter;
    if (cholesky(bumped, lower)) return lower;
  }
  throw NumericError("gp_rbf_factor: kernel with sigma " + std::to_string(sigma) +
                     " over " + std::to_string(steps) +
                     " steps is not positive definite even with jitter 1e-6");
}

GpSampler::GpSampler(const GpConfig& config) : config_(config) {
  validate(config_);
  factors_.reserve(static_cast<std::size_t>(config_.channels));
  for (int c = 0; c < config_.channels; ++c) {
    factors_.push_back(gp_rbf_factor(config_.steps, channel_sigma(c)));
  }
}

double GpSampler::channel_sigma(int channel) const {
  if (channel < 0 || channel >= config_.channels)
    throw ShapeError("GpSampler::channel_sigma: channel " + std::to_string(channel) +
                     " out of range");
  return config_.sigma * static_cast<double>(channel) / static_cast<double>(config_.channels);
}

Mat GpSampler::kernel(int channel) const {
  return gp_rbf_kernel(config_.steps, channel_sigma(channel));
}

const Mat& GpSampler::factor(int channel) const {
  if (channel < 0 || channel >= config_.channels)
    throw ShapeError("GpSampler::factor: channel " + std::to_string(channel) + " out of range");
  return factors_[static_cast<std::size_t>(channel)];
}

Tensor GpSampler::sample(Rng& rng) const {
  const int c = config_.channels, t = config_.steps, v = config_.vertices;
  std::vector<double> data(static_cast<std::size_t>(c) * t * v);
  std::vector<double> eps(static_cast<std::size_t>(t));
  for (int ci = 0; ci < c; ++ci) {
    const Mat& lower = factors_[static_cast<std::size_t>(ci)];
    for (int vi = 0; vi < v; ++vi) {
      for (int ti = 0; ti < t; ++ti) eps[static_cast<std::size_t>(ti)] = rng.normal();
      for (int ti = 0; ti < t; ++ti) {
        double acc = 0.0;
        for (int k = 0; k <= ti; ++k) acc += lower.at(ti, k) * eps[static_cast<std::size_t>(k)];
        data[(static_cast<std::size_t>(ci) * t + ti) * v + vi] = acc;
      }
    }
  }
  return Tensor::from_data({c, t, v}, std::move(data));
}

StyleEmbedding::StyleEmbedding(int channels, Rng& rng) : channels_(channels) {
  if (channels < 1)
    throw ConfigError("StyleEmbedding: channels must be >= 1, got " + std::to_string(channels));
  table_ = Tensor::zeros({kNumStyles, channels}, true);
  init_normal(table_, rng);
}

Tensor StyleEmbedding::embed(const std::vector<StyleLabel>& per_step_styles) const {
  if (per_step_styles.empty()) throw ShapeError("StyleEmbedding::embed: no steps given");
  std::vector<int> rows;
  rows.reserve(per_step_styles.size());
  for (StyleLabel s : per_step_styles) rows.push_back(static_cast<int>(s));
  return embed_rows(table_, rows);
}

ParamList StyleEmbedding::parameters() {
  return {{"style_embedding.table", table_}};
}

Tensor assemble_latent(const Tensor& noise, const std::vector<StyleLabel>& per_step_styles,
                       const StyleEmbedding& embedding) {
  const Shape& s = noise.shape();
  if (s.size() != 3 || s[2] != 1)
    throw ShapeError("assemble_latent: noise must be (C,T,1), got " + shape_str(s));
  if (s[0] != embedding.channels())
    throw ShapeError("assemble_latent: noise has " + std::to_string(s[0]) +
                     " channels but embedding has " + std::to_string(embedding.channels()));
  if (static_cast<int>(per_step_styles.size()) != s[1])
    throw ShapeError("assemble_latent: " + std::to_string(per_step_styles.size()) +
                     " styles for " + std::to_string(s[1]) + " steps");
  return concat_axis0(noise, embedding.embed(per_step_styles));
}

int latent_length_for(int frames) {
  if (frames < 16 || frames % 16 != 0)
    throw ConfigError("latent_length_for: frame count " + std::to_string(frames) +
                      " must be a positive multiple of 16");
  return frames / 16;
}

}  // namespace dancegen
