#pragma once

#include <vector>

#include "dancegen/linalg.hpp"
#include "dancegen/rng.hpp"
#include "dancegen/style.hpp"
#include "dancegen/tensor.hpp"

namespace dancegen {

/// Gaussian-process latent block: channels x time steps x vertices.
struct GpConfig {
  int channels = 512;
  int steps = 4;
  int vertices = 1;
  double sigma = 200.0;
};

/// Draws temporally correlated noise, one independent path per channel and
/// vertex.  Channel c uses an RBF kernel over the step indices with bandwidth
/// sigma_c = sigma * c / channels, so low channels are rough and high
/// channels are smooth.  Bandwidths below 1e-12 degenerate to white noise
/// (identity kernel).
/// Squared-exponential kernel over integer step positions; sigma below
/// 1e-12 degenerates to the identity (white noise).
Mat gp_rbf_kernel(int steps, double sigma);

/// Lower Cholesky factor of gp_rbf_kernel, retrying with multiplicative
/// diagonal jitter from 1e-10 up to 1e-6 when needed.
Mat gp_rbf_factor(int steps, double sigma);

class GpSampler {
 public:
  explicit GpSampler(const GpConfig& config);

  const GpConfig& config() const { return config_; }
  double channel_sigma(int channel) const;
  /// Kernel matrix for one channel, steps x steps.
  Mat kernel(int channel) const;
  /// Lower Cholesky factor of the (jittered) kernel for one channel.
  const Mat& factor(int channel) const;

  /// One draw shaped (channels, steps, vertices).  Not trainable.
  Tensor sample(Rng& rng) const;

 private:
  GpConfig config_;
  std::vector<Mat> factors_;
};

/// Trainable per-style rows, concatenated onto the GP noise.
class StyleEmbedding {
 public:
  StyleEmbedding(int channels, Rng& rng);

  int channels() const { return channels_; }
  const Tensor& table() const { return table_; }

  /// Table rows gathered per step, shaped (channels, steps, 1).  Gradients
  /// reach the table through this op.
  Tensor embed(const std::vector<StyleLabel>& per_step_styles) const;

  ParamList parameters();

 private:
  int channels_;
  Tensor table_;
};

/// Stacks noise (C,T,1) over the embedded styles into (2C,T,1).
Tensor assemble_latent(const Tensor& noise, const std::vector<StyleLabel>& per_step_styles,
                       const StyleEmbedding& embedding);

/// Latent steps needed for a clip of N frames; N must be a multiple of 16.
int latent_length_for(int frames);

}  // namespace dancegen
