#pragma once

#include <array>
#include <string>
#include <vector>

#include "dancegen/linalg.hpp"
#include "dancegen/rng.hpp"
#include "dancegen/skeleton.hpp"
#include "dancegen/style.hpp"
#include "dancegen/tensor.hpp"

namespace dancegen {

/// One resolution of the body graph: vertex count plus symmetric binary
/// adjacency with self loops.
struct GraphLevel {
  int vertex_count = 0;
  Mat adjacency;
};

/// The four body resolutions (1, 3, 11, 25 vertices) with the merge maps
/// between consecutive levels.  members[s][j] lists the level s+1 vertices
/// that collapse into vertex j of level s; rep[s][j] is the one of them that
/// carries the group identity (torso for the core group, nose for the head,
/// and so on).
struct GraphPyramid {
  std::vector<GraphLevel> levels;
  std::vector<std::vector<std::vector<int>>> members;
  std::vector<std::vector<int>> rep;

  static const GraphPyramid& body25();
};

/// Trainable mask for growing features from level `coarse` to level
/// `coarse+1`, shaped (2, V_fine, V_coarse).  Entry (0, i, j) is free when i
/// is the representative of group j; entry (1, i, j) is free when i belongs
/// to group j or neighbors the representative in the fine graph.
Tensor upsample_mask(const GraphPyramid& pyramid, int coarse);

/// Mask for collapsing level `coarse+1` into level `coarse`, shaped
/// (2, V_coarse, V_fine).  Mirrors upsample_mask with rows and columns
/// swapped.
Tensor downsample_mask(const GraphPyramid& pyramid, int coarse);

/// Neighbor-partition propagation matrix D^{-1/2} (A - I) D^{-1/2} with rows
/// of isolated vertices left at zero.
Mat neighbor_normalized(const Mat& adjacency);

/// Trainable vertex-resampling weights under a frozen 0/1 mask.  Masked-out
/// entries hold exactly zero and receive exactly zero gradient.
class AggregationMatrix {
 public:
  AggregationMatrix(std::string name, const Tensor& mask, Rng& rng);

  /// (C,T,V_in) -> (C,T,V_out) by f'_i = sum_{k,j} w[k,i,j] f_j.
  Tensor apply(const Tensor& f) const;

  const Tensor& mask() const { return mask_; }
  const Tensor& weights() const { return weights_; }
  int vertices_out() const;
  int vertices_in() const;
  ParamList parameters();

 private:
  std::string name_;
  Tensor mask_;
  Tensor weights_;
};

/// Graph convolution over one body resolution followed by a length-9
/// temporal convolution, batch norm, leaky relu, and optional dropout.
/// Preserves (T, V); changes only the channel count.
class StGraphConv {
 public:
  StGraphConv(std::string name, int in_channels, int out_channels, const Mat& adjacency,
              double leaky_slope, double dropout_p, Rng& rng);

  Tensor forward(const Tensor& x, bool training, Rng* dropout_rng) const;
  ParamList parameters();
  BufferList buffers();
  int in_channels() const { return in_channels_; }
  int out_channels() const { return out_channels_; }

 private:
  std::string name_;
  int in_channels_;
  int out_channels_;
  double leaky_slope_;
  double dropout_p_;
  Tensor w_self_;
  Tensor w_neighbor_;
  Tensor ahat_;
  Tensor t_kernel_;
  Tensor t_bias_;
  Tensor bn_gamma_;
  Tensor bn_beta_;
  mutable BatchNormState bn_state_;
};

/// Channel plan shared by the generator and its mirrored discriminator:
/// latent 2C, four interior widths, two output channels.
struct NetConfig {
  int latent_channels = 1024;
  std::array<int, 4> taper = {512, 256, 128, 128};
  double leaky_slope = 0.2;
  double dropout = 0.3;
  /// Discriminator conditioning: one normalized-index channel when false,
  /// one channel per style when true.
  bool one_hot_class = false;
};

/// Synthesizes motion (2, 16T, 25) from a latent block (2C, T, 1) by
/// alternating temporal doubling, vertex growth 1->3->11->25, and graph
/// convolutions.
class Generator {
 public:
  Generator(const NetConfig& config, Rng& rng);

  Tensor forward(const Tensor& latent, bool training, Rng* dropout_rng) const;
  ParamList parameters();
  BufferList buffers();
  const NetConfig& config() const { return config_; }

  /// (channels, vertices) after the input and after each interior block.
  std::vector<std::pair<int, int>> stage_trace() const;

 private:
  struct TemporalUp {
    Tensor kernel;
    Tensor bias;
    Tensor bn_gamma;
    Tensor bn_beta;
    mutable BatchNormState bn_state;
  };

  Tensor run_temporal_up(const TemporalUp& up, const Tensor& x, bool training) const;

  NetConfig config_;
  std::vector<TemporalUp> ups_;
  std::vector<AggregationMatrix> grows_;
  std::vector<StGraphConv> convs_;
  Tensor head_kernel_;
  Tensor head_bias_;
};

/// Scores motion (2, 16T, 25) plus a style condition as a probability that
/// the motion is real.  Exact structural mirror of the generator.
class Discriminator {
 public:
  Discriminator(const NetConfig& config, Rng& rng);

  /// motion is (2, N, 25) with N a positive multiple of 16; returns a scalar
  /// in (0, 1).
  Tensor forward(const Tensor& motion, StyleLabel style, bool training,
                 Rng* dropout_rng) const;
  ParamList parameters();
  BufferList buffers();
  const NetConfig& config() const { return config_; }

  /// (channels, vertices) after each interior block, ending at the latent
  /// width on the single-vertex graph.
  std::vector<std::pair<int, int>> stage_trace() const;
  int condition_channels() const;

 private:
  struct TemporalDown {
    Tensor kernel;
    Tensor bias;
    Tensor bn_gamma;
    Tensor bn_beta;
    mutable BatchNormState bn_state;
  };

  Tensor run_temporal_down(const TemporalDown& down, const Tensor& x, bool training) const;

  NetConfig config_;
  Tensor stem_kernel_;
  Tensor stem_bias_;
  std::vector<StGraphConv> convs_;
  std::vector<TemporalDown> downs_;
  std::vector<AggregationMatrix> shrinks_;
  Tensor out_weight_;
  Tensor out_bias_;
};

/// Stacks the style condition under the coordinate channels for the
/// discriminator: one channel holding index/(num_styles-1), or num_styles
/// one-hot channels.
Tensor with_class_channel(const Tensor& motion, StyleLabel style, bool one_hot);

/// Throws unless the discriminator's stage trace is the exact reverse of the
/// generator's and the conditioning width matches the generator output.
void assert_mirror(const Generator& g, const Discriminator& d);

}  // namespace dancegen
