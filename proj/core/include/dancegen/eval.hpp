#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <dancegen/graphnet.hpp>
#include <dancegen/linalg.hpp>
#include <dancegen/training.hpp>

namespace dancegen {

/// Three-class motion classifier used as the evaluation feature extractor:
/// a 1x1 stem, two st-graph-conv blocks on the 25-vertex body graph with a
/// strided temporal convolution after each, global average pooling, and a
/// linear head.  The pooled vector (width feature_channels) is the feature
/// tap used for distribution distances.
struct FeatureExtractorConfig {
  int stem_channels = 8;
  int mid_channels = 16;
  int feature_channels = 64;
  double leaky_slope = 0.2;
  int epochs = 12;
  int batch_size = 8;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

/// Normalization inside the st-conv blocks always uses the statistics of
/// the sample being processed, in training and inference alike, so a
/// sample's logits and features never depend on call history.
class FeatureExtractor {
 public:
  FeatureExtractor(const FeatureExtractorConfig& cfg, Rng& rng);

  /// Class scores, shaped (3).  Motion must be (2, T, 25) with T >= 4.
  Tensor logits(const Tensor& motion) const;
  /// Penultimate pooled features, shaped (feature_channels).
  Tensor features(const Tensor& motion) const;

  ParamList parameters();
  const FeatureExtractorConfig& config() const { return cfg_; }

 private:
  Tensor pooled(const Tensor& motion) const;

  FeatureExtractorConfig cfg_;
  Tensor stem_kernel_;
  Tensor stem_bias_;
  StGraphConv st0_;
  Tensor down0_kernel_;
  Tensor down0_bias_;
  StGraphConv st1_;
  Tensor down1_kernel_;
  Tensor down1_bias_;
  Tensor head_weight_;
  Tensor head_bias_;
};

/// Trains a fresh extractor on the labeled windows.  Deterministic given
/// cfg.seed.  Throws DataError when the samples cover fewer than two
/// classes.
FeatureExtractor train_feature_extractor(const std::vector<TrainSample>& samples,
                                         const FeatureExtractorConfig& cfg);

/// Fraction of samples whose argmax class matches the label; eval mode.
double classification_accuracy(const FeatureExtractor& extractor,
                               const std::vector<TrainSample>& samples);

/// Stacks features(motion) row-wise into an M x F matrix.
Mat feature_matrix(const FeatureExtractor& extractor,
                   const std::vector<TrainSample>& samples);

/// Frechet distance between Gaussians fit to the two feature sets:
/// |mu_a - mu_b|^2 + tr(Sa + Sb - 2 (Sa Sb)^{1/2}), covariances unbiased,
/// the matrix square root taken on the symmetrized product with eigenvalues
/// below 1e-10 clamped to zero, and the result clamped at 0.  Warns on
/// stderr when either set has no more rows than feature dimensions.
double fid(const Mat& feats_a, const Mat& feats_b);

struct ScoreStat {
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> runs;
};

/// Train-on-generated, test-on-real accuracy over `repeats` fresh
/// classifiers (seeds derived from cfg.seed).
ScoreStat gan_train_score(const std::vector<TrainSample>& generated,
                          const std::vector<TrainSample>& real_eval,
                          const FeatureExtractorConfig& cfg, int repeats);

/// Train-on-real, test-on-generated accuracy; mirror of gan_train_score.
ScoreStat gan_test_score(const std::vector<TrainSample>& real_set,
                         const std::vector<TrainSample>& generated,
                         const FeatureExtractorConfig& cfg, int repeats);

struct MetricStat {
  double mean = 0.0;
  double stddev = 0.0;
};

struct EvalReport {
  int repeats = 0;
  MetricStat fid_score;
  MetricStat gan_train;
  MetricStat gan_test;
  std::array<MetricStat, 3> fid_per_style;
  std::array<MetricStat, 3> gan_train_per_style;
  std::array<MetricStat, 3> gan_test_per_style;
};

/// Full evaluation protocol.  Per repeat r: one classifier is trained on
/// the real set (it provides FID features and the test-on-generated score)
/// and one on the generated set (train-on-generated score); the report
/// aggregates mean and sample deviation across repeats, overall and per
/// conditioning style.
EvalReport evaluate_sets(const std::vector<TrainSample>& generated,
                         const std::vector<TrainSample>& real_eval,
                         const FeatureExtractorConfig& cfg, int repeats);

std::string eval_report_json(const EvalReport& report);
/// Fixed-width text table: one row per style plus the overall row.
std::string eval_report_table(const EvalReport& report);

}  // namespace dancegen
