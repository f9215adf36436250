#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <dancegen/dataset.hpp>
#include <dancegen/graphnet.hpp>
#include <dancegen/latent.hpp>
#include <dancegen/optim.hpp>
#include <dancegen/rng.hpp>

namespace dancegen {

struct TrainConfig {
  int epochs = 500;
  int batch_size = 8;
  double gen_lr = 0.002;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double disc_lr = 2e-4;
  double lambda_rec = 100.0;
  std::uint64_t seed = 0;
  /// Minimize +log(1 - D(G(z))) instead of -log(D(G(z))).
  bool saturating_gen_loss = false;
  int window = 64;
  AugmentConfig augment;
};

/// Sum of per-joint L1 distances, averaged over frames and divided by the
/// joint count.  Zero on identical motions; a uniform one-unit offset in a
/// single coordinate plane gives exactly 1.
Tensor motion_reconstruction_loss(const Tensor& generated, const Tensor& real);

/// -log(p) when target_real, -log(1 - p) otherwise, with p clamped to
/// [1e-7, 1 - 1e-7].  `probability` is the discriminator's scalar output.
Tensor bce_score_loss(const Tensor& probability, bool target_real);

struct StepMetrics {
  std::int64_t step = 0;
  /// Batch-mean discriminator loss (real plus fake BCE).
  double d_loss = 0.0;
  /// Batch-mean generator adversarial term, without the weighted
  /// reconstruction part.
  double g_loss = 0.0;
  /// Batch-mean reconstruction loss, unweighted.
  double rec_loss = 0.0;
  double wall_ms = 0.0;
};

/// One normalized training window.
struct TrainSample {
  Tensor motion;  // (2, N, 25)
  StyleLabel style;
};

/// Extracts windows at augment.shift_stride, normalizes each one over its
/// whole sequence, and (when augment.gp_noise) adds smooth limb noise.
std::vector<TrainSample> prepare_training_windows(
    const std::vector<ClipRecord>& clips, const TrainConfig& cfg, Rng& rng);

/// Adversarial trainer: SGD on the discriminator, Adam on the generator
/// and style embedding, reconstruction term weighted by lambda_rec.
/// All randomness is forked from (seed, step), so runs and resumed runs
/// are bit-reproducible.
class GanTrainer {
 public:
  GanTrainer(const GpConfig& gp, const NetConfig& net, const TrainConfig& cfg);

  /// One discriminator update on real vs fresh fakes followed by one
  /// generator update.  Throws NumericError when any loss goes non-finite.
  StepMetrics train_step(const std::vector<TrainSample>& batch);

  /// `steps` train_step calls on batches drawn (seeded, with replacement)
  /// from `samples`.
  void run(const std::vector<TrainSample>& samples, int steps);

  /// Eval-mode synthesis for the given per-step styles.
  Tensor generate(const std::vector<StyleLabel>& per_step_styles, Rng& rng);

  const std::vector<StepMetrics>& history() const { return history_; }
  std::int64_t step_count() const { return step_count_; }

  /// Persists parameters, running statistics, Adam moments, and the step
  /// counter; load resumes bit-exactly.
  void save(const std::string& path) const;
  void load(const std::string& path);

  Generator& generator() { return *generator_; }
  Discriminator& discriminator() { return *discriminator_; }
  StyleEmbedding& embedding() { return *embedding_; }
  const GpSampler& sampler() const { return *sampler_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  TrainConfig cfg_;
  std::unique_ptr<GpSampler> sampler_;
  std::unique_ptr<StyleEmbedding> embedding_;
  std::unique_ptr<Generator> generator_;
  std::unique_ptr<Discriminator> discriminator_;
  std::unique_ptr<Sgd> disc_opt_;
  std::unique_ptr<Adam> gen_opt_;
  Rng root_;
  std::int64_t step_count_ = 0;
  std::vector<StepMetrics> history_;
};

/// CSV with header step,d_loss,g_loss,rec_loss,wall_ms.
void write_metrics_csv(const std::string& path,
                       const std::vector<StepMetrics>& metrics);

/// Mean reconstruction loss over all cross pairs (a_i, b_j).
double mean_pairwise_rec_between(const std::vector<Tensor>& a,
                                 const std::vector<Tensor>& b);

/// Mean reconstruction loss over unordered pairs within one set.
double mean_pairwise_rec_within(const std::vector<Tensor>& a);

/// Ratio of the between-style mean to the within-style mean pairwise
/// reconstruction loss; above 1 means styles are separated.
double conditioning_separation(
    const std::vector<std::vector<Tensor>>& per_style_sets);

}  // namespace dancegen
