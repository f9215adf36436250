#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <dancegen/rng.hpp>
#include <dancegen/style.hpp>
#include <dancegen/tensor.hpp>

namespace dancegen {

/// Mono waveform with samples in [-1, 1].
struct AudioClip {
  int sample_rate = 16000;
  std::vector<double> samples;

  double duration_seconds() const {
    return sample_rate > 0
               ? static_cast<double>(samples.size()) / sample_rate
               : 0.0;
  }
};

/// Reads a PCM16 mono WAV file at its native rate.
AudioClip load_wav(const std::string& path);

/// Writes a mono PCM16 WAV file; samples are clamped to [-1, 1].
void save_wav(const std::string& path, const AudioClip& clip);

/// Linear-interpolation resampling.  Returns the clip unchanged when the
/// rates already match.
AudioClip resample_linear(const AudioClip& clip, int target_rate);

/// load_wav followed by resampling to 16 kHz.
AudioClip load_audio_16k(const std::string& path);

/// Logarithmic companding: sign(x) * ln(1 + mu|x|) / ln(1 + mu).
/// Inputs outside [-1, 1] are clamped first.
double mu_law(double x, double mu = 255.0);

/// Vector form of mu_law.  When clamp_count is non-null it receives the
/// number of samples that fell outside [-1, 1].
std::vector<double> mu_law_encode(const std::vector<double>& samples,
                                  double mu = 255.0,
                                  std::int64_t* clamp_count = nullptr);

/// Numerically stable softmax.
std::vector<double> softmax(const std::vector<double>& logits);

/// Windowing parameters for waveform classification.
struct AudioWindowConfig {
  double window_seconds = 2.0;
  double hop_seconds = 1.0;

  int window_samples(int sample_rate) const;
  int hop_samples(int sample_rate) const;
};

/// Start offsets (in samples) of the classification windows covering a clip
/// of `length` samples.  Empty when the clip is shorter than one window.
std::vector<int> audio_window_offsets(int length, int window, int hop);

/// Five strided 1-D convolutions over the mu-law companded waveform,
/// each followed by relu, then global average pooling and a linear head
/// onto the three style logits.  Band energies survive to the pooling
/// stage, so no normalization layers are used.
class StyleClassifier {
 public:
  explicit StyleClassifier(Rng& rng);
  StyleClassifier(StyleClassifier&&) noexcept;
  StyleClassifier& operator=(StyleClassifier&&) noexcept;
  ~StyleClassifier();

  /// x has shape (1, L, 1) holding companded samples; returns shape (3).
  /// L must be at least min_samples().  `training` is accepted for parity
  /// with the other networks; the stack has no mode-dependent layers.
  Tensor logits(const Tensor& x, bool training);

  Tensor window_tensor(const std::vector<double>& samples, int offset,
                       int length) const;

  ParamList parameters();
  BufferList buffers();

  static int min_samples() { return 4096; }

 private:
  struct ConvBlock;
  std::vector<ConvBlock> blocks_;
  Tensor head_weight_;
  Tensor head_bias_;
};

/// Outcome of classifying one clip.  `probs` is the mean softmax over all
/// windows, `label` its argmax, `per_window` the per-window argmax labels.
struct ClassifyResult {
  StyleLabel label;
  std::array<double, 3> probs;
  std::vector<StyleLabel> per_window;
};

ClassifyResult classify_style(const AudioClip& clip, StyleClassifier& model,
                              const AudioWindowConfig& cfg = {});

/// Label of the window whose center lies nearest to `seconds`.
StyleLabel style_at_time(const ClassifyResult& result, double seconds,
                         const AudioWindowConfig& cfg = {});

struct FoldReport {
  std::vector<double> fold_accuracy;
  double mean_accuracy = 0.0;
  int best_fold = -1;
};

struct ClassifierTrainConfig {
  int folds = 10;
  int epochs = 2;
  int batch_size = 8;
  double lr = 0.01;
  double beta1 = 0.5;
  std::uint64_t seed = 0;
  AudioWindowConfig window;
};

/// Stratified k-fold cross validation over labeled clips.  Trains one model
/// per fold, scores clip-level accuracy on the held-out fold, and returns
/// the model from the best-scoring fold.  Requires folds >= 2 and at least
/// `folds` clips per class.
StyleClassifier train_classifier(
    const std::vector<std::pair<AudioClip, StyleLabel>>& corpus,
    const ClassifierTrainConfig& cfg, FoldReport* report = nullptr);

}  // namespace dancegen
