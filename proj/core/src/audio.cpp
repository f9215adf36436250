#include <dancegen/audio.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>

#include <dancegen/errors.hpp>
#include <dancegen/optim.hpp>

namespace dancegen {

namespace {

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0]) |
         static_cast<std::uint16_t>(b[1] << 8);
}

void write_u32(std::ostream& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff),
               static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

void write_u16(std::ostream& out, std::uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  out.write(b, 2);
}

}  // namespace

AudioClip load_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("load_wav: cannot open '" + path + "'");
  }
  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0) {
    throw DataError("load_wav: '" + path + "' is not a RIFF file");
  }
  read_u32(in);
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0) {
    throw DataError("load_wav: '" + path + "' is not a WAVE file");
  }

  bool have_fmt = false;
  std::uint16_t channels = 0;
  std::uint16_t bits = 0;
  std::uint32_t rate = 0;
  AudioClip clip;
  bool have_data = false;

  while (in.read(tag, 4)) {
    std::uint32_t size = read_u32(in);
    if (!in) break;
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      std::uint16_t format = read_u16(in);
      channels = read_u16(in);
      rate = read_u32(in);
      read_u32(in);
      read_u16(in);
      bits = read_u16(in);
      if (size > 16) in.ignore(size - 16);
      if (format != 1) {
        throw DataError("load_wav: '" + path +
                        "' is not PCM (format tag " + std::to_string(format) +
                        ")");
      }
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) {
        throw DataError("load_wav: '" + path + "' has data before fmt chunk");
      }
      if (channels != 1) {
        throw DataError("load_wav: '" + path + "' has " +
                        std::to_string(channels) + " channels, expected mono");
      }
      if (bits != 16) {
        throw DataError("load_wav: '" + path + "' has " +
                        std::to_string(bits) + "-bit samples, expected 16");
      }
      std::uint32_t count = size / 2;
      clip.samples.resize(count);
      for (std::uint32_t i = 0; i < count; ++i) {
        std::uint16_t raw = read_u16(in);
        auto value = static_cast<std::int16_t>(raw);
        clip.samples[i] = static_cast<double>(value) / 32768.0;
      }
      if (!in) {
        throw DataError("load_wav: '" + path + "' data chunk truncated");
      }
      have_data = true;
    } else {
      in.ignore(size + (size & 1));
    }
  }
  if (!have_data) {
    throw DataError("load_wav: '" + path + "' has no data chunk");
  }
  clip.sample_rate = static_cast<int>(rate);
  return clip;
}

void save_wav(const std::string& path, const AudioClip& clip) {
  if (clip.sample_rate <= 0) {
    throw ConfigError("save_wav: sample rate must be positive");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("save_wav: cannot open '" + path + "' for writing");
  }
  const std::uint32_t data_bytes =
      static_cast<std::uint32_t>(clip.samples.size()) * 2;
  out.write("RIFF", 4);
  write_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, 16);
  write_u16(out, 1);
  write_u16(out, 1);
  write_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  write_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  write_u16(out, 2);
  write_u16(out, 16);
  out.write("data", 4);
  write_u32(out, data_bytes);
  for (double s : clip.samples) {
    double c = std::clamp(s, -1.0, 1.0);
    auto q = static_cast<std::int16_t>(std::lround(c * 32767.0));
    write_u16(out, static_cast<std::uint16_t>(q));
  }
  if (!out) {
    throw DataError("save_wav: write to '" + path + "' failed");
  }
}

AudioClip resample_linear(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0) {
    throw ConfigError("resample_linear: target rate must be positive");
  }
  if (clip.sample_rate <= 0) {
    throw DataError("resample_linear: clip has invalid sample rate");
  }
  if (clip.sample_rate == target_rate || clip.samples.empty()) {
    AudioClip out = clip;
    out.sample_rate = target_rate;
    return out;
  }
  const auto n = static_cast<std::int64_t>(clip.samples.size());
  const auto out_n = static_cast<std::int64_t>(std::llround(
      static_cast<double>(n) * target_rate / clip.sample_rate));
  AudioClip out;
  out.sample_rate = target_rate;
  out.samples.resize(static_cast<std::size_t>(std::max<std::int64_t>(out_n, 1)));
  const double step =
      static_cast<double>(clip.sample_rate) / static_cast<double>(target_rate);
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    const double pos = static_cast<double>(i) * step;
    auto i0 = static_cast<std::int64_t>(pos);
    if (i0 >= n - 1) {
      out.samples[i] = clip.samples.back();
      continue;
    }
    const double frac = pos - static_cast<double>(i0);
    out.samples[i] = (1.0 - frac) * clip.samples[static_cast<std::size_t>(i0)] +
                     frac * clip.samples[static_cast<std::size_t>(i0 + 1)];
  }
  return out;
}

AudioClip load_audio_16k(const std::string& path) {
  return resample_linear(load_wav(path), 16000);
}

double mu_law(double x, double mu) {
  if (!(mu > 0.0)) {
    throw ConfigError("mu_law: mu must be positive");
  }
  const double c = std::clamp(x, -1.0, 1.0);
  const double sign = c < 0.0 ? -1.0 : 1.0;
  return sign * std::log1p(mu * std::abs(c)) / std::log1p(mu);
}

std::vector<double> mu_law_encode(const std::vector<double>& samples,
                                  double mu, std::int64_t* clamp_count) {
  std::vector<double> out(samples.size());
  std::int64_t clamped = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i] < -1.0 || samples[i] > 1.0) ++clamped;
    out[i] = mu_law(samples[i], mu);
  }
  if (clamp_count != nullptr) *clamp_count = clamped;
  return out;
}

std::vector<double> softmax(const std::vector<double>& logits) {
  if (logits.empty()) {
    throw ShapeError("softmax: empty input");
  }
  const double cmax = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - cmax);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

int AudioWindowConfig::window_samples(int sample_rate) const {
  return static_cast<int>(std::llround(window_seconds * sample_rate));
}

int AudioWindowConfig::hop_samples(int sample_rate) const {
  return static_cast<int>(std::llround(hop_seconds * sample_rate));
}

std::vector<int> audio_window_offsets(int length, int window, int hop) {
  if (window <= 0 || hop <= 0) {
    throw ConfigError("audio_window_offsets: window and hop must be positive");
  }
  std::vector<int> offsets;
  for (int off = 0; off + window <= length; off += hop) {
    offsets.push_back(off);
  }
  return offsets;
}

struct StyleClassifier::ConvBlock {
  Tensor kernel;
  Tensor bias;
  int stride;
  int pad;
};

namespace {

struct ConvSpec {
  int out_channels;
  int kernel;
  int stride;
  int pad;
};

constexpr ConvSpec kConvSpecs[5] = {
    {8, 64, 8, 28}, {12, 32, 8, 12}, {16, 16, 8, 4}, {24, 8, 4, 2},
    {32, 4, 2, 1}};
constexpr int kFeatureWidth = 32;

}  // namespace

StyleClassifier::StyleClassifier(StyleClassifier&&) noexcept = default;
StyleClassifier& StyleClassifier::operator=(StyleClassifier&&) noexcept =
    default;
StyleClassifier::~StyleClassifier() = default;

StyleClassifier::StyleClassifier(Rng& rng) {
  int in_channels = 1;
  for (const ConvSpec& spec : kConvSpecs) {
    ConvBlock block;
    block.kernel = Tensor::zeros({spec.out_channels, in_channels, spec.kernel},
                                 true);
    init_uniform_fan_in(block.kernel, in_channels * spec.kernel, rng);
    block.bias = Tensor::zeros({spec.out_channels}, true);
    block.stride = spec.stride;
    block.pad = spec.pad;
    blocks_.push_back(std::move(block));
    in_channels = spec.out_channels;
  }
  head_weight_ = Tensor::zeros({kNumStyles, kFeatureWidth}, true);
  init_uniform_fan_in(head_weight_, kFeatureWidth, rng);
  head_bias_ = Tensor::zeros({kNumStyles}, true);
}

Tensor StyleClassifier::logits(const Tensor& x, bool training) {
  const Shape& s = x.shape();
  if (s.size() != 3 || s[0] != 1 || s[2] != 1) {
    throw ShapeError("StyleClassifier::logits: expected shape (1, L, 1)");
  }
  const std::int64_t length = s[1];
  if (length < min_samples()) {
    throw DataError("StyleClassifier::logits: window of " +
                    std::to_string(length) + " samples is shorter than the " +
                    std::to_string(min_samples()) + " the conv stack needs");
  }
  Tensor h = x;
  for (ConvBlock& block : blocks_) {
    h = relu(conv2d(h, block.kernel, block.bias, block.stride, block.pad));
  }
  (void)training;
  const int t = h.shape()[1];
  Tensor pool = tensordot(
      h, Tensor::full({t, 1}, 1.0 / static_cast<double>(t)), {{1, 0}, {2, 1}});
  return add(tensordot(head_weight_, pool, {{1, 0}}), head_bias_);
}

Tensor StyleClassifier::window_tensor(const std::vector<double>& samples,
                                      int offset, int length) const {
  if (offset < 0 || length <= 0 ||
      static_cast<std::size_t>(offset) + static_cast<std::size_t>(length) >
          samples.size()) {
    throw ShapeError("StyleClassifier::window_tensor: window [" +
                     std::to_string(offset) + ", " +
                     std::to_string(offset + length) + ") out of range for " +
                     std::to_string(samples.size()) + " samples");
  }
  std::vector<double> companded(static_cast<std::size_t>(length));
  for (int i = 0; i < length; ++i) {
    companded[static_cast<std::size_t>(i)] =
        mu_law(samples[static_cast<std::size_t>(offset + i)]);
  }
  return Tensor::from_data({1, length, 1}, companded);
}

ParamList StyleClassifier::parameters() {
  ParamList out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string base = "clf.conv" + std::to_string(i);
    out.push_back({base + ".kernel", blocks_[i].kernel});
    out.push_back({base + ".bias", blocks_[i].bias});
  }
  out.push_back({"clf.head.weight", head_weight_});
  out.push_back({"clf.head.bias", head_bias_});
  return out;
}

BufferList StyleClassifier::buffers() { return {}; }

ClassifyResult classify_style(const AudioClip& clip, StyleClassifier& model,
                              const AudioWindowConfig& cfg) {
  if (clip.sample_rate != 16000) {
    throw DataError("classify_style: clip must be resampled to 16 kHz, got " +
                    std::to_string(clip.sample_rate) + " Hz");
  }
  const int window = cfg.window_samples(clip.sample_rate);
  const int hop = cfg.hop_samples(clip.sample_rate);
  const auto length = static_cast<int>(clip.samples.size());
  const std::vector<int> offsets = audio_window_offsets(length, window, hop);
  if (offsets.empty()) {
    throw DataError("classify_style: clip of " + std::to_string(length) +
                    " samples is shorter than one " + std::to_string(window) +
                    "-sample window");
  }
  ClassifyResult result;
  result.probs = {0.0, 0.0, 0.0};
  for (int off : offsets) {
    Tensor x = model.window_tensor(clip.samples, off, window);
    Tensor out = model.logits(x, false);
    std::vector<double> probs = softmax(
        {out.at({0}), out.at({1}), out.at({2})});
    int best = 0;
    for (int k = 1; k < kNumStyles; ++k) {
      if (probs[static_cast<std::size_t>(k)] >
          probs[static_cast<std::size_t>(best)]) {
        best = k;
      }
    }
    result.per_window.push_back(static_cast<StyleLabel>(best));
    for (int k = 0; k < kNumStyles; ++k) {
      result.probs[static_cast<std::size_t>(k)] +=
          probs[static_cast<std::size_t>(k)];
    }
  }
  for (double& p : result.probs) {
    p /= static_cast<double>(offsets.size());
  }
  int best = 0;
  for (int k = 1; k < kNumStyles; ++k) {
    if (result.probs[static_cast<std::size_t>(k)] >
        result.probs[static_cast<std::size_t>(best)]) {
      best = k;
    }
  }
  result.label = static_cast<StyleLabel>(best);
  return result;
}

StyleLabel style_at_time(const ClassifyResult& result, double seconds,
                         const AudioWindowConfig& cfg) {
  if (result.per_window.empty()) {
    throw DataError("style_at_time: result has no windows");
  }
  const double center0 = cfg.window_seconds / 2.0;
  const double idx = (seconds - center0) / cfg.hop_seconds;
  auto w = static_cast<std::int64_t>(std::llround(idx));
  w = std::clamp<std::int64_t>(
      w, 0, static_cast<std::int64_t>(result.per_window.size()) - 1);
  return result.per_window[static_cast<std::size_t>(w)];
}

namespace {

struct TrainWindow {
  const AudioClip* clip;
  int offset;
  int length;
  int label;
};

std::map<std::string, std::vector<double>> snapshot_model(
    StyleClassifier& model) {
  std::map<std::string, std::vector<double>> out;
  for (auto& p : model.parameters()) {
    out[p.name] = p.tensor.mutable_data();
  }
  for (auto& b : model.buffers()) {
    out[b.name] = *b.values;
  }
  return out;
}

void restore_model(StyleClassifier& model,
                   const std::map<std::string, std::vector<double>>& snap) {
  for (auto& p : model.parameters()) {
    p.tensor.mutable_data() = snap.at(p.name);
  }
  for (auto& b : model.buffers()) {
    *b.values = snap.at(b.name);
  }
}

}  // namespace

StyleClassifier train_classifier(
    const std::vector<std::pair<AudioClip, StyleLabel>>& corpus,
    const ClassifierTrainConfig& cfg, FoldReport* report) {
  if (cfg.folds < 2) {
    throw ConfigError("train_classifier: need at least 2 folds, got " +
                      std::to_string(cfg.folds));
  }
  if (cfg.epochs < 1 || cfg.batch_size < 1) {
    throw ConfigError("train_classifier: epochs and batch size must be >= 1");
  }
  std::vector<std::vector<std::size_t>> by_class(kNumStyles);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].first.sample_rate != 16000) {
      throw DataError("train_classifier: clip " + std::to_string(i) +
                      " is not at 16 kHz");
    }
    by_class[static_cast<std::size_t>(corpus[i].second)].push_back(i);
  }
  for (int k = 0; k < kNumStyles; ++k) {
    const auto count = by_class[static_cast<std::size_t>(k)].size();
    if (count > 0 && count < static_cast<std::size_t>(cfg.folds)) {
      throw DataError("train_classifier: class '" +
                      std::string(style_name(static_cast<StyleLabel>(k))) +
                      "' has " + std::to_string(count) + " clips, fewer than " +
                      std::to_string(cfg.folds) + " folds");
    }
  }
  if (corpus.empty()) {
    throw DataError("train_classifier: empty corpus");
  }

  Rng root(cfg.seed);
  Rng fold_rng = root.fork(1);
  std::vector<int> fold_of(corpus.size(), 0);
  for (int k = 0; k < kNumStyles; ++k) {
    auto& members = by_class[static_cast<std::size_t>(k)];
    fold_rng.shuffle(members);
    for (std::size_t j = 0; j < members.size(); ++j) {
      fold_of[members[j]] = static_cast<int>(j % cfg.folds);
    }
  }

  const int window = cfg.window.window_samples(16000);
  const int hop = cfg.window.hop_samples(16000);

  FoldReport local;
  std::map<std::string, std::vector<double>> best_snapshot;
  double best_accuracy = -1.0;

  for (int fold = 0; fold < cfg.folds; ++fold) {
    std::vector<TrainWindow> windows;
    std::vector<std::size_t> val_clips;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      if (fold_of[i] == fold) {
        val_clips.push_back(i);
        continue;
      }
      const AudioClip& clip = corpus[i].first;
      for (int off : audio_window_offsets(
               static_cast<int>(clip.samples.size()), window, hop)) {
        windows.push_back({&clip, off, window,
                           static_cast<int>(corpus[i].second)});
      }
    }
    if (windows.empty()) {
      throw DataError("train_classifier: fold " + std::to_string(fold) +
                      " has no training windows");
    }
    if (val_clips.empty()) {
      throw DataError("train_classifier: fold " + std::to_string(fold) +
                      " has no validation clips");
    }

    Rng init_rng = root.fork(100 + static_cast<std::uint64_t>(fold));
    Rng order_rng = root.fork(200 + static_cast<std::uint64_t>(fold));
    StyleClassifier model(init_rng);
    Adam opt(model.parameters(), cfg.lr, cfg.beta1);

    std::vector<std::size_t> order(windows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      order_rng.shuffle(order);
      for (std::size_t start = 0; start < order.size();
           start += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t stop = std::min(
            order.size(), start + static_cast<std::size_t>(cfg.batch_size));
        Tensor batch_loss;
        for (std::size_t j = start; j < stop; ++j) {
          const TrainWindow& w = windows[order[j]];
          Tensor x = model.window_tensor(w.clip->samples, w.offset, w.length);
          Tensor out = model.logits(x, true);
          const double cmax = std::max(
              {out.at({0}), out.at({1}), out.at({2})});
          Tensor shifted = sub(out, cmax);
          Tensor loss =
              sub(log(sum(exp(shifted))), select(shifted, w.label));
          batch_loss = batch_loss.defined() ? add(batch_loss, loss) : loss;
        }
        Tensor mean_loss =
            mul(batch_loss, 1.0 / static_cast<double>(stop - start));
        backward(mean_loss);
        opt.step();
      }
    }

    int correct = 0;
    for (std::size_t i : val_clips) {
      ClassifyResult r = classify_style(corpus[i].first, model, cfg.window);
      if (r.label == corpus[i].second) ++correct;
    }
    const double accuracy =
        static_cast<double>(correct) / static_cast<double>(val_clips.size());
    local.fold_accuracy.push_back(accuracy);
    if (accuracy > best_accuracy) {
      best_accuracy = accuracy;
      local.best_fold = fold;
      best_snapshot = snapshot_model(model);
    }
  }

  local.mean_accuracy =
      std::accumulate(local.fold_accuracy.begin(), local.fold_accuracy.end(),
                      0.0) /
      static_cast<double>(local.fold_accuracy.size());
  if (report != nullptr) *report = local;

  Rng restore_rng(0);
  StyleClassifier best(restore_rng);
  restore_model(best, best_snapshot);
  return best;
}

}  // namespace dancegen
