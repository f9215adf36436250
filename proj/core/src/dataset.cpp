#include <dancegen/dataset.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include <dancegen/errors.hpp>
#include <dancegen/latent.hpp>
#include <dancegen/linalg.hpp>

namespace dancegen {

namespace {

constexpr double kPi = 3.14159265358979323846;

}  // namespace

int window_count(int length, int window, int stride) {
  if (window < 1 || stride < 1) {
    throw ConfigError("window_count: window and stride must be >= 1");
  }
  if (length < window) return 0;
  return (length - window) / stride + 1;
}

std::vector<Motion> extract_windows(const Motion& motion, int window,
                                    int stride) {
  const auto length = static_cast<int>(motion.frames.size());
  const int count = window_count(length, window, stride);
  if (count == 0) {
    throw DataError("extract_windows: motion of " + std::to_string(length) +
                    " frames is shorter than one " + std::to_string(window) +
                    "-frame window");
  }
  std::vector<Motion> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int w = 0; w < count; ++w) {
    Motion slice;
    slice.fps = motion.fps;
    slice.style = motion.style;
    const int start = w * stride;
    slice.frames.assign(
        motion.frames.begin() + start,
        motion.frames.begin() + start + window);
    out.push_back(std::move(slice));
  }
  return out;
}

const std::vector<int>& arm_joints() {
  static const std::vector<int> joints = {2, 3, 4, 5, 6, 7};
  return joints;
}

const std::vector<int>& leg_joints() {
  static const std::vector<int> joints = {9,  10, 11, 12, 13, 14,
                                          19, 20, 21, 22, 23, 24};
  return joints;
}

const std::vector<int>& limb_joints() {
  static const std::vector<int> joints = [] {
    std::vector<int> all = arm_joints();
    all.insert(all.end(), leg_joints().begin(), leg_joints().end());
    std::sort(all.begin(), all.end());
    return all;
  }();
  return joints;
}

Motion gp_limb_noise(const Motion& motion, const AugmentConfig& cfg,
                     Rng& rng) {
  if (!(cfg.gp_amplitude >= 0.0)) {
    throw ConfigError("gp_limb_noise: amplitude must be non-negative");
  }
  for (int j : cfg.joints) {
    if (j < 0 || j >= body25::kJointCount) {
      throw ConfigError("gp_limb_noise: joint index " + std::to_string(j) +
                        " out of range");
    }
  }
  Motion out = motion;
  const auto n = static_cast<int>(motion.frames.size());
  if (cfg.gp_amplitude == 0.0 || n == 0 || cfg.joints.empty()) {
    return out;
  }
  const Mat lower = gp_rbf_factor(n, cfg.gp_sigma);
  std::vector<double> eps(static_cast<std::size_t>(n));
  std::vector<double> path(static_cast<std::size_t>(n));
  auto draw_path = [&] {
    for (int t = 0; t < n; ++t) eps[static_cast<std::size_t>(t)] = rng.normal();
    for (int t = 0; t < n; ++t) {
      double acc = 0.0;
      for (int k = 0; k <= t; ++k) {
        acc += lower.at(t, k) * eps[static_cast<std::size_t>(k)];
      }
      path[static_cast<std::size_t>(t)] = cfg.gp_amplitude * acc;
    }
  };
  for (int j : cfg.joints) {
    draw_path();
    for (int t = 0; t < n; ++t) {
      out.frames[static_cast<std::size_t>(t)]
          .joints[static_cast<std::size_t>(j)]
          .x += path[static_cast<std::size_t>(t)];
    }
    draw_path();
    for (int t = 0; t < n; ++t) {
      out.frames[static_cast<std::size_t>(t)]
          .joints[static_cast<std::size_t>(j)]
          .y += path[static_cast<std::size_t>(t)];
    }
  }
  return out;
}

namespace {

// Canonical standing figure on a 256-unit canvas, y growing downward.
const double kBasePose[body25::kJointCount][2] = {
    {128, 60},   // nose
    {128, 84},   // neck
    {106, 86},   // right shoulder
    {98, 118},   // right elbow
    {94, 146},   // right wrist
    {150, 86},   // left shoulder
    {158, 118},  // left elbow
    {162, 146},  // left wrist
    {128, 150},  // mid hip
    {114, 152},  // right hip
    {112, 192},  // right knee
    {110, 230},  // right ankle
    {142, 152},  // left hip
    {144, 192},  // left knee
    {146, 230},  // left ankle
    {122, 54},   // right eye
    {134, 54},   // left eye
    {116, 58},   // right ear
    {140, 58},   // left ear
    {150, 240},  // left big toe
    {156, 238},  // left small toe
    {142, 236},  // left heel
    {106, 240},  // right big toe
    {100, 238},  // right small toe
    {114, 236},  // right heel
};

Pose base_pose() {
  Pose pose;
  for (int j = 0; j < body25::kJointCount; ++j) {
    pose.joints[static_cast<std::size_t>(j)] = {kBasePose[j][0],
                                                kBasePose[j][1]};
    pose.confidence[static_cast<std::size_t>(j)] = 1.0;
  }
  return pose;
}

// Slow smooth arm arcs; legs nearly still.
Motion ballet_motion(int frames, double phase, double scale) {
  Motion m;
  m.fps = 24;
  m.style = StyleLabel::Ballet;
  for (int t = 0; t < frames; ++t) {
    Pose pose = base_pose();
    const double theta = 2.0 * kPi * 0.25 * t / 24.0 + phase;
    const double wrist = 26.0 * scale;
    const double elbow = 14.0 * scale;
    pose.joints[4].x += -wrist * std::sin(theta);
    pose.joints[4].y += -wrist * 0.7 * std::cos(theta);
    pose.joints[3].x += -elbow * std::sin(theta - 0.5);
    pose.joints[3].y += -elbow * 0.7 * std::cos(theta - 0.5);
    pose.joints[7].x += wrist * std::sin(theta + 0.4);
    pose.joints[7].y += -wrist * 0.7 * std::cos(theta + 0.4);
    pose.joints[6].x += elbow * std::sin(theta - 0.1);
    pose.joints[6].y += -elbow * 0.7 * std::cos(theta - 0.1);
    pose.joints[2].x += -3.0 * std::sin(theta);
    pose.joints[5].x += 3.0 * std::sin(theta + 0.4);
    const double sway = 1.0 * std::sin(2.0 * kPi * 0.2 * t / 24.0 + phase);
    for (auto& joint : pose.joints) joint.x += sway;
    m.frames.push_back(pose);
  }
  return m;
}

// Sharp alternating leg steps on an eight-frame beat; arms add small
// accents on the same beat.
Motion mj_motion(int frames, double phase, double scale) {
  Motion m;
  m.fps = 24;
  m.style = StyleLabel::MJ;
  const int beat = 8;
  const int offset = static_cast<int>(phase * 16.0 / (2.0 * kPi)) % beat;
  for (int t = 0; t < frames; ++t) {
    Pose pose = base_pose();
    const int tick = (t + offset) / beat;
    const double step = (tick % 2 == 0 ? 1.0 : -1.0) * 16.0 * scale;
    const double lift = ((t + offset) % beat < 2) ? 6.0 * scale : 0.0;
    for (int j : {10, 11, 22, 23, 24}) {
      pose.joints[static_cast<std::size_t>(j)].x += step;
      pose.joints[static_cast<std::size_t>(j)].y -= lift;
    }
    for (int j : {13, 14, 19, 20, 21}) {
      pose.joints[static_cast<std::size_t>(j)].x -= step;
      pose.joints[static_cast<std::size_t>(j)].y -= lift * 0.5;
    }
    const double accent = (tick % 2 == 0 ? 1.0 : -1.0) * 3.0 * scale;
    pose.joints[4].x += accent;
    pose.joints[7].x -= accent;
    m.frames.push_back(pose);
  }
  return m;
}

// Whole-body lateral sway with counter-phase hips.
Motion salsa_motion(int frames, double phase, double scale) {
  Motion m;
  m.fps = 24;
  m.style = StyleLabel::Salsa;
  for (int t = 0; t < frames; ++t) {
    Pose pose = base_pose();
    const double theta = 2.0 * kPi * 1.2 * t / 24.0 + phase;
    const double sway = 10.0 * scale * std::sin(theta);
    for (auto& joint : pose.joints) joint.x += sway;
    const double hip = 4.0 * scale * std::sin(theta + kPi);
    for (int j : {8, 9, 12}) {
      pose.joints[static_cast<std::size_t>(j)].x += hip;
      pose.joints[static_cast<std::size_t>(j)].y +=
          2.0 * scale * std::sin(2.0 * theta);
    }
    m.frames.push_back(pose);
  }
  return m;
}

AudioClip style_audio(StyleLabel style, int frames, double phase, Rng& rng) {
  AudioClip clip;
  clip.sample_rate = 16000;
  const auto n = static_cast<std::size_t>(
      std::llround(static_cast<double>(frames) / 24.0 * 16000.0));
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / 16000.0;
    double s = 0.0;
    switch (style) {
      case StyleLabel::Ballet:
        s = 0.5 * std::sin(2.0 * kPi * 440.0 * t + phase);
        break;
      case StyleLabel::MJ: {
        const double env =
            std::sin(2.0 * kPi * 2.0 * t + phase) > 0.0 ? 1.0 : 0.15;
        s = 0.35 * env * (2.0 * rng.uniform01() - 1.0);
        break;
      }
      case StyleLabel::Salsa: {
        const double env = std::abs(std::sin(2.0 * kPi * 1.0 * t + phase));
        s = 0.5 * env * std::sin(2.0 * kPi * 100.0 * t + phase);
        break;
      }
    }
    clip.samples[i] = s;
  }
  return clip;
}

Motion style_motion(StyleLabel style, int frames, double phase, double scale) {
  switch (style) {
    case StyleLabel::Ballet:
      return ballet_motion(frames, phase, scale);
    case StyleLabel::MJ:
      return mj_motion(frames, phase, scale);
    case StyleLabel::Salsa:
      return salsa_motion(frames, phase, scale);
  }
  throw ConfigError("style_motion: unknown style");
}

}  // namespace

Corpus make_synthetic_corpus(std::uint64_t seed, int train_per_style,
                             int eval_per_style) {
  if (train_per_style < 1 || eval_per_style < 1) {
    throw ConfigError("make_synthetic_corpus: per-style counts must be >= 1");
  }
  Rng root(seed);
  Corpus corpus;
  for (int split = 0; split < 2; ++split) {
    const int per_style = split == 0 ? train_per_style : eval_per_style;
    auto& bucket = split == 0 ? corpus.train : corpus.eval;
    for (int s = 0; s < kNumStyles; ++s) {
      const auto style = static_cast<StyleLabel>(s);
      for (int i = 0; i < per_style; ++i) {
        Rng clip_rng = root.fork(
            (static_cast<std::uint64_t>(split) << 32) |
            (static_cast<std::uint64_t>(s) << 16) |
            static_cast<std::uint64_t>(i));
        const int frames = 64 + 16 * (i % 3);
        const double phase = clip_rng.uniform(0.0, 2.0 * kPi);
        const double scale = clip_rng.uniform(0.9, 1.1);
        ClipRecord record;
        record.motion = style_motion(style, frames, phase, scale);
        record.audio = style_audio(style, frames, phase, clip_rng);
        record.style = style;
        std::ostringstream id;
        id << style_name(style) << '_' << (split == 0 ? "train" : "eval")
           << '_' << (i < 10 ? "0" : "") << i;
        record.source_id = id.str();
        bucket.push_back(std::move(record));
      }
    }
  }
  return corpus;
}

std::string write_corpus(const Corpus& corpus, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "motions", ec);
  fs::create_directories(fs::path(dir) / "audio", ec);
  if (ec) {
    throw DataError("write_corpus: cannot create directories under '" + dir +
                    "': " + ec.message());
  }
  nlohmann::json manifest;
  manifest["clips"] = nlohmann::json::array();
  auto emit = [&](const std::vector<ClipRecord>& clips, const char* split) {
    for (const ClipRecord& clip : clips) {
      const std::string motion_rel = "motions/" + clip.source_id + ".json";
      const std::string audio_rel = "audio/" + clip.source_id + ".wav";
      save_motion((fs::path(dir) / motion_rel).string(), clip.motion);
      save_wav((fs::path(dir) / audio_rel).string(), clip.audio);
      manifest["clips"].push_back({{"motion_file", motion_rel},
                                   {"audio_file", audio_rel},
                                   {"style", style_name(clip.style)},
                                   {"split", split}});
    }
  };
  emit(corpus.train, "train");
  emit(corpus.eval, "eval");
  const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
  std::ofstream out(manifest_path);
  if (!out) {
    throw DataError("write_corpus: cannot open '" + manifest_path +
                    "' for writing");
  }
  out << manifest.dump(2) << '\n';
  return manifest_path;
}

Corpus load_corpus(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream in(manifest_path);
  if (!in) {
    throw DataError("load_corpus: cannot open '" + manifest_path + "'");
  }
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("load_corpus: '" + manifest_path +
                    "' is not valid JSON: " + e.what());
  }
  if (!manifest.contains("clips") || !manifest["clips"].is_array()) {
    throw DataError("load_corpus: manifest is missing the 'clips' array");
  }
  const fs::path base = fs::path(manifest_path).parent_path();
  Corpus corpus;
  std::size_t index = 0;
  for (const auto& entry : manifest["clips"]) {
    const std::string where = "clips[" + std::to_string(index) + "]";
    for (const char* field :
         {"motion_file", "audio_file", "style", "split"}) {
      if (!entry.contains(field) || !entry[field].is_string()) {
        throw DataError("load_corpus: " + where + "." + field +
                        " must be a string");
      }
    }
    ClipRecord record;
    const std::string motion_file = entry["motion_file"].get<std::string>();
    const std::string audio_file = entry["audio_file"].get<std::string>();
    record.motion = load_motion((base / motion_file).string());
    record.audio = resample_linear(load_wav((base / audio_file).string()),
                                   16000);
    record.style = style_from_name(entry["style"].get<std::string>());
    record.source_id = fs::path(motion_file).stem().string();
    const std::string split = entry["split"].get<std::string>();
    if (split == "train") {
      corpus.train.push_back(std::move(record));
    } else if (split == "eval") {
      corpus.eval.push_back(std::move(record));
    } else {
      throw DataError("load_corpus: " + where + ".split must be 'train' or "
                      "'eval', got '" + split + "'");
    }
    ++index;
  }
  return corpus;
}

std::string corpus_stats(const Corpus& corpus, int window, int stride) {
  std::ostringstream out;
  auto describe = [&](const std::vector<ClipRecord>& clips,
                      const char* split) {
    int per_style[kNumStyles] = {0, 0, 0};
    int windows = 0;
    for (const ClipRecord& clip : clips) {
      ++per_style[static_cast<int>(clip.style)];
      windows += window_count(static_cast<int>(clip.motion.frames.size()),
                              window, stride);
    }
    out << split << ": " << clips.size() << " clips (";
    for (int s = 0; s < kNumStyles; ++s) {
      out << style_name(static_cast<StyleLabel>(s)) << ' ' << per_style[s]
          << (s + 1 < kNumStyles ? ", " : "");
    }
    out << "), " << windows << " windows of " << window << " frames at stride "
        << stride << '\n';
  };
  describe(corpus.train, "train");
  describe(corpus.eval, "eval");
  return out.str();
}

std::vector<double> joint_speed_profile(const Motion& motion) {
  std::vector<double> profile(body25::kJointCount, 0.0);
  const auto n = motion.frames.size();
  if (n < 2) return profile;
  for (std::size_t t = 1; t < n; ++t) {
    for (int j = 0; j < body25::kJointCount; ++j) {
      const Joint2d& a = motion.frames[t - 1].joints[static_cast<std::size_t>(j)];
      const Joint2d& b = motion.frames[t].joints[static_cast<std::size_t>(j)];
      profile[static_cast<std::size_t>(j)] +=
          std::abs(b.x - a.x) + std::abs(b.y - a.y);
    }
  }
  for (double& v : profile) v /= static_cast<double>(n - 1);
  return profile;
}

double centroid_separability(const Corpus& corpus) {
  if (corpus.train.empty() || corpus.eval.empty()) {
    throw DataError("centroid_separability: both splits must be non-empty");
  }
  std::vector<std::vector<double>> centroid(
      kNumStyles, std::vector<double>(body25::kJointCount, 0.0));
  std::vector<int> counts(kNumStyles, 0);
  for (const ClipRecord& clip : corpus.train) {
    const std::vector<double> profile = joint_speed_profile(clip.motion);
    auto& c = centroid[static_cast<std::size_t>(clip.style)];
    for (std::size_t j = 0; j < profile.size(); ++j) c[j] += profile[j];
    ++counts[static_cast<std::size_t>(clip.style)];
  }
  for (int s = 0; s < kNumStyles; ++s) {
    if (counts[static_cast<std::size_t>(s)] == 0) continue;
    for (double& v : centroid[static_cast<std::size_t>(s)]) {
      v /= counts[static_cast<std::size_t>(s)];
    }
  }
  int correct = 0;
  for (const ClipRecord& clip : corpus.eval) {
    const std::vector<double> profile = joint_speed_profile(clip.motion);
    int best = -1;
    double best_dist = 0.0;
    for (int s = 0; s < kNumStyles; ++s) {
      if (counts[static_cast<std::size_t>(s)] == 0) continue;
      double dist = 0.0;
      for (std::size_t j = 0; j < profile.size(); ++j) {
        const double d = profile[j] - centroid[static_cast<std::size_t>(s)][j];
        dist += d * d;
      }
      if (best < 0 || dist < best_dist) {
        best = s;
        best_dist = dist;
      }
    }
    if (best == static_cast<int>(clip.style)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(corpus.eval.size());
}

}  // namespace dancegen
