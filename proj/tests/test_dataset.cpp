#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "dancegen/dataset.hpp"
#include "dancegen/errors.hpp"
#include "dancegen/rng.hpp"
#include "dancegen/skeleton.hpp"

using namespace dancegen;

namespace {

Motion marker_motion(int frames) {
  Motion m;
  m.fps = 24;
  m.style = StyleLabel::Salsa;
  for (int t = 0; t < frames; ++t) {
    Pose pose;
    for (int j = 0; j < body25::kJointCount; ++j) {
      pose.joints[static_cast<std::size_t>(j)] = {
          static_cast<double>(t), static_cast<double>(j)};
      pose.confidence[static_cast<std::size_t>(j)] = 1.0;
    }
    m.frames.push_back(pose);
  }
  return m;
}

Motion normalized_random_motion(int frames, Rng& rng) {
  Motion m;
  m.fps = 24;
  for (int t = 0; t < frames; ++t) {
    Pose pose;
    for (int j = 0; j < body25::kJointCount; ++j) {
      pose.joints[static_cast<std::size_t>(j)] = {rng.uniform(0.2, 0.8),
                                                  rng.uniform(0.2, 0.8)};
      pose.confidence[static_cast<std::size_t>(j)] = 1.0;
    }
    m.frames.push_back(pose);
  }
  return m;
}

}  // namespace

TEST_CASE("window counts follow the shift arithmetic") {
  CHECK(window_count(64, 64, 32) == 1);
  CHECK(window_count(128, 64, 32) == 3);
  CHECK(window_count(96, 64, 16) == 3);
  CHECK(window_count(63, 64, 32) == 0);
  CHECK(window_count(95, 64, 32) == 1);
  CHECK_THROWS_AS(window_count(64, 0, 32), ConfigError);
  CHECK_THROWS_AS(window_count(64, 64, 0), ConfigError);
}

TEST_CASE("extract_windows produces exact slices") {
  Motion m = marker_motion(128);
  std::vector<Motion> windows = extract_windows(m, 64, 32);
  REQUIRE(windows.size() == 3);
  for (const Motion& w : windows) {
    CHECK(w.frames.size() == 64);
    CHECK(w.fps == 24);
    CHECK(w.style == StyleLabel::Salsa);
  }
  CHECK(windows[0].frames[0].joints[0].x == 0.0);
  CHECK(windows[1].frames[0].joints[0].x == 32.0);
  CHECK(windows[2].frames[0].joints[0].x == 64.0);
  CHECK(windows[1].frames[63].joints[0].x == 95.0);
  CHECK(windows[1].frames[10].joints[7].y == 7.0);

  Motion brief = marker_motion(63);
  CHECK_THROWS_AS(extract_windows(brief, 64, 32), DataError);
}

TEST_CASE("limb joint sets cover arms and legs without overlap") {
  CHECK(arm_joints() == std::vector<int>{2, 3, 4, 5, 6, 7});
  CHECK(leg_joints() ==
        std::vector<int>{9, 10, 11, 12, 13, 14, 19, 20, 21, 22, 23, 24});
  const std::vector<int>& all = limb_joints();
  CHECK(all.size() == 18);
  CHECK(std::is_sorted(all.begin(), all.end()));
  CHECK(std::find(all.begin(), all.end(), 8) == all.end());
  CHECK(std::find(all.begin(), all.end(), 0) == all.end());
}

TEST_CASE("gp limb noise leaves non-limb joints and confidences bit-exact") {
  Rng rng(3);
  Motion m = normalized_random_motion(64, rng);
  AugmentConfig cfg;
  cfg.gp_noise = true;
  cfg.gp_amplitude = 0.02;
  Rng noise_rng(9);
  Motion noisy = gp_limb_noise(m, cfg, noise_rng);
  REQUIRE(noisy.frames.size() == m.frames.size());

  bool limb_changed = false;
  for (std::size_t t = 0; t < m.frames.size(); ++t) {
    for (int j = 0; j < body25::kJointCount; ++j) {
      const auto& a = m.frames[t].joints[static_cast<std::size_t>(j)];
      const auto& b = noisy.frames[t].joints[static_cast<std::size_t>(j)];
      const bool is_limb =
          std::find(limb_joints().begin(), limb_joints().end(), j) !=
          limb_joints().end();
      if (!is_limb) {
        CHECK(a.x == b.x);
        CHECK(a.y == b.y);
      } else if (a.x != b.x || a.y != b.y) {
        limb_changed = true;
      }
      CHECK(m.frames[t].confidence[static_cast<std::size_t>(j)] ==
            noisy.frames[t].confidence[static_cast<std::size_t>(j)]);
    }
  }
  CHECK(limb_changed);

  cfg.gp_amplitude = 0.0;
  Rng zero_rng(9);
  Motion same = gp_limb_noise(m, cfg, zero_rng);
  for (std::size_t t = 0; t < m.frames.size(); ++t) {
    for (int j = 0; j < body25::kJointCount; ++j) {
      CHECK(same.frames[t].joints[static_cast<std::size_t>(j)].x ==
            m.frames[t].joints[static_cast<std::size_t>(j)].x);
      CHECK(same.frames[t].joints[static_cast<std::size_t>(j)].y ==
            m.frames[t].joints[static_cast<std::size_t>(j)].y);
    }
  }

  cfg.gp_amplitude = 0.02;
  cfg.joints = {99};
  Rng bad_rng(1);
  CHECK_THROWS_AS(gp_limb_noise(m, cfg, bad_rng), ConfigError);
}

TEST_CASE("gp limb noise is deterministic under the rng seed") {
  Rng rng(5);
  Motion m = normalized_random_motion(64, rng);
  AugmentConfig cfg;
  cfg.gp_amplitude = 0.02;
  Rng a(123);
  Rng b(123);
  Rng c(124);
  Motion na = gp_limb_noise(m, cfg, a);
  Motion nb = gp_limb_noise(m, cfg, b);
  Motion nc = gp_limb_noise(m, cfg, c);
  bool ab_same = true;
  bool ac_same = true;
  for (std::size_t t = 0; t < m.frames.size(); ++t) {
    for (int j = 0; j < body25::kJointCount; ++j) {
      const auto ja = na.frames[t].joints[static_cast<std::size_t>(j)];
      const auto jb = nb.frames[t].joints[static_cast<std::size_t>(j)];
      const auto jc = nc.frames[t].joints[static_cast<std::size_t>(j)];
      if (ja.x != jb.x || ja.y != jb.y) ab_same = false;
      if (ja.x != jc.x || ja.y != jc.y) ac_same = false;
    }
  }
  CHECK(ab_same);
  CHECK(!ac_same);
}

TEST_CASE("gp limb noise paths are smooth: lag-1 autocorrelation above 0.9") {
  Rng rng(7);
  Motion m = normalized_random_motion(64, rng);
  AugmentConfig cfg;
  cfg.gp_amplitude = 0.02;
  cfg.gp_sigma = 100.0;
  cfg.joints = {4};
  Rng noise_rng(31);
  double sum_xy = 0.0;
  double sum_xx = 0.0;
  for (int draw = 0; draw < 1000; ++draw) {
    Motion noisy = gp_limb_noise(m, cfg, noise_rng);
    std::vector<double> path(m.frames.size());
    for (std::size_t t = 0; t < m.frames.size(); ++t) {
      path[t] = noisy.frames[t].joints[4].x - m.frames[t].joints[4].x;
    }
    for (std::size_t t = 0; t + 1 < path.size(); ++t) {
      sum_xy += path[t] * path[t + 1];
      sum_xx += path[t] * path[t];
    }
  }
  CHECK(sum_xy / sum_xx > 0.9);
}

TEST_CASE("synthetic corpus is balanced, long enough, and deterministic") {
  Corpus corpus = make_synthetic_corpus(42);
  CHECK(corpus.train.size() == 60);
  CHECK(corpus.eval.size() == 30);
  int train_styles[3] = {0, 0, 0};
  for (const ClipRecord& clip : corpus.train) {
    ++train_styles[static_cast<int>(clip.style)];
    CHECK(clip.motion.frames.size() >= 64);
    CHECK(clip.motion.fps == 24);
    CHECK(clip.motion.style == clip.style);
    CHECK(clip.audio.sample_rate == 16000);
    const double motion_seconds =
        static_cast<double>(clip.motion.frames.size()) / 24.0;
    const double audio_seconds = clip.audio.duration_seconds();
    CHECK(std::abs(motion_seconds - audio_seconds) < 1e-3);
    CHECK(!clip.source_id.empty());
  }
  CHECK(train_styles[0] == 20);
  CHECK(train_styles[1] == 20);
  CHECK(train_styles[2] == 20);

  Corpus again = make_synthetic_corpus(42);
  REQUIRE(again.train.size() == corpus.train.size());
  for (std::size_t i = 0; i < corpus.train.size(); ++i) {
    CHECK(again.train[i].source_id == corpus.train[i].source_id);
    CHECK(again.train[i].audio.samples == corpus.train[i].audio.samples);
    REQUIRE(again.train[i].motion.frames.size() ==
            corpus.train[i].motion.frames.size());
    bool same = true;
    for (std::size_t t = 0; t < corpus.train[i].motion.frames.size(); ++t) {
      for (int j = 0; j < body25::kJointCount; ++j) {
        const auto a =
            corpus.train[i].motion.frames[t].joints[static_cast<std::size_t>(j)];
        const auto b =
            again.train[i].motion.frames[t].joints[static_cast<std::size_t>(j)];
        if (a.x != b.x || a.y != b.y) same = false;
      }
    }
    CHECK(same);
  }

  Corpus shifted = make_synthetic_corpus(43);
  bool any_diff = false;
  for (std::size_t i = 0; i < corpus.train.size() && !any_diff; ++i) {
    if (shifted.train[i].audio.samples != corpus.train[i].audio.samples) {
      any_diff = true;
    }
  }
  CHECK(any_diff);
}

TEST_CASE("synthetic styles separate by per-joint speed centroids") {
  Corpus corpus = make_synthetic_corpus(11);
  CHECK(centroid_separability(corpus) >= 0.95);
}

TEST_CASE("speed profiles match the style designs") {
  Corpus corpus = make_synthetic_corpus(19, 2, 1);
  for (const ClipRecord& clip : corpus.train) {
    std::vector<double> profile = joint_speed_profile(clip.motion);
    double arm_speed = 0.0;
    for (int j : arm_joints()) arm_speed += profile[static_cast<std::size_t>(j)];
    arm_speed /= static_cast<double>(arm_joints().size());
    double leg_speed = 0.0;
    for (int j : leg_joints()) leg_speed += profile[static_cast<std::size_t>(j)];
    leg_speed /= static_cast<double>(leg_joints().size());
    if (clip.style == StyleLabel::Ballet) {
      CHECK(arm_speed > 3.0 * leg_speed);
    } else if (clip.style == StyleLabel::MJ) {
      CHECK(leg_speed > 2.0 * arm_speed);
    } else {
      CHECK(arm_speed > 0.5);
      CHECK(leg_speed > 0.5);
    }
  }
}

TEST_CASE("corpus round trips through the manifest on disk") {
  namespace fs = std::filesystem;
  const std::string dir = "/tmp/dancegen_dataset_roundtrip";
  fs::remove_all(dir);
  Corpus corpus = make_synthetic_corpus(3, 2, 1);
  const std::string manifest = write_corpus(corpus, dir);
  CHECK(fs::exists(manifest));

  Corpus back = load_corpus(manifest);
  REQUIRE(back.train.size() == corpus.train.size());
  REQUIRE(back.eval.size() == corpus.eval.size());
  for (std::size_t i = 0; i < corpus.train.size(); ++i) {
    CHECK(back.train[i].style == corpus.train[i].style);
    CHECK(back.train[i].source_id == corpus.train[i].source_id);
    REQUIRE(back.train[i].motion.frames.size() ==
            corpus.train[i].motion.frames.size());
    double max_motion_err = 0.0;
    for (std::size_t t = 0; t < corpus.train[i].motion.frames.size(); ++t) {
      for (int j = 0; j < body25::kJointCount; ++j) {
        const auto a =
            corpus.train[i].motion.frames[t].joints[static_cast<std::size_t>(j)];
        const auto b =
            back.train[i].motion.frames[t].joints[static_cast<std::size_t>(j)];
        max_motion_err = std::max(max_motion_err, std::abs(a.x - b.x));
        max_motion_err = std::max(max_motion_err, std::abs(a.y - b.y));
      }
    }
    CHECK(max_motion_err == 0.0);
    REQUIRE(back.train[i].audio.samples.size() ==
            corpus.train[i].audio.samples.size());
    double max_audio_err = 0.0;
    for (std::size_t k = 0; k < corpus.train[i].audio.samples.size(); ++k) {
      max_audio_err = std::max(
          max_audio_err, std::abs(back.train[i].audio.samples[k] -
                                  corpus.train[i].audio.samples[k]));
    }
    CHECK(max_audio_err < 1e-4);
  }
  fs::remove_all(dir);
}

TEST_CASE("load_corpus reports which manifest field is broken") {
  namespace fs = std::filesystem;
  CHECK_THROWS_AS(load_corpus("/tmp/dancegen_no_manifest/manifest.json"),
                  DataError);

  const std::string dir = "/tmp/dancegen_dataset_badmanifest";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::FILE* f = std::fopen((dir + "/manifest.json").c_str(), "w");
    REQUIRE(f != nullptr);
    std::fputs("{\"clips\":[{\"motion_file\":\"m.json\"}]}", f);
    std::fclose(f);
  }
  CHECK_THROWS_WITH_AS(load_corpus(dir + "/manifest.json"),
                       doctest::Contains("clips[0].audio_file"), DataError);
  {
    std::FILE* f = std::fopen((dir + "/manifest.json").c_str(), "w");
    REQUIRE(f != nullptr);
    std::fputs("not json at all", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_corpus(dir + "/manifest.json"), DataError);
  fs::remove_all(dir);
}

TEST_CASE("corpus stats reproduce the window arithmetic") {
  Corpus corpus = make_synthetic_corpus(1, 3, 1);
  // Per style the three train clips have 64, 80, and 96 frames: 1 + 1 + 2
  // windows at stride 32, so 4 per style and 12 in total.
  const std::string stats = corpus_stats(corpus, 64, 32);
  CHECK(stats.find("train: 9 clips (ballet 3, mj 3, salsa 3), 12 windows") !=
        std::string::npos);
  CHECK(stats.find("eval: 3 clips (ballet 1, mj 1, salsa 1), 3 windows") !=
        std::string::npos);
}
