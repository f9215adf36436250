#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <dancegen/audio.hpp>
#include <dancegen/rng.hpp>
#include <dancegen/skeleton.hpp>
#include <dancegen/style.hpp>

namespace dancegen {

/// One labeled motion clip with its soundtrack.
struct ClipRecord {
  Motion motion;
  AudioClip audio;
  StyleLabel style;
  std::string source_id;
};

struct Corpus {
  std::vector<ClipRecord> train;
  std::vector<ClipRecord> eval;
};

/// Number of `window`-frame slices a clip of `length` frames yields when
/// offsets advance by `stride`: 0 if length < window, else
/// (length - window) / stride + 1.
int window_count(int length, int window, int stride);

/// The slices themselves, starting at offsets 0, stride, 2*stride, ...
/// fps and style carry over.  Throws when the motion is shorter than one
/// window.
std::vector<Motion> extract_windows(const Motion& motion, int window = 64,
                                    int stride = 32);

/// Arm chain joints: shoulders, elbows, wrists.
const std::vector<int>& arm_joints();
/// Leg chain joints: hips, knees, ankles, toes, heels.
const std::vector<int>& leg_joints();
/// Arms and legs combined, ascending.
const std::vector<int>& limb_joints();

struct AugmentConfig {
  int shift_stride = 32;
  bool gp_noise = false;
  double gp_amplitude = 0.02;
  double gp_sigma = 100.0;
  std::vector<int> joints = limb_joints();
};

/// Adds an independent smooth Gaussian-process path (RBF kernel over frame
/// index, bandwidth cfg.gp_sigma, scaled by cfg.gp_amplitude) to the x and
/// y coordinate of every listed joint.  Unlisted joints and all confidence
/// values are returned bit-exactly; amplitude 0 returns a plain copy.
Motion gp_limb_noise(const Motion& motion, const AugmentConfig& cfg, Rng& rng);

/// Deterministic three-style fixture corpus.  Styles move differently
/// (slow arm arcs / sharp periodic leg steps / whole-body sway) and sound
/// differently (440 Hz tone / rhythmic noise bursts / pulsing 100 Hz tone).
/// Clips are 64 to 96 frames at 24 FPS with 16 kHz audio of matching
/// duration.  Identical seeds give identical corpora.
Corpus make_synthetic_corpus(std::uint64_t seed, int train_per_style = 20,
                             int eval_per_style = 10);

/// Writes motions/, audio/, and manifest.json under dir (created if
/// missing); returns the manifest path.
std::string write_corpus(const Corpus& corpus, const std::string& dir);

/// Reads a corpus back from a manifest written by write_corpus.
Corpus load_corpus(const std::string& manifest_path);

/// Human-readable per-split clip, style, and window counts.
std::string corpus_stats(const Corpus& corpus, int window = 64,
                         int stride = 32);

/// Mean L1 speed per joint over the clip: 25 values, the fingerprint that
/// separates the synthetic styles.
std::vector<double> joint_speed_profile(const Motion& motion);

/// Nearest-centroid classification accuracy on the eval split, centroids
/// fit on the train split's speed profiles.
double centroid_separability(const Corpus& corpus);

}  // namespace dancegen
