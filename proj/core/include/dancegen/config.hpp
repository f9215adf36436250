#pragma once

#include <cstdint>
#include <string>

#include <dancegen/audio.hpp>
#include <dancegen/eval.hpp>
#include <dancegen/graphnet.hpp>
#include <dancegen/latent.hpp>
#include <dancegen/training.hpp>

namespace dancegen {

struct RunPaths {
  std::string manifest;
  std::string out_dir = "out";
  /// Empty strings resolve to out_dir/classifier.ckpt and out_dir/gan.ckpt.
  std::string classifier_checkpoint;
  std::string gan_checkpoint;
  std::string generated_manifest;
  std::string real_manifest;
};

struct GenerateSettings {
  int canvas_width = 512;
  int canvas_height = 512;
  int smoothing_knot_stride = 4;
  int fps = 24;
};

/// Everything the command line tool reads from one JSON file.  Every field
/// is optional and defaults to the value below; unknown fields and type
/// mismatches are rejected with the offending field path.
struct RunConfig {
  std::uint64_t seed = 0;
  RunPaths paths;
  TrainConfig train;
  /// Absolute GAN step count; 0 derives train.epochs passes over the
  /// window set instead.
  int train_steps = 0;
  /// Extra checkpoints every this many steps; 0 writes only the final one.
  int checkpoint_every = 0;
  GpConfig gp;
  NetConfig net;
  ClassifierTrainConfig classifier;
  FeatureExtractorConfig extractor;
  int eval_repeats = 5;
  GenerateSettings generate;

  /// Copies `seed` into every per-module seed field.
  void apply_seed(std::uint64_t value);

  std::string classifier_checkpoint_path() const;
  std::string gan_checkpoint_path() const;
};

/// Parses and validates a config JSON document.  Throws ConfigError naming
/// the field path on unknown fields, type mismatches, or malformed JSON.
RunConfig parse_run_config(const std::string& json_text);

/// parse_run_config on a file's contents; missing file throws DataError.
RunConfig load_run_config(const std::string& path);

/// The full config, defaults included, as a JSON document.
std::string run_config_json(const RunConfig& cfg);

}  // namespace dancegen
