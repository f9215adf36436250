#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <dancegen/audio.hpp>
#include <dancegen/config.hpp>
#include <dancegen/eval.hpp>
#include <dancegen/skeleton.hpp>
#include <dancegen/style.hpp>

namespace dancegen {

struct TrainClassifierResult {
  std::string checkpoint_path;
  std::string report_path;
  FoldReport report;
};

/// Trains the audio style classifier on the manifest's train split with
/// stratified cross validation, keeps the best fold's model, and writes
/// the checkpoint plus a JSON report of per-fold accuracies.
TrainClassifierResult cmd_train_classifier(const RunConfig& cfg);

struct TrainGanResult {
  std::string checkpoint_path;
  std::string metrics_path;
  std::vector<std::string> periodic_checkpoints;
  int steps_run = 0;
  int final_step = 0;
  bool resumed = false;
};

/// Trains the motion GAN on the manifest's train split.  When the final
/// checkpoint already exists the run resumes from it and the step counter
/// continues.  Writes cfg.checkpoint_every-spaced snapshots, the final
/// checkpoint, and a metrics CSV with one row per step of this run.
TrainGanResult cmd_train_gan(const RunConfig& cfg);

struct GenerateRequest {
  /// Exactly one of audio_path / style must be set.
  std::string audio_path;
  std::optional<StyleLabel> style;
  int length = 64;
  std::uint64_t seed = 0;
  std::string output_name = "motion.json";
};

struct GenerateResult {
  std::string motion_path;
  std::vector<StyleLabel> per_step_styles;
  Motion motion;
};

/// Synthesizes a motion: style per 16-frame step (classified from audio or
/// fixed by the flag), latent draw, generator forward, denormalization to
/// the configured canvas, spline smoothing, then motion JSON on disk.
GenerateResult cmd_generate(const RunConfig& cfg, const GenerateRequest& req);

struct RenderResult {
  std::vector<std::string> svg_paths;
  std::string gif_path;
};

/// Renders a motion file: one SVG stick figure per frame plus a looping
/// animated GIF, all placed with one clip-wide layout.
RenderResult cmd_render(const std::string& motion_path,
                        const std::string& out_dir);

struct EvaluateResult {
  EvalReport report;
  std::string json_path;
  std::string table_path;
};

/// Scores the generated corpus against the real corpus's eval split and
/// writes the report as JSON and as a fixed-width table.
EvaluateResult cmd_evaluate(const RunConfig& cfg);

/// Writes the synthetic three-style corpus under out_dir; returns the
/// manifest path.
std::string cmd_make_fixtures(const std::string& out_dir, std::uint64_t seed,
                              int train_per_style, int eval_per_style);

/// Classifier persistence shared by cmd_train_classifier and cmd_generate.
void save_style_classifier(const std::string& path, StyleClassifier& model);
StyleClassifier load_style_classifier(const std::string& path);

}  // namespace dancegen
