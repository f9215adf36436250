#include "dancegen/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

#include "dancegen/checkpoint.hpp"
#include "dancegen/dataset.hpp"
#include "dancegen/errors.hpp"
#include "dancegen/render.hpp"
#include "dancegen/training.hpp"

namespace fs = std::filesystem;

namespace dancegen {

namespace {

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw DataError("cannot create directory " + dir + ": " + ec.message());
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("cannot write " + path);
  }
  out << text;
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("cannot write " + path);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

std::vector<CheckpointRecord> records_of(StyleClassifier& model) {
  std::vector<CheckpointRecord> records;
  for (Parameter& p : model.parameters()) {
    records.push_back({p.name, p.tensor.shape(), p.tensor.data()});
  }
  for (NamedBuffer& b : model.buffers()) {
    records.push_back(
        {b.name, {static_cast<int>(b.values->size())}, *b.values});
  }
  return records;
}

}  // namespace

void save_style_classifier(const std::string& path, StyleClassifier& model) {
  save_checkpoint(path, records_of(model));
}

StyleClassifier load_style_classifier(const std::string& path) {
  if (!fs::exists(path)) {
    throw DataError("load_style_classifier: checkpoint not found: " + path);
  }
  std::map<std::string, CheckpointRecord> records = load_checkpoint(path);
  Rng rng(0);
  StyleClassifier model(rng);
  auto pull = [&records](const std::string& name, std::vector<double>& dst) {
    auto it = records.find(name);
    if (it == records.end()) {
      throw DataError("load_style_classifier: checkpoint is missing record '" +
                      name + "'");
    }
    if (it->second.values.size() != dst.size()) {
      throw DataError("load_style_classifier: record '" + name +
                      "' holds " + std::to_string(it->second.values.size()) +
                      " values, model expects " + std::to_string(dst.size()));
    }
    dst = it->second.values;
  };
  for (Parameter& p : model.parameters()) {
    pull(p.name, p.tensor.mutable_data());
  }
  for (NamedBuffer& b : model.buffers()) {
    pull(b.name, *b.values);
  }
  return model;
}

TrainClassifierResult cmd_train_classifier(const RunConfig& cfg) {
  Corpus corpus = load_corpus(cfg.paths.manifest);
  std::vector<std::pair<AudioClip, StyleLabel>> labeled;
  labeled.reserve(corpus.train.size());
  for (const ClipRecord& clip : corpus.train) {
    labeled.emplace_back(clip.audio, clip.style);
  }

  FoldReport report;
  StyleClassifier model = train_classifier(labeled, cfg.classifier, &report);

  ensure_dir(cfg.paths.out_dir);
  TrainClassifierResult result;
  result.report = report;
  result.checkpoint_path = cfg.classifier_checkpoint_path();
  save_style_classifier(result.checkpoint_path, model);

  nlohmann::json doc = {{"fold_accuracy", report.fold_accuracy},
                        {"mean_accuracy", report.mean_accuracy},
                        {"best_fold", report.best_fold},
                        {"seed", cfg.classifier.seed}};
  result.report_path = cfg.paths.out_dir + "/classifier_report.json";
  write_text(result.report_path, doc.dump(2) + "\n");
  return result;
}

TrainGanResult cmd_train_gan(const RunConfig& cfg) {
  Corpus corpus = load_corpus(cfg.paths.manifest);
  Rng window_rng = Rng(cfg.seed).fork(100);
  std::vector<TrainSample> samples =
      prepare_training_windows(corpus.train, cfg.train, window_rng);

  GanTrainer trainer(cfg.gp, cfg.net, cfg.train);
  TrainGanResult result;
  result.checkpoint_path = cfg.gan_checkpoint_path();
  if (fs::exists(result.checkpoint_path)) {
    trainer.load(result.checkpoint_path);
    result.resumed = true;
  }

  int steps = cfg.train_steps;
  if (steps <= 0) {
    int per_epoch = (static_cast<int>(samples.size()) + cfg.train.batch_size - 1) /
                    cfg.train.batch_size;
    steps = cfg.train.epochs * per_epoch;
  }

  ensure_dir(cfg.paths.out_dir);
  int remaining = steps;
  while (remaining > 0) {
    int chunk = cfg.checkpoint_every > 0 ? std::min(cfg.checkpoint_every, remaining)
                                         : remaining;
    trainer.run(samples, chunk);
    remaining -= chunk;
    if (remaining > 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "/gan_step_%06lld.ckpt",
                    static_cast<long long>(trainer.step_count()));
      std::string path = cfg.paths.out_dir + name;
      trainer.save(path);
      result.periodic_checkpoints.push_back(path);
    }
  }
  trainer.save(result.checkpoint_path);

  result.metrics_path = cfg.paths.out_dir + "/metrics.csv";
  write_metrics_csv(result.metrics_path, trainer.history());
  result.steps_run = steps;
  result.final_step = static_cast<int>(trainer.step_count());
  return result;
}

GenerateResult cmd_generate(const RunConfig& cfg, const GenerateRequest& req) {
  if (req.length <= 0 || req.length % 16 != 0) {
    throw ConfigError("cmd_generate: length must be a positive multiple of 16, got " +
                      std::to_string(req.length));
  }
  if (req.audio_path.empty() == !req.style.has_value()) {
    throw ConfigError("cmd_generate: pass exactly one of an audio file or a style");
  }
  std::string gan_path = cfg.gan_checkpoint_path();
  if (!fs::exists(gan_path)) {
    throw DataError("cmd_generate: checkpoint not found: " + gan_path);
  }

  int steps = req.length / 16;
  int fps = cfg.generate.fps;
  GenerateResult result;
  std::optional<StyleLabel> annotation = req.style;
  if (req.style.has_value()) {
    result.per_step_styles.assign(static_cast<std::size_t>(steps), *req.style);
  } else {
    StyleClassifier classifier =
        load_style_classifier(cfg.classifier_checkpoint_path());
    AudioClip clip = load_audio_16k(req.audio_path);
    ClassifyResult classified =
        classify_style(clip, classifier, cfg.classifier.window);
    annotation = classified.label;
    result.per_step_styles.reserve(static_cast<std::size_t>(steps));
    for (int k = 0; k < steps; ++k) {
      double center_seconds = (16.0 * k + 8.0) / fps;
      result.per_step_styles.push_back(
          style_at_time(classified, center_seconds, cfg.classifier.window));
    }
  }

  GanTrainer trainer(cfg.gp, cfg.net, cfg.train);
  trainer.load(gan_path);
  Rng rng(req.seed);
  Tensor block = trainer.generate(result.per_step_styles, rng);

  Motion motion = tensor_to_motion(block, fps, annotation);
  for (Pose& pose : motion.frames) {
    for (Joint2d& joint : pose.joints) {
      joint.x *= cfg.generate.canvas_width;
      joint.y *= cfg.generate.canvas_height;
    }
  }
  motion = smooth_motion(motion, cfg.generate.smoothing_knot_stride);

  ensure_dir(cfg.paths.out_dir);
  result.motion_path = cfg.paths.out_dir + "/" + req.output_name;
  save_motion(result.motion_path, motion);
  result.motion = std::move(motion);
  return result;
}

RenderResult cmd_render(const std::string& motion_path,
                        const std::string& out_dir) {
  Motion motion = load_motion(motion_path);
  RenderLayout svg_layout = layout_for(motion, 512, 512);
  RenderLayout gif_layout = layout_for(motion, 256, 256);

  ensure_dir(out_dir);
  RenderResult result;
  std::vector<IndexedImage> raster;
  raster.reserve(motion.frames.size());
  for (std::size_t f = 0; f < motion.frames.size(); ++f) {
    char name[32];
    std::snprintf(name, sizeof(name), "/frame_%05zu.svg", f);
    std::string path = out_dir + name;
    write_text(path, pose_svg(motion.frames[f], svg_layout));
    result.svg_paths.push_back(path);
    raster.push_back(rasterize_pose(motion.frames[f], gif_layout));
  }

  int delay_cs = std::max(1, 100 / std::max(1, motion.fps));
  result.gif_path = out_dir + "/motion.gif";
  write_bytes(result.gif_path, encode_gif(raster, delay_cs));
  return result;
}

EvaluateResult cmd_evaluate(const RunConfig& cfg) {
  Corpus generated = load_corpus(cfg.paths.generated_manifest);
  Corpus real = load_corpus(cfg.paths.real_manifest);

  std::vector<ClipRecord> generated_clips = generated.train;
  generated_clips.insert(generated_clips.end(), generated.eval.begin(),
                         generated.eval.end());
  if (generated_clips.empty()) {
    throw DataError("cmd_evaluate: generated corpus has no clips");
  }
  if (real.eval.empty()) {
    throw DataError("cmd_evaluate: real corpus has no eval split");
  }

  TrainConfig window_cfg = cfg.train;
  window_cfg.augment.gp_noise = false;
  Rng rng(cfg.seed);
  std::vector<TrainSample> generated_windows =
      prepare_training_windows(generated_clips, window_cfg, rng);
  std::vector<TrainSample> real_windows =
      prepare_training_windows(real.eval, window_cfg, rng);

  EvaluateResult result;
  result.report = evaluate_sets(generated_windows, real_windows, cfg.extractor,
                                cfg.eval_repeats);
  ensure_dir(cfg.paths.out_dir);
  result.json_path = cfg.paths.out_dir + "/eval_report.json";
  write_text(result.json_path, eval_report_json(result.report) + "\n");
  result.table_path = cfg.paths.out_dir + "/eval_report.txt";
  write_text(result.table_path, eval_report_table(result.report));
  return result;
}

std::string cmd_make_fixtures(const std::string& out_dir, std::uint64_t seed,
                              int train_per_style, int eval_per_style) {
  Corpus corpus = make_synthetic_corpus(seed, train_per_style, eval_per_style);
  ensure_dir(out_dir);
  return write_corpus(corpus, out_dir);
}

}  // namespace dancegen
