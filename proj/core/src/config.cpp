#include "dancegen/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dancegen/errors.hpp"

namespace dancegen {

namespace {

using nlohmann::json;

std::string join_path(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError("config: " + path + ": " + what);
}

/// Reads one JSON object, tracking the dotted path for error messages and
/// rejecting keys that no reader consumed.
class ObjectReader {
 public:
  ObjectReader(const json& node, std::string path)
      : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) fail(path_, "expected an object");
  }

  void read_int(const char* key, int& out) {
    const json* v = take(key);
    if (v == nullptr) return;
    if (!v->is_number_integer()) fail(join_path(path_, key), "expected an integer");
    out = v->get<int>();
  }

  void read_seed(const char* key, std::uint64_t& out) {
    const json* v = take(key);
    if (v == nullptr) return;
    if (!v->is_number_integer() ||
        (!v->is_number_unsigned() && v->get<std::int64_t>() < 0)) {
      fail(join_path(path_, key), "expected a non-negative integer");
    }
    out = v->get<std::uint64_t>();
  }

  void read_double(const char* key, double& out) {
    const json* v = take(key);
    if (v == nullptr) return;
    if (!v->is_number()) fail(join_path(path_, key), "expected a number");
    out = v->get<double>();
  }

  void read_bool(const char* key, bool& out) {
    const json* v = take(key);
    if (v == nullptr) return;
    if (!v->is_boolean()) fail(join_path(path_, key), "expected a boolean");
    out = v->get<bool>();
  }

  void read_string(const char* key, std::string& out) {
    const json* v = take(key);
    if (v == nullptr) return;
    if (!v->is_string()) fail(join_path(path_, key), "expected a string");
    out = v->get<std::string>();
  }

  void read_taper(const char* key, std::array<int, 4>& out) {
    const json* v = take(key);
    if (v == nullptr) return;
    std::string path = join_path(path_, key);
    if (!v->is_array() || v->size() != 4) {
      fail(path, "expected an array of 4 integers");
    }
    for (std::size_t i = 0; i < 4; ++i) {
      if (!(*v)[i].is_number_integer()) {
        fail(path + "[" + std::to_string(i) + "]", "expected an integer");
      }
      out[i] = (*v)[i].get<int>();
    }
  }

  const json* take_object(const char* key) { return take(key); }

  const std::string& path() const { return path_; }

  /// Call after all read_* calls: any key left over is unknown.
  void finish() const {
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      if (consumed_.find(it.key()) == consumed_.end()) {
        fail(join_path(path_, it.key().c_str()), "unknown field");
      }
    }
  }

 private:
  const json* take(const char* key) {
    consumed_.insert(key);
    auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }

  const json& node_;
  std::string path_;
  std::set<std::string> consumed_;
};

void read_paths(const json& node, const std::string& path, RunPaths& out) {
  ObjectReader r(node, path);
  r.read_string("manifest", out.manifest);
  r.read_string("out_dir", out.out_dir);
  r.read_string("classifier_checkpoint", out.classifier_checkpoint);
  r.read_string("gan_checkpoint", out.gan_checkpoint);
  r.read_string("generated_manifest", out.generated_manifest);
  r.read_string("real_manifest", out.real_manifest);
  r.finish();
}

void read_augment(const json& node, const std::string& path, AugmentConfig& out) {
  ObjectReader r(node, path);
  r.read_int("shift_stride", out.shift_stride);
  r.read_bool("gp_noise", out.gp_noise);
  r.read_double("gp_amplitude", out.gp_amplitude);
  r.read_double("gp_sigma", out.gp_sigma);
  r.finish();
}

void read_train(const json& node, const std::string& path, RunConfig& cfg) {
  ObjectReader r(node, path);
  r.read_int("epochs", cfg.train.epochs);
  r.read_int("steps", cfg.train_steps);
  r.read_int("checkpoint_every", cfg.checkpoint_every);
  r.read_int("batch_size", cfg.train.batch_size);
  r.read_double("gen_lr", cfg.train.gen_lr);
  r.read_double("disc_lr", cfg.train.disc_lr);
  r.read_double("adam_beta1", cfg.train.adam_beta1);
  r.read_double("adam_beta2", cfg.train.adam_beta2);
  r.read_double("lambda_rec", cfg.train.lambda_rec);
  r.read_bool("saturating_gen_loss", cfg.train.saturating_gen_loss);
  r.read_int("window", cfg.train.window);
  if (const json* a = r.take_object("augment")) {
    read_augment(*a, join_path(path, "augment"), cfg.train.augment);
  }
  r.finish();
}

void read_gp(const json& node, const std::string& path, GpConfig& out) {
  ObjectReader r(node, path);
  r.read_int("channels", out.channels);
  r.read_int("steps", out.steps);
  r.read_double("sigma", out.sigma);
  r.finish();
}

void read_net(const json& node, const std::string& path, NetConfig& out) {
  ObjectReader r(node, path);
  r.read_int("latent_channels", out.latent_channels);
  r.read_taper("taper", out.taper);
  r.read_double("leaky_slope", out.leaky_slope);
  r.read_double("dropout", out.dropout);
  r.read_bool("one_hot_class", out.one_hot_class);
  r.finish();
}

void read_classifier(const json& node, const std::string& path,
                     ClassifierTrainConfig& out) {
  ObjectReader r(node, path);
  r.read_int("folds", out.folds);
  r.read_int("epochs", out.epochs);
  r.read_int("batch_size", out.batch_size);
  r.read_double("lr", out.lr);
  r.read_double("beta1", out.beta1);
  r.read_double("window_seconds", out.window.window_seconds);
  r.read_double("hop_seconds", out.window.hop_seconds);
  r.finish();
}

void read_eval(const json& node, const std::string& path, RunConfig& cfg) {
  ObjectReader r(node, path);
  r.read_int("repeats", cfg.eval_repeats);
  r.read_int("stem_channels", cfg.extractor.stem_channels);
  r.read_int("mid_channels", cfg.extractor.mid_channels);
  r.read_int("feature_channels", cfg.extractor.feature_channels);
  r.read_double("leaky_slope", cfg.extractor.leaky_slope);
  r.read_int("epochs", cfg.extractor.epochs);
  r.read_int("batch_size", cfg.extractor.batch_size);
  r.read_double("lr", cfg.extractor.lr);
  r.finish();
}

void read_generate(const json& node, const std::string& path,
                   GenerateSettings& out) {
  ObjectReader r(node, path);
  r.read_int("canvas_width", out.canvas_width);
  r.read_int("canvas_height", out.canvas_height);
  r.read_int("smoothing_knot_stride", out.smoothing_knot_stride);
  r.read_int("fps", out.fps);
  r.finish();
}

}  // namespace

void RunConfig::apply_seed(std::uint64_t value) {
  seed = value;
  train.seed = value;
  classifier.seed = value;
  extractor.seed = value;
}

std::string RunConfig::classifier_checkpoint_path() const {
  return paths.classifier_checkpoint.empty()
             ? paths.out_dir + "/classifier.ckpt"
             : paths.classifier_checkpoint;
}

std::string RunConfig::gan_checkpoint_path() const {
  return paths.gan_checkpoint.empty() ? paths.out_dir + "/gan.ckpt"
                                      : paths.gan_checkpoint;
}

RunConfig parse_run_config(const std::string& json_text) {
  json doc = json::parse(json_text, nullptr, false);
  if (doc.is_discarded()) {
    throw ConfigError("config: not valid JSON");
  }
  RunConfig cfg;
  ObjectReader r(doc, "");
  r.read_seed("seed", cfg.seed);
  if (const json* n = r.take_object("paths")) read_paths(*n, "paths", cfg.paths);
  if (const json* n = r.take_object("train")) read_train(*n, "train", cfg);
  if (const json* n = r.take_object("gp")) read_gp(*n, "gp", cfg.gp);
  if (const json* n = r.take_object("net")) read_net(*n, "net", cfg.net);
  if (const json* n = r.take_object("classifier")) {
    read_classifier(*n, "classifier", cfg.classifier);
  }
  if (const json* n = r.take_object("eval")) read_eval(*n, "eval", cfg);
  if (const json* n = r.take_object("generate")) {
    read_generate(*n, "generate", cfg.generate);
  }
  r.finish();
  cfg.apply_seed(cfg.seed);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("load_run_config: cannot open " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::string run_config_json(const RunConfig& cfg) {
  json doc;
  doc["seed"] = cfg.seed;
  doc["paths"] = {{"manifest", cfg.paths.manifest},
                  {"out_dir", cfg.paths.out_dir},
                  {"classifier_checkpoint", cfg.paths.classifier_checkpoint},
                  {"gan_checkpoint", cfg.paths.gan_checkpoint},
                  {"generated_manifest", cfg.paths.generated_manifest},
                  {"real_manifest", cfg.paths.real_manifest}};
  doc["train"] = {{"epochs", cfg.train.epochs},
                  {"steps", cfg.train_steps},
                  {"checkpoint_every", cfg.checkpoint_every},
                  {"batch_size", cfg.train.batch_size},
                  {"gen_lr", cfg.train.gen_lr},
                  {"disc_lr", cfg.train.disc_lr},
                  {"adam_beta1", cfg.train.adam_beta1},
                  {"adam_beta2", cfg.train.adam_beta2},
                  {"lambda_rec", cfg.train.lambda_rec},
                  {"saturating_gen_loss", cfg.train.saturating_gen_loss},
                  {"window", cfg.train.window},
                  {"augment",
                   {{"shift_stride", cfg.train.augment.shift_stride},
                    {"gp_noise", cfg.train.augment.gp_noise},
                    {"gp_amplitude", cfg.train.augment.gp_amplitude},
                    {"gp_sigma", cfg.train.augment.gp_sigma}}}};
  doc["gp"] = {{"channels", cfg.gp.channels},
               {"steps", cfg.gp.steps},
               {"sigma", cfg.gp.sigma}};
  doc["net"] = {{"latent_channels", cfg.net.latent_channels},
                {"taper", cfg.net.taper},
                {"leaky_slope", cfg.net.leaky_slope},
                {"dropout", cfg.net.dropout},
                {"one_hot_class", cfg.net.one_hot_class}};
  doc["classifier"] = {{"folds", cfg.classifier.folds},
                       {"epochs", cfg.classifier.epochs},
                       {"batch_size", cfg.classifier.batch_size},
                       {"lr", cfg.classifier.lr},
                       {"beta1", cfg.classifier.beta1},
                       {"window_seconds", cfg.classifier.window.window_seconds},
                       {"hop_seconds", cfg.classifier.window.hop_seconds}};
  doc["eval"] = {{"repeats", cfg.eval_repeats},
                 {"stem_channels", cfg.extractor.stem_channels},
                 {"mid_channels", cfg.extractor.mid_channels},
                 {"feature_channels", cfg.extractor.feature_channels},
                 {"leaky_slope", cfg.extractor.leaky_slope},
                 {"epochs", cfg.extractor.epochs},
                 {"batch_size", cfg.extractor.batch_size},
                 {"lr", cfg.extractor.lr}};
  doc["generate"] = {{"canvas_width", cfg.generate.canvas_width},
                     {"canvas_height", cfg.generate.canvas_height},
                     {"smoothing_knot_stride", cfg.generate.smoothing_knot_stride},
                     {"fps", cfg.generate.fps}};
  return doc.dump(2);
}

}  // namespace dancegen
