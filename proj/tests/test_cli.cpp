#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dancegen/checkpoint.hpp"
#include "dancegen/commands.hpp"
#include "dancegen/config.hpp"
#include "dancegen/errors.hpp"
#include "dancegen/render.hpp"
#include "dancegen/rng.hpp"
#include "dancegen/skeleton.hpp"

using namespace dancegen;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& name) {
  std::string dir = "/tmp/dancegen_cli_" + name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(static_cast<bool>(in));
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

RunConfig tiny_cfg(const std::string& manifest, const std::string& out_dir) {
  RunConfig cfg;
  cfg.paths.manifest = manifest;
  cfg.paths.out_dir = out_dir;
  cfg.train.window = 32;
  cfg.train.batch_size = 4;
  cfg.train.augment.shift_stride = 32;
  cfg.gp.channels = 4;
  cfg.gp.steps = 2;
  cfg.gp.sigma = 50.0;
  cfg.net.latent_channels = 8;
  cfg.net.taper = {8, 6, 4, 4};
  cfg.classifier.folds = 3;
  cfg.classifier.epochs = 1;
  cfg.extractor.feature_channels = 16;
  cfg.extractor.epochs = 24;
  cfg.extractor.batch_size = 4;
  cfg.eval_repeats = 1;
  cfg.apply_seed(5);
  return cfg;
}

int occurrences(const std::string& text, const std::string& needle) {
  int count = 0;
  std::size_t pos = 0;
  while ((pos = text.find(needle, pos)) != std::string::npos) {
    ++count;
    pos += needle.size();
  }
  return count;
}

/// Walks a GIF's block structure; returns the frame count and requires a
/// well-formed header and trailer.
int gif_frame_count(const std::string& bytes) {
  REQUIRE(bytes.size() > 13);
  REQUIRE(bytes.substr(0, 6) == "GIF89a");
  std::size_t p = 6 + 4;
  auto u8 = [&](std::size_t i) {
    return static_cast<unsigned char>(bytes.at(i));
  };
  int packed = u8(p);
  p += 3;
  if (packed & 0x80) {
    int table_entries = 1 << ((packed & 0x07) + 1);
    p += static_cast<std::size_t>(3 * table_entries);
  }
  auto skip_subblocks = [&]() {
    while (true) {
      int len = u8(p);
      ++p;
      if (len == 0) break;
      p += static_cast<std::size_t>(len);
    }
  };
  int frames = 0;
  while (true) {
    int marker = u8(p);
    ++p;
    if (marker == 0x3B) break;
    if (marker == 0x21) {
      ++p;  // extension label
      skip_subblocks();
    } else if (marker == 0x2C) {
      p += 8;
      int local_packed = u8(p);
      ++p;
      if (local_packed & 0x80) {
        p += static_cast<std::size_t>(3 * (1 << ((local_packed & 0x07) + 1)));
      }
      ++p;  // LZW minimum code size
      skip_subblocks();
      ++frames;
    } else {
      FAIL("unexpected GIF block marker ", marker);
    }
  }
  CHECK(p == bytes.size());
  return frames;
}

Motion shifting_rigid_motion(int frames) {
  Motion motion;
  motion.fps = 24;
  for (int f = 0; f < frames; ++f) {
    Pose pose;
    for (int j = 0; j < body25::kJointCount; ++j) {
      pose.joints[static_cast<std::size_t>(j)].x = 100.0 + 10.0 * j + 2.0 * f;
      pose.joints[static_cast<std::size_t>(j)].y = 80.0 + 6.0 * (j % 7);
      pose.confidence[static_cast<std::size_t>(j)] = 1.0;
    }
    motion.frames.push_back(pose);
  }
  return motion;
}

#ifdef DANCEGEN_CLI_PATH
int run_cli(const std::string& args) {
  std::string command =
      std::string(DANCEGEN_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  int status = std::system(command.c_str());
  REQUIRE(status >= 0);
  return WEXITSTATUS(status);
}
#endif

}  // namespace

TEST_CASE("config parsing fills defaults and propagates the seed") {
  RunConfig defaults = parse_run_config("{}");
  CHECK(defaults.seed == 0);
  CHECK(defaults.train.window == 64);
  CHECK(defaults.net.latent_channels == 1024);
  CHECK(defaults.net.taper == std::array<int, 4>{512, 256, 128, 128});
  CHECK(defaults.gp.channels == 512);
  CHECK(defaults.classifier.folds == 10);
  CHECK(defaults.eval_repeats == 5);
  CHECK(defaults.generate.canvas_width == 512);
  CHECK(defaults.paths.out_dir == "out");
  CHECK(defaults.classifier_checkpoint_path() == "out/classifier.ckpt");
  CHECK(defaults.gan_checkpoint_path() == "out/gan.ckpt");

  RunConfig seeded = parse_run_config("{\"seed\": 9}");
  CHECK(seeded.seed == 9);
  CHECK(seeded.train.seed == 9);
  CHECK(seeded.classifier.seed == 9);
  CHECK(seeded.extractor.seed == 9);

  RunConfig partial = parse_run_config(
      "{\"train\": {\"window\": 32, \"augment\": {\"gp_noise\": true}},"
      " \"net\": {\"taper\": [8, 6, 4, 4]}}");
  CHECK(partial.train.window == 32);
  CHECK(partial.train.augment.gp_noise);
  CHECK(partial.train.batch_size == 8);
  CHECK(partial.net.taper == std::array<int, 4>{8, 6, 4, 4});

  RunConfig round = parse_run_config(run_config_json(partial));
  CHECK(round.train.window == partial.train.window);
  CHECK(round.net.taper == partial.net.taper);
  CHECK(round.train.augment.gp_noise == partial.train.augment.gp_noise);
}

TEST_CASE("config validation names the offending field path") {
  CHECK_THROWS_WITH_AS(parse_run_config("{\"bogus\": 1}"),
                       doctest::Contains("bogus: unknown field"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_run_config("{\"train\": {\"batch_sizee\": 4}}"),
                       doctest::Contains("train.batch_sizee: unknown field"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(
      parse_run_config("{\"train\": {\"augment\": {\"gp_sigmaa\": 1.0}}}"),
      doctest::Contains("train.augment.gp_sigmaa: unknown field"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_run_config("{\"gp\": {\"sigma\": \"wide\"}}"),
                       doctest::Contains("gp.sigma: expected a number"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(parse_run_config("{\"train\": {\"batch_size\": 2.5}}"),
                       doctest::Contains("train.batch_size: expected an integer"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(
      parse_run_config("{\"train\": {\"saturating_gen_loss\": 1}}"),
      doctest::Contains("train.saturating_gen_loss: expected a boolean"),
      ConfigError);
  CHECK_THROWS_WITH_AS(parse_run_config("{\"net\": {\"taper\": [8, 6, 4]}}"),
                       doctest::Contains("net.taper: expected an array of 4"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(parse_run_config("{\"net\": {\"taper\": [8, 6, 4, \"x\"]}}"),
                       doctest::Contains("net.taper[3]: expected an integer"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(parse_run_config("{\"seed\": -3}"),
                       doctest::Contains("seed: expected a non-negative"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(parse_run_config("{\"paths\": 7}"),
                       doctest::Contains("paths: expected an object"),
                       ConfigError);
  CHECK_THROWS_AS(parse_run_config("not json at all"), ConfigError);
  CHECK_THROWS_AS(load_run_config("/tmp/dancegen_cli_missing/config.json"),
                  DataError);
}

TEST_CASE("classifier training writes a deterministic report and checkpoint") {
  std::string dir = temp_dir("classifier");
  std::string manifest = cmd_make_fixtures(dir + "/fix", 7, 10, 2);
  RunConfig cfg = tiny_cfg(manifest, dir + "/out");

  TrainClassifierResult first = cmd_train_classifier(cfg);
  REQUIRE(first.report.fold_accuracy.size() == 3);
  CHECK(first.report.best_fold >= 0);
  CHECK(fs::exists(first.checkpoint_path));
  CHECK(fs::exists(first.report_path));

  nlohmann::json report = nlohmann::json::parse(read_file(first.report_path));
  REQUIRE(report["fold_accuracy"].size() == 3);
  CHECK(report["mean_accuracy"] == doctest::Approx(first.report.mean_accuracy));

  RunConfig again = cfg;
  again.paths.out_dir = dir + "/out2";
  again.paths.classifier_checkpoint = dir + "/out2/classifier.ckpt";
  TrainClassifierResult second = cmd_train_classifier(again);
  CHECK(read_file(second.report_path) == read_file(first.report_path));

  StyleClassifier loaded = load_style_classifier(first.checkpoint_path);
  Corpus corpus = load_corpus(manifest);
  ClassifyResult direct =
      classify_style(corpus.eval[0].audio, loaded, cfg.classifier.window);
  CHECK(direct.probs[0] + direct.probs[1] + direct.probs[2] ==
        doctest::Approx(1.0));

  CHECK_THROWS_AS(load_style_classifier(dir + "/nope.ckpt"), DataError);
}

TEST_CASE("gan training writes checkpoints and metrics and resumes") {
  std::string dir = temp_dir("gan");
  std::string manifest = cmd_make_fixtures(dir + "/fix", 7, 6, 2);
  RunConfig cfg = tiny_cfg(manifest, dir + "/out");
  cfg.train_steps = 12;
  cfg.checkpoint_every = 5;

  TrainGanResult first = cmd_train_gan(cfg);
  CHECK(first.steps_run == 12);
  CHECK(first.final_step == 12);
  CHECK_FALSE(first.resumed);
  REQUIRE(first.periodic_checkpoints.size() == 2);
  CHECK(first.periodic_checkpoints[0] == dir + "/out/gan_step_000005.ckpt");
  CHECK(fs::exists(first.periodic_checkpoints[1]));
  CHECK(fs::exists(first.checkpoint_path));

  std::string csv = read_file(first.metrics_path);
  std::istringstream lines(csv);
  std::vector<std::string> rows;
  std::string line;
  while (std::getline(lines, line)) rows.push_back(line);
  REQUIRE(rows.size() == 13);
  CHECK(rows[0] == "step,d_loss,g_loss,rec_loss,wall_ms");
  CHECK(rows[1].substr(0, 2) == "0,");

  TrainGanResult second = cmd_train_gan(cfg);
  CHECK(second.resumed);
  CHECK(second.steps_run == 12);
  CHECK(second.final_step == 24);
  std::string resumed_csv = read_file(second.metrics_path);
  std::istringstream resumed_lines(resumed_csv);
  rows.clear();
  while (std::getline(resumed_lines, line)) rows.push_back(line);
  REQUIRE(rows.size() == 13);
  CHECK(rows[1].substr(0, 3) == "12,");
}

TEST_CASE("generation honors length, seed, and style plumbing") {
  std::string dir = temp_dir("generate");
  std::string manifest = cmd_make_fixtures(dir + "/fix", 7, 6, 2);
  RunConfig cfg = tiny_cfg(manifest, dir + "/out");
  cfg.train_steps = 10;
  cmd_train_gan(cfg);
  cmd_train_classifier(cfg);

  GenerateRequest req;
  req.style = StyleLabel::Ballet;
  req.length = 32;
  req.seed = 1;
  req.output_name = "a.json";
  GenerateResult a = cmd_generate(cfg, req);
  REQUIRE(a.motion.frames.size() == 32);
  CHECK(a.motion.fps == 24);
  CHECK(a.motion.style == StyleLabel::Ballet);
  REQUIRE(a.per_step_styles.size() == 2);
  for (const Pose& pose : a.motion.frames) {
    for (const Joint2d& joint : pose.joints) {
      CHECK(std::isfinite(joint.x));
      CHECK(std::isfinite(joint.y));
    }
  }

  req.output_name = "a_again.json";
  GenerateResult a_again = cmd_generate(cfg, req);
  CHECK(read_file(a_again.motion_path) == read_file(a.motion_path));

  req.seed = 2;
  req.output_name = "b.json";
  GenerateResult b = cmd_generate(cfg, req);
  double l1 = 0.0;
  for (std::size_t f = 0; f < a.motion.frames.size(); ++f) {
    for (int j = 0; j < body25::kJointCount; ++j) {
      const Joint2d& ja = a.motion.frames[f].joints[static_cast<std::size_t>(j)];
      const Joint2d& jb = b.motion.frames[f].joints[static_cast<std::size_t>(j)];
      l1 += std::abs(ja.x - jb.x) / cfg.generate.canvas_width +
            std::abs(ja.y - jb.y) / cfg.generate.canvas_height;
    }
  }
  l1 /= static_cast<double>(2 * 32 * body25::kJointCount);
  CHECK(l1 > 0.01);

  Corpus corpus = load_corpus(manifest);
  std::string wav_path = dir + "/probe.wav";
  save_wav(wav_path, corpus.eval[0].audio);
  GenerateRequest audio_req;
  audio_req.audio_path = wav_path;
  audio_req.length = 64;
  audio_req.seed = 3;
  audio_req.output_name = "c.json";
  GenerateResult c = cmd_generate(cfg, audio_req);
  REQUIRE(c.per_step_styles.size() == 4);
  StyleClassifier classifier =
      load_style_classifier(cfg.classifier_checkpoint_path());
  ClassifyResult direct = classify_style(load_audio_16k(wav_path), classifier,
                                         cfg.classifier.window);
  for (int k = 0; k < 4; ++k) {
    double center_seconds = (16.0 * k + 8.0) / cfg.generate.fps;
    CHECK(c.per_step_styles[static_cast<std::size_t>(k)] ==
          style_at_time(direct, center_seconds, cfg.classifier.window));
  }

  GenerateRequest bad = req;
  bad.length = 30;
  CHECK_THROWS_AS(cmd_generate(cfg, bad), ConfigError);
  bad.length = 0;
  CHECK_THROWS_AS(cmd_generate(cfg, bad), ConfigError);
  GenerateRequest neither;
  neither.length = 32;
  CHECK_THROWS_AS(cmd_generate(cfg, neither), ConfigError);
  GenerateRequest both = req;
  both.audio_path = wav_path;
  CHECK_THROWS_AS(cmd_generate(cfg, both), ConfigError);

  RunConfig cold = cfg;
  cold.paths.gan_checkpoint = dir + "/missing.ckpt";
  CHECK_THROWS_AS(cmd_generate(cold, req), DataError);
}

TEST_CASE("rendering writes one svg per frame and a looping gif") {
  std::string dir = temp_dir("render");
  Motion motion = shifting_rigid_motion(5);
  std::string motion_path = dir + "/motion.json";
  save_motion(motion_path, motion);

  RenderResult result = cmd_render(motion_path, dir + "/frames");
  REQUIRE(result.svg_paths.size() == 5);
  for (const std::string& path : result.svg_paths) {
    std::string svg = read_file(path);
    CHECK(occurrences(svg, "<line ") == 24);
    CHECK(occurrences(svg, "<circle ") == body25::kJointCount);
    CHECK(svg.find("</svg>") != std::string::npos);
  }
  std::string gif = read_file(result.gif_path);
  CHECK(gif_frame_count(gif) == 5);

  RenderResult again = cmd_render(motion_path, dir + "/frames2");
  CHECK(read_file(again.gif_path) == gif);
  CHECK(read_file(again.svg_paths[3]) == read_file(result.svg_paths[3]));

  Motion degenerate = motion;
  for (Joint2d& joint : degenerate.frames[2].joints) {
    joint.x = 7.0;
    joint.y = 7.0;
  }
  std::string degenerate_path = dir + "/degenerate.json";
  save_motion(degenerate_path, degenerate);
  CHECK_THROWS_WITH_AS(cmd_render(degenerate_path, dir + "/bad"),
                       doctest::Contains("single point"), DataError);

  CHECK_THROWS_AS(cmd_render(dir + "/absent.json", dir + "/bad"), DataError);
  std::ofstream(dir + "/broken.json") << "not json";
  CHECK_THROWS_AS(cmd_render(dir + "/broken.json", dir + "/bad"), DataError);
}

TEST_CASE("evaluation command writes the report files") {
  std::string dir = temp_dir("evaluate");
  std::string manifest = cmd_make_fixtures(dir + "/fix", 7, 6, 3);
  RunConfig cfg = tiny_cfg(manifest, dir + "/out");
  cfg.paths.generated_manifest = manifest;
  cfg.paths.real_manifest = manifest;

  EvaluateResult result = cmd_evaluate(cfg);
  CHECK(result.report.repeats == 1);
  CHECK(result.report.gan_train.mean >= 0.9);
  CHECK(fs::exists(result.json_path));
  CHECK(fs::exists(result.table_path));
  nlohmann::json j = nlohmann::json::parse(read_file(result.json_path));
  CHECK(j["repeats"] == 1);
  CHECK(j.contains("fid"));
  CHECK(read_file(result.table_path).find("overall") != std::string::npos);

  Corpus empty;
  std::string empty_manifest = write_corpus(empty, dir + "/empty");
  RunConfig no_gen = cfg;
  no_gen.paths.generated_manifest = empty_manifest;
  CHECK_THROWS_AS(cmd_evaluate(no_gen), DataError);

  Corpus no_eval = load_corpus(manifest);
  no_eval.eval.clear();
  std::string no_eval_manifest = write_corpus(no_eval, dir + "/noeval");
  RunConfig no_real = cfg;
  no_real.paths.real_manifest = no_eval_manifest;
  CHECK_THROWS_AS(cmd_evaluate(no_real), DataError);
}

#ifdef DANCEGEN_CLI_PATH
TEST_CASE("cli binary maps error classes to exit codes") {
  std::string dir = temp_dir("exitcodes");
  std::ofstream(dir + "/bad.json") << "{\"train\": {\"batch_sizee\": 4}}";
  CHECK(run_cli("train-gan --config " + dir + "/bad.json") == 2);
  CHECK(run_cli("train-gan --config " + dir + "/absent.json") == 3);
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("no-such-command") == 2);
  CHECK(run_cli("render --motion " + dir + "/absent.json --out " + dir) == 3);

  std::string manifest = cmd_make_fixtures(dir + "/fix", 7, 6, 2);
  RunConfig cfg = tiny_cfg(manifest, dir + "/out");
  cfg.train_steps = 2;
  cmd_train_gan(cfg);
  std::ofstream(dir + "/run.json") << run_config_json(cfg);
  CHECK(run_cli("generate --config " + dir + "/run.json --style ballet "
                "--length 30") == 2);
  CHECK(run_cli("generate --config " + dir + "/run.json --style waltz "
                "--length 32") == 2);
  CHECK(run_cli("generate --config " + dir + "/run.json --style ballet "
                "--length 32 --seed 4 --name ok.json") == 0);
  CHECK(fs::exists(dir + "/out/ok.json"));

  // A checkpoint poisoned with a non-finite weight must abort numerically.
  auto records = load_checkpoint(cfg.gan_checkpoint_path());
  std::vector<CheckpointRecord> poisoned;
  for (auto& [name, record] : records) {
    CheckpointRecord copy = record;
    bool counter = name == "trainer.step" ||
                   name.size() >= 6 &&
                       name.compare(name.size() - 6, 6, "adam.t") == 0;
    if (!counter && !copy.values.empty()) copy.values[0] = std::nan("");
    poisoned.push_back(copy);
  }
  save_checkpoint(cfg.gan_checkpoint_path(), poisoned);
  CHECK(run_cli("train-gan --config " + dir + "/run.json") == 4);
}
#endif
