#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include "dancegen/commands.hpp"
#include "dancegen/config.hpp"
#include "dancegen/errors.hpp"
#include "dancegen/style.hpp"

namespace {

using namespace dancegen;

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool config_required) {
  auto* opt = cmd->add_option("--config", flags.config_path, "run config JSON");
  if (config_required) opt->required();
  cmd->add_option("--seed", flags.seed, "master seed override");
  cmd->add_option("--out", flags.out_dir, "output directory override");
}

RunConfig resolve_config(const CommonFlags& flags) {
  RunConfig cfg = load_run_config(flags.config_path);
  if (flags.seed.has_value()) cfg.apply_seed(*flags.seed);
  if (!flags.out_dir.empty()) cfg.paths.out_dir = flags.out_dir;
  return cfg;
}

int dispatch(CLI::App& app) {
  if (app.get_subcommands().empty()) {
    std::fputs(app.help().c_str(), stdout);
    return exit_code::kConfig;
  }
  return exit_code::kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dancegen: audio-conditioned dance motion synthesis"};
  app.require_subcommand(0, 1);

  CommonFlags train_classifier_flags;
  auto* train_classifier_cmd = app.add_subcommand(
      "train-classifier", "train the audio style classifier");
  add_common(train_classifier_cmd, train_classifier_flags, true);

  CommonFlags train_gan_flags;
  auto* train_gan_cmd =
      app.add_subcommand("train-gan", "train the motion generator");
  add_common(train_gan_cmd, train_gan_flags, true);

  CommonFlags generate_flags;
  std::string generate_audio;
  std::string generate_style;
  int generate_length = 64;
  std::string generate_name = "motion.json";
  auto* generate_cmd =
      app.add_subcommand("generate", "synthesize a motion clip");
  add_common(generate_cmd, generate_flags, true);
  generate_cmd->add_option("--audio", generate_audio,
                           "conditioning audio WAV file");
  generate_cmd->add_option("--style", generate_style,
                           "fixed conditioning style (ballet|mj|salsa)");
  generate_cmd->add_option("--length", generate_length,
                           "frame count, multiple of 16");
  generate_cmd->add_option("--name", generate_name, "output motion file name");

  std::string render_motion;
  std::string render_out = "render";
  auto* render_cmd =
      app.add_subcommand("render", "render a motion file to SVG frames + GIF");
  render_cmd->add_option("--motion", render_motion, "motion JSON file")
      ->required();
  render_cmd->add_option("--out", render_out, "output directory");

  CommonFlags evaluate_flags;
  auto* evaluate_cmd = app.add_subcommand(
      "evaluate", "score a generated corpus against a real one");
  add_common(evaluate_cmd, evaluate_flags, true);

  std::string fixtures_out = "fixtures";
  std::uint64_t fixtures_seed = 7;
  int fixtures_train = 20;
  int fixtures_eval = 10;
  auto* fixtures_cmd = app.add_subcommand(
      "make-fixtures", "write the synthetic three-style corpus");
  fixtures_cmd->add_option("--out", fixtures_out, "output directory");
  fixtures_cmd->add_option("--seed", fixtures_seed, "corpus seed");
  fixtures_cmd->add_option("--train-per-style", fixtures_train,
                           "train clips per style");
  fixtures_cmd->add_option("--eval-per-style", fixtures_eval,
                           "eval clips per style");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return dancegen::exit_code::kConfig;
  }

  try {
    if (train_classifier_cmd->parsed()) {
      RunConfig cfg = resolve_config(train_classifier_flags);
      TrainClassifierResult result = cmd_train_classifier(cfg);
      std::printf("checkpoint: %s\nreport: %s\nmean accuracy: %.4f\n",
                  result.checkpoint_path.c_str(), result.report_path.c_str(),
                  result.report.mean_accuracy);
    } else if (train_gan_cmd->parsed()) {
      RunConfig cfg = resolve_config(train_gan_flags);
      TrainGanResult result = cmd_train_gan(cfg);
      std::printf("checkpoint: %s\nmetrics: %s\nsteps: %d (total %d)%s\n",
                  result.checkpoint_path.c_str(), result.metrics_path.c_str(),
                  result.steps_run, result.final_step,
                  result.resumed ? " resumed" : "");
    } else if (generate_cmd->parsed()) {
      RunConfig cfg = resolve_config(generate_flags);
      GenerateRequest req;
      req.audio_path = generate_audio;
      if (!generate_style.empty()) req.style = style_from_name(generate_style);
      req.length = generate_length;
      req.seed = generate_flags.seed.value_or(cfg.seed);
      req.output_name = generate_name;
      GenerateResult result = cmd_generate(cfg, req);
      std::printf("motion: %s (%zu frames)\n", result.motion_path.c_str(),
                  result.motion.frames.size());
    } else if (render_cmd->parsed()) {
      RenderResult result = cmd_render(render_motion, render_out);
      std::printf("frames: %zu\ngif: %s\n", result.svg_paths.size(),
                  result.gif_path.c_str());
    } else if (evaluate_cmd->parsed()) {
      RunConfig cfg = resolve_config(evaluate_flags);
      EvaluateResult result = cmd_evaluate(cfg);
      std::fputs(eval_report_table(result.report).c_str(), stdout);
      std::printf("report: %s\n", result.json_path.c_str());
    } else if (fixtures_cmd->parsed()) {
      std::string manifest = cmd_make_fixtures(fixtures_out, fixtures_seed,
                                               fixtures_train, fixtures_eval);
      std::printf("manifest: %s\n", manifest.c_str());
    } else {
      return dispatch(app);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return dancegen::exit_code::kConfig;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return dancegen::exit_code::kConfig;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return dancegen::exit_code::kData;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numerical abort: %s\n", e.what());
    return dancegen::exit_code::kNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return dancegen::exit_code::kFailure;
  }
  return dancegen::exit_code::kOk;
}
