#include <dancegen/eval.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include <dancegen/errors.hpp>

namespace dancegen {

namespace {

const Mat& body25_adjacency() {
  return GraphPyramid::body25().levels[3].adjacency;
}

void check_motion_input(const Tensor& motion, const char* who) {
  const Shape& s = motion.shape();
  if (s.size() != 3 || s[0] != 2 || s[2] != 25) {
    std::ostringstream msg;
    msg << who << ": motion must be shaped (2, frames, 25), got (";
    for (std::size_t i = 0; i < s.size(); ++i) msg << (i ? ", " : "") << s[i];
    msg << ")";
    throw ShapeError(msg.str());
  }
  if (s[1] < 4) {
    std::ostringstream msg;
    msg << who << ": need at least 4 frames for two temporal halvings, got "
        << s[1];
    throw ShapeError(msg.str());
  }
}

int argmax3(const Tensor& logits) {
  double best = logits.at({0});
  int arg = 0;
  for (int k = 1; k < 3; ++k) {
    if (logits.at({k}) > best) {
      best = logits.at({k});
      arg = k;
    }
  }
  return arg;
}

MetricStat stat_of(const std::vector<double>& runs) {
  MetricStat s;
  const double n = static_cast<double>(runs.size());
  s.mean = std::accumulate(runs.begin(), runs.end(), 0.0) / n;
  if (runs.size() > 1) {
    double acc = 0.0;
    for (double r : runs) acc += (r - s.mean) * (r - s.mean);
    s.stddev = std::sqrt(acc / (n - 1.0));
  }
  return s;
}

std::vector<TrainSample> style_subset(const std::vector<TrainSample>& samples,
                                      StyleLabel style) {
  std::vector<TrainSample> out;
  for (const TrainSample& s : samples) {
    if (s.style == style) out.push_back(s);
  }
  return out;
}

void require_all_styles(const std::vector<TrainSample>& samples,
                        const char* set_name) {
  std::array<int, 3> counts{};
  for (const TrainSample& s : samples) {
    counts[static_cast<std::size_t>(static_cast<int>(s.style))] += 1;
  }
  for (int k = 0; k < 3; ++k) {
    if (counts[static_cast<std::size_t>(k)] < 2) {
      std::ostringstream msg;
      msg << "evaluate_sets: " << set_name << " set needs at least 2 '"
          << style_name(style_from_index(k)) << "' samples, has "
          << counts[static_cast<std::size_t>(k)];
      throw DataError(msg.str());
    }
  }
}

nlohmann::json stat_json(const MetricStat& s) {
  return {{"mean", s.mean}, {"std", s.stddev}};
}

}  // namespace

FeatureExtractor::FeatureExtractor(const FeatureExtractorConfig& cfg, Rng& rng)
    : cfg_(cfg),
      st0_("fx.st0", cfg.stem_channels, cfg.stem_channels, body25_adjacency(),
           cfg.leaky_slope, 0.0, rng),
      st1_("fx.st1", cfg.mid_channels, cfg.mid_channels, body25_adjacency(),
           cfg.leaky_slope, 0.0, rng) {
  if (cfg.stem_channels < 1 || cfg.mid_channels < 1 ||
      cfg.feature_channels < 1) {
    throw ConfigError("FeatureExtractor: channel counts must be positive");
  }
  stem_kernel_ = Tensor::zeros({cfg.stem_channels, 2, 1}, true);
  init_uniform_fan_in(stem_kernel_, 2, rng);
  stem_bias_ = Tensor::zeros({cfg.stem_channels}, true);

  down0_kernel_ = Tensor::zeros({cfg.mid_channels, cfg.stem_channels, 4}, true);
  init_uniform_fan_in(down0_kernel_, cfg.stem_channels * 4, rng);
  down0_bias_ = Tensor::zeros({cfg.mid_channels}, true);

  down1_kernel_ =
      Tensor::zeros({cfg.feature_channels, cfg.mid_channels, 4}, true);
  init_uniform_fan_in(down1_kernel_, cfg.mid_channels * 4, rng);
  down1_bias_ = Tensor::zeros({cfg.feature_channels}, true);

  head_weight_ = Tensor::zeros({3, cfg.feature_channels}, true);
  init_uniform_fan_in(head_weight_, cfg.feature_channels, rng);
  head_bias_ = Tensor::zeros({3}, true);
}

Tensor FeatureExtractor::pooled(const Tensor& motion) const {
  check_motion_input(motion, "FeatureExtractor");
  Tensor h = conv2d(motion, stem_kernel_, stem_bias_, 1, 0);
  h = st0_.forward(h, true, nullptr);
  h = leaky_relu(conv2d(h, down0_kernel_, down0_bias_, 2, 1), cfg_.leaky_slope);
  h = st1_.forward(h, true, nullptr);
  h = leaky_relu(conv2d(h, down1_kernel_, down1_bias_, 2, 1), cfg_.leaky_slope);
  const int t = h.shape()[1];
  const int v = h.shape()[2];
  Tensor pool = Tensor::full({t, v}, 1.0 / (static_cast<double>(t) * v));
  return tensordot(h, pool, {{1, 0}, {2, 1}});
}

Tensor FeatureExtractor::logits(const Tensor& motion) const {
  Tensor feat = pooled(motion);
  return add(tensordot(head_weight_, feat, {{1, 0}}), head_bias_);
}

Tensor FeatureExtractor::features(const Tensor& motion) const {
  return pooled(motion);
}

ParamList FeatureExtractor::parameters() {
  ParamList out;
  out.push_back({"fx.stem.kernel", stem_kernel_});
  out.push_back({"fx.stem.bias", stem_bias_});
  for (Parameter& p : st0_.parameters()) out.push_back(p);
  out.push_back({"fx.down0.kernel", down0_kernel_});
  out.push_back({"fx.down0.bias", down0_bias_});
  for (Parameter& p : st1_.parameters()) out.push_back(p);
  out.push_back({"fx.down1.kernel", down1_kernel_});
  out.push_back({"fx.down1.bias", down1_bias_});
  out.push_back({"fx.head.weight", head_weight_});
  out.push_back({"fx.head.bias", head_bias_});
  return out;
}

FeatureExtractor train_feature_extractor(const std::vector<TrainSample>& samples,
                                         const FeatureExtractorConfig& cfg) {
  if (samples.empty()) {
    throw DataError("train_feature_extractor: no training samples");
  }
  if (cfg.epochs < 1 || cfg.batch_size < 1) {
    throw ConfigError(
        "train_feature_extractor: epochs and batch_size must be positive");
  }
  bool seen[3] = {false, false, false};
  for (const TrainSample& s : samples) {
    seen[static_cast<int>(s.style)] = true;
  }
  if (seen[0] + seen[1] + seen[2] < 2) {
    throw DataError(
        "train_feature_extractor: training set covers a single class");
  }

  Rng root(cfg.seed);
  Rng init_rng = root.fork(1);
  Rng order_rng = root.fork(2);
  FeatureExtractor model(cfg, init_rng);
  Adam opt(model.parameters(), cfg.lr);

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(
          order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      Tensor batch_loss;
      for (std::size_t j = start; j < stop; ++j) {
        const TrainSample& s = samples[order[j]];
        Tensor out = model.logits(s.motion);
        const double cmax = std::max({out.at({0}), out.at({1}), out.at({2})});
        Tensor shifted = sub(out, cmax);
        Tensor loss = sub(log(sum(exp(shifted))),
                          select(shifted, static_cast<int>(s.style)));
        batch_loss = batch_loss.defined() ? add(batch_loss, loss) : loss;
      }
      Tensor mean_loss =
          mul(batch_loss, 1.0 / static_cast<double>(stop - start));
      backward(mean_loss);
      opt.step();
      opt.zero_grad();
    }
  }
  return model;
}

double classification_accuracy(const FeatureExtractor& extractor,
                               const std::vector<TrainSample>& samples) {
  if (samples.empty()) {
    throw DataError("classification_accuracy: no samples");
  }
  int correct = 0;
  for (const TrainSample& s : samples) {
    if (argmax3(extractor.logits(s.motion)) == static_cast<int>(s.style)) {
      correct += 1;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

Mat feature_matrix(const FeatureExtractor& extractor,
                   const std::vector<TrainSample>& samples) {
  if (samples.empty()) {
    throw DataError("feature_matrix: no samples");
  }
  const int f = extractor.config().feature_channels;
  Mat out(static_cast<int>(samples.size()), f);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    Tensor feat = extractor.features(samples[i].motion);
    for (int k = 0; k < f; ++k) {
      out.at(static_cast<int>(i), k) = feat.at({k});
    }
  }
  return out;
}

double fid(const Mat& feats_a, const Mat& feats_b) {
  if (feats_a.cols != feats_b.cols) {
    throw ShapeError("fid: feature sets have different widths");
  }
  if (feats_a.rows < 2 || feats_b.rows < 2) {
    throw DataError("fid: each feature set needs at least 2 rows");
  }
  const int f = feats_a.cols;
  if (feats_a.rows <= f || feats_b.rows <= f) {
    std::cerr << "fid: warning: covariance of " << feats_a.rows << "x" << f
              << " vs " << feats_b.rows << "x" << f
              << " features is rank deficient; more samples than feature "
                 "dimensions are recommended\n";
  }

  auto moments = [f](const Mat& x, std::vector<double>& mu, Mat& sigma) {
    const double m = static_cast<double>(x.rows);
    mu.assign(static_cast<std::size_t>(f), 0.0);
    for (int i = 0; i < x.rows; ++i) {
      for (int k = 0; k < f; ++k) mu[static_cast<std::size_t>(k)] += x.at(i, k);
    }
    for (double& v : mu) v /= m;
    sigma = Mat(f, f);
    for (int i = 0; i < x.rows; ++i) {
      for (int r = 0; r < f; ++r) {
        const double dr = x.at(i, r) - mu[static_cast<std::size_t>(r)];
        for (int c = r; c < f; ++c) {
          sigma.at(r, c) += dr * (x.at(i, c) - mu[static_cast<std::size_t>(c)]);
        }
      }
    }
    for (int r = 0; r < f; ++r) {
      for (int c = r; c < f; ++c) {
        sigma.at(r, c) /= m - 1.0;
        sigma.at(c, r) = sigma.at(r, c);
      }
    }
  };

  std::vector<double> mu_a, mu_b;
  Mat sigma_a, sigma_b;
  moments(feats_a, mu_a, sigma_a);
  moments(feats_b, mu_b, sigma_b);

  double mean_term = 0.0;
  for (int k = 0; k < f; ++k) {
    const double d = mu_a[static_cast<std::size_t>(k)] -
                     mu_b[static_cast<std::size_t>(k)];
    mean_term += d * d;
  }

  Mat product = mat_mul(sigma_a, sigma_b);
  Mat symmetrized(f, f);
  for (int r = 0; r < f; ++r) {
    for (int c = 0; c < f; ++c) {
      symmetrized.at(r, c) = 0.5 * (product.at(r, c) + product.at(c, r));
    }
  }
  const double tr_sqrt = mat_trace(psd_sqrt(symmetrized, 1e-10));

  double value =
      mean_term + mat_trace(sigma_a) + mat_trace(sigma_b) - 2.0 * tr_sqrt;
  if (!std::isfinite(value)) {
    throw NumericError("fid: distance came out non-finite");
  }
  return std::max(value, 0.0);
}

ScoreStat gan_train_score(const std::vector<TrainSample>& generated,
                          const std::vector<TrainSample>& real_eval,
                          const FeatureExtractorConfig& cfg, int repeats) {
  if (repeats < 1) {
    throw ConfigError("gan_train_score: repeats must be positive");
  }
  Rng base(cfg.seed);
  ScoreStat stat;
  for (int r = 0; r < repeats; ++r) {
    FeatureExtractorConfig run_cfg = cfg;
    run_cfg.seed = base.fork(static_cast<std::uint64_t>(r)).seed();
    FeatureExtractor model = train_feature_extractor(generated, run_cfg);
    stat.runs.push_back(classification_accuracy(model, real_eval));
  }
  MetricStat m = stat_of(stat.runs);
  stat.mean = m.mean;
  stat.stddev = m.stddev;
  return stat;
}

ScoreStat gan_test_score(const std::vector<TrainSample>& real_set,
                         const std::vector<TrainSample>& generated,
                         const FeatureExtractorConfig& cfg, int repeats) {
  return gan_train_score(real_set, generated, cfg, repeats);
}

EvalReport evaluate_sets(const std::vector<TrainSample>& generated,
                         const std::vector<TrainSample>& real_eval,
                         const FeatureExtractorConfig& cfg, int repeats) {
  if (repeats < 1) {
    throw ConfigError("evaluate_sets: repeats must be positive");
  }
  require_all_styles(generated, "generated");
  require_all_styles(real_eval, "real");

  std::array<std::vector<TrainSample>, 3> gen_by_style;
  std::array<std::vector<TrainSample>, 3> real_by_style;
  for (int k = 0; k < 3; ++k) {
    gen_by_style[static_cast<std::size_t>(k)] =
        style_subset(generated, style_from_index(k));
    real_by_style[static_cast<std::size_t>(k)] =
        style_subset(real_eval, style_from_index(k));
  }

  Rng base(cfg.seed);
  std::vector<double> fid_runs, train_runs, test_runs;
  std::array<std::vector<double>, 3> fid_style_runs, train_style_runs,
      test_style_runs;

  for (int r = 0; r < repeats; ++r) {
    FeatureExtractorConfig real_cfg = cfg;
    real_cfg.seed = base.fork(2 * static_cast<std::uint64_t>(r)).seed();
    FeatureExtractorConfig gen_cfg = cfg;
    gen_cfg.seed = base.fork(2 * static_cast<std::uint64_t>(r) + 1).seed();

    FeatureExtractor fx_real = train_feature_extractor(real_eval, real_cfg);
    FeatureExtractor fx_gen = train_feature_extractor(generated, gen_cfg);

    fid_runs.push_back(fid(feature_matrix(fx_real, generated),
                           feature_matrix(fx_real, real_eval)));
    test_runs.push_back(classification_accuracy(fx_real, generated));
    train_runs.push_back(classification_accuracy(fx_gen, real_eval));

    for (std::size_t k = 0; k < 3; ++k) {
      fid_style_runs[k].push_back(fid(feature_matrix(fx_real, gen_by_style[k]),
                                      feature_matrix(fx_real, real_by_style[k])));
      test_style_runs[k].push_back(
          classification_accuracy(fx_real, gen_by_style[k]));
      train_style_runs[k].push_back(
          classification_accuracy(fx_gen, real_by_style[k]));
    }
  }

  EvalReport report;
  report.repeats = repeats;
  report.fid_score = stat_of(fid_runs);
  report.gan_train = stat_of(train_runs);
  report.gan_test = stat_of(test_runs);
  for (std::size_t k = 0; k < 3; ++k) {
    report.fid_per_style[k] = stat_of(fid_style_runs[k]);
    report.gan_train_per_style[k] = stat_of(train_style_runs[k]);
    report.gan_test_per_style[k] = stat_of(test_style_runs[k]);
  }
  return report;
}

std::string eval_report_json(const EvalReport& report) {
  nlohmann::json per_style;
  for (int k = 0; k < 3; ++k) {
    per_style[style_name(style_from_index(k))] = {
        {"fid", stat_json(report.fid_per_style[static_cast<std::size_t>(k)])},
        {"gan_train",
         stat_json(report.gan_train_per_style[static_cast<std::size_t>(k)])},
        {"gan_test",
         stat_json(report.gan_test_per_style[static_cast<std::size_t>(k)])},
    };
  }
  nlohmann::json j = {
      {"repeats", report.repeats},
      {"fid", stat_json(report.fid_score)},
      {"gan_train", stat_json(report.gan_train)},
      {"gan_test", stat_json(report.gan_test)},
      {"per_style", per_style},
  };
  return j.dump(2);
}

std::string eval_report_table(const EvalReport& report) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-8s  %-18s  %-16s  %-16s\n", "style",
                "fid", "gan_train", "gan_test");
  out << line;
  auto row = [&out, &line](const char* name, const MetricStat& f,
                           const MetricStat& tr, const MetricStat& te) {
    std::snprintf(line, sizeof(line),
                  "%-8s  %8.4f +- %6.4f  %6.3f +- %5.3f  %6.3f +- %5.3f\n",
                  name, f.mean, f.stddev, tr.mean, tr.stddev, te.mean,
                  te.stddev);
    out << line;
  };
  for (int k = 0; k < 3; ++k) {
    const std::size_t i = static_cast<std::size_t>(k);
    row(style_name(style_from_index(k)), report.fid_per_style[i],
        report.gan_train_per_style[i], report.gan_test_per_style[i]);
  }
  row("overall", report.fid_score, report.gan_train, report.gan_test);
  return out.str();
}

}  // namespace dancegen
