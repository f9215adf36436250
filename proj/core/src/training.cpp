#include <dancegen/training.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <dancegen/checkpoint.hpp>
#include <dancegen/errors.hpp>
#include <dancegen/skeleton.hpp>

namespace dancegen {

namespace {

constexpr std::uint64_t kEmbeddingStream = 1;
constexpr std::uint64_t kGeneratorStream = 2;
constexpr std::uint64_t kDiscriminatorStream = 3;
constexpr std::uint64_t kStepStreamBase = 1u << 20;
constexpr std::uint64_t kBatchStreamBase = 1u << 30;

void check_motion_shape(const Tensor& m, int window, const char* who) {
  const Shape& s = m.shape();
  if (s.size() != 3 || s[0] != 2 || s[2] != 25) {
    std::ostringstream msg;
    msg << who << ": motion must be shaped (2, frames, 25), got (";
    for (std::size_t i = 0; i < s.size(); ++i) msg << (i ? ", " : "") << s[i];
    msg << ")";
    throw ShapeError(msg.str());
  }
  if (s[1] != window) {
    std::ostringstream msg;
    msg << who << ": motion has " << s[1] << " frames, trainer window is "
        << window;
    throw ShapeError(msg.str());
  }
}

void require_finite(double value, const char* label, std::int64_t step) {
  if (std::isfinite(value)) return;
  std::ostringstream msg;
  msg << "GanTrainer::train_step: non-finite " << label << " (" << value
      << ") at step " << step;
  throw NumericError(msg.str());
}

void copy_record_into(const std::map<std::string, CheckpointRecord>& records,
                      const std::string& name, std::vector<double>& dst) {
  auto it = records.find(name);
  if (it == records.end()) {
    throw DataError("GanTrainer::load: checkpoint is missing record '" + name +
                    "'");
  }
  if (it->second.values.size() != dst.size()) {
    std::ostringstream msg;
    msg << "GanTrainer::load: record '" << name << "' holds "
        << it->second.values.size() << " values, model expects " << dst.size();
    throw DataError(msg.str());
  }
  dst = it->second.values;
}

}  // namespace

Tensor motion_reconstruction_loss(const Tensor& generated, const Tensor& real) {
  const Shape& gs = generated.shape();
  const Shape& rs = real.shape();
  if (gs != rs) {
    throw ShapeError(
        "motion_reconstruction_loss: generated and real motions have "
        "different shapes");
  }
  if (gs.size() != 3 || gs[0] != 2) {
    throw ShapeError(
        "motion_reconstruction_loss: motions must be shaped (2, frames, "
        "joints)");
  }
  const double scale = 1.0 / (static_cast<double>(gs[1]) * gs[2]);
  return mul(sum(abs(sub(generated, real))), scale);
}

Tensor bce_score_loss(const Tensor& probability, bool target_real) {
  if (probability.numel() != 1) {
    throw ShapeError("bce_score_loss: probability must be a scalar");
  }
  Tensor p = clamp(probability, 1e-7, 1.0 - 1e-7);
  if (target_real) return neg(log(p));
  return neg(log(add(neg(p), 1.0)));
}

std::vector<TrainSample> prepare_training_windows(
    const std::vector<ClipRecord>& clips, const TrainConfig& cfg, Rng& rng) {
  if (clips.empty()) {
    throw DataError("prepare_training_windows: no clips given");
  }
  std::vector<TrainSample> out;
  for (const ClipRecord& clip : clips) {
    std::vector<Motion> windows =
        extract_windows(clip.motion, cfg.window, cfg.augment.shift_stride);
    for (const Motion& w : windows) {
      Motion normalized = normalize_motion(w, NormalizeMode::PerSequence);
      if (cfg.augment.gp_noise) {
        normalized = gp_limb_noise(normalized, cfg.augment, rng);
      }
      out.push_back({motion_to_tensor(normalized), clip.style});
    }
  }
  return out;
}

GanTrainer::GanTrainer(const GpConfig& gp, const NetConfig& net,
                       const TrainConfig& cfg)
    : cfg_(cfg), root_(cfg.seed) {
  if (cfg.window < 16 || cfg.window % 16 != 0) {
    std::ostringstream msg;
    msg << "GanTrainer: window must be a positive multiple of 16, got "
        << cfg.window;
    throw ConfigError(msg.str());
  }
  if (cfg.batch_size < 1) {
    throw ConfigError("GanTrainer: batch_size must be at least 1");
  }
  if (cfg.lambda_rec < 0.0) {
    throw ConfigError("GanTrainer: lambda_rec must be non-negative");
  }
  if (gp.vertices != 1) {
    throw ConfigError("GanTrainer: latent noise must have one vertex");
  }
  if (net.latent_channels != 2 * gp.channels) {
    std::ostringstream msg;
    msg << "GanTrainer: net.latent_channels (" << net.latent_channels
        << ") must be twice gp.channels (" << gp.channels
        << ") to hold noise plus style rows";
    throw ConfigError(msg.str());
  }

  GpConfig sampler_cfg = gp;
  sampler_cfg.steps = latent_length_for(cfg.window);
  sampler_ = std::make_unique<GpSampler>(sampler_cfg);

  Rng emb_rng = root_.fork(kEmbeddingStream);
  embedding_ = std::make_unique<StyleEmbedding>(gp.channels, emb_rng);
  Rng gen_rng = root_.fork(kGeneratorStream);
  generator_ = std::make_unique<Generator>(net, gen_rng);
  Rng disc_rng = root_.fork(kDiscriminatorStream);
  discriminator_ = std::make_unique<Discriminator>(net, disc_rng);

  disc_opt_ = std::make_unique<Sgd>(discriminator_->parameters(), cfg.disc_lr);
  ParamList gen_params = generator_->parameters();
  for (Parameter& p : embedding_->parameters()) gen_params.push_back(p);
  gen_opt_ = std::make_unique<Adam>(gen_params, cfg.gen_lr, cfg.adam_beta1,
                                    cfg.adam_beta2);
}

StepMetrics GanTrainer::train_step(const std::vector<TrainSample>& batch) {
  const auto start = std::chrono::steady_clock::now();
  if (batch.empty()) {
    throw DataError("GanTrainer::train_step: batch is empty");
  }
  for (const TrainSample& s : batch) {
    check_motion_shape(s.motion, cfg_.window, "GanTrainer::train_step");
  }

  const std::int64_t step = step_count_;
  Rng step_rng = root_.fork(kStepStreamBase + static_cast<std::uint64_t>(step));
  const int latent_steps = latent_length_for(cfg_.window);
  const double inv_batch = 1.0 / static_cast<double>(batch.size());

  // Discriminator pass: real samples against detached fresh fakes.
  std::vector<Tensor> fakes;
  fakes.reserve(batch.size());
  Tensor d_total;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::uint64_t base = 8 * static_cast<std::uint64_t>(i);
    Rng noise_rng = step_rng.fork(base + 0);
    Rng g_drop_rng = step_rng.fork(base + 1);
    Rng d_real_rng = step_rng.fork(base + 2);
    Rng d_fake_rng = step_rng.fork(base + 3);

    Tensor noise = sampler_->sample(noise_rng);
    std::vector<StyleLabel> styles(static_cast<std::size_t>(latent_steps),
                                   batch[i].style);
    Tensor latent = assemble_latent(noise, styles, *embedding_);
    Tensor fake = generator_->forward(latent, true, &g_drop_rng);
    fakes.push_back(fake);

    Tensor p_real =
        discriminator_->forward(batch[i].motion, batch[i].style, true,
                                &d_real_rng);
    Tensor p_fake = discriminator_->forward(fake.detach(), batch[i].style,
                                            true, &d_fake_rng);
    Tensor term =
        add(bce_score_loss(p_real, true), bce_score_loss(p_fake, false));
    d_total = d_total.defined() ? add(d_total, term) : term;
  }
  d_total = mul(d_total, inv_batch);
  const double d_loss = d_total.item();
  require_finite(d_loss, "discriminator loss", step);
  backward(d_total);
  disc_opt_->step();
  disc_opt_->zero_grad();

  // Generator pass: adversarial score from the updated discriminator plus
  // the weighted reconstruction term against the paired real sample.
  Tensor g_adv_total;
  Tensor rec_total;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::uint64_t base = 8 * static_cast<std::uint64_t>(i);
    Rng d_live_rng = step_rng.fork(base + 4);
    Tensor p_live = discriminator_->forward(fakes[i], batch[i].style, true,
                                            &d_live_rng);
    Tensor adv = cfg_.saturating_gen_loss
                     ? neg(bce_score_loss(p_live, false))
                     : bce_score_loss(p_live, true);
    Tensor rec = motion_reconstruction_loss(fakes[i], batch[i].motion);
    g_adv_total = g_adv_total.defined() ? add(g_adv_total, adv) : adv;
    rec_total = rec_total.defined() ? add(rec_total, rec) : rec;
  }
  g_adv_total = mul(g_adv_total, inv_batch);
  rec_total = mul(rec_total, inv_batch);
  const double g_loss = g_adv_total.item();
  const double rec_loss = rec_total.item();
  require_finite(g_loss, "generator adversarial loss", step);
  require_finite(rec_loss, "reconstruction loss", step);
  Tensor g_objective = add(g_adv_total, mul(rec_total, cfg_.lambda_rec));
  backward(g_objective);
  gen_opt_->step();
  gen_opt_->zero_grad();
  disc_opt_->zero_grad();

  step_count_ += 1;
  const auto end = std::chrono::steady_clock::now();
  StepMetrics m;
  m.step = step;
  m.d_loss = d_loss;
  m.g_loss = g_loss;
  m.rec_loss = rec_loss;
  m.wall_ms =
      std::chrono::duration<double, std::milli>(end - start).count();
  history_.push_back(m);
  return m;
}

void GanTrainer::run(const std::vector<TrainSample>& samples, int steps) {
  if (samples.empty()) {
    throw DataError("GanTrainer::run: no training samples");
  }
  if (steps < 0) {
    throw ConfigError("GanTrainer::run: steps must be non-negative");
  }
  const std::int64_t n = static_cast<std::int64_t>(samples.size());
  for (int s = 0; s < steps; ++s) {
    Rng batch_rng =
        root_.fork(kBatchStreamBase + static_cast<std::uint64_t>(step_count_));
    std::vector<TrainSample> batch;
    batch.reserve(static_cast<std::size_t>(cfg_.batch_size));
    for (int b = 0; b < cfg_.batch_size; ++b) {
      batch.push_back(samples[static_cast<std::size_t>(batch_rng.uniform_int(n))]);
    }
    train_step(batch);
  }
}

Tensor GanTrainer::generate(const std::vector<StyleLabel>& per_step_styles,
                            Rng& rng) {
  if (per_step_styles.empty()) {
    throw ConfigError("GanTrainer::generate: need at least one latent step");
  }
  const int steps = static_cast<int>(per_step_styles.size());
  Tensor noise;
  if (steps == sampler_->config().steps) {
    noise = sampler_->sample(rng);
  } else {
    GpConfig cfg = sampler_->config();
    cfg.steps = steps;
    noise = GpSampler(cfg).sample(rng);
  }
  Tensor latent = assemble_latent(noise, per_step_styles, *embedding_);
  return generator_->forward(latent, false, nullptr);
}

void GanTrainer::save(const std::string& path) const {
  std::vector<CheckpointRecord> records;
  auto push_params = [&records](ParamList params) {
    for (Parameter& p : params) {
      records.push_back({p.name, p.tensor.shape(), p.tensor.data()});
    }
  };
  auto push_buffers = [&records](BufferList buffers,
                                 const std::string& prefix) {
    for (NamedBuffer& b : buffers) {
      records.push_back({prefix + b.name,
                         {static_cast<int>(b.values->size())},
                         *b.values});
    }
  };
  push_params(generator_->parameters());
  push_params(discriminator_->parameters());
  push_params(embedding_->parameters());
  push_buffers(generator_->buffers(), "");
  push_buffers(discriminator_->buffers(), "");
  push_buffers(gen_opt_->state_buffers(), "opt.g.");
  records.push_back({"opt.g.adam.t",
                     {1},
                     {static_cast<double>(gen_opt_->step_count())}});
  records.push_back(
      {"trainer.step", {1}, {static_cast<double>(step_count_)}});
  save_checkpoint(path, records);
}

void GanTrainer::load(const std::string& path) {
  std::map<std::string, CheckpointRecord> records = load_checkpoint(path);
  auto pull_params = [&records](ParamList params) {
    for (Parameter& p : params) {
      copy_record_into(records, p.name, p.tensor.mutable_data());
    }
  };
  auto pull_buffers = [&records](BufferList buffers,
                                 const std::string& prefix) {
    for (NamedBuffer& b : buffers) {
      copy_record_into(records, prefix + b.name, *b.values);
    }
  };
  pull_params(generator_->parameters());
  pull_params(discriminator_->parameters());
  pull_params(embedding_->parameters());
  pull_buffers(generator_->buffers(), "");
  pull_buffers(discriminator_->buffers(), "");
  pull_buffers(gen_opt_->state_buffers(), "opt.g.");

  std::vector<double> scalar(1, 0.0);
  copy_record_into(records, "opt.g.adam.t", scalar);
  gen_opt_->set_step_count(static_cast<std::int64_t>(scalar[0]));
  copy_record_into(records, "trainer.step", scalar);
  step_count_ = static_cast<std::int64_t>(scalar[0]);
}

void write_metrics_csv(const std::string& path,
                       const std::vector<StepMetrics>& metrics) {
  std::ofstream out(path);
  if (!out) {
    throw DataError("write_metrics_csv: cannot open '" + path +
                    "' for writing");
  }
  out << "step,d_loss,g_loss,rec_loss,wall_ms\n";
  out << std::setprecision(12);
  for (const StepMetrics& m : metrics) {
    out << m.step << ',' << m.d_loss << ',' << m.g_loss << ',' << m.rec_loss
        << ',' << m.wall_ms << '\n';
  }
  if (!out) {
    throw DataError("write_metrics_csv: failed writing '" + path + "'");
  }
}

double mean_pairwise_rec_between(const std::vector<Tensor>& a,
                                 const std::vector<Tensor>& b) {
  if (a.empty() || b.empty()) {
    throw DataError("mean_pairwise_rec_between: both sets must be non-empty");
  }
  double total = 0.0;
  for (const Tensor& x : a) {
    for (const Tensor& y : b) {
      total += motion_reconstruction_loss(x, y).item();
    }
  }
  return total / (static_cast<double>(a.size()) * b.size());
}

double mean_pairwise_rec_within(const std::vector<Tensor>& a) {
  if (a.size() < 2) {
    throw DataError("mean_pairwise_rec_within: need at least two motions");
  }
  double total = 0.0;
  std::int64_t pairs = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      total += motion_reconstruction_loss(a[i], a[j]).item();
      pairs += 1;
    }
  }
  return total / static_cast<double>(pairs);
}

double conditioning_separation(
    const std::vector<std::vector<Tensor>>& per_style_sets) {
  if (per_style_sets.size() < 2) {
    throw DataError("conditioning_separation: need at least two style sets");
  }
  double between = 0.0;
  std::int64_t between_pairs = 0;
  double within = 0.0;
  for (std::size_t s = 0; s < per_style_sets.size(); ++s) {
    within += mean_pairwise_rec_within(per_style_sets[s]);
    for (std::size_t t = s + 1; t < per_style_sets.size(); ++t) {
      between +=
          mean_pairwise_rec_between(per_style_sets[s], per_style_sets[t]);
      between_pairs += 1;
    }
  }
  between /= static_cast<double>(between_pairs);
  within /= static_cast<double>(per_style_sets.size());
  return between / within;
}

}  // namespace dancegen
