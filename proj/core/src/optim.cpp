#include <dancegen/optim.hpp>

#include <cmath>
#include <string>

#include <dancegen/errors.hpp>

namespace dancegen {

namespace {

void check_finite_grad(const char* who, const Parameter& p,
                       const std::vector<double>& g) {
  for (double x : g) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string(who) + ": non-finite gradient for '" +
                         p.name + "'");
    }
  }
}

}  // namespace

Sgd::Sgd(ParamList params, double lr) : params_(std::move(params)), lr_(lr) {
  if (!(lr > 0.0)) {
    throw ConfigError("Sgd: learning rate must be positive, got " +
                      std::to_string(lr));
  }
}

void Sgd::step() {
  for (auto& p : params_) {
    const std::vector<double>& g = p.tensor.grad();
    check_finite_grad("Sgd::step", p, g);
    std::vector<double>& w = p.tensor.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] -= lr_ * g[i];
    }
  }
}

void Sgd::zero_grad() {
  for (auto& p : params_) {
    p.tensor.zero_grad();
  }
}

Adam::Adam(ParamList params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)),
      lr_(lr),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {
  if (!(lr > 0.0)) {
    throw ConfigError("Adam: learning rate must be positive, got " +
                      std::to_string(lr));
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam: betas must lie in [0, 1)");
  }
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0);
    v_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0);
  }
}

void Adam::step() {
  ++step_count_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = params_[k];
    const std::vector<double>& g = p.tensor.grad();
    check_finite_grad("Adam::step", p, g);
    std::vector<double>& m = m_[k];
    std::vector<double>& v = v_[k];
    std::vector<double>& w = p.tensor.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) {
    p.tensor.zero_grad();
  }
}

void Adam::set_step_count(std::int64_t t) {
  if (t < 0) {
    throw ConfigError("Adam::set_step_count: negative step count");
  }
  step_count_ = t;
}

BufferList Adam::state_buffers() {
  BufferList out;
  out.reserve(2 * params_.size());
  for (std::size_t k = 0; k < params_.size(); ++k) {
    out.push_back({"adam.m." + params_[k].name, &m_[k]});
    out.push_back({"adam.v." + params_[k].name, &v_[k]});
  }
  return out;
}

}  // namespace dancegen
