#pragma once

#include <cstdint>
#include <vector>

#include <dancegen/tensor.hpp>

namespace dancegen {

/// Plain stochastic gradient descent: p <- p - lr * g.  No momentum.
class Sgd {
 public:
  Sgd(ParamList params, double lr);

  void step();
  void zero_grad();

  double learning_rate() const { return lr_; }

 private:
  ParamList params_;
  double lr_;
};

/// Adam with bias correction.  First and second moments are exposed as
/// named buffers so optimizer state can ride along in checkpoints.
class Adam {
 public:
  Adam(ParamList params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);

  void step();
  void zero_grad();

  std::int64_t step_count() const { return step_count_; }
  void set_step_count(std::int64_t t);

  /// Moment vectors named "adam.m.<param>" / "adam.v.<param>".
  BufferList state_buffers();

 private:
  ParamList params_;
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  std::int64_t step_count_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace dancegen
