#pragma once

// Adagrad: per-parameter accumulated squared gradients.

#include <vector>

#include "rfbtd/nn/layers.hpp"

namespace rfbtd {

class Adagrad {
 public:
  Adagrad(std::vector<nn::Param*> params, double initial_accumulator = 0.1, double epsilon = 1e-10);

  void step(double lr);
  void zero_grad();

  std::vector<nn::Param*>& params() { return params_; }
  // One accumulator per parameter, same size as Param::value.
  std::vector<std::vector<float>>& state() { return accumulators_; }
  const std::vector<std::vector<float>>& state() const { return accumulators_; }

 private:
  std::vector<nn::Param*> params_;
  std::vector<std::vector<float>> accumulators_;
  double epsilon_;
};

}  // namespace rfbtd
