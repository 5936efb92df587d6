#include "rfbtd/optim.hpp"

#include "rfbtd/simd/kernels.hpp"

namespace rfbtd {

Adagrad::Adagrad(std::vector<nn::Param*> params, double initial_accumulator, double epsilon)
    : params_(std::move(params)), epsilon_(epsilon) {
  accumulators_.reserve(params_.size());
  for (const nn::Param* p : params_) accumulators_.emplace_back(p->size(), static_cast<float>(initial_accumulator));
}

void Adagrad::step(double lr) {
  const auto& k = simd::kernels();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    nn::Param& p = *params_[i];
    k.adagrad(p.size(), static_cast<float>(lr), static_cast<float>(epsilon_), p.value.data(), p.grad.data(),
              accumulators_[i].data());
  }
}

void Adagrad::zero_grad() {
  for (nn::Param* p : params_) p->zero_grad();
}

}  // namespace rfbtd
