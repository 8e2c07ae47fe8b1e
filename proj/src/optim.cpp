#include "dvio/optim.hpp"

#include <cmath>

#include "dvio/util.hpp"

namespace dvio::nn {

Adam::Adam(std::vector<Parameter*> params, double lr, double beta1, double beta2, double epsilon)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
  first_moment_.reserve(params_.size());
  second_moment_.reserve(params_.size());
  for (auto* p : params_) {
    first_moment_.emplace_back(p->value.shape);
    second_moment_.emplace_back(p->value.shape);
  }
}

void Adam::step() {
  ++step_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    if (!p.grad.same_shape(p.value))
      fail(ErrorKind::DimensionMismatch, "adam: grad shape mismatch for " + p.name);
    Tensor& m = first_moment_[k];
    Tensor& v = second_moment_[k];
    for (int i = 0; i < p.value.size(); ++i) {
      double g = p.grad[i];
      if (!std::isfinite(g)) fail(ErrorKind::NumericFault, "adam: non-finite gradient in " + p.name);
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      p.value[i] -= lr_ * mhat / (std::sqrt(vhat) + epsilon_);
    }
  }
}

}  // namespace dvio::nn
