#pragma once

#include <vector>

#include "dvio/params.hpp"
#include "dvio/tensor.hpp"

namespace dvio::nn {

/// Bias-corrected Adam (Kingma-Ba form). Moments are kept per parameter,
/// aligned with the parameter list given at construction.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double epsilon = 1e-8);

  /// One update from the gradients currently stored in each parameter.
  void step();

  long step_count() const { return step_; }
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Tensor> first_moment_;
  std::vector<Tensor> second_moment_;
  long step_ = 0;
  double lr_, beta1_, beta2_, epsilon_;
};

}  // namespace dvio::nn
