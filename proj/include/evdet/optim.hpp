#pragma once

#include <vector>

#include "evdet/encoder.hpp"

namespace evdet {

struct OptimConfig {
  double lr = 1e-5;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int warmup_steps = 50;
  int total_steps = 0;  // 0 disables the linear decay
};

// AdamW with the linear warmup/decay schedule.
class AdamW {
 public:
  AdamW(std::vector<Tensor*> params, OptimConfig cfg);

  void step();
  void zero_grad();
  double scheduled_lr(int64_t step) const;
  int64_t steps_taken() const { return t_; }

 private:
  std::vector<Tensor*> params_;
  std::vector<MatrixXd> m_;
  std::vector<MatrixXd> v_;
  OptimConfig cfg_;
  int64_t t_ = 0;
};

}  // namespace evdet
