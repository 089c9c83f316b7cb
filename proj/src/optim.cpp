#include "evdet/optim.hpp"

#include <algorithm>

namespace evdet {

AdamW::AdamW(std::vector<Tensor*> params, OptimConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor* p : params_) {
    m_.push_back(MatrixXd::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(MatrixXd::Zero(p->value.rows(), p->value.cols()));
  }
}

double AdamW::scheduled_lr(int64_t step) const {
  double scale = 1.0;
  if (cfg_.warmup_steps > 0 && step <= cfg_.warmup_steps) {
    scale = static_cast<double>(step) / cfg_.warmup_steps;
  } else if (cfg_.total_steps > cfg_.warmup_steps) {
    scale = std::max(0.0, static_cast<double>(cfg_.total_steps - step) /
                              (cfg_.total_steps - cfg_.warmup_steps));
  }
  return cfg_.lr * scale;
}

void AdamW::step() {
  ++t_;
  const double lr = scheduled_lr(t_);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = *params_[i];
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * p.grad;
    v_[i] = cfg_.beta2 * v_[i].array().matrix() +
            (1.0 - cfg_.beta2) * p.grad.array().square().matrix();
    // Decoupled weight decay.
    if (cfg_.weight_decay > 0.0) p.value -= lr * cfg_.weight_decay * p.value;
    p.value.array() -=
        lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + cfg_.eps);
  }
}

void AdamW::zero_grad() {
  for (Tensor* p : params_) p->zero_grad();
}

}  // namespace evdet
