#pragma once

#include <cmath>
#include <vector>

#include "lcmlai/nn.hpp"

namespace lcmlai::optim {

/// Adam with decoupled weight decay.
template <typename Scalar>
class AdamW {
 public:
  AdamW(const nn::ParameterSet<Scalar>& params, double lr, double weight_decay = 0.01, double beta1 = 0.9,
        double beta2 = 0.999, double eps = 1e-8)
      : params_(params), lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_.push_back(Matrix<Scalar>::Zero(params_[i].rows(), params_[i].cols()));
      v_.push_back(Matrix<Scalar>::Zero(params_[i].rows(), params_[i].cols()));
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    const auto lr = static_cast<Scalar>(lr_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      const Matrix<Scalar>& g = p.grad();
      auto& value = p.mutable_value();
      value *= static_cast<Scalar>(1.0 - lr_ * wd_);
      m_[i] = static_cast<Scalar>(b1_) * m_[i] + static_cast<Scalar>(1.0 - b1_) * g;
      v_[i] = static_cast<Scalar>(b2_) * v_[i] + static_cast<Scalar>(1.0 - b2_) * g.cwiseProduct(g);
      const Matrix<Scalar> m_hat = m_[i] / static_cast<Scalar>(c1);
      const Matrix<Scalar> v_hat = v_[i] / static_cast<Scalar>(c2);
      value -= lr * m_hat.cwiseQuotient((v_hat.cwiseSqrt().array() + static_cast<Scalar>(eps_)).matrix());
    }
  }

  void zero_grad() { params_.zero_grad(); }
  long steps() const { return t_; }

 private:
  const nn::ParameterSet<Scalar>& params_;
  double lr_, wd_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<Matrix<Scalar>> m_;
  std::vector<Matrix<Scalar>> v_;
};

}  // namespace lcmlai::optim
