#include "ndf/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ndf {

Adamax::Adamax(const ParamStore& params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params.all()) {
    m_.push_back(Mat::Zero(p.value.rows(), p.value.cols()));
    u_.push_back(Mat::Zero(p.value.rows(), p.value.cols()));
  }
}

void Adamax::step(ParamStore& params, const GradStore& grads, double lr) {
  ++t_;
  const double bias = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double rate = lr / bias;
  for (int i = 0; i < params.size(); ++i) {
    const Mat& g = grads[i];
    Mat& m = m_[static_cast<std::size_t>(i)];
    Mat& u = u_[static_cast<std::size_t>(i)];
    m = beta1_ * m + (1.0 - beta1_) * g;
    u = (beta2_ * u).cwiseMax((g.array().abs() + eps_).matrix());
    params.value(i).array() -= rate * m.array() / u.array();
  }
}

double OneCycle::lr(std::int64_t step) const {
  const double initial = max_lr / div_factor;
  const double final_lr = initial / final_div_factor;
  const double total = static_cast<double>(std::max<std::int64_t>(total_steps, 1));
  const double up_end = std::max(0.0, std::floor(pct_start * total) - 1.0);
  const double down_end = total - 1.0;
  const double s = static_cast<double>(step);
  auto anneal = [](double from, double to, double pct) {
    return to + (from - to) / 2.0 * (std::cos(std::numbers::pi * pct) + 1.0);
  };
  if (s <= up_end) {
    const double pct = up_end > 0.0 ? s / up_end : 1.0;
    return anneal(initial, max_lr, pct);
  }
  const double span = down_end - up_end;
  const double pct = span > 0.0 ? std::min(1.0, (s - up_end) / span) : 1.0;
  return anneal(max_lr, final_lr, pct);
}

}  // namespace ndf
