#pragma once

#include <cstdint>
#include <vector>

#include "ndf/params.hpp"

namespace ndf {

// Adamax: m = b1 m + (1 - b1) g, u = max(b2 u, |g| + eps), p -= lr / (1 - b1^t) * m / u.
class Adamax {
 public:
  Adamax() = default;
  Adamax(const ParamStore& params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(ParamStore& params, const GradStore& grads, double lr);
  [[nodiscard]] std::int64_t steps() const { return t_; }

 private:
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::int64_t t_ = 0;
  std::vector<Mat> m_;
  std::vector<Mat> u_;
};

// One-cycle learning rate: cosine warm-up from max_lr / div to max_lr over the
// first pct_start of the steps, then cosine annealing to max_lr / (div * final_div).
struct OneCycle {
  double max_lr = 4e-3;
  std::int64_t total_steps = 1;
  double pct_start = 0.3;
  double div_factor = 25.0;
  double final_div_factor = 1e4;

  [[nodiscard]] double lr(std::int64_t step) const;
};

}  // namespace ndf
