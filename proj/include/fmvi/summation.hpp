#pragma once

#include <cmath>

namespace fmvi {

// Neumaier-compensated accumulator. Objective traces are compared step to
// step at tolerances near 1 ulp of the total, so plain left-to-right
// summation is not accurate enough for the larger models.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::fabs(sum_) >= std::fabs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }

  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace fmvi
