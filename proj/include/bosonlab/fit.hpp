#pragma once

#include <vector>

namespace bl {

struct PowerFit {
    double slope = 0.0;
    double intercept = 0.0;
    double stderr_slope = 0.0;
    double ci_low = 0.0;   // 95% two-sided, Student t with n-2 dof
    double ci_high = 0.0;
    double r2 = 1.0;
    int points = 0;
    bool degenerate() const { return r2 < 0.9; }
};

// Least squares of log(value) against log(x).
PowerFit fit_exponent(const std::vector<double>& x, const std::vector<double>& value);

}  // namespace bl
