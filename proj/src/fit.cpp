#include "bosonlab/fit.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>

#include "bosonlab/common.hpp"

namespace bl {

PowerFit fit_exponent(const std::vector<double>& x, const std::vector<double>& value) {
    if (x.size() != value.size()) throw ValidationError("fit_exponent: length mismatch");
    const std::size_t n = x.size();
    if (n < 3) throw ValidationError("fit_exponent: need at least 3 points");
    std::vector<double> lx(n), ly(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(x[i] > 0.0) || !(value[i] > 0.0))
            throw ValidationError("fit_exponent: nonpositive value in series");
        lx[i] = std::log(x[i]);
        ly[i] = std::log(value[i]);
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
        syy += (ly[i] - my) * (ly[i] - my);
    }
    if (sxx == 0.0) throw ValidationError("fit_exponent: abscissae are all equal");
    PowerFit f;
    f.points = static_cast<int>(n);
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ssr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double r = ly[i] - (f.intercept + f.slope * lx[i]);
        ssr += r * r;
    }
    f.r2 = (syy > 0.0) ? 1.0 - ssr / syy : 1.0;
    f.stderr_slope = (n > 2) ? std::sqrt(ssr / (n - 2) / sxx) : 0.0;
    boost::math::students_t dist(static_cast<double>(n - 2));
    double tq = boost::math::quantile(boost::math::complement(dist, 0.025));
    f.ci_low = f.slope - tq * f.stderr_slope;
    f.ci_high = f.slope + tq * f.stderr_slope;
    return f;
}

}  // namespace bl
