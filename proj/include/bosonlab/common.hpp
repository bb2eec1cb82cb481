#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace bl {

using cplx = std::complex<double>;
inline constexpr cplx I{0.0, 1.0};
inline constexpr double PI = 3.14159265358979323846;

// Bad input caught before any compute starts. The CLI maps it to exit code 2.
struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A numerical guard tripped mid-run (NaN, drift budget, residual). Exit code 3.
struct NumericGuard : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::size_t ipow(std::size_t b, int e) {
    std::size_t r = 1;
    for (int i = 0; i < e; ++i) r *= b;
    return r;
}

inline bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace bl
