#pragma once

#include <functional>
#include <span>

#include "bosonlab/common.hpp"

namespace bl {

// Periodic tensor grid on [-L/2, L/2)^d with n points per axis.
struct GridSpec {
    int d = 1;
    int n = 64;
    double L = 20.0;

    GridSpec() = default;
    GridSpec(int d, int n, double L);

    double dx() const { return L / n; }
    double x(int j) const { return -0.5 * L + j * dx(); }
    // Wavenumber of FFT bin m (standard ordering, Nyquist bin negative).
    double xi(int m) const;
    std::vector<double> wavenumbers() const;
    double max_xi2() const;  // max |xi|^2 over the d-dimensional grid
    bool operator==(const GridSpec&) const = default;
};

// Complex array over (grid)^rank, row-major with the first spatial axis slowest.
struct Field {
    GridSpec grid;
    int rank = 1;
    std::vector<cplx> data;

    Field() = default;
    Field(const GridSpec& g, int rank);

    int axes() const { return grid.d * rank; }
    std::size_t size() const { return data.size(); }
    double cell() const;  // dx^axes
    std::vector<int> dims() const { return std::vector<int>(axes(), grid.n); }
    void check_finite() const;

    Field& operator+=(const Field& o);
    Field& operator-=(const Field& o);
    Field& operator*=(cplx a);
};

Field operator+(Field a, const Field& b);
Field operator-(Field a, const Field& b);
Field operator*(cplx a, Field b);

// In-place unitary DFT over the given row-major dims; sign -1 forward, +1 inverse.
void fft_inplace(cplx* data, std::span<const int> dims, int sign);

Field fft_forward(const Field& f);
Field fft_inverse(const Field& f);

double l2_norm(const Field& f);
double lp_norm(const Field& f, double p);
double linf_norm(const Field& f);
cplx inner(const Field& f, const Field& g);  // integral of conj(f) g

// (sum (1+|k|^2)^sigma |f^(k)|^2 cell)^(1/2)
double sobolev_norm(const Field& f, double sigma);

// Weight evaluated on the full wavevector (length = axes). Fourier-side weighted L2
// norm; the zero mode is dropped when the weight is not finite there.
using Multiplier = std::function<double(std::span<const double>)>;
double weighted_l2(const Field& g, const Multiplier& weight);

// Periodic convolution (f*g)(x) = int f(x-y) g(y) dy for rank-1 fields.
Field convolve(const Field& f, const Field& g);

enum class OuterNorm { Linf, L4 };
// Outer norm over y of ||u(., y)||_{L^2(dx)} for a rank-2 field u(x, y).
double mixed_norm(const Field& u, OuterNorm outer);

// Apply a Fourier multiplier m(k) to f (k has length axes).
Field apply_multiplier(const Field& f, const std::function<cplx(std::span<const double>)>& m);

// Grid helpers.
Field sample(const GridSpec& g, const std::function<cplx(std::span<const double>)>& f);

}  // namespace bl
