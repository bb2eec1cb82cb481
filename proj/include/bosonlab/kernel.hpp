#pragma once

#include <Eigen/Dense>

#include "bosonlab/spectral.hpp"

namespace bl {

using Mat = Eigen::MatrixXcd;

enum class KernelKind { Generic, Symmetric, Hermitian };

// Two-point kernel K(x_i, x_j) on a d = 1 grid. The operator it defines on
// grid functions is dx * K, so composition is dx * (matrix product).
struct Kernel {
    GridSpec grid;
    Mat K;
    KernelKind kind = KernelKind::Generic;

    Kernel() = default;
    explicit Kernel(const GridSpec& g, KernelKind kind = KernelKind::Generic);
    Kernel(const GridSpec& g, Mat K, KernelKind kind = KernelKind::Generic);
    static Kernel from_op(const GridSpec& g, const Mat& op, KernelKind kind = KernelKind::Generic);

    int n() const { return grid.n; }
    double dx() const { return grid.dx(); }
    Mat op() const { return dx() * K; }
    double hs() const { return dx() * K.norm(); }  // (int int |K|^2)^(1/2)

    Kernel conj() const;
    Kernel transpose() const;
    Kernel adjoint() const;

    // Throws if the declared kind is violated beyond 1e-10 relative, or on NaN.
    void check() const;
    Field to_field() const;  // rank-2 field, index x * n + y
    static Kernel from_field(const Field& f, KernelKind kind = KernelKind::Generic);

    Kernel& operator+=(const Kernel& o);
    Kernel& operator-=(const Kernel& o);
};

Kernel operator+(Kernel a, const Kernel& b);
Kernel operator-(Kernel a, const Kernel& b);
Kernel operator*(cplx a, Kernel b);

// alpha * delta(x - y) + R(x, y). The delta is never materialized in norms.
struct DeltaPlus {
    cplx alpha = 1.0;
    Kernel R;

    static DeltaPlus identity(const GridSpec& g) { return {1.0, Kernel(g, KernelKind::Hermitian)}; }
    Mat op() const;
    DeltaPlus conj() const { return {std::conj(alpha), R.conj()}; }
};

Kernel compose(const Kernel& a, const Kernel& b);
DeltaPlus compose(const DeltaPlus& a, const DeltaPlus& b);
Kernel compose(const DeltaPlus& a, const Kernel& b);
Kernel compose(const Kernel& a, const DeltaPlus& b);

struct SeriesKernel {
    Kernel value;
    int terms = 0;
};
struct SeriesDelta {
    DeltaPlus value;
    int terms = 0;
};

// sh(k) = k + k k^ k / 3! + ... and ch(k) = delta + k^ k / 2! + ... (k^ = conj k).
SeriesKernel sh_series(const Kernel& k, double tol = 1e-12, int max_terms = 400);
SeriesDelta ch_series(const Kernel& k, double tol = 1e-12, int max_terms = 400);

// op(k) = U diag(sigma) U^T with U unitary and sigma >= 0.
struct Takagi {
    Mat U;
    Eigen::VectorXd sigma;
    double residual = 0.0;  // Frobenius norm of U sigma U^T - op(k)
};
Takagi takagi(const Mat& A);

struct ShCh {
    Kernel u;     // sh(k)
    DeltaPlus c;  // ch(k)
};
ShCh takagi_sh_ch(const Kernel& k);

struct Ucp {
    Kernel u;
    DeltaPlus c;
    Kernel p;
    double consistency = 0.0;  // ||2 u c - s2||_HS
    double clamped = 0.0;      // most negative eigenvalue of delta + p2 that was clamped
};
// u, c, p from s2 = sh(2k) and p2 = ch(2k) - delta, via c = ((C2 + delta) / 2)^(1/2).
Ucp recover_ucp(const Kernel& s2, const Kernel& p2);

// ||(delta + p2)(delta + p2) - conj(s2) s2 - delta||_HS
double bogoliubov_residual(const Kernel& s2, const Kernel& p2);

// W(q) = m u^ c^ - u c m^ with q = u u^, and W(c^) through the divided differences
// of sqrt(1 + z) in the eigenbasis of q.
Kernel w_of_q(const Kernel& u, const DeltaPlus& c, const Kernel& m);
Kernel w_of_cbar(const Kernel& u, const DeltaPlus& c, const Kernel& m);

// Random symmetric kernel with operator HS norm `scale` (deterministic in seed).
Kernel random_symmetric(const GridSpec& g, double scale, unsigned seed);

struct GateReport {
    bool passed = false;
    int samples = 0;
    double takagi_error = 0.0;    // max over samples of series vs Takagi (u and p)
    double recover_error = 0.0;   // max of ||u_recovered - sh(k)||_HS
    double residual = 0.0;        // max Bogoliubov residual of the series pair
    double conjugation_alt = 0.0; // residual of the alternative pattern C2 - 2 c^ c^ + delta
};
// Series-vs-Takagi and recovery check on random kernels; runs that use the
// Takagi path or recover_ucp must pass it first.
GateReport kernel_gate(const GridSpec& g, int samples = 8, unsigned seed = 1);

}  // namespace bl
