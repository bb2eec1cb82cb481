#include "bosonlab/kernel.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>
#include <sstream>

namespace bl {

namespace {

void require_d1(const GridSpec& g) {
    if (g.d != 1) throw ValidationError("kernel: only d = 1 grids are supported");
}

void require_same(const GridSpec& a, const GridSpec& b, const char* what) {
    if (!(a == b)) throw ValidationError(std::string(what) + ": grid mismatch");
}

double rel_asym(const Mat& K, bool hermitian) {
    double nk = K.norm();
    if (nk == 0.0) return 0.0;
    return (hermitian ? (K - K.adjoint()).norm() : (K - K.transpose()).norm()) / nk;
}

void require_symmetric(const Kernel& k, const char* what) {
    if (rel_asym(k.K, false) > 1e-10)
        throw ValidationError(std::string(what) + ": kernel is not symmetric");
}

// Hermitian eigendecomposition of a numerically hermitian matrix.
Eigen::SelfAdjointEigenSolver<Mat> herm_eig(const Mat& A) {
    Mat H = 0.5 * (A + A.adjoint());
    return Eigen::SelfAdjointEigenSolver<Mat>(H);
}

}  // namespace

Kernel::Kernel(const GridSpec& g, KernelKind kind)
    : grid(g), K(Mat::Zero(g.n, g.n)), kind(kind) {
    require_d1(g);
}

Kernel::Kernel(const GridSpec& g, Mat K_, KernelKind kind) : grid(g), K(std::move(K_)), kind(kind) {
    require_d1(g);
    if (K.rows() != g.n || K.cols() != g.n) throw ValidationError("kernel: shape does not match grid");
}

Kernel Kernel::from_op(const GridSpec& g, const Mat& op, KernelKind kind) {
    return Kernel(g, op / g.dx(), kind);
}

Kernel Kernel::conj() const { return Kernel(grid, K.conjugate(), kind); }
Kernel Kernel::transpose() const { return Kernel(grid, K.transpose(), kind); }
Kernel Kernel::adjoint() const { return Kernel(grid, K.adjoint(), kind); }

void Kernel::check() const {
    if (!K.allFinite()) throw NumericGuard("kernel: non-finite entries");
    if (kind == KernelKind::Symmetric && rel_asym(K, false) >= 1e-10)
        throw NumericGuard("kernel: symmetry violated");
    if (kind == KernelKind::Hermitian && rel_asym(K, true) >= 1e-10)
        throw NumericGuard("kernel: hermiticity violated");
}

Field Kernel::to_field() const {
    Field f(grid, 2);
    const int m = n();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) f.data[static_cast<std::size_t>(i) * m + j] = K(i, j);
    return f;
}

Kernel Kernel::from_field(const Field& f, KernelKind kind) {
    if (f.rank != 2) throw ValidationError("kernel: field must have rank 2");
    Kernel k(f.grid, kind);
    const int m = k.n();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) k.K(i, j) = f.data[static_cast<std::size_t>(i) * m + j];
    return k;
}

Kernel& Kernel::operator+=(const Kernel& o) {
    require_same(grid, o.grid, "kernel +");
    K += o.K;
    if (kind != o.kind) kind = KernelKind::Generic;
    return *this;
}

Kernel& Kernel::operator-=(const Kernel& o) {
    require_same(grid, o.grid, "kernel -");
    K -= o.K;
    if (kind != o.kind) kind = KernelKind::Generic;
    return *this;
}

Kernel operator+(Kernel a, const Kernel& b) { return a += b; }
Kernel operator-(Kernel a, const Kernel& b) { return a -= b; }
Kernel operator*(cplx a, Kernel b) {
    b.K *= a;
    if (b.kind == KernelKind::Hermitian && a.imag() != 0.0) b.kind = KernelKind::Generic;
    return b;
}

Mat DeltaPlus::op() const {
    return alpha * Mat::Identity(R.n(), R.n()) + R.op();
}

Kernel compose(const Kernel& a, const Kernel& b) {
    require_same(a.grid, b.grid, "compose");
    return Kernel(a.grid, a.dx() * (a.K * b.K));
}

DeltaPlus compose(const DeltaPlus& a, const DeltaPlus& b) {
    require_same(a.R.grid, b.R.grid, "compose");
    Kernel r(a.R.grid, a.alpha * b.R.K + b.alpha * a.R.K + a.R.dx() * (a.R.K * b.R.K));
    return {a.alpha * b.alpha, r};
}

Kernel compose(const DeltaPlus& a, const Kernel& b) {
    require_same(a.R.grid, b.grid, "compose");
    return Kernel(b.grid, a.alpha * b.K + b.dx() * (a.R.K * b.K));
}

Kernel compose(const Kernel& a, const DeltaPlus& b) {
    require_same(a.grid, b.R.grid, "compose");
    return Kernel(a.grid, b.alpha * a.K + a.dx() * (a.K * b.R.K));
}

SeriesKernel sh_series(const Kernel& k, double tol, int max_terms) {
    require_symmetric(k, "sh_series");
    const Mat A = k.op();
    const Mat AbarA = A.conjugate() * A;
    Mat term = A;
    Mat sum = term;
    int terms = 1;
    for (int j = 1; term.norm() >= tol; ++j) {
        if (terms >= max_terms) throw NumericGuard("sh_series: term cap reached");
        term = term * AbarA / static_cast<double>((2 * j) * (2 * j + 1));
        sum += term;
        ++terms;
    }
    Mat s = 0.5 * (sum + sum.transpose());
    return {Kernel::from_op(k.grid, s, KernelKind::Symmetric), terms};
}

SeriesDelta ch_series(const Kernel& k, double tol, int max_terms) {
    require_symmetric(k, "ch_series");
    const Mat A = k.op();
    const Mat AbarA = A.conjugate() * A;
    Mat term = Mat::Identity(k.n(), k.n());
    Mat rem = Mat::Zero(k.n(), k.n());
    int terms = 1;
    for (int j = 1;; ++j) {
        if (terms >= max_terms) throw NumericGuard("ch_series: term cap reached");
        term = term * AbarA / static_cast<double>((2 * j - 1) * (2 * j));
        rem += term;
        ++terms;
        if (term.norm() < tol) break;
    }
    Mat h = 0.5 * (rem + rem.adjoint());
    if (rem.norm() > 0 && (rem - rem.adjoint()).norm() / rem.norm() > 1e-10)
        throw NumericGuard("ch_series: result is not hermitian");
    auto es = herm_eig(Mat::Identity(k.n(), k.n()) + h);
    if (es.eigenvalues().minCoeff() <= 0.0) throw NumericGuard("ch_series: result is not positive");
    return {DeltaPlus{1.0, Kernel::from_op(k.grid, h, KernelKind::Hermitian)}, terms};
}

Takagi takagi(const Mat& A) {
    const int n = static_cast<int>(A.rows());
    const Eigen::MatrixXd X = A.real(), Y = A.imag();
    Eigen::MatrixXd B(2 * n, 2 * n);
    B << X, Y, Y, -X;
    B = 0.5 * (B + B.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B);
    const Eigen::VectorXd& ev = es.eigenvalues();
    const double top = std::max(ev(2 * n - 1), 0.0);
    const double cut = 1e-12 * std::max(top, 1e-300);

    // Eigenvalues of B come in pairs +-sigma; [a; b] at +sigma gives a + ib.
    std::vector<int> keep;
    for (int i = 2 * n - 1; i >= n && ev(i) > cut; --i) keep.push_back(i);
    const int r = static_cast<int>(keep.size());
    Takagi t;
    t.U = Mat::Zero(n, n);
    t.sigma = Eigen::VectorXd::Zero(n);
    for (int c = 0; c < r; ++c) {
        const auto v = es.eigenvectors().col(keep[c]);
        for (int i = 0; i < n; ++i) t.U(i, c) = cplx(v(i), v(n + i));
        t.U.col(c).normalize();
        t.sigma(c) = ev(keep[c]);
    }
    if (r < n) {
        // Orthonormal complement of the range; A conj(z) = 0 there.
        Mat Q = Mat::Identity(n, n);
        if (r > 0) {
            Eigen::HouseholderQR<Mat> qr(t.U.leftCols(r));
            Q = qr.householderQ() * Mat::Identity(n, n);
        }
        t.U.rightCols(n - r) = Q.rightCols(n - r);
    }
    t.residual = (t.U * t.sigma.asDiagonal() * t.U.transpose() - A).norm();
    return t;
}

ShCh takagi_sh_ch(const Kernel& k) {
    require_symmetric(k, "takagi_sh_ch");
    Takagi t = takagi(k.op());
    if (t.residual > 1e-8) {
        std::ostringstream os;
        os << "takagi_sh_ch: factorization residual " << t.residual << " > 1e-8";
        throw NumericGuard(os.str());
    }
    const Eigen::VectorXd sh = t.sigma.array().sinh().matrix();
    const Eigen::VectorXd chm1 = (t.sigma.array().cosh() - 1.0).matrix();
    Mat u = t.U * sh.asDiagonal() * t.U.transpose();
    Mat p = t.U.conjugate() * chm1.asDiagonal() * t.U.transpose();
    u = 0.5 * (u + u.transpose()).eval();
    p = 0.5 * (p + p.adjoint()).eval();
    return {Kernel::from_op(k.grid, u, KernelKind::Symmetric),
            DeltaPlus{1.0, Kernel::from_op(k.grid, p, KernelKind::Hermitian)}};
}

Ucp recover_ucp(const Kernel& s2, const Kernel& p2) {
    require_same(s2.grid, p2.grid, "recover_ucp");
    const int n = s2.n();
    const Mat Id = Mat::Identity(n, n);
    auto es = herm_eig(Id + p2.op());
    Eigen::VectorXd lam = es.eigenvalues();
    Ucp r;
    for (int i = 0; i < n; ++i) {
        if (lam(i) < -1e-10) {
            std::ostringstream os;
            os << "recover_ucp: delta + p2 has eigenvalue " << lam(i) << " below -1e-10";
            throw NumericGuard(os.str());
        }
        if (lam(i) < 0.0) {
            r.clamped = std::min(r.clamped, lam(i));
            lam(i) = 0.0;
        }
    }
    const Eigen::VectorXd root = ((lam.array() + 1.0) * 0.5).sqrt().matrix();
    const Eigen::VectorXd inv = root.cwiseInverse();
    const Mat& Q = es.eigenvectors();
    const Mat c = Q * root.asDiagonal() * Q.adjoint();
    const Mat cinv = Q * inv.asDiagonal() * Q.adjoint();
    const Mat u = 0.5 * s2.op() * cinv;
    r.consistency = (2.0 * u * c - s2.op()).norm();
    if (r.consistency > 1e-6) {
        std::ostringstream os;
        os << "recover_ucp: consistency residual " << r.consistency << " > 1e-6";
        throw NumericGuard(os.str());
    }
    r.u = Kernel::from_op(s2.grid, u, KernelKind::Symmetric);
    r.p = Kernel::from_op(s2.grid, c - Id, KernelKind::Hermitian);
    r.c = DeltaPlus{1.0, r.p};
    return r;
}

double bogoliubov_residual(const Kernel& s2, const Kernel& p2) {
    require_same(s2.grid, p2.grid, "bogoliubov_residual");
    const Mat P = p2.op(), S = s2.op();
    return (2.0 * P + P * P - S.conjugate() * S).norm();
}

Kernel w_of_q(const Kernel& u, const DeltaPlus& c, const Kernel& m) {
    require_same(u.grid, m.grid, "w_of_q");
    const Mat U = u.op(), C = c.op(), M = m.op();
    return Kernel::from_op(u.grid, M * U.conjugate() * C.conjugate() - U * C * M.conjugate());
}

Kernel w_of_cbar(const Kernel& u, const DeltaPlus& c, const Kernel& m) {
    const Mat Wq = w_of_q(u, c, m).op();
    const Mat U = u.op();
    auto es = herm_eig(U * U.conjugate());
    Eigen::VectorXd lam = es.eigenvalues();
    for (int i = 0; i < lam.size(); ++i) {
        if (lam(i) < -1e-10) throw NumericGuard("w_of_cbar: q has a negative eigenvalue");
        lam(i) = std::max(lam(i), 0.0);
    }
    const Mat& Q = es.eigenvectors();
    Mat Wt = Q.adjoint() * Wq * Q;
    for (int a = 0; a < Wt.rows(); ++a)
        for (int b = 0; b < Wt.cols(); ++b)
            Wt(a, b) /= std::sqrt(1.0 + lam(a)) + std::sqrt(1.0 + lam(b));
    return Kernel::from_op(u.grid, Q * Wt * Q.adjoint());
}

Kernel random_symmetric(const GridSpec& g, double scale, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Mat G(g.n, g.n);
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j) G(i, j) = cplx(nd(rng), nd(rng));
    Mat A = G + G.transpose();
    A *= scale / A.norm();
    return Kernel::from_op(g, A, KernelKind::Symmetric);
}

GateReport kernel_gate(const GridSpec& g, int samples, unsigned seed) {
    GateReport rep;
    rep.samples = samples;
    for (int s = 0; s < samples; ++s) {
        const double scale = 0.5 + 1.5 * s / std::max(1, samples - 1);
        Kernel k = random_symmetric(g, scale, seed + 7919u * s);
        Kernel u = sh_series(k).value;
        DeltaPlus c = ch_series(k).value;
        ShCh tk = takagi_sh_ch(k);
        rep.takagi_error = std::max({rep.takagi_error, (u - tk.u).hs(), (c.R - tk.c.R).hs()});

        Kernel k2 = 2.0 * k;
        Kernel s2 = sh_series(k2).value;
        Kernel p2 = ch_series(k2).value.R;
        rep.residual = std::max(rep.residual, bogoliubov_residual(s2, p2));
        Ucp r = recover_ucp(s2, p2);
        rep.recover_error = std::max(rep.recover_error, (r.u - u).hs());

        // C2 = 2 c c - delta holds; the conjugated pattern does not for complex k.
        const Mat C = c.op();
        const Mat C2 = Mat::Identity(g.n, g.n) + p2.op();
        rep.recover_error = std::max(rep.recover_error,
                                     (C2 - 2.0 * C * C + Mat::Identity(g.n, g.n)).norm());
        rep.conjugation_alt = std::max(
            rep.conjugation_alt,
            (C2 - 2.0 * C.conjugate() * C.conjugate() + Mat::Identity(g.n, g.n)).norm());
    }
    rep.passed = rep.takagi_error < 1e-8 && rep.recover_error < 1e-8 && rep.residual < 1e-8;
    return rep;
}

}  // namespace bl
