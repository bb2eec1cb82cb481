#include "bosonlab/pair.hpp"

#include <array>
#include <cmath>
#include <sstream>

namespace bl {

namespace {

Eigen::VectorXcd as_vector(const Field& f) {
    return Eigen::Map<const Eigen::VectorXcd>(f.data.data(), static_cast<Eigen::Index>(f.size()));
}

void require_d1(const Field& phi, const Interaction& iv, const char* what) {
    if (phi.grid.d != 1 || phi.rank != 1) throw ValidationError(std::string(what) + ": d = 1 condensate required");
    if (!(phi.grid == iv.grid)) throw ValidationError(std::string(what) + ": grid mismatch");
}

// Operator pieces of the bounded part at one condensate sample.
struct Coeffs {
    Mat m;   // kernel of m
    Mat GT;  // operator of g_pot^T
    Mat G;   // operator of g_pot
};

Coeffs coeffs_at(const Field& phi, const Interaction& iv) {
    GPot g = build_gpot(phi, iv);
    Coeffs c;
    c.m = build_m(phi, iv).K;
    c.G = g.op();
    c.GT = g.op_transpose();
    return c;
}

// Fourier multipliers exp(-i tau (xi^2 +- eta^2)) in the column-major buffer
// (slow FFT axis = column = y, fast axis = row = x).
class Kinetic {
public:
    Kinetic(const GridSpec& g, double tau) : n_(g.n), sum_(n_ * n_), diff_(n_ * n_) {
        auto k = g.wavenumbers();
        for (int j = 0; j < n_; ++j)
            for (int i = 0; i < n_; ++i) {
                const double a = k[i] * k[i], b = k[j] * k[j];
                sum_[j * n_ + i] = std::exp(-I * tau * (a + b));
                diff_[j * n_ + i] = std::exp(-I * tau * (a - b));
            }
    }
    void schrodinger(Mat& K) const { apply(K, sum_); }
    void wigner(Mat& K) const { apply(K, diff_); }

private:
    void apply(Mat& K, const std::vector<cplx>& mult) const {
        const std::array<int, 2> dims{n_, n_};
        fft_inplace(K.data(), dims, -1);
        for (std::size_t i = 0; i < mult.size(); ++i) K.data()[i] *= mult[i];
        fft_inplace(K.data(), dims, +1);
    }
    int n_;
    std::vector<cplx> sum_, diff_;
};

Mat apply_V_op(const Mat& u, const Coeffs& c) { return c.GT * u + u * c.G; }

// Parts are s-type kernels followed by one P = conj(p2) kernel.
using Parts = std::vector<Mat>;
using Rhs = std::function<Parts(const Parts&, const Coeffs&)>;

Parts axpy(const Parts& x, double a, const Parts& y) {
    Parts r = x;
    for (std::size_t i = 0; i < r.size(); ++i) r[i] += a * y[i];
    return r;
}

Parts rk4(const Parts& y, const Rhs& f, const Coeffs& c0, const Coeffs& ch, const Coeffs& c1, double dt) {
    Parts k1 = f(y, c0);
    Parts k2 = f(axpy(y, 0.5 * dt, k1), ch);
    Parts k3 = f(axpy(y, 0.5 * dt, k2), ch);
    Parts k4 = f(axpy(y, dt, k3), c1);
    Parts r = y;
    for (std::size_t i = 0; i < r.size(); ++i) r[i] += (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    return r;
}

Mat p_rate(const Mat& s, const Mat& P, const Coeffs& c, double dx) {
    return I * (P * c.GT - c.GT * P + dx * (c.m * s.conjugate() - s * c.m.conjugate()));
}

int path_stride(const Trajectory& path, double dt, int steps) {
    if (path.phi.empty() || path.dt <= 0.0) throw ValidationError("pair: empty condensate path");
    const double r = dt / (2.0 * path.dt);
    const int stride = static_cast<int>(std::lround(r));
    if (stride < 1 || std::abs(r - stride) > 1e-9 * r)
        throw ValidationError("pair: condensate path spacing must divide dt / 2");
    if (static_cast<std::size_t>(2 * stride * steps) >= path.phi.size())
        throw ValidationError("pair: condensate path too short for the requested steps");
    if (std::abs(path.t.front()) > 1e-14) throw ValidationError("pair: condensate path must start at t = 0");
    return stride;
}

double residual_of(const Mat& s, const Mat& P, double dx) {
    const Mat p2 = dx * P.conjugate();
    const Mat S = dx * s;
    return (2.0 * p2 + p2 * p2 - S.conjugate() * S).norm();
}

PairTrajectory run(Parts y, int s_parts, const Rhs& f, const Trajectory& path, const Interaction& iv,
                   double dt, int steps, const PairOptions& opt, double t0) {
    const GridSpec& g = iv.grid;
    const double dx = g.dx();
    const int stride = path_stride(path, dt, steps);
    if (opt.record_every < 1) throw ValidationError("pair: record_every must be >= 1");
    Kinetic half(g, 0.5 * dt);

    auto to_state = [&](const Parts& p, double t) {
        PairState st;
        st.t = t;
        Mat s = Mat::Zero(g.n, g.n);
        for (int i = 0; i < s_parts; ++i) s += p[i];
        st.s2 = Kernel(g, s, KernelKind::Symmetric);
        st.p2 = Kernel(g, p[s_parts].conjugate(), KernelKind::Hermitian);
        if (s_parts == 3) {
            st.sa0 = Kernel(g, p[0], KernelKind::Symmetric);
            st.sa1 = Kernel(g, p[1], KernelKind::Symmetric);
            st.se = Kernel(g, p[2], KernelKind::Symmetric);
        }
        return st;
    };

    PairTrajectory tr;
    tr.dt = dt * opt.record_every;
    tr.states.push_back(to_state(y, t0));
    Coeffs c0 = coeffs_at(path.phi[0], iv);
    for (int k = 0; k < steps; ++k) {
        Coeffs ch = coeffs_at(path.phi[(2 * k + 1) * stride], iv);
        Coeffs c1 = coeffs_at(path.phi[(2 * k + 2) * stride], iv);
        for (int i = 0; i < s_parts; ++i) half.schrodinger(y[i]);
        half.wigner(y[s_parts]);
        y = rk4(y, f, c0, ch, c1, dt);
        for (int i = 0; i < s_parts; ++i) half.schrodinger(y[i]);
        half.wigner(y[s_parts]);
        c0 = std::move(c1);

        Mat s = Mat::Zero(g.n, g.n);
        for (int i = 0; i < s_parts; ++i) s += y[i];
        if (!s.allFinite() || !y[s_parts].allFinite()) {
            std::ostringstream os;
            os << "pair: non-finite kernel at step " << k + 1;
            throw NumericGuard(os.str());
        }
        const double res = residual_of(s, y[s_parts], dx);
        tr.max_residual = std::max(tr.max_residual, res);
        if (res > opt.residual_abort) {
            std::ostringstream os;
            os << "pair: Bogoliubov residual " << res << " exceeds " << opt.residual_abort << " at step "
               << k + 1 << " (t = " << t0 + (k + 1) * dt << ", |s2|_HS = " << dx * s.norm() << ")";
            throw NumericGuard(os.str());
        }
        if ((k + 1) % opt.record_every == 0) tr.states.push_back(to_state(y, t0 + (k + 1) * dt));
    }
    return tr;
}

}  // namespace

Kernel build_m(const Field& phi, const Interaction& iv) {
    require_d1(phi, iv, "build_m");
    const Eigen::MatrixXd V = pair_matrix(iv);
    const Eigen::VectorXcd p = as_vector(phi);
    Mat m = -(V.cast<cplx>().array() * (p * p.transpose()).array()).matrix();
    return Kernel(iv.grid, m, KernelKind::Symmetric);
}

Mat GPot::op() const {
    const Eigen::VectorXcd d = as_vector(multiplier);
    return Mat(d.asDiagonal()) + kernel.op();
}

Mat GPot::op_transpose() const {
    const Eigen::VectorXcd d = as_vector(multiplier);
    return Mat(d.asDiagonal()) + kernel.op().transpose();
}

GPot build_gpot(const Field& phi, const Interaction& iv) {
    require_d1(phi, iv, "build_gpot");
    GPot g;
    g.multiplier = mean_field_potential(phi, iv, Flavor::Hartree);
    for (auto& v : g.multiplier.data) v = v.real();
    const Eigen::MatrixXd V = pair_matrix(iv);
    const Eigen::VectorXcd p = as_vector(phi);
    Mat k = (V.cast<cplx>().array() * (p.conjugate() * p.transpose()).array()).matrix();
    g.kernel = Kernel(iv.grid, k, KernelKind::Hermitian);
    return g;
}

Kernel apply_V(const Kernel& u, const GPot& g) {
    if (!(u.grid == g.kernel.grid)) throw ValidationError("apply_V: grid mismatch");
    const int n = u.n();
    const double dx = u.dx();
    const Eigen::VectorXcd w = as_vector(g.multiplier);
    Mat out(n, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) out(i, j) = (w(i) + w(j)) * u.K(i, j);
    // int v_N(x - z) phi(x) conj(phi(z)) u(z, y) dz and int u(x, z) v_N(z - y) conj(phi(z)) phi(y) dz
    out += dx * g.kernel.K.transpose() * u.K;
    out += dx * u.K * g.kernel.K;
    return Kernel(u.grid, out, u.kind == KernelKind::Symmetric ? KernelKind::Symmetric : KernelKind::Generic);
}

Kernel apply_V_compose(const Kernel& u, const GPot& g) {
    return Kernel(u.grid, g.op_transpose() * u.K + u.K * g.op());
}

PairState PairState::zero(const GridSpec& g) {
    PairState st;
    st.s2 = Kernel(g, KernelKind::Symmetric);
    st.p2 = Kernel(g, KernelKind::Hermitian);
    return st;
}

Trajectory pair_driver(const Field& phi0, const Interaction& iv, double dt, int steps) {
    return evolve_hartree(phi0, iv, 0.5 * dt, 2 * steps, {Flavor::Hartree, 1});
}

PairTrajectory evolve_pair(const PairState& init, const Trajectory& path, const Interaction& iv,
                           double dt, int steps, const PairOptions& opt) {
    if (!(init.s2.grid == iv.grid) || !(init.p2.grid == iv.grid)) throw ValidationError("evolve_pair: grid mismatch");
    const double dx = iv.grid.dx();
    Rhs f = [dx](const Parts& y, const Coeffs& c) {
        const Mat& s = y[0];
        const Mat& P = y[1];
        Parts r(2);
        r[0] = I * (-apply_V_op(s, c) + 2.0 * c.m + dx * (c.m * P.conjugate() + P * c.m));
        r[1] = p_rate(s, P, c, dx);
        return r;
    };
    return run({init.s2.K, init.p2.K.conjugate()}, 1, f, path, iv, dt, steps, opt, init.t);
}

PairTrajectory evolve_split(const Trajectory& path, const Interaction& iv, double dt, int steps,
                            const PairOptions& opt) {
    const double dx = iv.grid.dx();
    const int n = iv.grid.n;
    Rhs f = [dx](const Parts& y, const Coeffs& c) {
        const Mat& P = y[3];
        Parts r(4);
        r[0] = 2.0 * I * c.m;
        r[1] = -I * (apply_V_op(y[1], c) + apply_V_op(y[0], c));
        r[2] = I * (-apply_V_op(y[2], c) + dx * (c.m * P.conjugate() + P * c.m));
        r[3] = p_rate(y[0] + y[1] + y[2], P, c, dx);
        return r;
    };
    Parts y(4, Mat::Zero(n, n));
    return run(y, 3, f, path, iv, dt, steps, opt, 0.0);
}

PairRate pair_rate(const PairState& st, const Field& phi, const Interaction& iv) {
    require_d1(phi, iv, "pair_rate");
    const GridSpec& g = iv.grid;
    const double dx = g.dx();
    Coeffs c = coeffs_at(phi, iv);
    const Mat& s = st.s2.K;
    const Mat P = st.p2.K.conjugate();
    // Laplacians along x (rows) and y (columns).
    auto lap = [&](const Mat& K, double sx, double sy) {
        Mat F = K;
        const std::array<int, 2> dims{g.n, g.n};
        auto k = g.wavenumbers();
        fft_inplace(F.data(), dims, -1);
        for (int j = 0; j < g.n; ++j)
            for (int i = 0; i < g.n; ++i) F(i, j) *= -(sx * k[i] * k[i] + sy * k[j] * k[j]);
        fft_inplace(F.data(), dims, +1);
        return F;
    };
    Mat ds = I * (lap(s, 1, 1) - apply_V_op(s, c) + 2.0 * c.m + dx * (c.m * P.conjugate() + P * c.m));
    Mat dP = I * lap(P, 1, -1) + p_rate(s, P, c, dx);
    return {Kernel(g, ds), Kernel(g, dP.conjugate())};
}

EllipticCheck elliptic_check(const Field& phi, const Interaction& iv, int order) {
    require_d1(phi, iv, "elliptic_check");
    if (order != 0 && order != 1) throw ValidationError("elliptic_check: order must be 0 or 1");
    const Eigen::MatrixXd V = pair_matrix(iv);
    const Eigen::VectorXcd p = as_vector(phi);
    Mat m;
    double rhs;
    if (order == 0) {
        m = -(V.cast<cplx>().array() * (p * p.transpose()).array()).matrix();
        rhs = std::pow(lp_norm(phi, 3.0), 4);
    } else {
        const Field dphi = hartree_rhs(phi, iv);
        const Eigen::VectorXcd q = as_vector(dphi);
        m = -(V.cast<cplx>().array() * (q * p.transpose() + p * q.transpose()).array()).matrix();
        rhs = std::pow(lp_norm(phi, 3.0), 2) * std::pow(lp_norm(dphi, 3.0), 2);
    }
    Field mf = Kernel(iv.grid, m).to_field();
    const double w = weighted_l2(mf, [](std::span<const double> k) {
        const double k2 = k[0] * k[0] + k[1] * k[1];
        return 1.0 / (k2 * k2);
    });
    EllipticCheck e;
    e.lhs = w * w;
    e.rhs = rhs;
    e.ratio = rhs > 0.0 ? e.lhs / rhs : 0.0;
    return e;
}

std::vector<NormRow> norm_tracker(const PairTrajectory& tr, const Trajectory& path, const Interaction& iv) {
    std::vector<NormRow> rows;
    for (const auto& st : tr.states) {
        NormRow r{};
        r.t = st.t;
        const std::size_t idx = static_cast<std::size_t>(std::lround(st.t / path.dt));
        if (idx >= path.phi.size()) throw ValidationError("norm_tracker: state time outside the condensate path");
        Ucp ucp = recover_ucp(st.s2, st.p2);
        const Field s2f = st.s2.to_field();
        const Field uf = ucp.u.to_field();
        r.s2_l2 = st.s2.hs();
        r.s2_h32 = sobolev_norm(s2f, 1.5);
        r.ds2_h32 = sobolev_norm(pair_rate(st, path.phi[idx], iv).ds2.to_field(), 1.5);
        r.u_l2 = ucp.u.hs();
        r.p_l2 = ucp.p.hs();
        r.u_linf_l2 = mixed_norm(uf, OuterNorm::Linf);
        r.u_l4_l2 = mixed_norm(uf, OuterNorm::L4);
        r.p2_l2 = st.p2.hs();
        r.residual = bogoliubov_residual(st.s2, st.p2);
        r.consistency = ucp.consistency;
        rows.push_back(r);
    }
    return rows;
}

}  // namespace bl
