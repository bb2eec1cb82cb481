#include "bosonlab/meanfield.hpp"

#include <array>
#include <cmath>
#include <mutex>

namespace bl {

namespace {

// int over the unit ball of exp(-1/(1-r^2)), composite Simpson on the radius.
double bump_mass(int d) {
    static std::array<double, 4> cache{};
    static std::once_flag once;
    std::call_once(once, [] {
        const int m = 200000;
        const double h = 1.0 / m;
        for (int dd = 1; dd <= 3; ++dd) {
            double s = 0.0;
            for (int i = 0; i <= m; ++i) {
                double r = i * h;
                double f = (i == m) ? 0.0 : std::pow(r, dd - 1) * std::exp(-1.0 / (1.0 - r * r));
                double w = (i == 0 || i == m) ? 1.0 : (i % 2 ? 4.0 : 2.0);
                s += w * f;
            }
            s *= h / 3.0;
            double area = dd == 1 ? 2.0 : dd == 2 ? 2.0 * PI : 4.0 * PI;
            cache[dd] = area * s;
        }
    });
    return cache[d];
}

}  // namespace

double Profile::value(double r2, int d) const {
    switch (kind) {
        case ProfileKind::Zero:
            return 0.0;
        case ProfileKind::Gaussian:
            return std::pow(2.0 * PI * width * width, -0.5 * d) * std::exp(-0.5 * r2 / (width * width));
        case ProfileKind::Bump: {
            double s2 = r2 / (width * width);
            if (s2 >= 1.0) return 0.0;
            return std::exp(-1.0 / (1.0 - s2)) / (bump_mass(d) * std::pow(width, d));
        }
    }
    return 0.0;
}

double Profile::support_radius() const {
    switch (kind) {
        case ProfileKind::Gaussian:
            return 9.0 * width;
        case ProfileKind::Bump:
            return width;
        default:
            return 0.0;
    }
}

double Profile::fourier_1d(double k) const {
    switch (kind) {
        case ProfileKind::Zero:
            return 0.0;
        case ProfileKind::Gaussian:
            return std::exp(-0.5 * k * k * width * width);
        case ProfileKind::Bump: {
            const int m = 20000;
            const double h = 2.0 * width / m;
            double s = 0.0;
            for (int i = 0; i <= m; ++i) {
                double x = -width + i * h;
                double w = (i == 0 || i == m) ? 1.0 : (i % 2 ? 4.0 : 2.0);
                s += w * value(x * x, 1) * std::cos(k * x);
            }
            return s * h / 3.0;
        }
    }
    return 0.0;
}

double Interaction::scale() const { return std::pow(N, beta); }

double Interaction::l1() const {
    double s = 0.0;
    for (const auto& z : vN.data) s += std::abs(z.real());
    return s * vN.cell();
}

double Interaction::sup() const { return linf_norm(vN); }

int minimal_resolution(double N, double beta, double L, double width) {
    double need = 2.0 * std::pow(N, beta) * L / width;
    int n = 1;
    while (n < need - 1e-12) n *= 2;
    return n;
}

double scaled_potential(const Profile& v, double N, double beta, int d, double L,
                        std::span<const double> x) {
    if (v.kind == ProfileKind::Zero) return 0.0;
    const double s = std::pow(N, beta);
    const int K = static_cast<int>(std::ceil(v.support_radius() / (s * L) + 0.5));
    double acc = 0.0;
    std::array<int, 3> k{-K, -K, -K};
    while (true) {
        double r2 = 0.0;
        for (int a = 0; a < d; ++a) {
            double y = x[a] + k[a] * L;
            r2 += y * y;
        }
        acc += v.value(s * s * r2, d);
        int a = d - 1;
        for (; a >= 0; --a) {
            if (++k[a] <= K) break;
            k[a] = -K;
        }
        if (a < 0) break;
    }
    return std::pow(s, d) * acc;
}

Interaction make_interaction(const Profile& v, double N, double beta, const GridSpec& grid) {
    if (!(N >= 1.0)) throw ValidationError("interaction: N must be >= 1");
    if (!(beta >= 0.0 && beta <= 1.0)) throw ValidationError("interaction: beta must lie in [0, 1]");
    if (v.kind != ProfileKind::Zero) {
        double ratio = std::pow(N, beta) * grid.dx() / v.width;
        if (ratio > 0.5 + 1e-12)
            throw ValidationError("interaction: resolution guard N^beta*dx <= 0.5*width violated (" +
                                  std::to_string(ratio) + "); minimal n = " +
                                  std::to_string(minimal_resolution(N, beta, grid.L, v.width)));
    }
    Interaction iv;
    iv.grid = grid;
    iv.profile = v;
    iv.N = N;
    iv.beta = beta;
    iv.vN = sample(grid, [&](std::span<const double> x) {
        return cplx(scaled_potential(v, N, beta, grid.d, grid.L, x), 0.0);
    });
    return iv;
}

Eigen::MatrixXd pair_matrix(const Interaction& iv) {
    if (iv.grid.d != 1) throw ValidationError("pair_matrix: d = 1 only");
    const int n = iv.grid.n;
    Eigen::MatrixXd V(n, n);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) V(a, b) = iv.vN.data[((a - b + n / 2) % n + n) % n].real();
    return V;
}

Field gaussian(const GridSpec& g, double width, double kick) {
    const double norm = std::pow(PI * width * width, -0.25 * g.d);
    return sample(g, [&](std::span<const double> x) {
        double r2 = 0.0;
        for (double v : x) r2 += v * v;
        return norm * std::exp(-0.5 * r2 / (width * width)) * std::exp(I * kick * x[0]);
    });
}

Field mean_field_potential(const Field& phi, const Interaction& iv, Flavor flavor) {
    Field rho(phi.grid, 1);
    for (std::size_t i = 0; i < phi.size(); ++i) rho.data[i] = std::norm(phi.data[i]);
    if (iv.zero()) return Field(phi.grid, 1);
    if (flavor == Flavor::Limit) return cplx(iv.profile.integral()) * rho;
    Field V = convolve(iv.vN, rho);
    for (auto& z : V.data) z = cplx(z.real(), 0.0);
    return V;
}

namespace {

std::vector<double> xi2_table(const GridSpec& g) {
    const auto k = g.wavenumbers();
    const std::size_t total = ipow(g.n, g.d);
    std::vector<double> out(total);
    std::vector<int> idx(g.d, 0);
    for (std::size_t lin = 0; lin < total; ++lin) {
        double s = 0.0;
        for (int a = 0; a < g.d; ++a) s += k[idx[a]] * k[idx[a]];
        out[lin] = s;
        for (int a = g.d - 1; a >= 0; --a) {
            if (++idx[a] < g.n) break;
            idx[a] = 0;
        }
    }
    return out;
}

Field laplacian(const Field& f) {
    auto k2 = xi2_table(f.grid);
    Field fh = fft_forward(f);
    for (std::size_t i = 0; i < fh.size(); ++i) fh.data[i] *= -k2[i];
    return fft_inverse(fh);
}

}  // namespace

Field hartree_rhs(const Field& phi, const Interaction& iv, Flavor flavor) {
    Field lap = laplacian(phi);
    Field V = mean_field_potential(phi, iv, flavor);
    Field out(phi.grid, 1);
    for (std::size_t i = 0; i < phi.size(); ++i)
        out.data[i] = I * (lap.data[i] - V.data[i].real() * phi.data[i]);
    return out;
}

double mass(const Field& phi) {
    double s = l2_norm(phi);
    return s * s;
}

double energy(const Field& phi, const Interaction& iv, Flavor flavor) {
    auto k2 = xi2_table(phi.grid);
    Field fh = fft_forward(phi);
    double kin = 0.0;
    for (std::size_t i = 0; i < fh.size(); ++i) kin += k2[i] * std::norm(fh.data[i]);
    kin *= phi.cell();
    Field V = mean_field_potential(phi, iv, flavor);
    double pot = 0.0;
    for (std::size_t i = 0; i < phi.size(); ++i) pot += V.data[i].real() * std::norm(phi.data[i]);
    pot *= 0.5 * phi.cell();
    return kin + pot;
}

Trajectory evolve_hartree(const Field& phi0, const Interaction& iv, double dt, int steps,
                          const HartreeOptions& opt) {
    if (phi0.rank != 1 || !(phi0.grid == iv.grid)) throw ValidationError("hartree: field/grid mismatch");
    if (!(dt > 0.0)) throw ValidationError("hartree: dt must be positive");
    if (dt * phi0.grid.max_xi2() > PI)
        throw ValidationError("hartree: stability guard dt*max|xi|^2 <= pi violated (dt <= " +
                              std::to_string(PI / phi0.grid.max_xi2()) + ")");
    if (opt.record_every < 1) throw ValidationError("hartree: record_every must be >= 1");
    phi0.check_finite();

    auto k2 = xi2_table(phi0.grid);
    std::vector<cplx> half(k2.size());
    for (std::size_t i = 0; i < k2.size(); ++i) half[i] = std::exp(-I * (0.5 * dt * k2[i]));
    const auto dims = phi0.dims();

    Trajectory tr;
    tr.dt = dt * opt.record_every;
    tr.t.push_back(0.0);
    tr.phi.push_back(phi0);
    Field phi = phi0;
    for (int s = 1; s <= steps; ++s) {
        fft_inplace(phi.data.data(), dims, -1);
        for (std::size_t i = 0; i < half.size(); ++i) phi.data[i] *= half[i];
        fft_inplace(phi.data.data(), dims, +1);
        if (!iv.zero()) {
            Field V = mean_field_potential(phi, iv, opt.flavor);
            for (std::size_t i = 0; i < phi.size(); ++i) phi.data[i] *= std::exp(-I * (dt * V.data[i].real()));
        }
        fft_inplace(phi.data.data(), dims, -1);
        for (std::size_t i = 0; i < half.size(); ++i) phi.data[i] *= half[i];
        fft_inplace(phi.data.data(), dims, +1);
        double probe = 0.0;
        for (const auto& z : phi.data) probe += std::norm(z);
        if (!std::isfinite(probe)) throw NumericGuard("hartree: NaN detected at step " + std::to_string(s));
        if (s % opt.record_every == 0) {
            tr.t.push_back(s * dt);
            tr.phi.push_back(phi);
        }
    }
    return tr;
}

DecayReport decay_report(const Trajectory& tr, int j, double t_lo, double t_hi) {
    if (j < 0 || j > 3) throw ValidationError("decay_report: derivative order must be 0..3");
    const int half = (j == 0) ? 0 : (j == 3 ? 3 : 2);
    const int S = static_cast<int>(tr.phi.size());
    if (S < 2 * half + 1) throw ValidationError("decay_report: trajectory too short for the stencil");
    if (t_lo > t_hi || t_lo < tr.t.front() || t_hi > tr.t.back())
        throw ValidationError("decay_report: fit window outside trajectory");
    const double h = tr.dt;
    std::vector<double> c;
    double denom = 1.0;
    switch (j) {
        case 0: c = {1.0}; break;
        case 1: c = {1.0, -8.0, 0.0, 8.0, -1.0}; denom = 12.0 * h; break;
        case 2: c = {-1.0, 16.0, -30.0, 16.0, -1.0}; denom = 12.0 * h * h; break;
        case 3: c = {1.0, -8.0, 13.0, 0.0, -13.0, 8.0, -1.0}; denom = 8.0 * h * h * h; break;
    }
    DecayReport rep;
    rep.order = j;
    rep.t_lo = t_lo;
    rep.t_hi = t_hi;
    std::vector<double> ft, fv;
    for (int s = half; s < S - half; ++s) {
        Field D(tr.phi[s].grid, 1);
        for (int q = 0; q < static_cast<int>(c.size()); ++q) {
            if (c[q] == 0.0) continue;
            const auto& src = tr.phi[s - half + q].data;
            for (std::size_t i = 0; i < D.size(); ++i) D.data[i] += (c[q] / denom) * src[i];
        }
        DecayRow r{tr.t[s], linf_norm(D), lp_norm(D, 3.0), lp_norm(D, 4.0)};
        rep.rows.push_back(r);
        if (r.t >= t_lo - 1e-12 && r.t <= t_hi + 1e-12 && r.t > 0.0) {
            ft.push_back(r.t);
            fv.push_back(r.linf);
        }
    }
    if (ft.size() < 3) throw ValidationError("decay_report: fewer than 3 samples in the fit window");
    rep.fit_linf = fit_exponent(ft, fv);
    return rep;
}

LimitComparison compare_to_limit(const Trajectory& a, const Trajectory& b) {
    if (a.t.size() != b.t.size()) throw ValidationError("compare_to_limit: sampling mismatch");
    LimitComparison out;
    for (std::size_t s = 0; s < a.t.size(); ++s) {
        if (std::abs(a.t[s] - b.t[s]) > 1e-12) throw ValidationError("compare_to_limit: sampling times differ");
        out.t.push_back(a.t[s]);
        out.distance.push_back(l2_norm(a.phi[s] - b.phi[s]));
    }
    return out;
}

AnsatzResult heuristic_ansatz_check(const Interaction& Iv, const Trajectory& tr, bool project_mean) {
    if (Iv.grid.d != 1) throw ValidationError("ansatz check: d = 1 only");
    const GridSpec& g = Iv.grid;
    AnsatzResult res;
    double mean = 0.0;
    for (const auto& z : Iv.vN.data) mean += z.real();
    mean /= g.n;
    if (!project_mean && std::abs(mean) > 0.0)
        throw ValidationError("ansatz check: v has nonzero mean and projection is disabled");
    res.removed_mean = mean;
    Field vp = Iv.vN;
    for (auto& z : vp.data) z -= mean;
    const double s = Iv.scale();
    Field w = apply_multiplier(vp, [&](std::span<const double> k) {
        double k2 = k[0] * k[0];
        return k2 == 0.0 ? cplx(0.0) : cplx(s / (2.0 * k2));
    });
    Field K(g, 1);
    for (std::size_t i = 0; i < K.size(); ++i) K.data[i] = Iv.vN.data[i].real() * w.data[i].real();
    double coupling = 0.0;
    for (const auto& z : K.data) coupling += z.real();
    coupling *= g.dx();
    res.coupling = coupling;
    for (std::size_t q = 0; q < tr.phi.size(); ++q) {
        const Field& phi = tr.phi[q];
        Field rho(g, 1);
        for (std::size_t i = 0; i < rho.size(); ++i) rho.data[i] = std::norm(phi.data[i]);
        Field conv = convolve(K, rho);
        Field lhs(g, 1), rhs(g, 1);
        for (std::size_t i = 0; i < rho.size(); ++i) {
            lhs.data[i] = conv.data[i].real() * phi.data[i];
            rhs.data[i] = coupling * rho.data[i].real() * phi.data[i];
        }
        double dist = l2_norm(lhs - rhs);
        double ref = l2_norm(rhs);
        res.t.push_back(tr.t[q]);
        res.distance.push_back(dist);
        res.relative.push_back(ref > 0.0 ? dist / ref : 0.0);
    }
    return res;
}

}  // namespace bl
