#include "bosonlab/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <sstream>

namespace bl {

namespace {

double wavenumber(int m, int n, double L) {
    const int mm = (m < n / 2) ? m : m - n;
    return 2.0 * PI * mm / L;
}

void axpy(SectorField& y, cplx a, const SectorField& x) {
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += a * x.data[i];
}

SectorField sum(const SectorField& a, const SectorField& b) {
    SectorField r = a;
    r += b;
    return r;
}

void require_match(const SectorField& a, const SectorField& b, const char* what) {
    if (a.l != b.l || a.n != b.n || a.data.size() != b.data.size())
        throw ValidationError(std::string(what) + ": sector shape mismatch");
}

}  // namespace

double power_norm(const Mat& A, int iters, double tol) {
    const int n = static_cast<int>(A.cols());
    if (n == 0) return 0.0;
    Eigen::VectorXcd x(n);
    for (int i = 0; i < n; ++i) x(i) = cplx(1.0 + 0.01 * i, 0.003 * i);
    x.normalize();
    double est = 0.0;
    for (int it = 0; it < iters; ++it) {
        Eigen::VectorXcd y = A.adjoint() * (A * x);
        const double nrm = y.norm();
        if (nrm == 0.0) return 0.0;
        const double next = std::sqrt(nrm);
        x = y / nrm;
        if (std::abs(next - est) <= tol * next) return next;
        est = next;
    }
    return est;
}

VTilde build_Vtilde(const Field& phi, const Kernel& u, const DeltaPlus& c, const Kernel& m,
                    const Interaction& iv) {
    if (!(phi.grid == iv.grid) || !(u.grid == iv.grid) || !(m.grid == iv.grid))
        throw ValidationError("build_Vtilde: grid mismatch");
    const int n = iv.grid.n;
    const double h = iv.grid.dx();
    const Eigen::MatrixXd V = pair_matrix(iv);
    const Eigen::VectorXcd f = Eigen::Map<const Eigen::VectorXcd>(phi.data.data(), n);

    VTilde vt;
    vt.multiplier = h * (V * f.cwiseAbs2());
    vt.exchange = h * (f.asDiagonal() * V.cast<cplx>() * f.conjugate().asDiagonal());

    const Mat cbar = c.conj().op();
    const Mat cbi = cbar.partialPivLu().inverse();
    const Mat M = m.op(), Mb = M.conjugate();
    const Mat U = u.op(), Ub = U.conjugate();
    const Mat Wc = w_of_cbar(u, c, m).op();
    vt.correction = -0.5 * (cbi * M * Ub + U * Mb * cbi + Wc * cbi - cbi * Wc);

    vt.op = vt.exchange + vt.correction;
    vt.op.diagonal() += vt.multiplier.cast<cplx>();
    vt.norm = n > 0 ? Eigen::BDCSVD<Mat>(vt.op).singularValues()(0) : 0.0;
    vt.norm_power = power_norm(vt.op);
    const double u2 = u.hs();
    vt.bound_scale = (1.0 + u2 * u2 * u2 * u2) * f.cwiseAbs2().maxCoeff();
    return vt;
}

SectorField apply_axis(const Mat& A, const SectorField& f, int k) {
    if (k < 0 || k >= f.l) throw ValidationError("apply_axis: axis out of range");
    if (A.rows() != f.n || A.cols() != f.n) throw ValidationError("apply_axis: operator size mismatch");
    const std::size_t n = f.n;
    const std::size_t outer = ipow(n, k), inner = ipow(n, f.l - 1 - k);
    SectorField out(f.l, f.n, f.dx, f.tag);
    const Mat At = A.transpose();
    for (std::size_t o = 0; o < outer; ++o) {
        Eigen::Map<const Mat> B(f.data.data() + o * n * inner, inner, n);
        Eigen::Map<Mat> R(out.data.data() + o * n * inner, inner, n);
        R.noalias() = B * At;
    }
    return out;
}

SectorField apply_Vl(const Mat& A, const SectorField& f) {
    SectorField out = apply_axis(A, f, 0);
    for (int k = 1; k < f.l; ++k) out += apply_axis(A, f, k);
    return out;
}

SectorField apply_Htilde(const SectorField& f, const Eigen::MatrixXd& V, double N) {
    if (f.l < 2) throw ValidationError("apply_Htilde: sector index must be >= 2");
    if (V.rows() != f.n) throw ValidationError("apply_Htilde: interaction size mismatch");
    SectorField out(f.l, f.n, f.dx, f.tag);
    std::vector<int> y(f.l, 0);
    for (std::size_t lin = 0; lin < f.data.size(); ++lin) {
        double w = 0.0;
        for (int a = 0; a < f.l; ++a)
            for (int b = a + 1; b < f.l; ++b) w += V(y[a], y[b]);
        out.data[lin] = (w / N) * f.data[lin];
        for (int k = f.l - 1; k >= 0; --k) {
            if (++y[k] < f.n) break;
            y[k] = 0;
        }
    }
    return out;
}

SectorField cascade_forcing(const SectorField& f, const Eigen::MatrixXd& V, double N) {
    if (f.l < 2) throw ValidationError("cascade_forcing: sector index must be >= 2");
    SectorField g(f.l, f.n, f.dx, f.tag);
    const std::size_t tail = ipow(f.n, f.l - 2);
    const double pre = -1.0 / (2.0 * N);
    for (int a = 0; a < f.n; ++a)
        for (int b = 0; b < f.n; ++b) {
            const double w = pre * V(a, b);
            const std::size_t base = (static_cast<std::size_t>(a) * f.n + b) * tail;
            for (std::size_t i = 0; i < tail; ++i) g.data[base + i] = w * f.data[base + i];
        }
    return symmetrize(g);
}

SectorField singular_forcing(int l, const ForcingInputs& in) {
    if (l < 2 || l > 4) throw ValidationError("singular_forcing: l must be 2, 3 or 4");
    SectorField f = summand(l, 'a', in);
    f *= sector_prefactor(l, in.N);
    f = symmetrize(f);
    f.tag = SectorTag::Singular;
    return f;
}

SectorStepper::SectorStepper(int l, int n, double L, double dt)
    : l_(l), n_(n), dt_(dt), a_(l, n, L / n), e_(l, n, L / n) {
    if (l < 1) throw ValidationError("SectorStepper: l must be >= 1");
    if (!(dt > 0.0)) throw ValidationError("SectorStepper: dt must be positive");
    std::vector<double> k2(n);
    for (int m = 0; m < n; ++m) k2[m] = std::pow(wavenumber(m, n, L), 2);
    phase_.resize(a_.data.size());
    std::vector<int> y(l, 0);
    for (std::size_t lin = 0; lin < phase_.size(); ++lin) {
        double s = 0.0;
        for (int k = 0; k < l; ++k) s += k2[y[k]];
        phase_[lin] = std::exp(-I * (0.5 * dt) * s);
        for (int k = l - 1; k >= 0; --k) {
            if (++y[k] < n) break;
            y[k] = 0;
        }
    }
}

void SectorStepper::kinetic(SectorField& f) const {
    const std::vector<int> dims(l_, n_);
    fft_inplace(f.data.data(), dims, -1);
    for (std::size_t i = 0; i < f.data.size(); ++i) f.data[i] *= phase_[i];
    fft_inplace(f.data.data(), dims, +1);
}

void SectorStepper::step(const SectorField& F0, const Mat& V0, const SectorField& Fh, const Mat& Vh) {
    require_match(a_, F0, "SectorStepper");
    require_match(a_, Fh, "SectorStepper");
    kinetic(a_);
    kinetic(e_);
    const double h = 0.5 * dt_;
    SectorField ah = a_, eh = e_;
    axpy(ah, I * h, F0);
    axpy(eh, -I * h, apply_Vl(V0, sum(a_, e_)));
    axpy(a_, I * dt_, Fh);
    axpy(e_, -I * dt_, apply_Vl(Vh, sum(ah, eh)));
    kinetic(a_);
    kinetic(e_);
}

SectorField SectorStepper::psi() const { return sum(a_, e_); }

SectorSolution solve_sector(int l, const std::vector<SectorField>& forcing, const std::vector<Mat>& vt,
                            double L, double dt, int steps, int record_every) {
    if (l < 2 || l > 4) throw ValidationError("solve_sector: l must be 2, 3 or 4");
    if (steps < 1 || record_every < 1) throw ValidationError("solve_sector: steps and record_every must be >= 1");
    const std::size_t need = 2 * static_cast<std::size_t>(steps) + 1;
    if (forcing.size() < need || vt.size() < need)
        throw ValidationError("solve_sector: forcing and V~ need 2 * steps + 1 samples at spacing dt/2");
    const int n = forcing.front().n;
    if (forcing.front().l != l) throw ValidationError("solve_sector: forcing sector mismatch");
    SectorStepper st(l, n, L, dt);
    SectorSolution out;
    out.dt = dt;
    auto record = [&](double t) {
        out.t.push_back(t);
        out.psi.push_back(st.psi());
        out.norm.push_back(out.psi.back().l2());
        out.norm_a.push_back(st.psi_a().l2());
        out.norm_e.push_back(st.psi_e().l2());
    };
    record(0.0);
    for (int k = 0; k < steps; ++k) {
        st.step(forcing[2 * k], vt[2 * k], forcing[2 * k + 1], vt[2 * k + 1]);
        if ((k + 1) % record_every == 0 || k + 1 == steps) record((k + 1) * dt);
    }
    return out;
}

const SectorHistory& CascadeState::sector(int l) const {
    for (const auto& s : sectors)
        if (s.l == l) return s;
    throw ValidationError("CascadeState: sector " + std::to_string(l) + " not in run");
}

CascadeRun run_cascade(const PairTrajectory& pairs, const Trajectory& path, const Interaction& iv,
                       const CascadeConfig& cfg) {
    if (cfg.J < 1 || cfg.J > 6) throw ValidationError("run_cascade: J must lie in 1..6");
    if (cfg.sectors.empty()) throw ValidationError("run_cascade: no sectors requested");
    for (int l : cfg.sectors)
        if (l < 2 || l > 4) throw ValidationError("run_cascade: sectors must be 2, 3 or 4");
    const int n = iv.grid.n;
    if (std::find(cfg.sectors.begin(), cfg.sectors.end(), 4) != cfg.sectors.end() && n > cfg.max_n_l4) {
        std::ostringstream os;
        os << "run_cascade: n = " << n << " exceeds the 4-particle guard (max " << cfg.max_n_l4 << ")";
        throw ValidationError(os.str());
    }
    if (cfg.record_every < 1) throw ValidationError("run_cascade: record_every must be >= 1");
    const double pdt = pairs.dt;
    if (pairs.states.size() < 3) throw ValidationError("run_cascade: pair trajectory too short");
    for (std::size_t i = 0; i < pairs.states.size(); ++i)
        if (std::abs(pairs.states[i].t - i * pdt) > 1e-9 * std::max(1.0, i * pdt))
            throw ValidationError("run_cascade: pair trajectory must be recorded every step");
    if (std::abs(path.dt - 0.5 * pdt) > 1e-12 * pdt)
        throw ValidationError("run_cascade: condensate path spacing must be half the pair step");
    const int steps = static_cast<int>((pairs.states.size() - 1) / 2);
    if (path.phi.size() < 4 * static_cast<std::size_t>(steps) + 1)
        throw ValidationError("run_cascade: condensate path too short");

    const double dt = 2.0 * pdt;
    const double L = iv.grid.L;
    const Eigen::MatrixXd V = pair_matrix(iv);
    const int S = static_cast<int>(cfg.sectors.size());

    struct Sample {
        VTilde vt;
        std::vector<SectorField> F;
        double regular = 0.0;
    };
    auto sample = [&](int i, bool regular) {
        const PairState& ps = pairs.states[i];
        const Field& phi = path.phi[2 * i];
        Ucp ucp = recover_ucp(ps.s2, ps.p2);
        Sample s;
        s.vt = build_Vtilde(phi, ucp.u, ucp.c, build_m(phi, iv), iv);
        ForcingInputs in = forcing_inputs(ucp.u, ucp.p, phi, iv);
        for (int l : cfg.sectors) s.F.push_back(singular_forcing(l, in));
        if (regular) {
            ForcingOptions fo;
            fo.max_n_l4 = cfg.max_n_l4;
            s.regular = assemble_F1(in).l2();
            for (int l : cfg.sectors) s.regular += assemble_sector(l, in, fo).regular.l2();
        }
        return s;
    };

    CascadeRun run;
    run.dt = dt;
    run.N = iv.N;
    run.beta = iv.beta;
    std::vector<std::vector<SectorStepper>> lv(cfg.J);
    for (int j = 0; j < cfg.J; ++j)
        for (int l : cfg.sectors) lv[j].emplace_back(l, n, L, dt);
    run.levels.resize(cfg.J);
    for (int j = 0; j < cfg.J; ++j) {
        run.levels[j].j = j + 1;
        for (int l : cfg.sectors) run.levels[j].sectors.push_back(SectorHistory{l, {}, {}, {}, {}});
    }

    auto record = [&](double t, const Sample& s) {
        run.t.push_back(t);
        run.vt_norm.push_back(s.vt.norm);
        run.vt_ratio.push_back(s.vt.ratio());
        if (cfg.regular_budget) run.regular.push_back(s.regular);
        for (int j = 0; j < cfg.J; ++j)
            for (int q = 0; q < S; ++q) {
                SectorHistory& h = run.levels[j].sectors[q];
                h.norm.push_back(lv[j][q].psi().l2());
                h.norm_a.push_back(lv[j][q].psi_a().l2());
                h.norm_e.push_back(lv[j][q].psi_e().l2());
            }
    };

    Sample s0 = sample(0, cfg.regular_budget);
    record(0.0, s0);
    for (int k = 0; k < steps; ++k) {
        const bool rec = (k + 1) % cfg.record_every == 0 || k + 1 == steps;
        Sample sh = sample(2 * k + 1, false);
        Sample s1 = sample(2 * k + 2, rec && cfg.regular_budget);
        std::vector<SectorField> prev;  // level j at t, sector q, before it is advanced
        for (int j = 0; j < cfg.J; ++j) {
            std::vector<SectorField> cur;
            for (int q = 0; q < S; ++q) cur.push_back(lv[j][q].psi());
            // sectors of one level are independent
            std::vector<std::future<void>> work;
            for (int q = 0; q < S; ++q)
                work.push_back(std::async(std::launch::async, [&, j, q] {
                    if (j == 0) {
                        lv[j][q].step(s0.F[q], s0.vt.op, sh.F[q], sh.vt.op);
                    } else {
                        SectorField mid = prev[q];
                        axpy(mid, 1.0, lv[j - 1][q].psi());
                        mid *= 0.5;
                        lv[j][q].step(cascade_forcing(prev[q], V, iv.N), s0.vt.op, cascade_forcing(mid, V, iv.N),
                                      sh.vt.op);
                    }
                }));
            for (auto& w : work) w.get();
            prev = std::move(cur);
        }
        if (rec) record((k + 1) * dt, s1);
        s0 = std::move(s1);
    }
    for (int j = 0; j < cfg.J; ++j)
        for (int q = 0; q < S; ++q) run.levels[j].sectors[q].psi = lv[j][q].psi();
    return run;
}

std::vector<ThresholdRow> threshold_table(int J, double beta) {
    if (J < 1) throw ValidationError("threshold_table: J must be >= 1");
    std::vector<ThresholdRow> rows;
    for (int j = 1; j <= J; ++j) {
        ThresholdRow r;
        r.j = j;
        r.num = 1 + 2 * j;
        r.den = 3 + 4 * j;
        r.value = static_cast<double>(r.num) / r.den;
        r.dominant = std::min(-0.5 + beta, 0.5 * (-3.0 + 7.0 * beta) + (j - 1) * (-1.0 + 2.0 * beta));
        rows.push_back(r);
    }
    return rows;
}

EnergyBudget energy_budget(const CascadeRun& run, double tol) {
    if (run.t.empty() || run.levels.empty()) throw ValidationError("energy_budget: empty run");
    const std::size_t T = run.t.size();
    if (run.vt_norm.size() != T) throw ValidationError("energy_budget: missing V~ norm series");
    EnergyBudget b;
    b.t = run.t;
    b.thresholds = threshold_table(static_cast<int>(run.levels.size()), run.beta);
    auto weight = [](double t) { return std::pow(std::log1p(t), 4) / (1.0 + t * t * t); };
    for (const auto& lvl : run.levels)
        for (const auto& h : lvl.sectors) {
            if (h.norm_a.size() != T || h.norm_e.size() != T)
                throw ValidationError("energy_budget: missing norm history for level " + std::to_string(lvl.j));
            EnergyAudit a;
            a.j = lvl.j;
            a.l = h.l;
            a.measured = h.norm_e;
            a.bound.assign(T, 0.0);
            a.weighted.assign(T, 0.0);
            for (std::size_t i = 1; i < T; ++i) {
                const double w = run.t[i] - run.t[i - 1];
                const double g0 = h.l * run.vt_norm[i - 1] * h.norm_a[i - 1];
                const double g1 = h.l * run.vt_norm[i] * h.norm_a[i];
                a.bound[i] = a.bound[i - 1] + 0.5 * w * (g0 + g1);
                const double p0 = h.l * weight(run.t[i - 1]) * h.norm_a[i - 1];
                const double p1 = h.l * weight(run.t[i]) * h.norm_a[i];
                a.weighted[i] = a.weighted[i - 1] + 0.5 * w * (p0 + p1);
            }
            a.worst = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < T; ++i) a.worst = std::max(a.worst, a.measured[i] - a.bound[i]);
            a.holds = a.worst <= tol;
            b.audits.push_back(std::move(a));
        }
    if (!run.regular.empty()) {
        if (run.regular.size() != T) throw ValidationError("energy_budget: regular forcing series incomplete");
        b.regular_integral.assign(T, 0.0);
        for (std::size_t i = 1; i < T; ++i)
            b.regular_integral[i] =
                b.regular_integral[i - 1] + 0.5 * (run.t[i] - run.t[i - 1]) * (run.regular[i - 1] + run.regular[i]);
    }
    return b;
}

std::vector<ContractionEntry> contraction_report(const std::vector<CascadeRun>& runs) {
    if (runs.size() < 3) throw ValidationError("contraction_report: need at least 3 values of N");
    const auto& first = runs.front();
    const int J = static_cast<int>(first.levels.size());
    std::vector<double> Ns;
    for (const auto& r : runs) {
        if (static_cast<int>(r.levels.size()) != J) throw ValidationError("contraction_report: level count differs");
        Ns.push_back(r.N);
    }
    std::vector<ContractionEntry> out;
    for (int j = 1; j < J; ++j)
        for (const auto& h : first.levels[j - 1].sectors) {
            ContractionEntry e;
            e.j = j;
            e.l = h.l;
            e.predicted = -1.0 + 0.5 * first.beta;
            for (const auto& r : runs) {
                const double lo = r.levels[j - 1].sector(h.l).norm.back();
                const double hi = r.levels[j].sector(h.l).norm.back();
                if (!(lo > 0.0)) throw NumericGuard("contraction_report: level norm vanished");
                e.ratio.push_back(hi / lo);
            }
            e.decreasing = true;
            for (std::size_t i = 1; i < e.ratio.size(); ++i) e.decreasing = e.decreasing && e.ratio[i] < e.ratio[i - 1];
            e.fit = fit_exponent(Ns, e.ratio);
            out.push_back(std::move(e));
        }
    return out;
}

}  // namespace bl
