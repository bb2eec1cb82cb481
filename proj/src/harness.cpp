#include "bosonlab/harness.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "bosonlab/cascade.hpp"
#include "bosonlab/forcing.hpp"
#include "bosonlab/io.hpp"
#include "bosonlab/kernel.hpp"
#include "bosonlab/pair.hpp"

#ifndef BOSONLAB_VERSION
#define BOSONLAB_VERSION "0.0.0"
#endif

namespace bl {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string kind_name(RunKind k) {
    switch (k) {
        case RunKind::Hartree: return "hartree";
        case RunKind::Pair: return "pair";
        case RunKind::Forcing: return "forcing";
        case RunKind::Cascade: return "cascade";
        case RunKind::Fock: return "fock";
        case RunKind::Full: return "full-pipeline";
    }
    return "?";
}

namespace {

// ---------------------------------------------------------------- parsing

[[noreturn]] void bad(const std::string& field, const std::string& msg) {
    throw ValidationError("config field '" + field + "': " + msg);
}

double as_double(const json& j, const std::string& f) {
    if (!j.is_number()) bad(f, "expected a number");
    return j.get<double>();
}

int as_int(const json& j, const std::string& f) {
    if (!j.is_number_integer()) bad(f, "expected an integer");
    return j.get<int>();
}

bool as_bool(const json& j, const std::string& f) {
    if (!j.is_boolean()) bad(f, "expected true or false");
    return j.get<bool>();
}

std::string as_string(const json& j, const std::string& f) {
    if (!j.is_string()) bad(f, "expected a string");
    return j.get<std::string>();
}

std::vector<double> as_doubles(const json& j, const std::string& f) {
    if (!j.is_array()) bad(f, "expected an array of numbers");
    std::vector<double> v;
    for (std::size_t i = 0; i < j.size(); ++i) v.push_back(as_double(j[i], f + "[" + std::to_string(i) + "]"));
    return v;
}

std::vector<int> as_ints(const json& j, const std::string& f) {
    if (!j.is_array()) bad(f, "expected an array of integers");
    std::vector<int> v;
    for (std::size_t i = 0; i < j.size(); ++i) v.push_back(as_int(j[i], f + "[" + std::to_string(i) + "]"));
    return v;
}

template <class Fn>
void for_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed, Fn fn) {
    if (!j.is_object()) bad(where.empty() ? "<root>" : where, "expected an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string name = where.empty() ? it.key() : where + "." + it.key();
        if (!ok.count(it.key())) bad(name, "unknown key");
        fn(it.key(), it.value(), name);
    }
}

RunKind parse_kind(const std::string& s, const std::string& f) {
    for (RunKind k : {RunKind::Hartree, RunKind::Pair, RunKind::Forcing, RunKind::Cascade, RunKind::Fock, RunKind::Full})
        if (kind_name(k) == s) return k;
    bad(f, "'" + s + "' is not one of hartree, pair, forcing, cascade, fock, full-pipeline");
}

const char* profile_name(ProfileKind k) {
    return k == ProfileKind::Gaussian ? "gaussian" : k == ProfileKind::Bump ? "bump" : "zero";
}

// ---------------------------------------------------------------- run directory

struct RunDir {
    fs::path root;
    std::vector<std::string> files;
    void put(const std::string& rel, const std::string& bytes) {
        io::write_file(root / rel, bytes);
        files.push_back(rel);
    }
};

std::string tag(double N, double beta) { return "N" + io::fmt(N) + "_b" + io::fmt(beta); }

json null_or(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json new_section(const std::string& title) {
    return json{{"title", title},
                {"status", "ok"},
                {"invariants", json::array()},
                {"exponents", json::array()},
                {"checks", json::array()}};
}

void add_invariant(json& s, const std::string& name, double value, double limit) {
    s["invariants"].push_back({{"name", name}, {"value", null_or(value)}, {"limit", null_or(limit)}});
}

void add_exponent(json& s, const std::string& q, const PowerFit& f, double exponent_3d, double predicted) {
    s["exponents"].push_back({{"quantity", q},
                              {"slope", null_or(f.slope)},
                              {"ci_low", null_or(f.ci_low)},
                              {"ci_high", null_or(f.ci_high)},
                              {"r2", null_or(f.r2)},
                              {"points", f.points},
                              {"exponent_3d", null_or(exponent_3d)},
                              {"predicted", null_or(predicted)}});
}

void add_check(json& s, const std::string& name, bool passed, const std::string& detail) {
    s["checks"].push_back({{"name", name}, {"passed", passed}, {"detail", detail}});
}

// Work items spread over a fixed pool; results land by index, so output order does not
// depend on scheduling.
template <class R, class F>
std::vector<R> parallel_map(std::size_t count, int threads, F f) {
    std::vector<R> out(count);
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex m;
    auto worker = [&] {
        for (std::size_t i; (i = next++) < count;) {
            try {
                out[i] = f(i);
            } catch (...) {
                std::lock_guard<std::mutex> lk(m);
                if (!err) err = std::current_exception();
            }
        }
    };
    const int k = std::max(1, std::min<int>(threads, static_cast<int>(count)));
    std::vector<std::thread> pool;
    for (int i = 1; i < k; ++i) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
    return out;
}

struct Point {
    double N, beta;
};

std::vector<Point> points(const ExperimentConfig& c) {
    std::vector<Point> p;
    for (double b : c.beta)
        for (double N : c.N) p.push_back({N, b});
    return p;
}

int steps_of(const ExperimentConfig& c) { return static_cast<int>(std::lround(c.T / c.dt)); }

// ---------------------------------------------------------------- hartree

struct HartreeOut {
    Point pt{};
    std::vector<std::vector<double>> rows;
    std::vector<double> lim_t, lim_d;
    DecayReport decay;
    double mass_drift = 0.0, energy_drift = 0.0;
    Field final;
    double t_final = 0.0;
};

json run_hartree(const ExperimentConfig& c, RunDir& dir, int threads) {
    json s = new_section("Hartree evolution");
    const auto pts = points(c);
    const int steps = steps_of(c);
    const double fit_from = c.fit_from >= 0.0 ? c.fit_from : 0.25 * c.T;
    auto res = parallel_map<HartreeOut>(pts.size(), threads, [&](std::size_t i) {
        HartreeOut o;
        o.pt = pts[i];
        GridSpec g(c.d, c.n, c.L);
        Interaction iv = make_interaction(c.potential, o.pt.N, o.pt.beta, g);
        Field phi0 = gaussian(g, c.phi_width, c.kick);
        Trajectory tr = evolve_hartree(phi0, iv, c.dt, steps, {Flavor::Hartree, c.record_every});
        const double m0 = mass(phi0), e0 = energy(phi0, iv);
        for (std::size_t k = 0; k < tr.phi.size(); ++k) {
            const Field& f = tr.phi[k];
            const double m = mass(f), e = energy(f, iv);
            o.mass_drift = std::max(o.mass_drift, std::abs(m - m0));
            o.energy_drift = std::max(o.energy_drift, std::abs(e - e0) / std::max(1.0, std::abs(e0)));
            o.rows.push_back({o.pt.N, o.pt.beta, tr.t[k], m, e, linf_norm(f), lp_norm(f, 3.0), lp_norm(f, 4.0)});
        }
        o.mass_drift *= 1000.0 / steps;
        o.decay = decay_report(tr, 0, fit_from, c.T);
        if (c.hartree.limit && c.d == 1 && !iv.zero()) {
            Trajectory lim = evolve_hartree(phi0, iv, c.dt, steps, {Flavor::Limit, c.record_every});
            LimitComparison lc = compare_to_limit(tr, lim);
            o.lim_t = lc.t;
            o.lim_d = lc.distance;
        }
        o.final = tr.phi.back();
        o.t_final = tr.t.back();
        return o;
    });

    io::CsvWriter csv({"N", "beta", "t", "mass", "energy", "linf", "l3", "l4"});
    io::CsvWriter lim({"N", "beta", "t", "distance_to_limit"});
    double worst_mass = 0.0, worst_energy = 0.0;
    for (const auto& o : res) {
        for (const auto& r : o.rows) csv.row(r);
        for (std::size_t k = 0; k < o.lim_t.size(); ++k) lim.row({o.pt.N, o.pt.beta, o.lim_t[k], o.lim_d[k]});
        worst_mass = std::max(worst_mass, o.mass_drift);
        worst_energy = std::max(worst_energy, o.energy_drift);
        add_exponent(s, "Linf decay, " + tag(o.pt.N, o.pt.beta), o.decay.fit_linf, -1.5, -0.5 * c.d);
        dir.put("fields/phi_" + tag(o.pt.N, o.pt.beta) + ".bin", io::encode_field(o.final, o.t_final));
    }
    dir.put("hartree.csv", csv.str());
    if (c.hartree.limit && c.d == 1 && c.potential.kind != ProfileKind::Zero) dir.put("hartree_limit.csv", lim.str());
    add_invariant(s, "max mass drift per 1e3 steps", worst_mass, 1e-8);
    add_invariant(s, "max relative energy drift", worst_energy, std::nan(""));
    add_check(s, "mass drift < 1e-8 per 1e3 steps", worst_mass < 1e-8, io::fmt(worst_mass));
    if (c.potential.kind == ProfileKind::Zero)
        for (const auto& o : res) {
            const double e = o.decay.fit_linf.slope;
            add_check(s, "free decay exponent -d/2 +- 0.1, " + tag(o.pt.N, o.pt.beta),
                      std::abs(e + 0.5 * c.d) <= 0.1, io::fmt(e));
        }
    return s;
}

// ---------------------------------------------------------------- pair

struct PairOut {
    Point pt{};
    std::vector<NormRow> rows;
    EllipticCheck e0, e1;
    double max_residual = 0.0;
    Field s2;
    double t_final = 0.0;
};

json run_pair(const ExperimentConfig& c, RunDir& dir, int threads) {
    json s = new_section("Pair excitations");
    const auto pts = points(c);
    const int steps = steps_of(c);
    auto res = parallel_map<PairOut>(pts.size(), threads, [&](std::size_t i) {
        PairOut o;
        o.pt = pts[i];
        GridSpec g(1, c.n, c.L);
        Interaction iv = make_interaction(c.potential, o.pt.N, o.pt.beta, g);
        Field phi0 = gaussian(g, c.phi_width, c.kick);
        Trajectory path = pair_driver(phi0, iv, c.dt, steps);
        PairTrajectory tr = evolve_pair(PairState::zero(g), path, iv, c.dt, steps,
                                        {c.record_every, c.tol.residual_abort});
        o.rows = norm_tracker(tr, path, iv);
        o.max_residual = tr.max_residual;
        o.e0 = elliptic_check(path.phi.back(), iv, 0);
        o.e1 = elliptic_check(path.phi.back(), iv, 1);
        o.s2 = tr.states.back().s2.to_field();
        o.t_final = tr.states.back().t;
        return o;
    });

    io::CsvWriter csv({"N", "beta", "t", "s2_l2", "s2_h32", "ds2_h32", "u_l2", "p_l2", "u_linf_l2", "u_l4_l2",
                       "p2_l2", "residual", "consistency"});
    io::CsvWriter ell({"N", "beta", "elliptic_ratio_0", "elliptic_ratio_1"});
    double worst = 0.0;
    for (const auto& o : res) {
        for (const auto& r : o.rows)
            csv.row({o.pt.N, o.pt.beta, r.t, r.s2_l2, r.s2_h32, r.ds2_h32, r.u_l2, r.p_l2, r.u_linf_l2, r.u_l4_l2,
                     r.p2_l2, r.residual, r.consistency});
        ell.row({o.pt.N, o.pt.beta, o.e0.ratio, o.e1.ratio});
        worst = std::max(worst, o.max_residual);
        dir.put("fields/s2_" + tag(o.pt.N, o.pt.beta) + ".bin", io::encode_field(o.s2, o.t_final));
    }
    dir.put("pair.csv", csv.str());
    dir.put("pair_elliptic.csv", ell.str());
    add_invariant(s, "max Bogoliubov residual", worst, c.tol.residual_abort);
    for (double b : c.beta) {
        std::vector<double> Ns, l2, h32, r0;
        for (const auto& o : res)
            if (o.pt.beta == b) {
                Ns.push_back(o.pt.N);
                l2.push_back(o.rows.back().s2_l2);
                h32.push_back(o.rows.back().s2_h32);
                r0.push_back(o.e0.ratio);
            }
        const double spread = *std::max_element(r0.begin(), r0.end()) / *std::min_element(r0.begin(), r0.end());
        add_invariant(s, "elliptic ratio spread over N, beta " + io::fmt(b), spread, 3.0);
        add_check(s, "elliptic ratio spread < 3, beta " + io::fmt(b), spread < 3.0, io::fmt(spread));
        if (Ns.size() >= 3) {
            add_exponent(s, "||s2||_2 at T, beta " + io::fmt(b), fit_exponent(Ns, l2), 0.0, std::nan(""));
            add_exponent(s, "||s2||_H3/2 at T, beta " + io::fmt(b), fit_exponent(Ns, h32), b, std::nan(""));
        }
    }
    return s;
}

// ---------------------------------------------------------------- forcing

json run_forcing(const ExperimentConfig& c, RunDir& dir) {
    json s = new_section("Forcing sectors");
    io::CsvWriter csv({"beta", "N", "F1", "F2", "F2s", "F2r", "F3", "F3s", "F3r", "F4", "F4s", "F4r", "F2s_chain",
                       "F3s_chain"});
    for (double b : c.beta) {
        ScalingConfig lc;
        lc.n = c.n;
        lc.L = c.L;
        lc.beta = b;
        lc.Ns = c.N;
        lc.t_eval = c.T;
        lc.dt = c.dt;
        lc.phi_width = c.phi_width;
        lc.v_width = c.potential.width;
        lc.max_n_l4 = c.forcing.max_n_l4;
        const ScalingReport rep = scaling_table(lc);
        bool chains = true;
        for (const auto& r : rep.rows) {
            csv.row({b, r.N, r.F1, r.F2, r.F2s, r.F2r, r.F3, r.F3s, r.F3r, r.F4, r.F4s, r.F4r, r.F2s_chain, r.F3s_chain});
            chains = chains && r.F2s <= r.F2s_chain && r.F3s <= r.F3s_chain;
        }
        for (const auto& e : rep.exponents)
            add_exponent(s, e.sector + ", beta " + io::fmt(b), e.fit, e.exponent_3d, e.predicted);
        add_check(s, "regular/singular ratio decreasing in N, beta " + io::fmt(b), rep.ratios_decreasing, "l = 2, 3, 4");
        add_check(s, "singular-part L2 chains hold, beta " + io::fmt(b), chains, "F2s, F3s");
    }
    dir.put("forcing.csv", csv.str());
    return s;
}

// ---------------------------------------------------------------- cascade

struct CascadeOut {
    Point pt{};
    CascadeRun run;
    EnergyBudget budget;
};

json run_cascade_section(const ExperimentConfig& c, RunDir& dir, int threads, json& thresholds) {
    json s = new_section("Cascade");
    const auto pts = points(c);
    const int steps = steps_of(c);
    auto res = parallel_map<CascadeOut>(pts.size(), threads, [&](std::size_t i) {
        CascadeOut o;
        o.pt = pts[i];
        GridSpec g(1, c.n, c.L);
        Interaction iv = make_interaction(c.potential, o.pt.N, o.pt.beta, g);
        Field phi0 = gaussian(g, c.phi_width, c.kick);
        Trajectory path = pair_driver(phi0, iv, c.dt, steps);
        PairTrajectory pairs = evolve_pair(PairState::zero(g), path, iv, c.dt, steps, {1, c.tol.residual_abort});
        CascadeConfig cc;
        cc.J = c.J;
        cc.sectors = c.sectors;
        cc.record_every = c.record_every;
        cc.max_n_l4 = c.cascade.max_n_l4;
        cc.regular_budget = c.cascade.regular_budget;
        o.run = bl::run_cascade(pairs, path, iv, cc);
        o.budget = energy_budget(o.run);
        return o;
    });

    io::CsvWriter csv({"N", "beta", "t", "j", "l", "norm", "norm_a", "norm_e"});
    io::CsvWriter vt({"N", "beta", "t", "vt_norm", "vt_ratio", "regular"});
    io::CsvWriter audit({"N", "beta", "j", "l", "t", "measured", "bound", "weighted"});
    double worst = -1e300;
    bool holds = true;
    for (const auto& o : res) {
        const CascadeRun& r = o.run;
        for (const auto& lvl : r.levels)
            for (const auto& h : lvl.sectors)
                for (std::size_t k = 0; k < r.t.size(); ++k)
                    csv.row({o.pt.N, o.pt.beta, r.t[k], double(lvl.j), double(h.l), h.norm[k], h.norm_a[k], h.norm_e[k]});
        for (std::size_t k = 0; k < r.t.size(); ++k)
            vt.row({o.pt.N, o.pt.beta, r.t[k], r.vt_norm[k], r.vt_ratio[k],
                    k < r.regular.size() ? r.regular[k] : std::nan("")});
        for (const auto& a : o.budget.audits) {
            for (std::size_t k = 0; k < o.budget.t.size(); ++k)
                audit.row({o.pt.N, o.pt.beta, double(a.j), double(a.l), o.budget.t[k], a.measured[k], a.bound[k],
                           a.weighted[k]});
            worst = std::max(worst, a.worst);
            holds = holds && a.holds;
        }
    }
    dir.put("cascade.csv", csv.str());
    dir.put("cascade_vt.csv", vt.str());
    dir.put("cascade_audit.csv", audit.str());
    add_invariant(s, "max of measured - integrated bound", worst, 0.0);
    add_check(s, "energy audits hold at all output times", holds, io::fmt(worst));

    io::CsvWriter con({"beta", "j", "l", "N", "ratio"});
    for (double b : c.beta) {
        std::vector<CascadeRun> runs;
        for (const auto& o : res)
            if (o.pt.beta == b) runs.push_back(o.run);
        if (runs.size() < 3 || c.J < 2) continue;
        for (const auto& e : contraction_report(runs)) {
            for (std::size_t k = 0; k < runs.size(); ++k) con.row({b, double(e.j), double(e.l), runs[k].N, e.ratio[k]});
            const std::string q = "psi ratio j " + std::to_string(e.j) + "->" + std::to_string(e.j + 1) + ", l " +
                                  std::to_string(e.l) + ", beta " + io::fmt(b);
            add_exponent(s, q, e.fit, -1.0 + 2.0 * b, e.predicted);
            add_check(s, q + " decreasing in N", e.decreasing, io::fmt(e.fit.slope));
        }
    }
    dir.put("contraction.csv", con.str());
    (void)thresholds;
    return s;
}

// ---------------------------------------------------------------- fock

FockConfig fock_config(const ExperimentConfig& c, double beta, int M) {
    FockConfig f;
    f.grid = ModeGrid{M, c.fock.L, c.fock.laplacian};
    f.v = c.potential;
    f.quadrature = c.fock.quadrature;
    f.beta = beta;
    f.Ns = c.N;
    f.times = c.fock.times;
    f.width = c.fock.width;
    f.dt = c.fock.dt;
    f.tail = c.tol.fock_tail;
    f.max_dim = static_cast<std::size_t>(c.tol.fock_max_dim);
    return f;
}

json run_fock(const ExperimentConfig& c, RunDir& dir) {
    json s = new_section("Fock space");
    io::CsvWriter csv({"N", "t", "fock_error_with_k", "fock_error_k0", "trace_distance", "beta", "M", "mean_number",
                       "truncation_tail"});
    json fits = json::array();
    double t0_worst = 0.0;
    for (double b : c.beta) {
        const FockSweep sw = fock_sweep(fock_config(c, b, c.fock.M));
        std::vector<double> last_k, last_k0, Ns;
        const double tl = c.fock.times.back();
        for (const auto& r : sw.rows) {
            csv.row({r.N, r.t, r.error_k, r.error_k0, r.trace_distance, b, double(c.fock.M), r.mean_number,
                     r.truncation_tail});
            if (r.t == 0.0) t0_worst = std::max(t0_worst, r.error_k);
            if (std::abs(r.t - tl) < 1e-12) {
                Ns.push_back(r.N);
                last_k.push_back(r.error_k);
                last_k0.push_back(r.error_k0);
            }
        }
        if (tl > 0.0) {
            add_exponent(s, "Fock error with k, beta " + io::fmt(b), sw.fit_k, -0.5 + b, std::nan(""));
            add_exponent(s, "trace distance, beta " + io::fmt(b), sw.fit_trace, std::nan(""), std::nan(""));
            bool better = true, decreasing = true;
            for (std::size_t i = 0; i < Ns.size(); ++i) {
                if (Ns[i] >= 8) better = better && last_k[i] < last_k0[i];
                if (i) decreasing = decreasing && last_k[i] < last_k[i - 1];
            }
            add_check(s, "k improves on k = 0 for N >= 8, beta " + io::fmt(b), better, "t = " + io::fmt(tl));
            add_check(s, "error decreasing in N, beta " + io::fmt(b), decreasing, io::fmt(sw.fit_k.slope));
            fits.push_back({{"beta", b},
                            {"t", tl},
                            {"error_slope", sw.fit_k.slope},
                            {"error_ci", {sw.fit_k.ci_low, sw.fit_k.ci_high}},
                            {"error_r2", sw.fit_k.r2},
                            {"trace_slope", sw.fit_trace.slope},
                            {"trace_ci", {sw.fit_trace.ci_low, sw.fit_trace.ci_high}}});
        }
    }
    dir.put("fock.csv", csv.str());
    dir.put("fock_fit.json", fits.dump(2) + "\n");
    add_invariant(s, "max error at t = 0", t0_worst, 1e-6);
    add_check(s, "fock_error(0) < 1e-6", t0_worst < 1e-6, io::fmt(t0_worst));
    if (!c.fock.refine_M.empty()) {
        io::CsvWriter ref({"M", "beta", "N", "t", "fock_error_with_k", "fock_error_k0", "trace_distance"});
        for (int M : c.fock.refine_M)
            for (double b : c.beta) {
                const FockSweep sw = fock_sweep(fock_config(c, b, M));
                for (const auto& r : sw.rows)
                    ref.row({double(M), b, r.N, r.t, r.error_k, r.error_k0, r.trace_distance});
            }
        dir.put("fock_refine.csv", ref.str());
    }
    return s;
}

json threshold_json(const ExperimentConfig& c) {
    json t = json::array();
    for (double b : c.beta)
        for (const auto& r : threshold_table(std::max(3, c.J), b))
            t.push_back({{"beta", b},
                         {"j", r.j},
                         {"bound", std::to_string(r.num) + "/" + std::to_string(r.den)},
                         {"value", r.value},
                         {"dominant", r.dominant},
                         {"admissible", b < r.value}});
    return t;
}

bool needs_gate(RunKind k) { return k != RunKind::Hartree; }

// ---------------------------------------------------------------- report

std::string cell(const json& v, int prec = 4) {
    if (v.is_null()) return "n/a";
    if (v.is_boolean()) return v.get<bool>() ? "pass" : "FAIL";
    if (v.is_number()) {
        std::ostringstream os;
        os.precision(prec);
        os << v.get<double>();
        return os.str();
    }
    return v.get<std::string>();
}

std::string render(const json& manifest, const json& summary) {
    std::ostringstream o;
    o << "# Run report\n\n";
    o << "- kind: " << cell(manifest["kind"]) << "\n";
    o << "- status: " << cell(manifest["status"]) << "\n";
    if (manifest.contains("message") && !manifest["message"].get<std::string>().empty())
        o << "- message: " << cell(manifest["message"]) << "\n";
    o << "- code version: " << cell(manifest["code_version"]) << "\n";
    o << "- seed: " << manifest["seed"].get<unsigned>() << ", threads: " << manifest["threads"].get<int>() << "\n\n";

    o << "## Gates\n\n";
    if (summary["gates"].empty()) o << "none required for this kind\n\n";
    else {
        o << "| gate | value | tolerance | result |\n|---|---|---|---|\n";
        for (const auto& g : summary["gates"])
            o << "| " << cell(g["name"]) << " | " << cell(g["value"]) << " | " << cell(g["tol"]) << " | "
              << cell(g["passed"]) << " |\n";
        o << "\n";
    }

    for (const auto& s : summary["sections"]) {
        o << "## " << cell(s["title"]) << "\n\n";
        if (s["status"] != "ok") {
            o << cell(s["status"]) << "\n\n";
            continue;
        }
        if (!s["invariants"].empty()) {
            o << "### Invariants\n\n| quantity | value | limit |\n|---|---|---|\n";
            for (const auto& v : s["invariants"])
                o << "| " << cell(v["name"]) << " | " << cell(v["value"]) << " | " << cell(v["limit"]) << " |\n";
            o << "\n";
        }
        if (!s["exponents"].empty()) {
            o << "### Exponents\n\n| quantity | slope | 95% CI | R^2 | points | 3D exponent | d-adapted |\n"
                 "|---|---|---|---|---|---|---|\n";
            for (const auto& e : s["exponents"])
                o << "| " << cell(e["quantity"]) << " | " << cell(e["slope"]) << " | [" << cell(e["ci_low"]) << ", "
                  << cell(e["ci_high"]) << "] | " << cell(e["r2"]) << " | " << e["points"].get<int>() << " | "
                  << cell(e["exponent_3d"]) << " | " << cell(e["predicted"]) << " |\n";
            o << "\n";
        }
        if (!s["checks"].empty()) {
            o << "### Checks\n\n| check | result | detail |\n|---|---|---|\n";
            for (const auto& c : s["checks"])
                o << "| " << cell(c["name"]) << " | " << cell(c["passed"]) << " | " << cell(c["detail"]) << " |\n";
            o << "\n";
        }
    }

    o << "## Thresholds\n\n| beta | j | beta bound | value | dominant exponent | beta admissible |\n"
         "|---|---|---|---|---|---|\n";
    for (const auto& t : summary["thresholds"])
        o << "| " << cell(t["beta"]) << " | " << t["j"].get<int>() << " | " << cell(t["bound"]) << " | "
          << cell(t["value"], 6) << " | " << cell(t["dominant"]) << " | " << (t["admissible"].get<bool>() ? "yes" : "no")
          << " |\n";
    return o.str();
}

json manifest_base(const ExperimentConfig& c, const RunOptions& opt, const std::string& started) {
    return json{{"schema_version", ExperimentConfig::kSchema},
                {"code_version", BOSONLAB_VERSION},
                {"kind", kind_name(c.kind)},
                {"status", "running"},
                {"message", ""},
                {"started", started},
                {"finished", nullptr},
                {"threads", opt.threads},
                {"seed", c.seed},
                {"config", json::parse(config_json(c))},
                {"field_layout",
                 "fields/*.bin: little-endian; char[4] 'BLFD', u32 version=1, u32 d, u32 rank, u32 n, f64 L, f64 t, "
                 "then n^(d*rank) complex values as (re, im) f64 pairs, row-major, first axis slowest"},
                {"gates", json::array()},
                {"artifacts", json::array()}};
}

void finish_manifest(json& m, const RunDir& dir) {
    m["finished"] = io::utc_timestamp();
    for (const auto& f : dir.files) {
        const std::string bytes = io::read_file(dir.root / f);
        m["artifacts"].push_back({{"path", f}, {"sha256", io::sha256_hex(bytes)}, {"bytes", bytes.size()}});
    }
    io::write_file(dir.root / "manifest.json", m.dump(2) + "\n");
}

}  // namespace

// ---------------------------------------------------------------- config

ExperimentConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("config: not valid JSON (") + e.what() + ")");
    }
    ExperimentConfig c;
    if (!j.is_object()) bad("<root>", "expected an object");
    if (!j.contains("schema_version")) bad("schema_version", "missing; fix: add \"schema_version\": 1");
    if (!j.contains("kind")) bad("kind", "missing; fix: add one of hartree, pair, forcing, cascade, fock, full-pipeline");
    for_keys(j, "",
             {"schema_version", "kind", "d", "n", "L", "dt", "T", "N", "beta", "J", "sectors", "seed", "record_every",
              "potential", "phi_width", "kick", "fit_from", "hartree", "cascade", "forcing", "fock", "tolerances",
              "output"},
             [&](const std::string& k, const json& v, const std::string& f) {
                 if (k == "schema_version") c.schema_version = as_int(v, f);
                 else if (k == "kind") c.kind = parse_kind(as_string(v, f), f);
                 else if (k == "d") c.d = as_int(v, f);
                 else if (k == "n") c.n = as_int(v, f);
                 else if (k == "L") c.L = as_double(v, f);
                 else if (k == "dt") c.dt = as_double(v, f);
                 else if (k == "T") c.T = as_double(v, f);
                 else if (k == "N") c.N = as_doubles(v, f);
                 else if (k == "beta") c.beta = as_doubles(v, f);
                 else if (k == "J") c.J = as_int(v, f);
                 else if (k == "sectors") c.sectors = as_ints(v, f);
                 else if (k == "seed") {
                     const int s = as_int(v, f);
                     if (s < 0) bad(f, "must be >= 0");
                     c.seed = static_cast<unsigned>(s);
                 } else if (k == "record_every") c.record_every = as_int(v, f);
                 else if (k == "phi_width") c.phi_width = as_double(v, f);
                 else if (k == "kick") c.kick = as_double(v, f);
                 else if (k == "fit_from") c.fit_from = as_double(v, f);
                 else if (k == "output") c.output = as_string(v, f);
                 else if (k == "potential")
                     for_keys(v, f, {"kind", "width"}, [&](const std::string& k2, const json& v2, const std::string& f2) {
                         if (k2 == "width") c.potential.width = as_double(v2, f2);
                         else {
                             const std::string s = as_string(v2, f2);
                             if (s == "gaussian") c.potential.kind = ProfileKind::Gaussian;
                             else if (s == "bump") c.potential.kind = ProfileKind::Bump;
                             else if (s == "zero") c.potential.kind = ProfileKind::Zero;
                             else bad(f2, "'" + s + "' is not one of gaussian, bump, zero");
                         }
                     });
                 else if (k == "hartree")
                     for_keys(v, f, {"limit"}, [&](const std::string&, const json& v2, const std::string& f2) {
                         c.hartree.limit = as_bool(v2, f2);
                     });
                 else if (k == "cascade")
                     for_keys(v, f, {"regular_budget", "max_n_l4"},
                              [&](const std::string& k2, const json& v2, const std::string& f2) {
                                  if (k2 == "regular_budget") c.cascade.regular_budget = as_bool(v2, f2);
                                  else c.cascade.max_n_l4 = as_int(v2, f2);
                              });
                 else if (k == "forcing")
                     for_keys(v, f, {"max_n_l4"}, [&](const std::string&, const json& v2, const std::string& f2) {
                         c.forcing.max_n_l4 = as_int(v2, f2);
                     });
                 else if (k == "fock")
                     for_keys(v, f, {"M", "L", "laplacian", "quadrature", "times", "dt", "width", "refine_M"},
                              [&](const std::string& k2, const json& v2, const std::string& f2) {
                                  if (k2 == "M") c.fock.M = as_int(v2, f2);
                                  else if (k2 == "L") c.fock.L = as_double(v2, f2);
                                  else if (k2 == "times") c.fock.times = as_doubles(v2, f2);
                                  else if (k2 == "dt") c.fock.dt = as_double(v2, f2);
                                  else if (k2 == "width") c.fock.width = as_double(v2, f2);
                                  else if (k2 == "refine_M") c.fock.refine_M = as_ints(v2, f2);
                                  else if (k2 == "laplacian") {
                                      const std::string s = as_string(v2, f2);
                                      if (s == "spectral") c.fock.laplacian = Laplacian::Spectral;
                                      else if (s == "three-point") c.fock.laplacian = Laplacian::ThreePoint;
                                      else bad(f2, "'" + s + "' is not one of spectral, three-point");
                                  } else {
                                      const std::string s = as_string(v2, f2);
                                      if (s == "cell-average") c.fock.quadrature = ModeQuadrature::CellAverage;
                                      else if (s == "point-sample") c.fock.quadrature = ModeQuadrature::PointSample;
                                      else bad(f2, "'" + s + "' is not one of cell-average, point-sample");
                                  }
                              });
                 else if (k == "tolerances")
                     for_keys(v, f, {"residual_abort", "gate", "fock_tail", "fock_max_dim"},
                              [&](const std::string& k2, const json& v2, const std::string& f2) {
                                  const double x = as_double(v2, f2);
                                  if (k2 == "residual_abort") c.tol.residual_abort = x;
                                  else if (k2 == "gate") c.tol.gate = x;
                                  else if (k2 == "fock_tail") c.tol.fock_tail = x;
                                  else c.tol.fock_max_dim = x;
                              });
             });
    return c;
}

std::string config_json(const ExperimentConfig& c) {
    json j{{"schema_version", c.schema_version},
           {"kind", kind_name(c.kind)},
           {"d", c.d},
           {"n", c.n},
           {"L", c.L},
           {"dt", c.dt},
           {"T", c.T},
           {"N", c.N},
           {"beta", c.beta},
           {"J", c.J},
           {"sectors", c.sectors},
           {"seed", c.seed},
           {"record_every", c.record_every},
           {"potential", {{"kind", profile_name(c.potential.kind)}, {"width", c.potential.width}}},
           {"phi_width", c.phi_width},
           {"kick", c.kick},
           {"fit_from", c.fit_from},
           {"hartree", {{"limit", c.hartree.limit}}},
           {"cascade", {{"regular_budget", c.cascade.regular_budget}, {"max_n_l4", c.cascade.max_n_l4}}},
           {"forcing", {{"max_n_l4", c.forcing.max_n_l4}}},
           {"fock",
            {{"M", c.fock.M},
             {"L", c.fock.L},
             {"laplacian", c.fock.laplacian == Laplacian::Spectral ? "spectral" : "three-point"},
             {"quadrature", c.fock.quadrature == ModeQuadrature::CellAverage ? "cell-average" : "point-sample"},
             {"times", c.fock.times},
             {"dt", c.fock.dt},
             {"width", c.fock.width},
             {"refine_M", c.fock.refine_M}}},
           {"tolerances",
            {{"residual_abort", c.tol.residual_abort},
             {"gate", c.tol.gate},
             {"fock_tail", c.tol.fock_tail},
             {"fock_max_dim", c.tol.fock_max_dim}}},
           {"output", c.output}};
    return j.dump(2) + "\n";
}

void validate(const ExperimentConfig& c) {
    auto fx = [](double v) { return io::fmt(v); };
    if (c.schema_version != ExperimentConfig::kSchema)
        bad("schema_version", "unsupported version " + std::to_string(c.schema_version) + "; fix: set it to 1");
    const RunKind k = c.kind;
    const bool full = k == RunKind::Full;
    const bool uses_grid = k != RunKind::Fock;
    if (c.d < 1 || c.d > 3) bad("d", "must be 1, 2 or 3");
    if (c.d != 1 && k != RunKind::Hartree) bad("d", "kind " + kind_name(k) + " is one-dimensional; fix: set d to 1");
    if (c.N.empty()) bad("N", "empty; fix: list at least one particle number");
    for (std::size_t i = 0; i < c.N.size(); ++i)
        if (!(c.N[i] >= 1.0) || !std::isfinite(c.N[i]))
            bad("N[" + std::to_string(i) + "]", "= " + fx(c.N[i]) + " must be >= 1");
    for (std::size_t i = 1; i < c.N.size(); ++i)
        if (!(c.N[i] > c.N[i - 1])) bad("N", "values must increase");
    if (c.beta.empty()) bad("beta", "empty; fix: list at least one exponent");
    for (std::size_t i = 0; i < c.beta.size(); ++i)
        if (!(c.beta[i] >= 0.0 && c.beta[i] <= 1.0))
            bad("beta[" + std::to_string(i) + "]", "= " + fx(c.beta[i]) + " must lie in [0, 1]; fix: use a value in [0, 1]");
    if (!(c.potential.width > 0.0)) bad("potential.width", "must be positive");
    if (!(c.tol.residual_abort > 0.0)) bad("tolerances.residual_abort", "must be positive");
    if (!(c.tol.gate >= 0.0)) bad("tolerances.gate", "must be >= 0");

    if (uses_grid) {
        if (!is_pow2(c.n) || c.n < 4) {
            int p = 4;
            while (p < c.n) p *= 2;
            bad("n", "= " + std::to_string(c.n) + " must be a power of two >= 4; fix: n = " + std::to_string(p));
        }
        const std::size_t cap = c.d == 1 ? 65536 : c.d == 2 ? 2048 : 128;
        if (static_cast<std::size_t>(c.n) > cap) bad("n", "exceeds the memory cap " + std::to_string(cap) + " for d = " + std::to_string(c.d));
        if (!(c.L > 0.0)) bad("L", "must be positive");
        if (!(c.dt > 0.0)) bad("dt", "must be positive");
        if (!(c.T > 0.0)) bad("T", "must be positive");
        const int steps = steps_of(c);
        if (steps < 1 || std::abs(steps * c.dt - c.T) > 1e-9 * c.T)
            bad("T", "= " + fx(c.T) + " is not a multiple of dt; fix: T = " + fx(std::max(1, steps) * c.dt));
        if (c.record_every < 1 || c.record_every > steps)
            bad("record_every", "must lie in 1.." + std::to_string(steps));
        if (!(c.phi_width > 0.0)) bad("phi_width", "must be positive");
        GridSpec g(c.d, c.n, c.L);
        // condensate step: dt for hartree runs, dt/2 for the pair driver
        const bool plain = k == RunKind::Hartree || full;
        const double hdt = plain ? c.dt : 0.5 * c.dt;
        if (hdt * g.max_xi2() > PI) {
            const double lim = PI / g.max_xi2() * (plain ? 1.0 : 2.0);
            bad("dt", "= " + fx(c.dt) + " breaks the stability guard dt*max|xi|^2 <= pi; fix: dt <= " + fx(lim));
        }
        if (c.potential.kind != ProfileKind::Zero)
            for (double N : c.N)
                for (double b : c.beta)
                    if (std::pow(N, b) * g.dx() > 0.5 * c.potential.width) {
                        const int nmin = minimal_resolution(N, b, c.L, c.potential.width);
                        bad("n", "= " + std::to_string(c.n) + " under-resolves v_N at N = " + fx(N) + ", beta = " + fx(b) +
                                     " (N^beta dx <= width/2); fix: n >= " + std::to_string(nmin) + " or L <= " +
                                     fx(0.5 * c.potential.width * c.n / std::pow(N, b)));
                    }
        if (k == RunKind::Hartree || full) {
            const double from = c.fit_from >= 0.0 ? c.fit_from : 0.25 * c.T;
            const double rec = c.record_every * c.dt;
            if (from >= c.T) bad("fit_from", "must be below T");
            if ((c.T - from) / rec < 2.0 - 1e-9)
                bad("record_every", "leaves fewer than 3 samples in the decay fit window; fix: record_every <= " +
                                        std::to_string(std::max(1, static_cast<int>((c.T - from) / (2 * c.dt)))));
            if (steps / c.record_every < 4) bad("record_every", "too coarse for the decay stencil; fix: record_every <= " + std::to_string(std::max(1, steps / 4)));
        }
        if (k == RunKind::Forcing || full) {
            if (c.potential.kind != ProfileKind::Gaussian) bad("potential.kind", "forcing runs use the Gaussian profile; fix: set \"gaussian\"");
            if (c.N.size() < 4) bad("N", "forcing runs need at least 4 values; fix: e.g. [8, 16, 32, 64]");
            for (std::size_t i = 1; i < c.N.size(); ++i)
                if (std::abs(c.N[i] / c.N[i - 1] - c.N[1] / c.N[0]) > 1e-9)
                    bad("N", "forcing runs need a geometric progression; fix: e.g. [8, 16, 32, 64]");
            if (c.n > c.forcing.max_n_l4)
                bad("n", "= " + std::to_string(c.n) + " exceeds forcing.max_n_l4 = " + std::to_string(c.forcing.max_n_l4) +
                             " (4-particle tensors are n^4 entries); fix: n <= " + std::to_string(c.forcing.max_n_l4));
        }
        if (k == RunKind::Cascade || full) {
            if (c.J < 1 || c.J > 6) bad("J", "must lie in 1..6");
            if (c.sectors.empty()) bad("sectors", "empty; fix: e.g. [2, 3]");
            std::set<int> seen;
            for (std::size_t i = 0; i < c.sectors.size(); ++i) {
                const int l = c.sectors[i];
                if (l < 2 || l > 4) bad("sectors[" + std::to_string(i) + "]", "must be 2, 3 or 4");
                if (!seen.insert(l).second) bad("sectors", "duplicate sector " + std::to_string(l));
            }
            if (seen.count(4) && c.n > c.cascade.max_n_l4)
                bad("n", "= " + std::to_string(c.n) + " exceeds cascade.max_n_l4 = " + std::to_string(c.cascade.max_n_l4) +
                             " for sector 4; fix: n <= " + std::to_string(c.cascade.max_n_l4) + " or drop sector 4");
            if (steps < 2) bad("T", "cascade needs at least two pair steps; fix: T >= " + fx(2 * c.dt));
            if (c.record_every > steps / 2) bad("record_every", "must be <= " + std::to_string(steps / 2) + " (cascade steps)");
        }
    }
    if (k == RunKind::Fock || full) {
        const auto& f = c.fock;
        if (f.M < 2 || f.M > 12) bad("fock.M", "must lie in 2..12");
        if (f.laplacian == Laplacian::ThreePoint && f.M < 3) bad("fock.M", "three-point Laplacian needs M >= 3");
        if (!(f.L > 0.0)) bad("fock.L", "must be positive");
        if (!(f.dt > 0.0)) bad("fock.dt", "must be positive");
        if (!(f.width > 0.0)) bad("fock.width", "must be positive");
        if (!(c.tol.fock_tail > 0.0 && c.tol.fock_tail <= 1e-2)) bad("tolerances.fock_tail", "must lie in (0, 1e-2]");
        if (c.N.size() < 3) bad("N", "fock sweeps need at least 3 values");
        if (f.times.empty()) bad("fock.times", "empty; fix: e.g. [0, 1]");
        for (std::size_t i = 0; i < f.times.size(); ++i) {
            const double t = f.times[i];
            const long q = std::lround(t / f.dt);
            if (t < 0.0 || std::abs(q * f.dt - t) > 1e-9 || (i && !(t > f.times[i - 1])))
                bad("fock.times[" + std::to_string(i) + "]", "must be increasing nonnegative multiples of fock.dt");
        }
        std::vector<int> Ms{f.M};
        Ms.insert(Ms.end(), f.refine_M.begin(), f.refine_M.end());
        for (std::size_t q = 0; q < Ms.size(); ++q) {
            const int M = Ms[q];
            const std::string field = q == 0 ? "fock.M" : "fock.refine_M[" + std::to_string(q - 1) + "]";
            if (M < 2 || M > 12) bad(field, "must lie in 2..12");
            for (double N : c.N) {
                const int nmax = coherent_nmax(N, c.tol.fock_tail);
                // sum_{n <= nmax} C(n + M - 1, M - 1) = C(nmax + M, M)
                double dim = 1.0;
                for (int i = 1; i <= M; ++i) dim = dim * (nmax + i) / i;
                if (dim > c.tol.fock_max_dim)
                    bad(field, "= " + std::to_string(M) + " at N = " + fx(N) + " needs Fock dimension " + fx(std::round(dim)) +
                                   " > tolerances.fock_max_dim = " + fx(c.tol.fock_max_dim) +
                                   "; fix: drop that N, lower M or raise tolerances.fock_max_dim");
            }
        }
    }
}

// ---------------------------------------------------------------- run

RunResult run_experiment(ExperimentConfig cfg, const fs::path& out_arg, const RunOptions& opt) {
    if (opt.seed_override) cfg.seed = opt.seed;
    fs::path out = out_arg.empty() ? fs::path(cfg.output) : out_arg;
    if (out.empty()) throw ValidationError("output: no run directory; fix: pass --out DIR or set \"output\"");
    cfg.output = out.string();
    if (opt.threads < 1) throw ValidationError("threads: must be >= 1");
    validate(cfg);
    if (fs::exists(out) && !(fs::is_directory(out) && fs::is_empty(out)))
        throw ValidationError("output: " + out.string() + " exists and is not an empty directory; fix: choose a new --out");

    RunDir dir{out, {}};
    fs::create_directories(out);
    json manifest = manifest_base(cfg, opt, io::utc_timestamp());
    json summary{{"kind", kind_name(cfg.kind)}, {"gates", json::array()}, {"sections", json::array()}, {"thresholds", json::array()}};
    RunResult result;
    result.dir = out;
    dir.put("config.json", config_json(cfg));

    try {
        if (needs_gate(cfg.kind)) {
            const GateReport g = kernel_gate(GridSpec(1, 16, 4.0), 8, cfg.seed);
            result.gates.push_back({"takagi", g.takagi_error < cfg.tol.gate, g.takagi_error, cfg.tol.gate});
            result.gates.push_back({"recover_ucp", g.recover_error < cfg.tol.gate, g.recover_error, cfg.tol.gate});
            for (const auto& r : result.gates) {
                summary["gates"].push_back({{"name", r.name}, {"value", r.value}, {"tol", r.tol}, {"passed", r.passed}});
                result.gates_passed = result.gates_passed && r.passed;
            }
            manifest["gates"] = summary["gates"];
        }
        const RunKind k = cfg.kind;
        auto gated = [&](const std::string& title, auto fn) {
            if (!result.gates_passed) {
                json s = new_section(title);
                s["status"] = "skipped (gate)";
                summary["sections"].push_back(s);
            } else summary["sections"].push_back(fn());
        };
        if (k == RunKind::Hartree || k == RunKind::Full) summary["sections"].push_back(run_hartree(cfg, dir, opt.threads));
        if (k == RunKind::Pair || k == RunKind::Full)
            gated("Pair excitations", [&] { return run_pair(cfg, dir, opt.threads); });
        if (k == RunKind::Forcing || k == RunKind::Full) gated("Forcing sectors", [&] { return run_forcing(cfg, dir); });
        json th;
        if (k == RunKind::Cascade || k == RunKind::Full)
            gated("Cascade", [&] { return run_cascade_section(cfg, dir, opt.threads, th); });
        if (k == RunKind::Fock || k == RunKind::Full) gated("Fock space", [&] { return run_fock(cfg, dir); });
        summary["thresholds"] = threshold_json(cfg);
        manifest["status"] = result.gates_passed ? "complete" : "gate-failed";
    } catch (const std::exception& e) {
        manifest["status"] = "aborted";
        manifest["message"] = e.what();
        dir.put("summary.json", summary.dump(2) + "\n");
        finish_manifest(manifest, dir);
        throw;
    }
    dir.put("summary.json", summary.dump(2) + "\n");
    dir.put("report.md", render(manifest, summary));
    result.artifacts = dir.files;
    finish_manifest(manifest, dir);
    return result;
}

std::string render_report(const fs::path& dir) {
    if (!fs::exists(dir / "manifest.json")) throw ValidationError("report: no manifest.json in " + dir.string());
    json m;
    try {
        m = json::parse(io::read_file(dir / "manifest.json"));
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("report: manifest.json is not valid JSON (") + e.what() + ")");
    }
    if (m["finished"].is_null()) throw ValidationError("report: manifest is incomplete (run did not finish)");
    std::vector<std::string> missing, altered;
    for (const auto& a : m["artifacts"]) {
        const fs::path p = dir / a["path"].get<std::string>();
        if (!fs::exists(p)) missing.push_back(a["path"]);
        else if (io::sha256_hex(io::read_file(p)) != a["sha256"].get<std::string>()) altered.push_back(a["path"]);
    }
    if (!missing.empty() || !altered.empty()) {
        std::string msg = "report:";
        if (!missing.empty()) {
            msg += " missing artifacts:";
            for (const auto& s : missing) msg += " " + s;
            msg += ";";
        }
        if (!altered.empty()) {
            msg += " checksum mismatch:";
            for (const auto& s : altered) msg += " " + s;
        }
        throw ValidationError(msg);
    }
    if (!fs::exists(dir / "summary.json")) throw ValidationError("report: missing artifacts: summary.json");
    return render(m, json::parse(io::read_file(dir / "summary.json")));
}

}  // namespace bl
