#include <doctest.h>

#include <cmath>

#include "bosonlab/cascade.hpp"

using namespace bl;

namespace {

struct Setup {
    Interaction iv;
    Trajectory path;
    PairTrajectory pairs;
};

Setup setup(int n, double L, double N, double beta, double pdt, int psteps, double width = 0.4,
            ProfileKind kind = ProfileKind::Gaussian) {
    GridSpec g(1, n, L);
    Setup s;
    s.iv = make_interaction(Profile{kind, 1.0}, N, beta, g);
    s.path = pair_driver(gaussian(g, width), s.iv, pdt, psteps);
    s.pairs = evolve_pair(PairState::zero(g), s.path, s.iv, pdt, psteps);
    return s;
}

SectorField random_sector(int l, int n, double dx, unsigned seed) {
    SectorField f(l, n, dx);
    std::uint64_t x = 0x9E3779B97F4A7C15ull ^ seed;
    auto next = [&] {
        x ^= x << 13, x ^= x >> 7, x ^= x << 17;
        return static_cast<double>(x % 1000003) / 1000003.0 - 0.5;
    };
    for (auto& v : f.data) v = cplx(next(), next());
    return f;
}

double max_diff(const SectorField& a, const SectorField& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

double max_abs(const SectorField& a) {
    double m = 0.0;
    for (const auto& v : a.data) m = std::max(m, std::abs(v));
    return m;
}

Mat random_hermitian(int n, double scale, unsigned seed) {
    Mat A = random_symmetric(GridSpec(1, n, 1.0), 1.0, seed).K;
    Mat H = A + A.adjoint();
    return scale * H / H.norm();
}

}  // namespace

TEST_CASE("V~ assembly") {
    GridSpec g(1, 16, 3.0);
    Interaction iv = make_interaction(Profile{}, 8, 0.4, g);
    Field zero(g, 1);
    Kernel u0(g, KernelKind::Symmetric);
    VTilde v0 = build_Vtilde(zero, u0, DeltaPlus::identity(g), build_m(zero, iv), iv);
    CHECK(v0.op.norm() == 0.0);
    CHECK(v0.norm == 0.0);

    // m = 0 with u != 0: correction vanishes since W(q) = 0
    Kernel k = random_symmetric(g, 0.3, 5);
    ShCh sc = takagi_sh_ch(k);
    VTilde vm = build_Vtilde(zero, sc.u, sc.c, build_m(zero, iv), iv);
    CHECK(vm.correction.norm() < 1e-14);

    // along a pair run: hermitian, power iteration matches the exact norm
    Setup s = setup(16, 3.0, 8, 0.4, 0.01, 20);
    const PairState& st = s.pairs.states.back();
    Ucp r = recover_ucp(st.s2, st.p2);
    const Field& phi = s.path.phi.back();
    VTilde vt = build_Vtilde(phi, r.u, r.c, build_m(phi, s.iv), s.iv);
    CHECK(vt.correction.norm() > 0.0);
    CHECK((vt.op - vt.op.adjoint()).norm() < 1e-10 * vt.op.norm());
    CHECK((vt.correction - vt.correction.adjoint()).norm() < 1e-10 * vt.correction.norm());
    CHECK(vt.norm_power == doctest::Approx(vt.norm).epsilon(1e-6));
    CHECK(vt.ratio() > 0.0);
    MESSAGE("||V~|| = " << vt.norm << ", ratio to (1+||u||^4)||phi||_inf^2 = " << vt.ratio());
}

TEST_CASE("H~ action") {
    for (double N : {4.0, 16.0, 64.0}) {
        // box wide enough that periodic images of v_N sit below rounding
        GridSpec g(1, 128, 10.0);
        Profile v{};
        Interaction iv = make_interaction(v, N, 0.4, g);
        const Eigen::MatrixXd V = pair_matrix(iv);
        SectorField ones(2, 128, g.dx());
        for (auto& x : ones.data) x = 1.0;
        const double sup2 = max_abs(apply_Htilde(ones, V, N));
        const double exact = std::pow(N, 0.4 - 1.0) * v.sup(1);
        CHECK(std::abs(sup2 - exact) <= 1e-12 * exact);

        SectorField f = random_sector(2, 128, g.dx(), 1), h = random_sector(2, 128, g.dx(), 2);
        SectorField Hf = apply_Htilde(f, V, N), Hh = apply_Htilde(h, V, N);
        cplx a = 0.0, b = 0.0;
        for (std::size_t i = 0; i < f.data.size(); ++i) {
            a += std::conj(f.data[i]) * Hh.data[i];
            b += std::conj(Hf.data[i]) * h.data[i];
        }
        CHECK(std::abs(a - b) <= 1e-12 * std::abs(a));

        GridSpec g4(1, 8, 1.5);
        Interaction iv4 = make_interaction(v, N < 16 ? N : 4.0, 0.4, g4);
        const Eigen::MatrixXd V4 = pair_matrix(iv4);
        SectorField o2(2, 8, g4.dx()), o4(4, 8, g4.dx());
        for (auto& x : o2.data) x = 1.0;
        for (auto& x : o4.data) x = 1.0;
        CHECK(max_abs(apply_Htilde(o4, V4, iv4.N)) <= 6.0 * max_abs(apply_Htilde(o2, V4, iv4.N)) * (1 + 1e-14));
    }
    GridSpec g(1, 16, 3.0);
    Interaction z = make_interaction(Profile{ProfileKind::Zero, 1.0}, 8, 0.4, g);
    CHECK(max_abs(apply_Htilde(random_sector(3, 16, g.dx(), 4), pair_matrix(z), 8)) == 0.0);
    CHECK_THROWS_AS(apply_Htilde(SectorField(1, 16, g.dx()), pair_matrix(z), 8), ValidationError);
}

TEST_CASE("sector solver") {
    const int n = 16, l = 2, steps = 40;
    const double L = 2 * PI, dt = 0.01;
    const double dx = L / n;
    std::vector<Mat> V0(2 * steps + 1, Mat::Zero(n, n));

    SUBCASE("zero forcing") {
        std::vector<SectorField> F(2 * steps + 1, SectorField(l, n, dx));
        SectorSolution s = solve_sector(l, F, V0, L, dt, steps);
        CHECK(max_abs(s.psi.back()) == 0.0);
    }
    SUBCASE("single Fourier mode, V~ = 0") {
        // F = exp(i (x1 + 2 x2)): psi(t) = i dt F e^{-i w dt/2} sum_k e^{-i w k dt}
        SectorField F(l, n, dx);
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) F.data[a * n + b] = std::exp(I * (1.0 * a * dx + 2.0 * b * dx));
        std::vector<SectorField> Fs(2 * steps + 1, F);
        SectorSolution s = solve_sector(l, Fs, V0, L, dt, steps);
        const double w = 1.0 + 4.0;
        cplx geo = 0.0;
        for (int k = 0; k < steps; ++k) geo += std::exp(-I * w * (k * dt));
        const cplx amp = I * dt * std::exp(-I * w * 0.5 * dt) * geo;
        double err = 0.0;
        for (std::size_t i = 0; i < F.data.size(); ++i) err = std::max(err, std::abs(s.psi.back().data[i] - amp * F.data[i]));
        CHECK(err < 1e-6);
        // continuum Duhamel integral, midpoint-rule accurate
        const double T = steps * dt;
        const cplx cont = (1.0 - std::exp(-I * w * T)) / w;
        CHECK(std::abs(amp - cont) < 1e-4);
        CHECK(s.norm_e.back() == 0.0);
    }
    SUBCASE("linearity") {
        std::vector<Mat> V(2 * steps + 1);
        for (int i = 0; i <= 2 * steps; ++i) V[i] = random_hermitian(n, 5.0 * (1 + 0.01 * i), 7);
        std::vector<SectorField> A, B, C;
        const SectorField fa = random_sector(l, n, dx, 11), fb = random_sector(l, n, dx, 12);
        for (int i = 0; i <= 2 * steps; ++i) {
            const double c = std::cos(0.5 * i * dt);
            SectorField a = fa, b = fb;
            a *= c;
            b *= 1.0 - c;
            SectorField comb = a;
            comb *= 2.0;
            for (std::size_t q = 0; q < comb.data.size(); ++q) comb.data[q] -= 3.0 * b.data[q];
            A.push_back(a), B.push_back(b), C.push_back(comb);
        }
        SectorSolution sa = solve_sector(l, A, V, L, dt, steps), sb = solve_sector(l, B, V, L, dt, steps),
                       sc = solve_sector(l, C, V, L, dt, steps);
        SectorField lin = sa.psi.back();
        lin *= 2.0;
        for (std::size_t q = 0; q < lin.data.size(); ++q) lin.data[q] -= 3.0 * sb.psi.back().data[q];
        CHECK(max_diff(lin, sc.psi.back()) < 1e-10 * max_abs(sc.psi.back()));
    }
    SUBCASE("self-convergence order") {
        // smooth time-dependent V~ and forcing
        const Mat H0 = random_hermitian(n, 4.0, 21), H1 = random_hermitian(n, 4.0, 22);
        SectorField g0(l, n, dx);
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) {
                const double x = -0.5 * L + a * dx, y = -0.5 * L + b * dx;
                g0.data[a * n + b] = std::exp(-(x * x + y * y)) * std::exp(I * x);
            }
        const double T = 0.4;
        auto run = [&](int st) {
            const double h = T / st;
            std::vector<SectorField> F;
            std::vector<Mat> V;
            for (int i = 0; i <= 2 * st; ++i) {
                const double t = 0.5 * i * h;
                SectorField f = g0;
                f *= std::cos(3.0 * t);
                F.push_back(f);
                V.push_back(H0 + std::sin(2.0 * t) * H1);
            }
            return solve_sector(l, F, V, L, h, st).psi.back();
        };
        SectorField r1 = run(10), r2 = run(20), r3 = run(40);
        const double e1 = max_diff(r1, r2), e2 = max_diff(r2, r3);
        const double order = std::log2(e1 / e2);
        MESSAGE("sector solver self-convergence order " << order);
        CHECK(order >= 1.9);
    }
    CHECK_THROWS_AS(solve_sector(1, {}, {}, L, dt, steps), ValidationError);
}

TEST_CASE("cascade structure") {
    Setup s = setup(16, 3.0, 8, 0.4, 0.01, 40);
    CascadeConfig cfg;
    cfg.J = 2;
    cfg.sectors = {2, 3, 4};
    cfg.regular_budget = true;
    CascadeRun run = run_cascade(s.pairs, s.path, s.iv, cfg);
    REQUIRE(run.levels.size() == 2);
    CHECK(run.t.size() == 21);
    CHECK(run.dt == doctest::Approx(0.02));

    // level 1 is the plain sector solve
    const int steps = 20;
    std::vector<Mat> vts;
    std::vector<std::vector<SectorField>> Fs(3);
    for (int i = 0; i <= 2 * steps; ++i) {
        const PairState& ps = s.pairs.states[i];
        const Field& phi = s.path.phi[2 * i];
        Ucp ucp = recover_ucp(ps.s2, ps.p2);
        vts.push_back(build_Vtilde(phi, ucp.u, ucp.c, build_m(phi, s.iv), s.iv).op);
        ForcingInputs in = forcing_inputs(ucp.u, ucp.p, phi, s.iv);
        for (int q = 0; q < 3; ++q) Fs[q].push_back(singular_forcing(q + 2, in));
    }
    for (int q = 0; q < 3; ++q) {
        SectorSolution sol = solve_sector(q + 2, Fs[q], vts, 3.0, run.dt, steps);
        CHECK(max_diff(sol.psi.back(), run.levels[0].sector(q + 2).psi) == 0.0);
        CHECK(sol.norm == run.levels[0].sector(q + 2).norm);
    }

    // permutation symmetry of every level
    for (const auto& lvl : run.levels)
        for (const auto& h : lvl.sectors) {
            INFO("j = " << lvl.j << " l = " << h.l);
            CHECK(h.norm.back() > 0.0);
            CHECK(max_diff(h.psi, symmetrize(h.psi)) < 1e-8 * max_abs(h.psi));
        }

    EnergyBudget b = energy_budget(run);
    for (const auto& a : b.audits) {
        INFO("j = " << a.j << " l = " << a.l << " worst " << a.worst);
        CHECK(a.holds);
    }
    REQUIRE(b.regular_integral.size() == run.t.size());
    CHECK(b.regular_integral.back() > 0.0);

    // v = 0: everything vanishes
    Setup z = setup(16, 3.0, 8, 0.4, 0.01, 8, 0.4, ProfileKind::Zero);
    cfg.sectors = {2, 3};
    CascadeRun rz = run_cascade(z.pairs, z.path, z.iv, cfg);
    for (const auto& lvl : rz.levels)
        for (const auto& h : lvl.sectors) CHECK(max_abs(h.psi) == 0.0);
    EnergyBudget bz = energy_budget(rz);
    for (const auto& a : bz.audits) CHECK(a.bound.back() == 0.0);
    CHECK(bz.regular_integral.back() == 0.0);

    CascadeConfig bad;
    bad.J = 7;
    CHECK_THROWS_AS(run_cascade(s.pairs, s.path, s.iv, bad), ValidationError);
    Setup big = setup(32, 3.0, 8, 0.4, 0.005, 4);
    bad.J = 1;
    bad.sectors = {4};
    CHECK_THROWS_AS(run_cascade(big.pairs, big.path, big.iv, bad), ValidationError);
}

TEST_CASE("thresholds") {
    auto rows = threshold_table(3, 0.4);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].num == 3);
    CHECK(rows[0].den == 7);
    CHECK(rows[1].num == 5);
    CHECK(rows[1].den == 11);
    CHECK(rows[2].num == 7);
    CHECK(rows[2].den == 15);
    CHECK(rows[0].value == 3.0 / 7.0);
    CHECK(rows[0].dominant == doctest::Approx(std::min(-0.1, 0.5 * (-3 + 2.8))));
    CHECK(rows[2].dominant == doctest::Approx(std::min(-0.1, -0.1 + 2 * (-0.2))));
}

TEST_CASE("contraction across N") {
    std::vector<CascadeRun> runs;
    for (double N : {8.0, 16.0, 32.0}) {
        Setup s = setup(16, 2.0, N, 0.4, 0.008, 40, 0.3);
        CascadeConfig cfg;
        cfg.J = 2;
        runs.push_back(run_cascade(s.pairs, s.path, s.iv, cfg));
        // ||psi_1^(3)|| stays bounded along the run
        const auto& h = runs.back().levels[0].sector(3);
        MESSAGE("N = " << N << " max_t ||psi_1^(3)|| = " << *std::max_element(h.norm.begin(), h.norm.end()));
    }
    for (const auto& e : contraction_report(runs)) {
        MESSAGE("j = " << e.j << " l = " << e.l << " slope " << e.fit.slope << " [" << e.fit.ci_low << ", "
                       << e.fit.ci_high << "] predicted " << e.predicted);
        CHECK(e.decreasing);
        CHECK(e.fit.slope < 0.0);
    }
}
