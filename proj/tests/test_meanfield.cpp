#include <cmath>

#include "bosonlab/meanfield.hpp"
#include "doctest.h"

using namespace bl;

TEST_CASE("interaction scaling") {
    GridSpec g(1, 256, 24.0);
    Profile v;
    Interaction base = make_interaction(v, 1.0, 0.0, g);
    Interaction b0 = make_interaction(v, 37.0, 0.0, g);
    CHECK(l2_norm(b0.vN - base.vN) == 0.0);

    for (double N : {2.0, 8.0, 16.0, 64.0})
        for (double beta : {0.1, 0.25, 0.4}) {
            Interaction iv = make_interaction(v, N, beta, g);
            CHECK(std::abs(iv.l1() - base.l1()) < 1e-8);
            CHECK(iv.sup() == doctest::Approx(std::pow(N, beta) * v.sup(1)).epsilon(1e-12));
        }
    Interaction i16 = make_interaction(v, 16.0, 0.5, g);
    double ratio = std::pow(l2_norm(i16.vN) / l2_norm(base.vN), 2);
    CHECK(ratio == doctest::Approx(4.0).epsilon(0.02));

    // resolution guard names the minimal n
    try {
        make_interaction(v, 64.0, 0.4, GridSpec(1, 64, 24.0));
        FAIL("guard not raised");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("minimal n = 256") != std::string::npos);
    }
    CHECK_THROWS_AS(make_interaction(v, 0.5, 0.1, g), ValidationError);
    CHECK_THROWS_AS(make_interaction(v, 4.0, 1.5, g), ValidationError);

    // compact bump option: nonnegative, symmetric, unit mass by quadrature at fine resolution
    Profile bump{ProfileKind::Bump, 1.0};
    Interaction ib = make_interaction(bump, 1.0, 0.0, GridSpec(1, 4096, 8.0));
    CHECK(ib.l1() == doctest::Approx(1.0).epsilon(1e-6));
    for (int j = 1; j < 2048; ++j) CHECK(ib.vN.data[2048 + j].real() == doctest::Approx(ib.vN.data[2048 - j].real()));
}

TEST_CASE("free Gaussian spreading") {
    GridSpec g(1, 2048, 400.0);
    Interaction zero = make_interaction(Profile{ProfileKind::Zero, 1.0}, 1.0, 0.0, g);
    Field phi0 = gaussian(g);
    Trajectory tr = evolve_hartree(phi0, zero, 0.01, 1000, {Flavor::Hartree, 50});
    for (std::size_t s = 0; s < tr.t.size(); ++s) {
        double t = tr.t[s];
        double exact = std::pow(PI, -0.25) * std::pow(1 + 4 * t * t, -0.25);
        CHECK(linf_norm(tr.phi[s]) == doctest::Approx(exact).epsilon(0.01));
    }
}

TEST_CASE("single-mode phase rotation") {
    GridSpec g(1, 32, 2 * PI);
    Interaction zero = make_interaction(Profile{ProfileKind::Zero, 1.0}, 1.0, 0.0, g);
    Field phi0 = sample(g, [&](auto x) { return std::exp(I * 3.0 * x[0]) / std::sqrt(2 * PI); });
    Trajectory tr = evolve_hartree(phi0, zero, 0.001, 700, {Flavor::Hartree, 700});
    Field expect = std::exp(-I * 9.0 * 0.7) * phi0;
    CHECK(l2_norm(tr.phi.back() - expect) < 1e-12);
}

TEST_CASE("mass, energy and second-order accuracy") {
    GridSpec g(1, 256, 24.0);
    Interaction iv = make_interaction(Profile{}, 16.0, 0.4, g);
    Field phi0 = gaussian(g, 1.0, 0.5);
    const double dt = 0.002;
    Trajectory tr = evolve_hartree(phi0, iv, dt, 1000, {Flavor::Hartree, 100});
    double m0 = mass(phi0), e0 = energy(phi0, iv);
    double worst = 0.0;
    for (auto& f : tr.phi) worst = std::max(worst, std::abs(mass(f) - m0));
    CHECK(worst < 1e-8);
    double T = 1000 * dt;
    CHECK(std::abs(energy(tr.phi.back(), iv) - e0) / std::abs(e0) / T < 1e-6);

    auto endpoint = [&](double h) {
        int steps = static_cast<int>(std::lround(0.5 / h));
        return evolve_hartree(phi0, iv, h, steps, {Flavor::Hartree, steps}).phi.back();
    };
    Field a = endpoint(0.0025), b = endpoint(0.00125), c = endpoint(0.000625);
    double e1 = l2_norm(a - b), e2 = l2_norm(b - c);
    CHECK(e1 / e2 >= 3.5);

    CHECK_THROWS_AS(evolve_hartree(phi0, iv, 1.0, 1), ValidationError);
}

TEST_CASE("decay report") {
    GridSpec g(1, 1024, 200.0);
    Interaction zero = make_interaction(Profile{ProfileKind::Zero, 1.0}, 1.0, 0.0, g);
    Field phi0 = gaussian(g);
    Trajectory tr = evolve_hartree(phi0, zero, 0.01, 1000, {Flavor::Hartree, 10});
    DecayReport r0 = decay_report(tr, 0, 3.0, 10.0);
    CHECK(r0.rows.front().t == 0.0);
    CHECK(r0.rows.front().linf == linf_norm(phi0));
    CHECK(r0.rows.front().l3 == lp_norm(phi0, 3.0));
    CHECK(r0.fit_linf.slope == doctest::Approx(-0.5).epsilon(0.1));

    // first derivative from the stencil against the equation's right side
    DecayReport r1 = decay_report(tr, 1, 1.0, 5.0);
    const std::size_t s = 40;
    Field rhs = hartree_rhs(tr.phi[s], zero);
    double lhs = 0.0;
    for (auto& row : r1.rows)
        if (std::abs(row.t - tr.t[s]) < 1e-12) lhs = row.linf;
    CHECK(lhs == doctest::Approx(linf_norm(rhs)).epsilon(1e-4));
    CHECK_THROWS_AS(decay_report(tr, 0, 5.0, 50.0), ValidationError);
}

TEST_CASE("comparison with the limit equation") {
    GridSpec g(1, 256, 24.0);
    Field phi0 = gaussian(g);
    Interaction iv = make_interaction(Profile{}, 8.0, 0.4, g);
    Trajectory a = evolve_hartree(phi0, iv, 0.0025, 400, {Flavor::Hartree, 100});
    auto same = compare_to_limit(a, a);
    for (double d : same.distance) CHECK(d == 0.0);
    Trajectory lim = evolve_hartree(phi0, iv, 0.0025, 400, {Flavor::Limit, 100});
    auto c = compare_to_limit(a, lim);
    CHECK(c.distance.front() == 0.0);
    CHECK(c.distance.back() > 0.0);
    Trajectory shorter = evolve_hartree(phi0, iv, 0.0025, 200, {Flavor::Hartree, 100});
    CHECK_THROWS_AS(compare_to_limit(a, shorter), ValidationError);
}

TEST_CASE("heuristic ansatz check") {
    GridSpec g(1, 256, 24.0);
    Field zero_phi(g, 1);
    Trajectory tz;
    tz.t = {0.0};
    tz.phi = {zero_phi};
    Interaction iv = make_interaction(Profile{}, 8.0, 0.4, g);
    CHECK(heuristic_ansatz_check(iv, tz).distance[0] == 0.0);
    CHECK_THROWS_AS(heuristic_ansatz_check(iv, tz, false), ValidationError);

    Trajectory t0;
    t0.t = {0.0};
    t0.phi = {gaussian(g)};
    double prev = 1e300;
    for (double N : {8.0, 16.0, 32.0, 64.0}) {
        auto r = heuristic_ansatz_check(make_interaction(Profile{}, N, 0.4, g), t0);
        CHECK(r.distance[0] < prev);
        prev = r.distance[0];
    }

    // narrow kernel against a wide condensate
    GridSpec gw(1, 128, 64.0);
    Trajectory tw;
    tw.t = {0.0};
    tw.phi = {gaussian(gw, 6.0)};
    auto rw = heuristic_ansatz_check(make_interaction(Profile{}, 1.0, 0.0, gw), tw);
    CHECK(rw.relative[0] < 0.05);
}
