#include <cmath>
#include <random>

#include "bosonlab/kernel.hpp"
#include "doctest.h"

using namespace bl;

namespace {

GridSpec grid(int n, double L = 4.0) { return GridSpec(1, n, L); }

// Real unit vector in L^2(dx) and its rank-one kernel e(x) e(y).
Eigen::VectorXd unit_vector(const GridSpec& g) {
    Eigen::VectorXd e(g.n);
    for (int j = 0; j < g.n; ++j) e(j) = std::exp(-g.x(j) * g.x(j)) * (1.0 + 0.3 * g.x(j));
    return e / std::sqrt(e.squaredNorm() * g.dx());
}

Kernel outer(const GridSpec& g, const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
    return Kernel(g, a * b.transpose());
}

Kernel random_generic(const GridSpec& g, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Mat A(g.n, g.n);
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j) A(i, j) = cplx(nd(rng), nd(rng));
    return Kernel(g, A);
}

}  // namespace

TEST_CASE("composition") {
    GridSpec g = grid(8);
    Kernel K = random_generic(g, 1), L = random_generic(g, 2), M = random_generic(g, 3);
    CHECK((compose(DeltaPlus::identity(g), K).K - K.K).norm() == 0.0);
    CHECK((compose(K, DeltaPlus::identity(g)).K - K.K).norm() == 0.0);

    Kernel KL = compose(K, L);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
            cplx acc = 0.0;
            for (int z = 0; z < 8; ++z) acc += K.K(i, z) * L.K(z, j) * g.dx();
            CHECK(std::abs(KL.K(i, j) - acc) < 1e-12);
        }
    Kernel left = compose(compose(K, L), M), right = compose(K, compose(L, M));
    CHECK((left - right).hs() < 1e-12 * left.hs());

    Eigen::VectorXcd a = Eigen::VectorXcd::Random(8), b = Eigen::VectorXcd::Random(8),
                     c = Eigen::VectorXcd::Random(8), d = Eigen::VectorXcd::Random(8);
    cplx bc = (b.array() * c.array()).sum() * g.dx();
    Kernel sep = compose(outer(g, a, b), outer(g, c, d));
    CHECK((sep.K - bc * a * d.transpose()).norm() < 1e-12);

    DeltaPlus A{2.0, K}, B{-0.5, L};
    DeltaPlus AB = compose(A, B);
    CHECK(AB.alpha == cplx(-1.0));
    CHECK((AB.op() - A.op() * B.op()).norm() < 1e-12);

    CHECK_THROWS_AS(compose(K, Kernel(grid(16))), ValidationError);
    CHECK_THROWS_AS(Kernel(GridSpec(2, 8, 4.0)), ValidationError);
}

TEST_CASE("series functional calculus") {
    GridSpec g = grid(16);
    Kernel zero(g, KernelKind::Symmetric);
    CHECK(sh_series(zero).value.hs() == 0.0);
    auto c0 = ch_series(zero).value;
    CHECK(c0.alpha == cplx(1.0));
    CHECK(c0.R.hs() == 0.0);

    const double lam = 1.3;
    Eigen::VectorXd e = unit_vector(g);
    Kernel k(g, (lam * e * e.transpose()).cast<cplx>(), KernelKind::Symmetric);
    Kernel ee(g, (e * e.transpose()).cast<cplx>());
    CHECK((sh_series(k).value - std::sinh(lam) * ee).hs() < 1e-12);
    CHECK((ch_series(k).value.R - (std::cosh(lam) - 1.0) * ee).hs() < 1e-12);

    for (unsigned s = 0; s < 10; ++s) {
        Kernel r = random_symmetric(g, 1.5, 100 + s);
        auto sh = sh_series(r);
        auto ch = ch_series(r);
        auto shm = sh_series(-1.0 * r);
        auto chm = ch_series(-1.0 * r);
        CHECK((sh.value + shm.value).hs() < 1e-13);
        CHECK((ch.value.R - chm.value.R).hs() < 1e-13);
        CHECK(sh.terms > 1);
        sh.value.check();
        ch.value.R.check();
        Eigen::SelfAdjointEigenSolver<Mat> es(ch.value.op());
        CHECK(es.eigenvalues().minCoeff() >= 1.0 - 1e-8);
        CHECK(ch.value.R.hs() <= sh.value.hs());
        // c c = delta + u^ u
        DeltaPlus cc = compose(ch.value, ch.value);
        CHECK(cc.alpha == cplx(1.0));
        CHECK((cc.R - compose(sh.value.conj(), sh.value)).hs() < 1e-8);
    }

    CHECK_THROWS_AS(sh_series(random_generic(g, 5)), ValidationError);
    CHECK_THROWS_AS(sh_series(random_symmetric(g, 30.0, 9), 1e-12, 5), NumericGuard);
}

TEST_CASE("Takagi route against the series") {
    GridSpec g = grid(16);
    ShCh z = takagi_sh_ch(Kernel(g, KernelKind::Symmetric));
    CHECK(z.u.hs() == 0.0);
    CHECK(z.c.R.hs() < 1e-15);

    Mat D = Mat::Zero(16, 16);
    for (int i = 0; i < 16; ++i) D(i, i) = 0.3 * (i - 7);
    ShCh dg = takagi_sh_ch(Kernel(g, D, KernelKind::Symmetric));
    const double dx = g.dx();
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j) {
            cplx eu = i == j ? std::sinh(dx * D(i, i).real()) / dx : 0.0;
            cplx ep = i == j ? (std::cosh(dx * D(i, i).real()) - 1.0) / dx : 0.0;
            CHECK(std::abs(dg.u.K(i, j) - eu) < 1e-12);
            CHECK(std::abs(dg.c.R.K(i, j) - ep) < 1e-12);
        }

    double worst = 0.0;
    for (unsigned s = 0; s < 50; ++s) {
        Kernel k = random_symmetric(g, 0.2 + 0.05 * s, 500 + s);
        ShCh t = takagi_sh_ch(k);
        worst = std::max({worst, (t.u - sh_series(k).value).hs(), (t.c.R - ch_series(k).value.R).hs()});
    }
    CHECK(worst < 1e-8);
    CHECK(worst < 10 * 1e-12 * 100);

    // rank-deficient input exercises the null-space completion
    Eigen::VectorXcd a = Eigen::VectorXcd::Random(16);
    Takagi t = takagi(a * a.transpose());
    CHECK(t.residual < 1e-12);
    CHECK((t.U.adjoint() * t.U - Mat::Identity(16, 16)).norm() < 1e-12);

    GateReport gate = kernel_gate(g, 6, 3);
    CHECK(gate.passed);
    CHECK(gate.conjugation_alt > 1e-3);
}

TEST_CASE("recovery of u, c, p") {
    GridSpec g = grid(16);
    Kernel zero(g, KernelKind::Symmetric);
    Ucp r0 = recover_ucp(zero, zero);
    CHECK(r0.u.hs() == 0.0);
    CHECK(r0.p.hs() < 1e-15);
    CHECK(bogoliubov_residual(zero, zero) == 0.0);

    const double lam = 0.9;
    Eigen::VectorXd e = unit_vector(g);
    Kernel ee(g, (e * e.transpose()).cast<cplx>(), KernelKind::Symmetric);
    Ucp r1 = recover_ucp(std::sinh(2 * lam) * ee, (std::cosh(2 * lam) - 1.0) * ee);
    CHECK((r1.u - std::sinh(lam) * ee).hs() < 1e-8);
    CHECK((r1.p - (std::cosh(lam) - 1.0) * ee).hs() < 1e-8);

    for (unsigned s = 0; s < 10; ++s) {
        Kernel k = random_symmetric(g, 0.4 + 0.2 * s, 900 + s);
        Kernel s2 = sh_series(2.0 * k).value;
        Kernel p2 = ch_series(2.0 * k).value.R;
        CHECK(bogoliubov_residual(s2, p2) < 1e-8);
        Ucp r = recover_ucp(s2, p2);
        CHECK((r.u - sh_series(k).value).hs() < 1e-8);
        CHECK((r.p - ch_series(k).value.R).hs() < 1e-8);
        CHECK(r.consistency < 1e-8);
    }

    Kernel k = random_symmetric(g, 1.0, 77);
    Kernel s2 = sh_series(2.0 * k).value;
    Kernel p2 = ch_series(2.0 * k).value.R + 0.1 * ee;
    CHECK(bogoliubov_residual(s2, p2) > 0.1);

    CHECK_THROWS_AS(recover_ucp(zero, -3.0 * ee), NumericGuard);
}

TEST_CASE("W of c-bar") {
    GridSpec g = grid(16);
    Kernel k = random_symmetric(g, 0.8, 11);
    ShCh uc = takagi_sh_ch(k);
    CHECK(w_of_cbar(uc.u, uc.c, Kernel(g)).hs() == 0.0);

    // degenerate divided difference on a one-dimensional subspace
    Eigen::VectorXd e = unit_vector(g);
    Kernel ee(g, (e * e.transpose()).cast<cplx>(), KernelKind::Symmetric);
    const double sv = 0.7;
    Kernel u = sv * ee;
    DeltaPlus c{1.0, (std::sqrt(1 + sv * sv) - 1.0) * ee};
    Kernel m = cplx(0.4, 0.9) * ee;
    Kernel wq = w_of_q(u, c, m);
    CHECK(wq.hs() > 0.0);
    Kernel wc = w_of_cbar(u, c, m);
    CHECK((wc - (1.0 / (2.0 * std::sqrt(1 + sv * sv))) * wq).hs() < 1e-12);

    // contour quadrature oracle
    for (int n : {8, 16}) {
        GridSpec gn = grid(n);
        for (unsigned s = 0; s < 3; ++s) {
            ShCh t = takagi_sh_ch(random_symmetric(gn, 0.5 + 0.5 * s, 40 + s));
            Kernel mm = random_symmetric(gn, 1.0, 60 + s);
            const Mat Wq = w_of_q(t.u, t.c, mm).op();
            const Mat q = t.u.op() * t.u.op().conjugate();
            Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (q + q.adjoint()));
            const double lmax = es.eigenvalues().maxCoeff();
            const cplx centre = 0.5 * lmax;
            const double radius = 0.5 * lmax + 0.5;
            const int P = 256;
            Mat acc = Mat::Zero(n, n);
            for (int j = 0; j < P; ++j) {
                const cplx w = std::exp(I * (2 * PI * j / P));
                const cplx z = centre + radius * w;
                Mat R = (q - z * Mat::Identity(n, n)).inverse();
                acc += R * Wq * R * std::sqrt(1.0 + z) * (I * radius * w) * (2 * PI / P);
            }
            acc /= 2 * PI * I;
            CHECK((w_of_cbar(t.u, t.c, mm).op() - acc).norm() < 1e-6);
        }
    }
}
