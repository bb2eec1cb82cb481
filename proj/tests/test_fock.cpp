#include <cmath>
#include <random>

#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include "bosonlab/fock.hpp"
#include "doctest.h"

using namespace bl;

namespace {

// Flat coordinates of a FockVector: sectors concatenated in order.
Eigen::VectorXcd flatten(const FockVector& v) {
    Eigen::Index n = 0;
    for (const auto& b : v.blocks) n += b.size();
    Eigen::VectorXcd f(n);
    n = 0;
    for (const auto& b : v.blocks) {
        f.segment(n, b.size()) = b;
        n += b.size();
    }
    return f;
}

FockVector unflatten(const FockSpace& fs, const Eigen::VectorXcd& f) {
    FockVector v = FockVector::zeros(fs);
    Eigen::Index n = 0;
    for (auto& b : v.blocks) {
        b = f.segment(n, b.size());
        n += b.size();
    }
    return v;
}

// Dense matrix of a linear map on the truncated space.
template <class Op>
Mat dense(const FockSpace& fs, Op op) {
    const Eigen::Index D = static_cast<Eigen::Index>(fs.total_dim());
    Mat A(D, D);
    for (Eigen::Index c = 0; c < D; ++c) {
        Eigen::VectorXcd e = Eigen::VectorXcd::Zero(D);
        e(c) = 1.0;
        A.col(c) = flatten(op(unflatten(fs, e)));
    }
    return A;
}

FockVector random_state(const FockSpace& fs, int top, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    FockVector v = FockVector::zeros(fs);
    for (int n = 0; n <= top; ++n)
        for (Eigen::Index r = 0; r < v.blocks[n].size(); ++r) v.blocks[n](r) = cplx(nd(rng), nd(rng));
    v *= 1.0 / v.norm();
    return v;
}

Eigen::VectorXcd unit(int M, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Eigen::VectorXcd f(M);
    for (int i = 0; i < M; ++i) f(i) = cplx(nd(rng), nd(rng));
    return f / f.norm();
}

Mat random_symmetric(int M, double scale, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Mat A(M, M);
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < M; ++j) A(i, j) = cplx(nd(rng), nd(rng));
    A = 0.5 * (A + A.transpose()).eval();
    return A * (scale / A.norm());
}

double poisson(double N, int n) { return std::exp(-N + n * std::log(N) - std::lgamma(n + 1.0)); }

}  // namespace

TEST_CASE("basis") {
    FockSpace fs(4, 7);
    std::size_t total = 0;
    for (int n = 0; n <= 7; ++n) {
        CHECK(fs.dim(n) == static_cast<std::size_t>(std::lround(fs.binom(n + 3, n))));
        total += fs.dim(n);
        for (std::size_t r = 0; r < fs.dim(n); ++r) {
            const unsigned char* o = fs.occ(n, r);
            int s = 0;
            for (int i = 0; i < 4; ++i) s += o[i];
            CHECK(s == n);
            CHECK(fs.rank(n, o) == r);
        }
    }
    CHECK(fs.total_dim() == total);
    CHECK(FockSpace(5, 6).dim(6) == 210);
    CHECK_THROWS_AS(FockSpace(5, 43, 200000), ValidationError);
    CHECK_THROWS_AS(FockSpace(13, 2), ValidationError);
}

TEST_CASE("canonical commutation below the cutoff") {
    FockSpace fs(3, 6);
    const FockVector psi = random_state(fs, 5, 11);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            Eigen::VectorXcd ej = Eigen::VectorXcd::Zero(3);
            ej(j) = 1.0;
            FockVector lhs = annihilate_mode(fs, i, apply_create(fs, ej, psi));
            FockVector rhs = apply_create(fs, ej, annihilate_mode(fs, i, psi));
            rhs *= -1.0;
            lhs += rhs;
            if (i == j) {
                FockVector m = psi;
                m *= -1.0;
                lhs += m;
            }
            CHECK(lhs.norm() < 1e-13);
        }
}

TEST_CASE("Hamiltonian") {
    ModeGrid mg{5, 6.0};
    const Eigen::MatrixXd lap = mg.laplacian();
    const double N = 8.0;
    const Eigen::MatrixXd V = mode_interaction(mg, Profile{}, N, 0.4);
    FockSpace fs(5, 6);
    FockHamiltonian H(fs, lap, V, N);
    CHECK(H.hermiticity_error() < 1e-12);
    CHECK((lap - lap.transpose()).norm() < 1e-12);

    SUBCASE("number conserving") {
        FockVector psi = FockVector::zeros(fs);
        psi.blocks[3] = random_state(fs, 6, 3).blocks[3];
        FockVector h = H.apply(psi);
        for (int n = 0; n <= 6; ++n)
            if (n != 3) CHECK(h.blocks[n].norm() == 0.0);
        CHECK(h.blocks[3].norm() > 0.0);
    }

    SUBCASE("free single particle has the Laplacian spectrum") {
        const Eigen::MatrixXd V0 = mode_interaction(mg, Profile{ProfileKind::Zero}, N, 0.4);
        FockHamiltonian H0(fs, lap, V0, N);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> a(Eigen::MatrixXd(H0.block(1))), b(lap);
        CHECK((a.eigenvalues() - b.eigenvalues()).norm() < 1e-10);
        CHECK(H0.block(0).norm() == 0.0);
    }

    SUBCASE("two-particle block against the first-quantized matrix") {
        const int M = 5;
        Eigen::MatrixXd H2 = Eigen::kroneckerProduct(lap, Eigen::MatrixXd::Identity(M, M)) +
                             Eigen::kroneckerProduct(Eigen::MatrixXd::Identity(M, M), lap);
        for (int i = 0; i < M; ++i)
            for (int j = 0; j < M; ++j) H2(i * M + j, i * M + j) -= V(i, j) / N;
        // symmetric basis vectors in occupation order
        Eigen::MatrixXd P = Eigen::MatrixXd::Zero(M * M, fs.dim(2));
        for (std::size_t r = 0; r < fs.dim(2); ++r) {
            const unsigned char* o = fs.occ(2, r);
            std::vector<int> idx;
            for (int i = 0; i < M; ++i)
                for (int k = 0; k < o[i]; ++k) idx.push_back(i);
            if (idx[0] == idx[1]) P(idx[0] * M + idx[0], r) = 1.0;
            else {
                P(idx[0] * M + idx[1], r) = std::sqrt(0.5);
                P(idx[1] * M + idx[0], r) = std::sqrt(0.5);
            }
        }
        const Eigen::MatrixXd ref = P.transpose() * H2 * P;
        CHECK((ref - Eigen::MatrixXd(H.block(2))).norm() < 1e-10);
    }

    SUBCASE("spectral bounds enclose each sector") {
        for (int n = 1; n <= 6; ++n) {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(H.block(n)), Eigen::EigenvaluesOnly);
            CHECK(es.eigenvalues().minCoeff() >= H.bounds(n).first);
            CHECK(es.eigenvalues().maxCoeff() <= H.bounds(n).second);
        }
    }
}

TEST_CASE("coherent states") {
    const double N = 6.0;
    const int nmax = coherent_nmax(N);
    FockSpace fs(3, nmax);
    const Eigen::VectorXcd phi = unit(3, 5);
    const FockVector c = coherent_state(fs, phi, N);
    double tail = 1.0;
    for (int n = 0; n <= nmax; ++n) {
        CHECK(std::abs(c.sector_mass(n) - poisson(N, n)) < 1e-12);
        tail -= poisson(N, n);
    }
    CHECK(tail < 1e-8);
    CHECK(std::abs(c.norm() - 1.0) < 1e-8);
    CHECK(std::abs(c.mean_number() - N * (1.0 - tail)) < 1e-6);
    CHECK_THROWS_AS(coherent_state(FockSpace(3, nmax - 2), phi, N), NumericGuard);
    CHECK_THROWS_AS(coherent_state(fs, 2.0 * phi, N), ValidationError);

    SUBCASE("matrix exponential oracle at N = 1, M = 2") {
        FockSpace small(2, 30);
        const Eigen::VectorXcd f = unit(2, 9);
        // -A(phi) = a^*(phi) - a(conj phi)
        const Mat A = dense(small, [&](const FockVector& v) {
            FockVector r = apply_create(small, f, v);
            FockVector l = apply_annihilate(small, f.conjugate(), v);
            l *= -1.0;
            r += l;
            return r;
        });
        const Eigen::VectorXcd ref = A.exp() * flatten(FockVector::vacuum(small));
        CHECK((flatten(coherent_state(small, f, 1.0)) - ref).norm() < 1e-10);
        CHECK((flatten(apply_weyl(small, f, 1.0, FockVector::vacuum(small))) - ref).norm() < 1e-10);
    }

    SUBCASE("one-body marginal of a coherent state") {
        const Eigen::MatrixXcd g = gamma1(fs, c);
        CHECK((g - phi * phi.adjoint()).norm() < 1e-8);
        CHECK(trace_distance(g, phi) < 1e-8);
        CHECK_THROWS_AS(gamma1(fs, FockVector::vacuum(fs)), ValidationError);
    }
}

TEST_CASE("Bogoliubov exponential") {
    SUBCASE("k = 0 gives the vacuum") {
        FockSpace fs(3, 8);
        CHECK((flatten(bogoliubov_state(fs, Mat::Zero(3, 3))) - flatten(FockVector::vacuum(fs))).norm() == 0.0);
    }

    SUBCASE("single-mode squeezed state") {
        const double r = 0.5, th = 0.7;
        FockSpace fs(1, 80);
        Mat K(1, 1);
        K(0, 0) = std::polar(r, th);
        const FockVector s = bogoliubov_state(fs, K);
        double worst = 0.0;
        for (int n = 0; 2 * n <= 80; ++n) {
            const double mag = std::exp(0.5 * std::lgamma(2 * n + 1.0) - n * std::log(2.0) - std::lgamma(n + 1.0));
            const cplx ref = std::pow(std::cosh(r), -0.5) * std::pow(std::polar(std::tanh(r), th), n) * mag;
            worst = std::max(worst, std::abs(s.blocks[2 * n](0) - ref));
        }
        CHECK(worst < 1e-12);
        for (int n = 1; n <= 80; n += 2) CHECK(s.blocks[n].norm() == 0.0);
    }

    SUBCASE("Taylor action, closed form and dense exponential agree") {
        FockSpace fs(2, 26);
        const Mat K = random_symmetric(2, 0.4, 21);
        const FockVector a = bogoliubov_state(fs, K);
        const FockVector b = bogoliubov_closed_form(fs, K);
        const Mat Bm = dense(fs, [&](const FockVector& v) { return apply_B(fs, K, v); });
        const Eigen::VectorXcd c = Mat(-Bm).exp() * flatten(FockVector::vacuum(fs));
        CHECK((flatten(a) - c).norm() < 1e-10);
        // the closed form is the exact projection; the truncated generator differs only near the cutoff
        for (int n = 0; n <= 16; ++n) CHECK((a.blocks[n] - b.blocks[n]).norm() < 1e-10);
        CHECK(std::abs(a.norm() - 1.0) < 1e-10);
        for (int n = 1; n <= 26; n += 2) CHECK(a.blocks[n].norm() == 0.0);
    }

    SUBCASE("unitary on low-lying states") {
        FockSpace fs(3, 30);
        const Mat K = random_symmetric(3, 0.3, 4);
        const FockVector psi = random_state(fs, 3, 8);
        const FockVector out = apply_B_exp(fs, K, psi);
        CHECK(std::abs(out.norm() - 1.0) < 1e-10);
    }

    SUBCASE("cutoff guard") {
        FockSpace fs(2, 6);
        CHECK_THROWS_AS(bogoliubov_state(fs, random_symmetric(2, 1.5, 2)), NumericGuard);
    }
}

TEST_CASE("exact evolution") {
    ModeGrid mg{5, 6.0};
    const Eigen::MatrixXd lap = mg.laplacian();
    const double N = 4.0;
    FockSpace fs(5, coherent_nmax(N));
    const Eigen::VectorXcd phi = mode_gaussian(mg, 1.0, 0.5);
    const FockVector c = coherent_state(fs, phi, N);

    SUBCASE("free evolution is a mode-wise phase on the coherent state") {
        const Eigen::MatrixXd V0 = mode_interaction(mg, Profile{ProfileKind::Zero}, N, 0.4);
        FockHamiltonian H(fs, lap, V0, N);
        const double t = 0.8;
        const Mat U = (cplx(0.0, t) * lap.cast<cplx>()).exp();
        const FockVector ref = coherent_state(fs, U * phi, N);
        CHECK((flatten(H.evolve(c, t)) - flatten(ref)).norm() < 1e-10);
    }

    FockHamiltonian H(fs, lap, mode_interaction(mg, Profile{}, N, 0.4), N);
    CHECK((flatten(H.evolve(c, 0.0)) - flatten(c)).norm() < 1e-14);
    const FockVector e = H.evolve(c, 1.3);
    CHECK(std::abs(e.norm() - c.norm()) < 1e-10);

    SUBCASE("Chebyshev matches the eigendecomposition") {
        for (int n : {3, 9, 14}) {
            const Eigen::VectorXcd d = H.evolve_sector_dense(n, c.blocks[n], 1.3);
            const Eigen::VectorXcd ch = H.evolve_sector_chebyshev(n, c.blocks[n], 1.3);
            CHECK((d - ch).norm() < 1e-11 * std::max(1.0, c.blocks[n].norm()));
        }
        const Eigen::VectorXcd back = H.evolve_sector_chebyshev(9, H.evolve_sector_chebyshev(9, c.blocks[9], 1.3), -1.3);
        CHECK((back - c.blocks[9]).norm() < 1e-11);
    }

    SUBCASE("group property") {
        const FockVector two = H.evolve(H.evolve(c, 0.6), 0.7);
        CHECK((flatten(two) - flatten(e)).norm() < 1e-10);
    }
}

TEST_CASE("mode dynamics") {
    ModeGrid mg{5, 6.0};
    const double N = 8.0;
    const Eigen::MatrixXd V = mode_interaction(mg, Profile{}, N, 0.4);
    const Eigen::VectorXcd phi0 = mode_gaussian(mg, 1.0);
    const auto traj = mode_dynamics(mg, V, phi0, 1e-3, 1000, 250);
    REQUIRE(traj.size() == 5);
    CHECK(traj[0].s2.norm() == 0.0);
    for (const auto& st : traj) {
        CHECK(std::abs(st.phi.norm() - 1.0) < 1e-9);
        // p2 p2 + 2 p2 = conj(s2) s2 and p2 hermitian
        CHECK((st.p2 * st.p2 + 2.0 * st.p2 - st.s2.conjugate() * st.s2).norm() < 1e-8);
        CHECK((st.p2 - st.p2.adjoint()).norm() < 1e-10);
        CHECK((st.s2 - st.s2.transpose()).norm() < 1e-10);
        // k round trip: sh(2k) = s2
        const Mat K = mode_k(st.s2);
        Takagi tk = takagi(K);
        const Eigen::VectorXd sh = tk.sigma.unaryExpr([](double x) { return std::sinh(2 * x); });
        CHECK((tk.U * sh.asDiagonal() * tk.U.transpose() - st.s2).norm() < 1e-9);
    }
    CHECK(traj.back().s2.norm() > 1e-3);

    SUBCASE("quadrature") {
        const Eigen::MatrixXd P = mode_interaction(mg, Profile{}, N, 0.4, ModeQuadrature::PointSample);
        CHECK(std::abs(P(0, 0) - std::pow(N, 0.4) / std::sqrt(2 * PI)) < 1e-12);
        // cell averages sum to the integral of v_N over the box
        CHECK(std::abs(V.row(0).sum() * mg.dx() - 1.0) < 1e-8);
    }
}

TEST_CASE("approximate state and error") {
    ModeGrid mg{5, 6.0};
    const double N = 6.0;
    FockSpace fs(5, coherent_nmax(N));
    const Eigen::VectorXcd phi = mode_gaussian(mg, 1.0);
    const FockVector c = coherent_state(fs, phi, N);
    CHECK(fock_error(c, c) < 1e-6);
    FockVector rot = c;
    rot *= std::polar(1.0, 1.1);
    CHECK(fock_error(c, rot) < 1e-6);
    CHECK((flatten(approx_state(fs, phi, Mat::Zero(5, 5), N)) - flatten(c)).norm() < 1e-10);
    const FockVector a = approx_state(fs, phi, random_symmetric(5, 0.2, 3), N);
    CHECK(std::abs(a.norm() - 1.0) < 1e-7);
}

TEST_CASE("sweep at small N") {
    FockConfig cfg;
    cfg.Ns = {4, 6, 8};
    const FockSweep sw = fock_sweep(cfg);
    REQUIRE(sw.rows.size() == 6);
    for (const auto& r : sw.rows) {
        if (r.t == 0.0) {
            CHECK(r.error_k < 1e-6);
            CHECK(r.trace_distance < 1e-10);
        } else {
            CHECK(r.error_k < r.error_k0);
        }
        CHECK(std::abs(r.truncation_tail) < 1e-8);
    }
    CHECK(sw.rows[5].error_k < sw.rows[1].error_k);
    CHECK(sw.fit_k.slope < 0.0);
    CHECK(sw.fit_trace.slope < 0.0);
}
