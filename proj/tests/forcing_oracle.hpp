#pragma once

// Direct-loop evaluation of each forcing summand, written index by index from the
// summand definitions. Used as an independent oracle for the dense contractions.

#include <random>
#include <vector>

#include "bosonlab/forcing.hpp"

namespace oracle {

using bl::cplx;

struct Loops {
    const bl::ForcingInputs& in;
    int n;
    double h;
    bl::Mat ubu, uub, pbu, ubpb;

    explicit Loops(const bl::ForcingInputs& i) : in(i), n(i.n), h(i.dx) {
        ubu = uub = pbu = ubpb = bl::Mat::Zero(n, n);
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b)
                for (int z = 0; z < n; ++z) {
                    ubu(a, b) += h * std::conj(u(a, z)) * u(z, b);
                    uub(a, b) += h * u(a, z) * std::conj(u(z, b));
                    pbu(a, b) += h * pb(a, z) * u(z, b);
                    ubpb(a, b) += h * std::conj(u(a, z)) * pb(z, b);
                }
    }
    cplx u(int a, int b) const { return in.u(a, b); }
    cplx p(int a, int b) const { return in.p(a, b); }
    cplx pb(int a, int b) const { return std::conj(in.p(a, b)); }
    cplx ub(int a, int b) const { return std::conj(in.u(a, b)); }
    double V(int a, int b) const { return in.V(a, b); }
    cplx f(int a) const { return in.phi(a); }
    cplx fb(int a) const { return std::conj(in.phi(a)); }
    cplx cbu(int a, int b) const { return u(a, b) + pbu(a, b); }

    cplx F1(char t, int y1) const {
        cplx s = 0.0;
        if (t <= 'h') {
            for (int x1 = 0; x1 < n; ++x1)
                for (int x2 = 0; x2 < n; ++x2) {
                    cplx term;
                    switch (t) {
                        case 'a': term = u(y1, x2) * ubu(x1, x1) * fb(x2); break;
                        case 'b': term = pb(y1, x2) * uub(x1, x1) * f(x2); break;
                        case 'c': term = u(y1, x1) * ubu(x1, x2) * fb(x2); break;
                        case 'd': term = pb(y1, x1) * pbu(x1, x2) * fb(x2); break;
                        case 'e': term = pb(y1, x1) * uub(x1, x2) * f(x2); break;
                        case 'f': term = u(y1, x1) * ubpb(x1, x2) * f(x2); break;
                        case 'g': term = pb(y1, x1) * u(x1, x2) * fb(x2); break;
                        default: term = u(y1, x1) * ub(x1, x2) * f(x2); break;
                    }
                    s += h * h * V(x1, x2) * term;
                }
            return s;
        }
        for (int x1 = 0; x1 < n; ++x1) {
            cplx term;
            switch (t) {
                case 'i': term = u(y1, x1) * fb(x1); break;
                case 'j': term = uub(y1, x1) * f(x1); break;
                case 'k': term = pbu(y1, x1) * fb(x1); break;
                default: term = uub(x1, x1) * f(y1); break;
            }
            s += h * V(y1, x1) * term;
        }
        return s;
    }

    cplx F2(char t, int y1, int y2) const {
        if (t == 'a') return V(y1, y2) * (u(y1, y2) + pbu(y1, y2));
        cplx s = 0.0;
        if (t <= 'g') {
            for (int x1 = 0; x1 < n; ++x1)
                for (int x2 = 0; x2 < n; ++x2) {
                    cplx term;
                    switch (t) {
                        case 'b': term = 2.0 * pb(y1, x2) * u(x2, y2) * ubu(x1, x1); break;
                        case 'c': term = 2.0 * pb(y1, x2) * u(x1, y2) * ubu(x1, x2); break;
                        case 'd': term = u(y1, x1) * u(x2, y2) * ubpb(x1, x2); break;
                        case 'e': term = pb(y1, x1) * p(x2, y2) * pbu(x1, x2); break;
                        case 'f': term = u(y1, x1) * u(x2, y2) * ub(x1, x2); break;
                        default: term = pb(y1, x1) * p(x2, y2) * u(x1, x2); break;
                    }
                    s += h * h * V(x1, x2) * term;
                }
            return s;
        }
        for (int x1 = 0; x1 < n; ++x1) {
            switch (t) {
                case 'h': s += h * V(y1, x1) * 2.0 * u(y1, y2) * ubu(x1, x1); break;
                case 'i': s += h * V(y1, x1) * pb(y2, x1) * u(x1, y1); break;
                case 'j': s += h * V(y1, x1) * 2.0 * u(x1, y2) * ubu(x1, y1); break;
                case 'k': s += h * V(y1, x1) * pb(y2, x1) * pbu(y1, x1); break;
                default: s += h * V(x1, y2) * pb(y1, x1) * cbu(x1, y2); break;
            }
        }
        return s;
    }

    cplx F3(char t, int y1, int y2, int y3) const {
        cplx s = 0.0;
        switch (t) {
            case 'a': return V(y1, y2) * f(y2) * u(y3, y1);
            case 'b':
                for (int x = 0; x < n; ++x) s += h * V(y1, x) * fb(x) * u(x, y3);
                return s * u(y2, y1);
            case 'c':
                for (int x = 0; x < n; ++x) s += h * pb(y1, x) * V(x, y2) * u(y3, x);
                return s * f(y2);
            case 'd':
                for (int x = 0; x < n; ++x) s += h * pb(y2, x) * V(y1, x) * f(x);
                return s * u(y3, y1);
            case 'e':
                for (int x1 = 0; x1 < n; ++x1)
                    for (int x2 = 0; x2 < n; ++x2)
                        s += h * h * pb(y1, x1) * V(x1, x2) * fb(x2) * u(y2, x1) * u(x2, y3);
                return s;
            default:
                for (int x1 = 0; x1 < n; ++x1)
                    for (int x2 = 0; x2 < n; ++x2)
                        s += h * h * pb(y1, x1) * p(x2, y2) * V(x1, x2) * f(x2) * u(y3, x1);
                return s;
        }
    }

    cplx F4(char t, int y1, int y2, int y3, int y4) const {
        cplx s = 0.0;
        switch (t) {
            case 'a': return V(y1, y2) * u(y3, y1) * u(y2, y4);
            case 'b':
                for (int x = 0; x < n; ++x) s += h * pb(y2, x) * V(y1, x) * u(x, y4);
                return s * u(y3, y1);
            case 'c':
                for (int x = 0; x < n; ++x) s += h * pb(y1, x) * V(x, y2) * u(y3, x);
                return s * u(y2, y4);
            default:
                for (int x1 = 0; x1 < n; ++x1)
                    for (int x2 = 0; x2 < n; ++x2)
                        s += h * h * pb(y1, x1) * p(x2, y2) * V(x1, x2) * u(y3, x1) * u(x2, y4);
                return s;
        }
    }

    std::vector<cplx> summand(int l, char t) const {
        std::vector<cplx> out;
        const int m = n;
        if (l == 1)
            for (int a = 0; a < m; ++a) out.push_back(F1(t, a));
        if (l == 2)
            for (int a = 0; a < m; ++a)
                for (int b = 0; b < m; ++b) out.push_back(F2(t, a, b));
        if (l == 3)
            for (int a = 0; a < m; ++a)
                for (int b = 0; b < m; ++b)
                    for (int c = 0; c < m; ++c) out.push_back(F3(t, a, b, c));
        if (l == 4)
            for (int a = 0; a < m; ++a)
                for (int b = 0; b < m; ++b)
                    for (int c = 0; c < m; ++c)
                        for (int d = 0; d < m; ++d) out.push_back(F4(t, a, b, c, d));
        return out;
    }
};

// Random inputs on an arbitrary n (no FFT involved): symmetric u, hermitian p,
// even circulant V sampled from the scaled Gaussian on a box of length L.
inline bl::ForcingInputs random_inputs(int n, double L, double N, double beta, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    bl::ForcingInputs in;
    in.n = n;
    in.dx = L / n;
    in.N = N;
    bl::Mat G(n, n), H(n, n);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
            G(a, b) = cplx(nd(rng), nd(rng));
            H(a, b) = cplx(nd(rng), nd(rng));
        }
    in.u = 0.3 * (G + G.transpose());
    in.p = 0.2 * (H + H.adjoint());
    in.phi.resize(n);
    for (int a = 0; a < n; ++a) in.phi(a) = cplx(nd(rng), nd(rng));
    in.V.resize(n, n);
    bl::Profile v;
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
            const double x = (a - b) * in.dx;
            in.V(a, b) = bl::scaled_potential(v, N, beta, 1, L, std::span<const double>(&x, 1));
        }
    return in;
}

}  // namespace oracle
