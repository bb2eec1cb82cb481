#pragma once

#include <Eigen/Dense>

#include "bosonlab/fit.hpp"
#include "bosonlab/spectral.hpp"

namespace bl {

enum class ProfileKind { Gaussian, Bump, Zero };

// Base potential v >= 0, radial, normalized so that int v = 1 (zero for Zero).
struct Profile {
    ProfileKind kind = ProfileKind::Gaussian;
    double width = 1.0;

    double value(double r2, int d) const;
    double sup(int d) const { return value(0.0, d); }
    double integral() const { return kind == ProfileKind::Zero ? 0.0 : 1.0; }
    double support_radius() const;  // effective radius used for periodic images
    double fourier_1d(double k) const;  // int v(x) e^{-ikx} dx for d = 1
};

// v_N(x) = N^{d beta} v(N^beta x), periodized on the grid box.
struct Interaction {
    GridSpec grid;
    Profile profile;
    double N = 1.0;
    double beta = 0.0;
    Field vN;

    double scale() const;  // N^beta
    double l1() const;     // grid quadrature of v_N
    double sup() const;    // max over grid of v_N
    bool zero() const { return profile.kind == ProfileKind::Zero; }
};

// Smallest power-of-two n for which N^beta * (L/n) <= 0.5 * width.
int minimal_resolution(double N, double beta, double L, double width);

Interaction make_interaction(const Profile& v, double N, double beta, const GridSpec& grid);

// Continuum value of the periodized v_N at a point.
double scaled_potential(const Profile& v, double N, double beta, int d, double L,
                        std::span<const double> x);

// V(a, b) = v_N(x_a - x_b) for d = 1 grids (circulant).
Eigen::MatrixXd pair_matrix(const Interaction& iv);

enum class Flavor { Hartree, Limit };

struct Trajectory {
    double dt = 0.0;  // spacing between stored samples
    std::vector<double> t;
    std::vector<Field> phi;
};

struct HartreeOptions {
    Flavor flavor = Flavor::Hartree;
    int record_every = 1;
};

// Normalized Gaussian (pi w^2)^{-d/4} exp(-|x|^2/(2 w^2)) exp(i kick x_1).
Field gaussian(const GridSpec& g, double width = 1.0, double kick = 0.0);

Field mean_field_potential(const Field& phi, const Interaction& iv, Flavor flavor);
Field hartree_rhs(const Field& phi, const Interaction& iv, Flavor flavor = Flavor::Hartree);
double mass(const Field& phi);
double energy(const Field& phi, const Interaction& iv, Flavor flavor = Flavor::Hartree);

// Strang split-step for (1/i) d_t phi - Lap phi + (v_N * |phi|^2) phi = 0.
Trajectory evolve_hartree(const Field& phi0, const Interaction& iv, double dt, int steps,
                          const HartreeOptions& opt = {});

struct DecayRow {
    double t, linf, l3, l4;
};
struct DecayReport {
    int order = 0;
    std::vector<DecayRow> rows;
    PowerFit fit_linf;
    double t_lo = 0.0, t_hi = 0.0;
};

// Norms of d_t^j phi (4th-order centred differences in t) and an L^inf decay fit.
DecayReport decay_report(const Trajectory& tr, int j, double t_lo, double t_hi);

struct LimitComparison {
    std::vector<double> t, distance;
};
LimitComparison compare_to_limit(const Trajectory& phiN, const Trajectory& phiLimit);

struct AnsatzResult {
    std::vector<double> t, distance, relative;
    double removed_mean = 0.0;  // constant removed from v_N before solving Lap w = -v/2
    double coupling = 0.0;      // int v_N w_N
};

// Distance between (v_N w_N) * |phi|^2 phi and (int v_N w_N) |phi|^2 phi, with
// w_N(x) = w(N^beta x) solved spectrally on the grid (d = 1).
AnsatzResult heuristic_ansatz_check(const Interaction& iv, const Trajectory& tr,
                                    bool project_mean = true);

}  // namespace bl
