#pragma once

#include <optional>

#include "bosonlab/kernel.hpp"
#include "bosonlab/meanfield.hpp"

namespace bl {

// m(x, y) = -v_N(x - y) phi(x) phi(y)
Kernel build_m(const Field& phi, const Interaction& iv);

// g_pot = (v_N * |phi|^2)(x) delta(x - y) + v_N(x - y) conj(phi(x)) phi(y).
struct GPot {
    Field multiplier;
    Kernel kernel;
    Mat op() const;             // diag(multiplier) + dx * kernel
    Mat op_transpose() const;   // operator of g_pot^T
};
GPot build_gpot(const Field& phi, const Interaction& iv);

// V(u) = g_pot^T u + u g_pot, term by term.
Kernel apply_V(const Kernel& u, const GPot& g);
// Same through operator composition; used as a cross-check.
Kernel apply_V_compose(const Kernel& u, const GPot& g);

struct PairState {
    double t = 0.0;
    Kernel s2, p2;
    // split parts s_a0 + s_a1 + s_e = s2 when present
    std::optional<Kernel> sa0, sa1, se;

    static PairState zero(const GridSpec& g);
};

struct PairOptions {
    int record_every = 1;
    double residual_abort = 1e-4;
};

struct PairTrajectory {
    double dt = 0.0;
    std::vector<PairState> states;
    double max_residual = 0.0;
};

// Condensate samples at spacing dt / 2 for a pair step dt, starting at t = 0.
Trajectory pair_driver(const Field& phi0, const Interaction& iv, double dt, int steps);

// Strang step: exact kinetic flow for a half step, RK4 on the bounded part with the
// condensate at t, t + dt/2, t + dt, then another kinetic half step.
PairTrajectory evolve_pair(const PairState& init, const Trajectory& path, const Interaction& iv,
                           double dt, int steps, const PairOptions& opt = {});
// Same scheme on (s_a0, s_a1, s_e, p2) from zero data.
PairTrajectory evolve_split(const Trajectory& path, const Interaction& iv, double dt, int steps,
                            const PairOptions& opt = {});

// d_t s2 and d_t p2 from the right-hand sides, kinetic part included.
struct PairRate {
    Kernel ds2, dp2;
};
PairRate pair_rate(const PairState& st, const Field& phi, const Interaction& iv);

struct EllipticCheck {
    double lhs = 0.0, rhs = 0.0, ratio = 0.0;
};
// j = 0: int |m^|^2 / (|xi|^2 + |eta|^2)^2 against ||phi||_3^4.
// j = 1: same with d_t m against ||phi||_3^2 ||d_t phi||_3^2.
EllipticCheck elliptic_check(const Field& phi, const Interaction& iv, int order = 0);

struct NormRow {
    double t;
    double s2_l2, s2_h32, ds2_h32, u_l2, p_l2, u_linf_l2, u_l4_l2, p2_l2;
    double residual, consistency;
};
// Needs the condensate path used for the run (to form d_t s2 algebraically).
std::vector<NormRow> norm_tracker(const PairTrajectory& tr, const Trajectory& path,
                                  const Interaction& iv);

}  // namespace bl
