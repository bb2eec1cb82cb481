#pragma once

#include <array>
#include <optional>

#include "bosonlab/forcing.hpp"
#include "bosonlab/pair.hpp"

namespace bl {

// One-particle operator V~ = (v_N * |phi|^2) + v_N(x - y) phi(x) conj(phi(y))
//   - 1/2 (cbar^{-1} m ubar + u mbar cbar^{-1} + [W(cbar), cbar^{-1}]),
// stored as a matrix acting on grid values (dx folded in).
struct VTilde {
    Mat op;
    Mat exchange;        // operator of v_N(x - y) phi(x) conj(phi(y))
    Mat correction;      // the bracketed term with its -1/2
    Eigen::VectorXd multiplier;  // v_N * |phi|^2
    double norm = 0.0;        // exact L2 -> L2 norm (hermitian eigenvalues)
    double norm_power = 0.0;  // power-iteration estimate
    double bound_scale = 0.0; // (1 + ||u||_2^4) ||phi||_inf^2
    double ratio() const { return bound_scale > 0.0 ? norm / bound_scale : 0.0; }
};

VTilde build_Vtilde(const Field& phi, const Kernel& u, const DeltaPlus& c, const Kernel& m,
                    const Interaction& iv);

// Largest singular value of A by power iteration on A^* A.
double power_norm(const Mat& A, int iters = 200, double tol = 1e-12);

// Apply the n x n operator A to axis k of an l-particle field.
SectorField apply_axis(const Mat& A, const SectorField& f, int k);
// V_l f = sum_k (V~)_k f
SectorField apply_Vl(const Mat& A, const SectorField& f);

// (1/2N) sum_{a != b} v_N(z_a - z_b) f
SectorField apply_Htilde(const SectorField& f, const Eigen::MatrixXd& V, double N);
// Next-level forcing: symmetrization of -(1/2N) v_N(y_1 - y_2) f
SectorField cascade_forcing(const SectorField& f, const Eigen::MatrixXd& V, double N);
// Singular forcing F_l^s, symmetrized.
SectorField singular_forcing(int l, const ForcingInputs& in);

// Strang step for (1/i) d_t psi - Lap psi + V_l psi = F, split as psi = psi_a + psi_e with
// (1/i) d_t psi_a - Lap psi_a = F and S_l psi_e = -V_l psi_a. Kinetic half steps are exact;
// the bounded part is a midpoint RK2 using the data at t and t + dt/2.
class SectorStepper {
public:
    SectorStepper(int l, int n, double L, double dt);
    int l() const { return l_; }
    // F0, V0 at t; Fh, Vh at t + dt/2
    void step(const SectorField& F0, const Mat& V0, const SectorField& Fh, const Mat& Vh);
    const SectorField& psi_a() const { return a_; }
    const SectorField& psi_e() const { return e_; }
    SectorField psi() const;

private:
    void kinetic(SectorField& f) const;
    int l_, n_;
    double dt_;
    std::vector<cplx> phase_;
    SectorField a_, e_;
};

struct SectorSolution {
    double dt = 0.0;
    std::vector<double> t;
    std::vector<SectorField> psi;  // psi_a + psi_e at recorded times
    std::vector<double> norm, norm_a, norm_e;
};

// forcing and vt sampled at spacing dt / 2 (2 * steps + 1 samples each), zero initial data.
SectorSolution solve_sector(int l, const std::vector<SectorField>& forcing, const std::vector<Mat>& vt,
                            double L, double dt, int steps, int record_every = 1);

struct CascadeConfig {
    int J = 2;                    // deepest level
    std::vector<int> sectors{2, 3};
    int record_every = 1;
    int max_n_l4 = 24;            // 4-particle fields are n^4 entries, each level carries two
    bool regular_budget = false;  // also record ||F_1|| + sum ||F_l^r|| at recorded times
};

struct SectorHistory {
    int l = 0;
    std::vector<double> norm, norm_a, norm_e;
    SectorField psi;  // final psi_a + psi_e
};

struct CascadeState {
    int j = 1;
    std::vector<SectorHistory> sectors;
    const SectorHistory& sector(int l) const;
};

struct CascadeRun {
    double dt = 0.0;  // cascade step = 2 x pair step
    double N = 1.0, beta = 0.0;
    std::vector<double> t;
    std::vector<double> vt_norm, vt_ratio;  // at recorded times
    std::vector<double> regular;            // ||F_1|| + sum_l ||F_l^r|| when requested
    std::vector<CascadeState> levels;
};

// Levels advance in lockstep: level j + 1 at t + dt/2 is forced by the average of level j
// at t and t + dt. Needs a pair trajectory recorded every step and its condensate path.
CascadeRun run_cascade(const PairTrajectory& pairs, const Trajectory& path, const Interaction& iv,
                       const CascadeConfig& cfg);

struct ThresholdRow {
    int j = 1;
    int num = 0, den = 0;       // beta < num / den
    double value = 0.0;
    double dominant = 0.0;      // min(-1/2 + beta, (-3 + 7 beta)/2 + (j - 1)(-1 + 2 beta))
};
std::vector<ThresholdRow> threshold_table(int J, double beta);

struct EnergyAudit {
    int j = 1, l = 2;
    std::vector<double> measured;    // ||psi_e(t)||
    std::vector<double> bound;       // int_0^t l ||V~|| ||psi_a|| dt1
    std::vector<double> weighted;    // int_0^t l log^4(1 + t1)/(1 + t1^3) ||psi_a|| dt1 (unit constant)
    double worst = 0.0;              // max of measured - bound
    bool holds = true;
};

struct EnergyBudget {
    std::vector<double> t;
    std::vector<EnergyAudit> audits;
    std::vector<double> regular_integral;  // int_0^t (||F_1|| + sum ||F_l^r||), empty if not recorded
    std::vector<ThresholdRow> thresholds;
};

EnergyBudget energy_budget(const CascadeRun& run, double tol = 1e-8);

// Per-level contraction ||psi_{j+1}|| / ||psi_j|| at the final time, fitted against N.
struct ContractionEntry {
    int j = 1, l = 2;
    std::vector<double> ratio;  // one per N
    PowerFit fit;
    bool decreasing = false;
    double predicted = 0.0;     // d = 1 analogue of -1 + 2 beta
};
std::vector<ContractionEntry> contraction_report(const std::vector<CascadeRun>& runs);

}  // namespace bl
