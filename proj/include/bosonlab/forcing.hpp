#pragma once

#include <string>

#include "bosonlab/fit.hpp"
#include "bosonlab/kernel.hpp"
#include "bosonlab/meanfield.hpp"

namespace bl {

// Dense contraction inputs. n need not be a power of two: no FFT is involved.
struct ForcingInputs {
    int n = 0;
    double dx = 0.0;
    double N = 1.0;
    Mat u, p;                // sh(k) and ch(k) - delta as kernels
    Eigen::VectorXcd phi;
    Eigen::MatrixXd V;       // v_N(x_a - x_b)

    double vN_l2() const;    // ||v_N||_2 from the first column
};

ForcingInputs forcing_inputs(const Kernel& u, const Kernel& p, const Field& phi, const Interaction& iv);

enum class SectorTag { Full, Singular, Regular };

// Complex array over l grid coordinates, row-major with y_1 slowest.
struct SectorField {
    int l = 1;
    int n = 0;
    double dx = 0.0;
    SectorTag tag = SectorTag::Full;
    std::vector<cplx> data;

    SectorField() = default;
    SectorField(int l, int n, double dx, SectorTag tag = SectorTag::Full);
    std::size_t index(std::initializer_list<int> y) const;
    double l2() const;  // (sum |F|^2 dx^l)^(1/2)
    SectorField& operator+=(const SectorField& o);
    SectorField& operator*=(cplx a);
};

SectorField operator-(SectorField a, const SectorField& b);

int summand_count(int l);  // 12, 12, 6, 4
// Prefactor in front of the braces: -N^{-1/2} for l = 1, 3 and -1/(2N) for l = 2, 4.
double sector_prefactor(int l, double N);
// One summand (letter 'a', 'b', ...), without prefactor or symmetrization.
SectorField summand(int l, char term, const ForcingInputs& in);

// Average over all permutations of the l coordinates.
SectorField symmetrize(const SectorField& f);

struct ForcingOptions {
    bool symmetrize = true;
    int max_n_l4 = 48;  // memory guard for the 4-particle sector
};

struct Sector {
    SectorField full, singular, regular;
};

SectorField assemble_F1(const ForcingInputs& in);
// Singular part is the 'a' summand with the sector prefactor; regular = full - singular.
Sector assemble_sector(int l, const ForcingInputs& in, const ForcingOptions& opt = {});

// Both sides of the L2 chains for the singular parts:
// ||F3s|| <= N^{-1/2} ||v_N||_2 ||u||_2 ||phi||_inf,
// ||F2s|| <= (1/2N) ||v_N||_2 sup_z ||w(. + z, .)||_2 with w = u + conj(p) u.
double f3s_chain_bound(const ForcingInputs& in);
double f2s_chain_bound(const ForcingInputs& in);

struct ScalingConfig {
    int n = 64;
    double L = 6.0;
    double beta = 0.4;
    std::vector<double> Ns{8, 16, 32, 64};
    double t_eval = 1.0;
    double dt = 0.0025;
    double phi_width = 0.75;
    double v_width = 1.0;
    int max_n_l4 = 64;  // 4-particle tensors are n^4 complex entries (268 MB at n = 64)
};

struct ScalingRow {
    double N;
    double F1, F2, F2s, F2r, F3, F3s, F3r, F4, F4s, F4r;
    double F2s_chain, F3s_chain;
};

struct ExponentEntry {
    std::string sector;
    PowerFit fit;
    double exponent_3d; // exponent of the three-dimensional bound (epsilon -> 0)
    double predicted;   // d = 1 adaptation
};

struct ScalingReport {
    ScalingConfig config;
    std::vector<ScalingRow> rows;
    std::vector<ExponentEntry> exponents;
    bool ratios_decreasing = false;  // F_l^r / F_l^s strictly decreasing for l = 2, 3, 4
    std::string derivation;
};

ScalingReport scaling_table(const ScalingConfig& cfg);

}  // namespace bl
