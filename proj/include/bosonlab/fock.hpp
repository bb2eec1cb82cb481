#pragma once

#include <map>
#include <memory>
#include <mutex>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "bosonlab/fit.hpp"
#include "bosonlab/kernel.hpp"
#include "bosonlab/meanfield.hpp"

namespace bl {

// Occupation-number basis of M modes with at most n_max particles, blocked by particle number.
// Within sector n the states are ordered by descending occupation of mode 0, then mode 1, ...
class FockSpace {
public:
    FockSpace(int M, int n_max, std::size_t max_dim = 4'000'000);

    int modes() const { return M_; }
    int n_max() const { return n_max_; }
    std::size_t dim(int n) const { return dims_[n]; }
    std::size_t total_dim() const { return total_; }
    const unsigned char* occ(int n, std::size_t r) const { return &occ_[n][r * M_]; }
    std::size_t rank(int n, const unsigned char* occ) const;
    double binom(int a, int b) const;

private:
    int M_, n_max_;
    std::size_t total_ = 0;
    std::vector<std::size_t> dims_;
    std::vector<std::vector<unsigned char>> occ_;
    std::vector<std::vector<std::size_t>> C_;  // C_[a][b] = a choose b
};

// Sector-blocked coefficient vector; norm^2 = sum over sectors.
struct FockVector {
    std::vector<Eigen::VectorXcd> blocks;

    static FockVector zeros(const FockSpace& fs);
    static FockVector vacuum(const FockSpace& fs);
    double norm() const;
    double sector_mass(int n) const { return blocks[n].squaredNorm(); }
    double mean_number() const;
    FockVector& operator+=(const FockVector& o);
    FockVector& operator*=(cplx a);
};

cplx inner(const FockVector& a, const FockVector& b);  // <a, b>, antilinear in a

// sum_i f_i a_i^* and sum_i g_i a_i; components leaving the space are dropped.
FockVector apply_create(const FockSpace& fs, const Eigen::VectorXcd& f, const FockVector& psi);
FockVector apply_annihilate(const FockSpace& fs, const Eigen::VectorXcd& g, const FockVector& psi);
// a_i psi for one mode
FockVector annihilate_mode(const FockSpace& fs, int i, const FockVector& psi);
// 1/2 sum K_ij a_i^* a_j^*  and  1/2 sum K_ij a_i a_j
FockVector apply_pair_create(const FockSpace& fs, const Mat& K, const FockVector& psi);
FockVector apply_pair_annihilate(const FockSpace& fs, const Mat& K, const FockVector& psi);
// B(k) psi = 1/2 sum (conj(K)_ij a_i a_j - K_ij a_i^* a_j^*) psi, K the mode matrix of k
FockVector apply_B(const FockSpace& fs, const Mat& K, const FockVector& psi);
// e^{-B(k)} psi by a Taylor action with substeps. Throws NumericGuard if the state
// pushes more than `tail` of its mass into the top two sectors.
FockVector apply_B_exp(const FockSpace& fs, const Mat& K, const FockVector& psi, double tail = 1e-8);
FockVector bogoliubov_state(const FockSpace& fs, const Mat& K, double tail = 1e-8);
// Closed form: prod cosh(lambda)^{-1/2} exp(1/2 sum Z_ij a_i^* a_j^*) |0>, Z = U tanh(Lambda) U^T.
FockVector bogoliubov_closed_form(const FockSpace& fs, const Mat& K);

// Coherent state e^{-sqrt(N) A(phi)} |0>, sector amplitudes from the closed form.
// phi are mode amplitudes with sum |phi_i|^2 = 1. Throws NumericGuard if the
// Poisson tail beyond n_max exceeds `tail`.
FockVector coherent_state(const FockSpace& fs, const Eigen::VectorXcd& phi, double N, double tail = 1e-8);
// Smallest n_max with Poisson(N) mass beyond it below `tail`.
int coherent_nmax(double N, double tail = 1e-8);
// e^{-sqrt(N) A(phi)} psi through the normal-ordered form e^{-N/2} e^{sqrt N a^*(phi)} e^{-sqrt N a(conj phi)}.
FockVector apply_weyl(const FockSpace& fs, const Eigen::VectorXcd& phi, double N, const FockVector& psi);

enum class Laplacian { Spectral, ThreePoint };

// M-point periodic grid on [-L/2, L/2); modes are grid points, a_i = sqrt(dx) a(x_i).
struct ModeGrid {
    int M = 5;
    double L = 6.0;
    Laplacian lap = Laplacian::Spectral;

    double dx() const { return L / M; }
    double x(int i) const { return -0.5 * L + i * dx(); }
    Eigen::MatrixXd laplacian() const;  // real symmetric, acts on grid values
};

// How v_N enters the mode matrix. PointSample: V_ij = v_N(x_i - x_j). CellAverage: the mean of
// v_N over the cell of width dx around x_i - x_j, so sum_j V_ij f_j stays a quadrature of
// int v_N(x - y) f(y) dy when v_N is narrower than the grid.
enum class ModeQuadrature { CellAverage, PointSample };

// V_ij for the periodized v_N
Eigen::MatrixXd mode_interaction(const ModeGrid& mg, const Profile& v, double N, double beta,
                                 ModeQuadrature q = ModeQuadrature::CellAverage);
// sqrt(dx) * normalized Gaussian samples, renormalized to unit l2
Eigen::VectorXcd mode_gaussian(const ModeGrid& mg, double width, double kick = 0.0);

// H = H_1 - V / N with H_1 = sum lap_ij a_i^* a_j and V = 1/2 sum V_ij a_i^* a_j^* a_j a_i.
// Real symmetric per sector.
class FockHamiltonian {
public:
    FockHamiltonian(const FockSpace& fs, const Eigen::MatrixXd& lap, const Eigen::MatrixXd& V, double N);

    const FockSpace& space() const { return fs_; }
    const Eigen::SparseMatrix<double, Eigen::RowMajor>& block(int n) const { return H_[n]; }
    // spectral enclosure of sector n
    std::pair<double, double> bounds(int n) const { return bounds_[n]; }
    double hermiticity_error() const;  // max over sectors of ||H - H^T||_F

    // e^{itH} psi; sectors up to dense_limit use a cached eigendecomposition,
    // larger ones a Chebyshev expansion.
    FockVector evolve(const FockVector& psi, double t) const;
    Eigen::VectorXcd evolve_sector_dense(int n, const Eigen::VectorXcd& x, double t) const;
    Eigen::VectorXcd evolve_sector_chebyshev(int n, const Eigen::VectorXcd& x, double t, double tol = 1e-14) const;
    FockVector apply(const FockVector& psi) const;
    std::size_t dense_limit = 1200;

private:
    const FockSpace& fs_;
    std::vector<Eigen::SparseMatrix<double, Eigen::RowMajor>> H_;
    std::vector<std::pair<double, double>> bounds_;
    mutable std::mutex cache_mutex_;
    mutable std::map<int, std::shared_ptr<Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>>> eig_;
};

// e^{itH} psi0
FockVector evolve_exact(const FockHamiltonian& H, const FockVector& psi0, double t);

// Mean-field and pair kernels on the same mode grid (op form: mode matrices), driven by
// i d_t phi = -lap phi + (V |phi|^2) phi written as d_t phi = i (lap phi - (V|phi|^2) phi), and
// the S/W system for s2 = sh(2k), p2 = ch(2k) - delta. Classical RK4.
struct ModeState {
    double t = 0.0;
    Eigen::VectorXcd phi;
    Mat s2, p2;
};
std::vector<ModeState> mode_dynamics(const ModeGrid& mg, const Eigen::MatrixXd& V, const Eigen::VectorXcd& phi0,
                                     double dt, int steps, int record_every = 1);
// k from s2 = sh(2k) through a Takagi factorization.
Mat mode_k(const Mat& s2);

// e^{-sqrt(N) A(phi)} e^{-B(k)} |0>
FockVector approx_state(const FockSpace& fs, const Eigen::VectorXcd& phi, const Mat& K, double N,
                        double tail = 1e-8);
// min over theta of ||a - e^{i theta} b||
double fock_error(const FockVector& a, const FockVector& b);

// gamma(i, j) = <a_j^* a_i> / <number>
Eigen::MatrixXcd gamma1(const FockSpace& fs, const FockVector& psi);
// trace norm of gamma - |phi><phi|
double trace_distance(const Eigen::MatrixXcd& gamma, const Eigen::VectorXcd& phi);

struct FockConfig {
    ModeGrid grid;
    Profile v{};
    ModeQuadrature quadrature = ModeQuadrature::CellAverage;
    double beta = 0.4;
    std::vector<double> Ns{4, 6, 8, 12, 16};
    std::vector<double> times{0.0, 1.0};
    double width = 1.0;
    double dt = 1e-3;          // mode dynamics step
    double tail = 1e-8;
    std::size_t max_dim = 4'000'000;
};

struct FockRow {
    double N, t;
    double error_k, error_k0, trace_distance;
    double mean_number, truncation_tail;
};

struct FockSweep {
    FockConfig config;
    std::vector<FockRow> rows;
    PowerFit fit_k;      // error with k against N at the last time
    PowerFit fit_trace;  // exact-evolution trace distance against N at the last time
};

FockSweep fock_sweep(const FockConfig& cfg);

}  // namespace bl
