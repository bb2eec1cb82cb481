#include "bosonlab/fock.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <sstream>

namespace bl {

namespace {

using RowMat2 = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

// y = H x for real H and complex x, treating (re, im) as two columns
void hmul(const Eigen::SparseMatrix<double, Eigen::RowMajor>& H, const Eigen::VectorXcd& x, Eigen::VectorXcd& y) {
    const Eigen::Index n = x.size();
    y.resize(n);
    Eigen::Map<const RowMat2> X(reinterpret_cast<const double*>(x.data()), n, 2);
    Eigen::Map<RowMat2> Y(reinterpret_cast<double*>(y.data()), n, 2);
    Y.noalias() = H * X;
}

void require_space(const FockSpace& fs, const FockVector& v, const char* what) {
    if (static_cast<int>(v.blocks.size()) != fs.n_max() + 1)
        throw ValidationError(std::string(what) + ": vector does not match the Fock space");
}

double poisson_tail_above(double N, int n_max) {
    // sum_{n > n_max} e^{-N} N^n / n!, summed upward from the first omitted term
    double logt = -N + (n_max + 1) * std::log(N) - std::lgamma(n_max + 2.0);
    double term = std::exp(logt), s = 0.0;
    for (int n = n_max + 1; term > 1e-300 && n < n_max + 2000; ++n) {
        s += term;
        term *= N / (n + 1);
        if (n > N && term < 1e-20 * s) break;
    }
    return s;
}

}  // namespace

// ---------------------------------------------------------------- basis

FockSpace::FockSpace(int M, int n_max, std::size_t max_dim) : M_(M), n_max_(n_max) {
    if (M < 1 || M > 12) throw ValidationError("FockSpace: number of modes must lie in 1..12");
    if (n_max < 0 || n_max > 250) throw ValidationError("FockSpace: n_max must lie in 0..250");
    const int A = n_max + M + 1;
    C_.assign(A + 1, std::vector<std::size_t>(A + 1, 0));
    for (int a = 0; a <= A; ++a) {
        C_[a][0] = 1;
        for (int b = 1; b <= a; ++b) C_[a][b] = C_[a - 1][b - 1] + (b <= a - 1 ? C_[a - 1][b] : 0);
    }
    dims_.resize(n_max + 1);
    for (int n = 0; n <= n_max; ++n) {
        dims_[n] = C_[n + M - 1][M - 1];
        total_ += dims_[n];
    }
    if (total_ > max_dim) {
        int fit = n_max;
        std::size_t t = total_;
        while (fit > 0 && t > max_dim) t -= dims_[fit--];
        std::ostringstream os;
        os << "FockSpace: total dimension " << total_ << " exceeds " << max_dim << " (M = " << M
           << "; n_max <= " << fit << " fits)";
        throw ValidationError(os.str());
    }
    occ_.resize(n_max + 1);
    std::vector<unsigned char> cur(M, 0);
    for (int n = 0; n <= n_max; ++n) {
        occ_[n].reserve(dims_[n] * M);
        std::function<void(int, int)> gen = [&](int i, int rem) {
            if (i == M - 1) {
                cur[i] = static_cast<unsigned char>(rem);
                occ_[n].insert(occ_[n].end(), cur.begin(), cur.end());
                return;
            }
            for (int v = rem; v >= 0; --v) {
                cur[i] = static_cast<unsigned char>(v);
                gen(i + 1, rem - v);
            }
        };
        gen(0, n);
    }
}

std::size_t FockSpace::rank(int n, const unsigned char* o) const {
    std::size_t r = 0;
    int rem = n;
    for (int i = 0; i + 1 < M_; ++i) {
        const int a = rem - o[i] - 1 + M_ - 1 - i, b = M_ - 1 - i;
        if (a >= b) r += C_[a][b];
        rem -= o[i];
    }
    return r;
}

double FockSpace::binom(int a, int b) const {
    if (a < 0 || b < 0 || b > a) return 0.0;
    return static_cast<double>(C_[a][b]);
}

// ---------------------------------------------------------------- vectors

FockVector FockVector::zeros(const FockSpace& fs) {
    FockVector v;
    for (int n = 0; n <= fs.n_max(); ++n) v.blocks.push_back(Eigen::VectorXcd::Zero(fs.dim(n)));
    return v;
}

FockVector FockVector::vacuum(const FockSpace& fs) {
    FockVector v = zeros(fs);
    v.blocks[0](0) = 1.0;
    return v;
}

double FockVector::norm() const {
    double s = 0.0;
    for (const auto& b : blocks) s += b.squaredNorm();
    return std::sqrt(s);
}

double FockVector::mean_number() const {
    double s = 0.0;
    for (std::size_t n = 0; n < blocks.size(); ++n) s += n * blocks[n].squaredNorm();
    return s;
}

FockVector& FockVector::operator+=(const FockVector& o) {
    for (std::size_t n = 0; n < blocks.size(); ++n) blocks[n] += o.blocks[n];
    return *this;
}

FockVector& FockVector::operator*=(cplx a) {
    for (auto& b : blocks) b *= a;
    return *this;
}

cplx inner(const FockVector& a, const FockVector& b) {
    if (a.blocks.size() != b.blocks.size()) throw ValidationError("inner: Fock vectors of different spaces");
    cplx s = 0.0;
    for (std::size_t n = 0; n < a.blocks.size(); ++n) s += a.blocks[n].dot(b.blocks[n]);
    return s;
}

// ---------------------------------------------------------------- ladder actions

FockVector apply_create(const FockSpace& fs, const Eigen::VectorXcd& f, const FockVector& psi) {
    require_space(fs, psi, "apply_create");
    const int M = fs.modes();
    FockVector out = FockVector::zeros(fs);
    std::vector<unsigned char> o(M);
    for (int n = 0; n < fs.n_max(); ++n) {
        const auto& src = psi.blocks[n];
        auto& dst = out.blocks[n + 1];
        for (std::size_t r = 0; r < fs.dim(n); ++r) {
            if (src(r) == 0.0) continue;
            std::copy_n(fs.occ(n, r), M, o.begin());
            for (int i = 0; i < M; ++i) {
                if (f(i) == 0.0) continue;
                ++o[i];
                dst(fs.rank(n + 1, o.data())) += f(i) * std::sqrt(static_cast<double>(o[i])) * src(r);
                --o[i];
            }
        }
    }
    return out;
}

FockVector apply_annihilate(const FockSpace& fs, const Eigen::VectorXcd& g, const FockVector& psi) {
    require_space(fs, psi, "apply_annihilate");
    const int M = fs.modes();
    FockVector out = FockVector::zeros(fs);
    std::vector<unsigned char> o(M);
    for (int n = 1; n <= fs.n_max(); ++n) {
        const auto& src = psi.blocks[n];
        auto& dst = out.blocks[n - 1];
        for (std::size_t r = 0; r < fs.dim(n); ++r) {
            if (src(r) == 0.0) continue;
            std::copy_n(fs.occ(n, r), M, o.begin());
            for (int i = 0; i < M; ++i) {
                if (o[i] == 0 || g(i) == 0.0) continue;
                const double amp = std::sqrt(static_cast<double>(o[i]));
                --o[i];
                dst(fs.rank(n - 1, o.data())) += g(i) * amp * src(r);
                ++o[i];
            }
        }
    }
    return out;
}

FockVector annihilate_mode(const FockSpace& fs, int i, const FockVector& psi) {
    Eigen::VectorXcd g = Eigen::VectorXcd::Zero(fs.modes());
    g(i) = 1.0;
    return apply_annihilate(fs, g, psi);
}

FockVector apply_pair_create(const FockSpace& fs, const Mat& K, const FockVector& psi) {
    require_space(fs, psi, "apply_pair_create");
    const int M = fs.modes();
    FockVector out = FockVector::zeros(fs);
    std::vector<unsigned char> o(M);
    for (int n = 0; n + 2 <= fs.n_max(); ++n) {
        const auto& src = psi.blocks[n];
        auto& dst = out.blocks[n + 2];
        for (std::size_t r = 0; r < fs.dim(n); ++r) {
            if (src(r) == 0.0) continue;
            std::copy_n(fs.occ(n, r), M, o.begin());
            for (int i = 0; i < M; ++i)
                for (int j = i; j < M; ++j) {
                    const cplx kij = (i == j) ? 0.5 * K(i, i) : 0.5 * (K(i, j) + K(j, i));
                    if (kij == 0.0) continue;
                    double amp;
                    if (i == j) {
                        amp = std::sqrt((o[i] + 1.0) * (o[i] + 2.0));
                        o[i] += 2;
                    } else {
                        amp = std::sqrt((o[i] + 1.0) * (o[j] + 1.0));
                        ++o[i], ++o[j];
                    }
                    dst(fs.rank(n + 2, o.data())) += kij * amp * src(r);
                    if (i == j) o[i] -= 2;
                    else --o[i], --o[j];
                }
        }
    }
    return out;
}

FockVector apply_pair_annihilate(const FockSpace& fs, const Mat& K, const FockVector& psi) {
    require_space(fs, psi, "apply_pair_annihilate");
    const int M = fs.modes();
    FockVector out = FockVector::zeros(fs);
    std::vector<unsigned char> o(M);
    for (int n = 2; n <= fs.n_max(); ++n) {
        const auto& src = psi.blocks[n];
        auto& dst = out.blocks[n - 2];
        for (std::size_t r = 0; r < fs.dim(n); ++r) {
            if (src(r) == 0.0) continue;
            std::copy_n(fs.occ(n, r), M, o.begin());
            for (int i = 0; i < M; ++i)
                for (int j = i; j < M; ++j) {
                    const cplx kij = (i == j) ? 0.5 * K(i, i) : 0.5 * (K(i, j) + K(j, i));
                    if (kij == 0.0) continue;
                    double amp;
                    if (i == j) {
                        if (o[i] < 2) continue;
                        amp = std::sqrt(o[i] * (o[i] - 1.0));
                        o[i] -= 2;
                    } else {
                        if (o[i] == 0 || o[j] == 0) continue;
                        amp = std::sqrt(static_cast<double>(o[i]) * o[j]);
                        --o[i], --o[j];
                    }
                    dst(fs.rank(n - 2, o.data())) += kij * amp * src(r);
                    if (i == j) o[i] += 2;
                    else ++o[i], ++o[j];
                }
        }
    }
    return out;
}

FockVector apply_B(const FockSpace& fs, const Mat& K, const FockVector& psi) {
    FockVector r = apply_pair_annihilate(fs, K.conjugate(), psi);
    FockVector c = apply_pair_create(fs, K, psi);
    c *= -1.0;
    r += c;
    return r;
}

FockVector apply_B_exp(const FockSpace& fs, const Mat& K, const FockVector& psi, double tail) {
    require_space(fs, psi, "apply_B_exp");
    // ||B|| on sectors <= n_max is below ||K||_F (n_max + 2) / 2
    const double gen = 0.5 * K.norm() * (fs.n_max() + 2);
    const int sub = std::max(1, static_cast<int>(std::ceil(gen / 0.5)));
    FockVector x = psi;
    const double base = psi.norm();
    for (int s = 0; s < sub; ++s) {
        FockVector term = x, acc = x;
        for (int j = 1; j < 200; ++j) {
            term = apply_B(fs, K, term);
            term *= -1.0 / (static_cast<double>(sub) * j);
            acc += term;
            if (term.norm() < 1e-17 * std::max(base, 1e-300)) break;
        }
        x = std::move(acc);
    }
    double top = 0.0;
    for (int n = std::max(0, fs.n_max() - 1); n <= fs.n_max(); ++n) top += x.sector_mass(n);
    if (top > tail * base * base) {
        std::ostringstream os;
        os << "apply_B_exp: mass " << top << " in the top two sectors exceeds " << tail << " (raise n_max)";
        throw NumericGuard(os.str());
    }
    return x;
}

FockVector bogoliubov_state(const FockSpace& fs, const Mat& K, double tail) {
    return apply_B_exp(fs, K, FockVector::vacuum(fs), tail);
}

FockVector bogoliubov_closed_form(const FockSpace& fs, const Mat& K) {
    const int M = fs.modes();
    if (K.rows() != M) throw ValidationError("bogoliubov_closed_form: kernel size mismatch");
    Takagi tk = takagi(K);
    double norm = 1.0;
    Eigen::VectorXd th(M);
    for (int i = 0; i < M; ++i) {
        norm /= std::sqrt(std::cosh(tk.sigma(i)));
        th(i) = std::tanh(tk.sigma(i));
    }
    const Mat Z = tk.U * th.asDiagonal() * tk.U.transpose();
    FockVector term = FockVector::vacuum(fs), acc = FockVector::vacuum(fs);
    for (int j = 1; 2 * j <= fs.n_max(); ++j) {
        term = apply_pair_create(fs, Z, term);
        term *= 1.0 / j;
        acc += term;
    }
    acc *= norm;
    return acc;
}

// ---------------------------------------------------------------- coherent states

int coherent_nmax(double N, double tail) {
    if (!(N > 0.0)) throw ValidationError("coherent_nmax: N must be positive");
    int n = static_cast<int>(std::ceil(N));
    while (poisson_tail_above(N, n) >= tail) ++n;
    return n;
}

FockVector coherent_state(const FockSpace& fs, const Eigen::VectorXcd& phi, double N, double tail) {
    const int M = fs.modes();
    if (phi.size() != M) throw ValidationError("coherent_state: phi has the wrong number of modes");
    if (std::abs(phi.squaredNorm() - 1.0) > 1e-12) throw ValidationError("coherent_state: phi must have unit norm");
    const double lost = poisson_tail_above(N, fs.n_max());
    if (lost > tail) {
        std::ostringstream os;
        os << "coherent_state: Poisson tail " << lost << " beyond n_max = " << fs.n_max() << " exceeds " << tail
           << " (minimal n_max = " << coherent_nmax(N, tail) << ")";
        throw NumericGuard(os.str());
    }
    FockVector v = FockVector::zeros(fs);
    const double sN = std::sqrt(N);
    std::vector<double> lf(fs.n_max() + 1, 0.0);
    for (int k = 1; k <= fs.n_max(); ++k) lf[k] = lf[k - 1] + std::log(static_cast<double>(k));
    for (int n = 0; n <= fs.n_max(); ++n)
        for (std::size_t r = 0; r < fs.dim(n); ++r) {
            const unsigned char* o = fs.occ(n, r);
            cplx a = std::exp(-0.5 * N);
            for (int i = 0; i < M; ++i)
                if (o[i]) a *= std::pow(sN * phi(i), static_cast<int>(o[i])) * std::exp(-0.5 * lf[o[i]]);
            v.blocks[n](r) = a;
        }
    return v;
}

FockVector apply_weyl(const FockSpace& fs, const Eigen::VectorXcd& phi, double N, const FockVector& psi) {
    require_space(fs, psi, "apply_weyl");
    const double sN = std::sqrt(N);
    // e^{-sqrt N a(conj phi)}: terminates once the lowering empties the state
    FockVector low = psi, term = psi;
    const Eigen::VectorXcd g = phi.conjugate();
    for (int k = 1; k <= fs.n_max(); ++k) {
        term = apply_annihilate(fs, g, term);
        term *= -sN / k;
        if (term.norm() == 0.0) break;
        low += term;
    }
    FockVector out = low;
    term = low;
    for (int k = 1; k <= fs.n_max(); ++k) {
        term = apply_create(fs, phi, term);
        term *= sN / k;
        out += term;
    }
    out *= std::exp(-0.5 * N);
    return out;
}

// ---------------------------------------------------------------- mode grid

Eigen::MatrixXd ModeGrid::laplacian() const {
    if (M < 2) throw ValidationError("ModeGrid: need at least 2 modes");
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(M, M);
    const double h = dx();
    if (lap == Laplacian::ThreePoint) {
        if (M < 3) throw ValidationError("ModeGrid: three-point Laplacian needs M >= 3");
        for (int i = 0; i < M; ++i) {
            D(i, i) -= 2.0 / (h * h);
            D(i, (i + 1) % M) += 1.0 / (h * h);
            D(i, (i + M - 1) % M) += 1.0 / (h * h);
        }
        return D;
    }
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < M; ++j) {
            double s = 0.0;
            for (int m = 0; m < M; ++m) {
                const int mm = (m <= M / 2) ? m : m - M;
                const double xi = 2.0 * PI * mm / L;
                s -= xi * xi * std::cos(xi * (i - j) * h);
            }
            D(i, j) = s / M;
        }
    return D;
}

Eigen::MatrixXd mode_interaction(const ModeGrid& mg, const Profile& v, double N, double beta, ModeQuadrature q) {
    const double h = mg.dx();
    auto vN = [&](double d) { return scaled_potential(v, N, beta, 1, mg.L, std::span<const double>(&d, 1)); };
    // composite Simpson over the cell, resolving the scaled width
    int m = static_cast<int>(std::ceil(16.0 * std::pow(N, beta) * h / std::max(v.width, 1e-12)));
    m = std::max(64, m + (m & 1));
    Eigen::VectorXd cell(mg.M);
    for (int k = 0; k < mg.M; ++k) {
        const double c = k * h;
        if (q == ModeQuadrature::PointSample) {
            cell(k) = vN(c);
            continue;
        }
        const double a = c - 0.5 * h, s = h / m;
        double acc = vN(a) + vN(a + h);
        for (int i = 1; i < m; ++i) acc += (i % 2 ? 4.0 : 2.0) * vN(a + i * s);
        cell(k) = acc * s / 3.0 / h;
    }
    Eigen::MatrixXd V(mg.M, mg.M);
    for (int i = 0; i < mg.M; ++i)
        for (int j = 0; j < mg.M; ++j) V(i, j) = cell(((i - j) % mg.M + mg.M) % mg.M);
    return V;
}

Eigen::VectorXcd mode_gaussian(const ModeGrid& mg, double width, double kick) {
    Eigen::VectorXcd f(mg.M);
    for (int i = 0; i < mg.M; ++i) {
        const double x = mg.x(i);
        f(i) = std::exp(-x * x / (2 * width * width)) * std::exp(I * kick * x);
    }
    return f / f.norm();
}

// ---------------------------------------------------------------- Hamiltonian

FockHamiltonian::FockHamiltonian(const FockSpace& fs, const Eigen::MatrixXd& lap, const Eigen::MatrixXd& V, double N)
    : fs_(fs) {
    const int M = fs.modes();
    if (lap.rows() != M || V.rows() != M) throw ValidationError("FockHamiltonian: operator size mismatch");
    if (!(N > 0.0)) throw ValidationError("FockHamiltonian: N must be positive");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> le(0.5 * (lap + lap.transpose()), Eigen::EigenvaluesOnly);
    const double lmin = le.eigenvalues().minCoeff(), lmax = le.eigenvalues().maxCoeff();
    const double vmin = V.minCoeff(), vmax = V.maxCoeff();
    std::vector<unsigned char> o(M);
    for (int n = 0; n <= fs.n_max(); ++n) {
        std::vector<Eigen::Triplet<double>> trip;
        for (std::size_t r = 0; r < fs.dim(n); ++r) {
            std::copy_n(fs.occ(n, r), M, o.begin());
            double diag = 0.0, pot = 0.0;
            for (int i = 0; i < M; ++i) {
                diag += lap(i, i) * o[i];
                pot += 0.5 * V(i, i) * o[i] * (o[i] - 1.0);
                for (int j = i + 1; j < M; ++j) pot += V(i, j) * o[i] * o[j];
            }
            trip.emplace_back(r, r, diag - pot / N);
            for (int j = 0; j < M; ++j) {
                if (o[j] == 0) continue;
                const double aj = std::sqrt(static_cast<double>(o[j]));
                --o[j];
                for (int i = 0; i < M; ++i) {
                    if (i == j || lap(i, j) == 0.0) continue;
                    const double ai = std::sqrt(o[i] + 1.0);
                    ++o[i];
                    trip.emplace_back(fs.rank(n, o.data()), r, lap(i, j) * ai * aj);
                    --o[i];
                }
                ++o[j];
            }
        }
        Eigen::SparseMatrix<double, Eigen::RowMajor> H(fs.dim(n), fs.dim(n));
        H.setFromTriplets(trip.begin(), trip.end());
        H_.push_back(std::move(H));
        const double pairs = 0.5 * n * (n - 1.0);
        double lo = n * lmin - pairs * std::max(vmax, 0.0) / N, hi = n * lmax - pairs * std::min(vmin, 0.0) / N;
        const double pad = 1e-9 * std::max(1.0, hi - lo);
        bounds_.emplace_back(lo - pad, hi + pad);
    }
}

double FockHamiltonian::hermiticity_error() const {
    double e = 0.0;
    for (const auto& H : H_) {
        Eigen::SparseMatrix<double, Eigen::RowMajor> D = H - Eigen::SparseMatrix<double, Eigen::RowMajor>(H.transpose());
        e = std::max(e, D.norm());
    }
    return e;
}

FockVector FockHamiltonian::apply(const FockVector& psi) const {
    require_space(fs_, psi, "FockHamiltonian::apply");
    FockVector out = FockVector::zeros(fs_);
    for (int n = 0; n <= fs_.n_max(); ++n) hmul(H_[n], psi.blocks[n], out.blocks[n]);
    return out;
}

Eigen::VectorXcd FockHamiltonian::evolve_sector_dense(int n, const Eigen::VectorXcd& x, double t) const {
    std::shared_ptr<Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>> es;
    {
        std::lock_guard<std::mutex> lk(cache_mutex_);
        auto it = eig_.find(n);
        if (it != eig_.end()) es = it->second;
    }
    if (!es) {
        es = std::make_shared<Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>>(Eigen::MatrixXd(H_[n]));
        std::lock_guard<std::mutex> lk(cache_mutex_);
        eig_.emplace(n, es);
    }
    const Eigen::MatrixXd& Q = es->eigenvectors();
    Eigen::VectorXcd c = Q.transpose().cast<cplx>() * x;
    for (Eigen::Index i = 0; i < c.size(); ++i) c(i) *= std::exp(I * (t * es->eigenvalues()(i)));
    return Q.cast<cplx>() * c;
}

Eigen::VectorXcd FockHamiltonian::evolve_sector_chebyshev(int n, const Eigen::VectorXcd& x, double t,
                                                          double tol) const {
    const auto [lo, hi] = bounds_[n];
    const double a = 0.5 * (hi - lo), b = 0.5 * (hi + lo);
    const cplx shift = std::exp(I * (b * t));
    const double tau = a * t;
    if (std::abs(tau) < 1e-300) return shift * x;
    // e^{i tau y} = J_0(tau) + 2 sum_k i^k J_k(tau) T_k(y) on [-1, 1]
    const double sgn = tau < 0 ? -1.0 : 1.0;
    const double at = std::abs(tau);
    const auto& H = H_[n];
    Eigen::VectorXcd T0 = x, T1, T2, Hx;
    hmul(H, T0, Hx);
    T1 = (Hx - b * T0) / a;
    Eigen::VectorXcd out = std::cyl_bessel_j(0.0, at) * T0;
    cplx ik = I * sgn;
    out += 2.0 * ik * std::cyl_bessel_j(1.0, at) * T1;
    for (int k = 2; k < 100000; ++k) {
        hmul(H, T1, Hx);
        T2 = 2.0 * (Hx - b * T1) / a - T0;
        ik *= I * sgn;
        const double Jk = std::cyl_bessel_j(static_cast<double>(k), at);
        out += 2.0 * ik * Jk * T2;
        if (k > at && std::abs(Jk) < tol) break;
        T0.swap(T1);
        T1.swap(T2);
    }
    return shift * out;
}

FockVector FockHamiltonian::evolve(const FockVector& psi, double t) const {
    require_space(fs_, psi, "FockHamiltonian::evolve");
    FockVector out = FockVector::zeros(fs_);
    std::vector<std::future<void>> work;
    for (int n = 0; n <= fs_.n_max(); ++n)
        work.push_back(std::async(std::launch::async, [&, n] {
            if (psi.blocks[n].norm() == 0.0) return;
            out.blocks[n] = fs_.dim(n) <= dense_limit ? evolve_sector_dense(n, psi.blocks[n], t)
                                                      : evolve_sector_chebyshev(n, psi.blocks[n], t);
        }));
    for (auto& w : work) w.get();
    return out;
}

FockVector evolve_exact(const FockHamiltonian& H, const FockVector& psi0, double t) { return H.evolve(psi0, t); }

// ---------------------------------------------------------------- mode-grid dynamics

namespace {

struct ModeRhs {
    Eigen::VectorXcd dphi;
    Mat ds, dpb;
};

// State (phi, s2, pb = conj(p2)).
ModeRhs mode_rhs(const Eigen::MatrixXd& lap, const Eigen::MatrixXd& V, const Eigen::VectorXcd& phi, const Mat& s,
                 const Mat& pb) {
    const int M = static_cast<int>(phi.size());
    const Eigen::VectorXd dens = phi.cwiseAbs2();
    const Eigen::VectorXd mf = V * dens;
    Mat g = -lap.cast<cplx>();
    g.diagonal() += mf.cast<cplx>();
    Mat m(M, M);
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < M; ++j) {
            g(i, j) += V(i, j) * std::conj(phi(i)) * phi(j);
            m(i, j) = -V(i, j) * phi(i) * phi(j);
        }
    const Mat gT = g.transpose();
    const Mat Id = Mat::Identity(M, M);
    const Mat p2 = pb.conjugate();
    ModeRhs r;
    r.dphi = I * (lap.cast<cplx>() * phi - mf.cast<cplx>().cwiseProduct(phi));
    r.ds = I * (-gT * s - s * g + m * (Id + p2) + (Id + pb) * m);
    r.dpb = I * (-(gT * pb - pb * gT) + m * s.conjugate() - s * m.conjugate());
    return r;
}

}  // namespace

std::vector<ModeState> mode_dynamics(const ModeGrid& mg, const Eigen::MatrixXd& V, const Eigen::VectorXcd& phi0,
                                     double dt, int steps, int record_every) {
    if (!(dt > 0.0) || steps < 0 || record_every < 1) throw ValidationError("mode_dynamics: bad step parameters");
    const int M = mg.M;
    const Eigen::MatrixXd lap = mg.laplacian();
    Eigen::VectorXcd phi = phi0;
    Mat s = Mat::Zero(M, M), pb = Mat::Zero(M, M);
    std::vector<ModeState> out;
    out.push_back({0.0, phi, s, pb.conjugate()});
    for (int k = 0; k < steps; ++k) {
        ModeRhs k1 = mode_rhs(lap, V, phi, s, pb);
        ModeRhs k2 = mode_rhs(lap, V, phi + 0.5 * dt * k1.dphi, s + 0.5 * dt * k1.ds, pb + 0.5 * dt * k1.dpb);
        ModeRhs k3 = mode_rhs(lap, V, phi + 0.5 * dt * k2.dphi, s + 0.5 * dt * k2.ds, pb + 0.5 * dt * k2.dpb);
        ModeRhs k4 = mode_rhs(lap, V, phi + dt * k3.dphi, s + dt * k3.ds, pb + dt * k3.dpb);
        phi += dt / 6.0 * (k1.dphi + 2.0 * k2.dphi + 2.0 * k3.dphi + k4.dphi);
        s += dt / 6.0 * (k1.ds + 2.0 * k2.ds + 2.0 * k3.ds + k4.ds);
        pb += dt / 6.0 * (k1.dpb + 2.0 * k2.dpb + 2.0 * k3.dpb + k4.dpb);
        if (!phi.allFinite() || !s.allFinite()) throw NumericGuard("mode_dynamics: non-finite state");
        if ((k + 1) % record_every == 0) out.push_back({(k + 1) * dt, phi, s, pb.conjugate()});
    }
    return out;
}

Mat mode_k(const Mat& s2) {
    if (s2.norm() == 0.0) return Mat::Zero(s2.rows(), s2.cols());
    Takagi tk = takagi(s2);
    Eigen::VectorXd lam = tk.sigma.unaryExpr([](double x) { return 0.5 * std::asinh(x); });
    return tk.U * lam.asDiagonal() * tk.U.transpose();
}

FockVector approx_state(const FockSpace& fs, const Eigen::VectorXcd& phi, const Mat& K, double N, double tail) {
    if (std::abs(phi.squaredNorm() - 1.0) > 1e-10) throw ValidationError("approx_state: phi must have unit norm");
    FockVector chi = FockVector::vacuum(fs);
    if (K.norm() > 0.0) {
        // squeezed vacuum in a small space, then embedded: sector bases do not depend on n_max
        int nb = std::min(fs.n_max(), 8);
        for (;;) {
            FockSpace small(fs.modes(), nb);
            try {
                FockVector s = bogoliubov_state(small, K, tail);
                for (int n = 0; n <= nb; ++n) chi.blocks[n] = s.blocks[n];
                break;
            } catch (const NumericGuard&) {
                if (nb == fs.n_max()) throw;
                nb = std::min(fs.n_max(), nb + 4);
            }
        }
    }
    return apply_weyl(fs, phi, N, chi);
}

double fock_error(const FockVector& a, const FockVector& b) {
    const double na = a.norm(), nb = b.norm();
    const double d2 = na * na + nb * nb - 2.0 * std::abs(inner(a, b));
    return std::sqrt(std::max(d2, 0.0));
}

Eigen::MatrixXcd gamma1(const FockSpace& fs, const FockVector& psi) {
    const int M = fs.modes();
    std::vector<FockVector> w;
    double total = 0.0;
    for (int i = 0; i < M; ++i) {
        w.push_back(annihilate_mode(fs, i, psi));
        total += std::pow(w.back().norm(), 2);
    }
    if (!(total > 0.0)) throw ValidationError("gamma1: state carries no particles");
    Eigen::MatrixXcd g(M, M);
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < M; ++j) g(i, j) = inner(w[j], w[i]) / total;
    return g;
}

double trace_distance(const Eigen::MatrixXcd& gamma, const Eigen::VectorXcd& phi) {
    const Eigen::MatrixXcd D = gamma - phi * phi.adjoint();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (D + D.adjoint()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().sum();
}

// ---------------------------------------------------------------- sweep

FockSweep fock_sweep(const FockConfig& cfg) {
    if (cfg.Ns.size() < 3) throw ValidationError("fock_sweep: need at least 3 values of N");
    if (cfg.times.empty()) throw ValidationError("fock_sweep: no output times");
    std::vector<int> idx;
    for (double t : cfg.times) {
        const int k = static_cast<int>(std::lround(t / cfg.dt));
        if (t < 0.0 || std::abs(k * cfg.dt - t) > 1e-9) throw ValidationError("fock_sweep: times must be multiples of dt");
        if (!idx.empty() && k <= idx.back()) throw ValidationError("fock_sweep: times must increase");
        idx.push_back(k);
    }
    FockSweep sw;
    sw.config = cfg;
    const Eigen::MatrixXd lap = cfg.grid.laplacian();
    std::vector<double> eN, ek, etr;
    for (double N : cfg.Ns) {
        const int nmax = coherent_nmax(N, cfg.tail);
        FockSpace fs(cfg.grid.M, nmax, cfg.max_dim);
        const Eigen::MatrixXd V = mode_interaction(cfg.grid, cfg.v, N, cfg.beta, cfg.quadrature);
        FockHamiltonian H(fs, lap, V, N);
        const Eigen::VectorXcd phi0 = mode_gaussian(cfg.grid, cfg.width);
        const FockVector psi0 = coherent_state(fs, phi0, N, cfg.tail);
        const auto traj = mode_dynamics(cfg.grid, V, phi0, cfg.dt, idx.back());
        FockVector ex = psi0;
        double tprev = 0.0;
        for (std::size_t q = 0; q < idx.size(); ++q) {
            const ModeState& ms = traj[idx[q]];
            ex = H.evolve(ex, ms.t - tprev);
            tprev = ms.t;
            const Eigen::VectorXcd phi = ms.phi / ms.phi.norm();
            const FockVector ap = approx_state(fs, phi, mode_k(ms.s2), N, cfg.tail);
            const FockVector ap0 = coherent_state(fs, phi, N, cfg.tail);
            FockRow r;
            r.N = N;
            r.t = ms.t;
            r.error_k = fock_error(ex, ap);
            r.error_k0 = fock_error(ex, ap0);
            r.trace_distance = trace_distance(gamma1(fs, ex), phi);
            r.mean_number = ex.mean_number();
            r.truncation_tail = 1.0 - std::pow(ex.norm(), 2);
            sw.rows.push_back(r);
        }
        eN.push_back(N);
        ek.push_back(sw.rows.back().error_k);
        etr.push_back(sw.rows.back().trace_distance);
    }
    if (cfg.times.back() > 0.0) {
        sw.fit_k = fit_exponent(eN, ek);
        sw.fit_trace = fit_exponent(eN, etr);
    }
    return sw;
}

}  // namespace bl
