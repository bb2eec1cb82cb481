#include "bosonlab/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <mutex>

namespace bl {

GridSpec::GridSpec(int d_, int n_, double L_) : d(d_), n(n_), L(L_) {
    if (d < 1 || d > 3) throw ValidationError("grid: d must be 1, 2 or 3");
    if (!is_pow2(n)) throw ValidationError("grid: n must be a power of two, got " + std::to_string(n));
    if (!(L > 0.0)) throw ValidationError("grid: L must be positive");
}

double GridSpec::xi(int m) const {
    int mm = (m < n / 2) ? m : m - n;
    return 2.0 * PI * mm / L;
}

std::vector<double> GridSpec::wavenumbers() const {
    std::vector<double> k(n);
    for (int m = 0; m < n; ++m) k[m] = xi(m);
    return k;
}

double GridSpec::max_xi2() const {
    double k = PI / dx();
    return d * k * k;
}

Field::Field(const GridSpec& g, int r) : grid(g), rank(r) {
    if (r < 1) throw ValidationError("field: rank must be >= 1");
    if (g.d * r > 4) throw ValidationError("field: d*rank exceeds the 4-axis cap");
    data.assign(ipow(g.n, g.d * r), cplx(0.0));
}

double Field::cell() const { return std::pow(grid.dx(), axes()); }

void Field::check_finite() const {
    for (const auto& z : data)
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
            throw NumericGuard("field contains NaN/Inf");
}

static void same_shape(const Field& a, const Field& b) {
    if (!(a.grid == b.grid) || a.rank != b.rank) throw ValidationError("field shape mismatch");
}

Field& Field::operator+=(const Field& o) {
    same_shape(*this, o);
    for (std::size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
    return *this;
}
Field& Field::operator-=(const Field& o) {
    same_shape(*this, o);
    for (std::size_t i = 0; i < data.size(); ++i) data[i] -= o.data[i];
    return *this;
}
Field& Field::operator*=(cplx a) {
    for (auto& z : data) z *= a;
    return *this;
}
Field operator+(Field a, const Field& b) { return a += b; }
Field operator-(Field a, const Field& b) { return a -= b; }
Field operator*(cplx a, Field b) { return b *= a; }

// ---------------------------------------------------------------- FFT backend

namespace {

std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct Plan {
    fftw_plan plan = nullptr;
    fftw_complex* buf = nullptr;
    std::size_t len = 0;
    Plan() = default;
    Plan(const Plan&) = delete;
    Plan& operator=(const Plan&) = delete;
    ~Plan() {
        std::lock_guard<std::mutex> lk(planner_mutex());
        if (plan) fftw_destroy_plan(plan);
        if (buf) fftw_free(buf);
    }
};

// Plans live in an aligned, plan-owned buffer so execution is bit-reproducible
// regardless of where the caller's data sits.
Plan& get_plan(std::span<const int> dims, int sign) {
    thread_local std::map<std::pair<std::vector<int>, int>, Plan> cache;
    std::vector<int> key(dims.begin(), dims.end());
    auto it = cache.find({key, sign});
    if (it != cache.end()) return it->second;
    auto& p = cache[{key, sign}];
    std::size_t len = 1;
    for (int n : key) len *= static_cast<std::size_t>(n);
    std::lock_guard<std::mutex> lk(planner_mutex());
    p.len = len;
    p.buf = fftw_alloc_complex(len);
    p.plan = fftw_plan_dft(static_cast<int>(key.size()), key.data(), p.buf, p.buf,
                           sign < 0 ? FFTW_FORWARD : FFTW_BACKWARD, FFTW_ESTIMATE);
    return p;
}

}  // namespace

void fft_inplace(cplx* data, std::span<const int> dims, int sign) {
    if (dims.size() > 4) throw ValidationError("fft: more than 4 axes");
    for (int n : dims)
        if (!is_pow2(n)) throw ValidationError("fft: axis length must be a power of two");
    Plan& p = get_plan(dims, sign);
    std::memcpy(p.buf, data, p.len * sizeof(cplx));
    fftw_execute(p.plan);
    const double s = 1.0 / std::sqrt(static_cast<double>(p.len));
    auto* src = reinterpret_cast<cplx*>(p.buf);
    for (std::size_t i = 0; i < p.len; ++i) data[i] = src[i] * s;
}

Field fft_forward(const Field& f) {
    Field out = f;
    auto dims = f.dims();
    fft_inplace(out.data.data(), dims, -1);
    return out;
}

Field fft_inverse(const Field& f) {
    Field out = f;
    auto dims = f.dims();
    fft_inplace(out.data.data(), dims, +1);
    return out;
}

// ---------------------------------------------------------------- norms

double l2_norm(const Field& f) {
    double s = 0.0;
    for (const auto& z : f.data) s += std::norm(z);
    return std::sqrt(s * f.cell());
}

double lp_norm(const Field& f, double p) {
    double s = 0.0;
    for (const auto& z : f.data) s += std::pow(std::abs(z), p);
    return std::pow(s * f.cell(), 1.0 / p);
}

double linf_norm(const Field& f) {
    double m = 0.0;
    for (const auto& z : f.data) m = std::max(m, std::abs(z));
    return m;
}

cplx inner(const Field& f, const Field& g) {
    same_shape(f, g);
    cplx s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += std::conj(f.data[i]) * g.data[i];
    return s * f.cell();
}

namespace {

// Iterate over all multi-indices of a field, exposing the wavevector of each bin.
template <class Fn>
void for_each_mode(const Field& f, Fn&& fn) {
    const int A = f.axes();
    const int n = f.grid.n;
    const auto k = f.grid.wavenumbers();
    std::vector<double> kv(A);
    std::vector<int> idx(A, 0);
    for (std::size_t lin = 0; lin < f.size(); ++lin) {
        for (int a = 0; a < A; ++a) kv[a] = k[idx[a]];
        fn(lin, std::span<const double>(kv));
        for (int a = A - 1; a >= 0; --a) {
            if (++idx[a] < n) break;
            idx[a] = 0;
        }
    }
}

}  // namespace

double sobolev_norm(const Field& f, double sigma) {
    if (sigma < -2.0) throw ValidationError("sobolev_norm: sigma must be >= -2");
    Field fh = fft_forward(f);
    double s = 0.0;
    for_each_mode(fh, [&](std::size_t lin, std::span<const double> k) {
        double k2 = 0.0;
        for (double v : k) k2 += v * v;
        s += std::pow(1.0 + k2, sigma) * std::norm(fh.data[lin]);
    });
    return std::sqrt(s * f.cell());
}

double weighted_l2(const Field& g, const Multiplier& weight) {
    Field gh = fft_forward(g);
    double s = 0.0;
    for_each_mode(gh, [&](std::size_t lin, std::span<const double> k) {
        double w = weight(k);
        bool zero = std::all_of(k.begin(), k.end(), [](double v) { return v == 0.0; });
        if (!std::isfinite(w)) {
            if (zero) return;
            throw ValidationError("weighted_l2: weight is not finite at a nonzero mode");
        }
        s += w * std::norm(gh.data[lin]);
    });
    return std::sqrt(s * g.cell());
}

Field convolve(const Field& f, const Field& g) {
    if (!(f.grid == g.grid)) throw ValidationError("convolve: grid mismatch");
    if (f.rank != 1 || g.rank != 1) throw ValidationError("convolve: rank-1 fields only");
    Field fh = fft_forward(f), gh = fft_forward(g);
    const double scale = std::sqrt(static_cast<double>(f.size())) * f.cell();
    for (std::size_t i = 0; i < fh.size(); ++i) fh.data[i] *= gh.data[i] * scale;
    Field c = fft_inverse(fh);
    // Index j of the circular sum sits at x = j dx; shift back to the centred grid.
    const int n = f.grid.n, d = f.grid.d, h = n / 2;
    Field out(f.grid, 1);
    std::vector<int> idx(d, 0);
    for (std::size_t lin = 0; lin < out.size(); ++lin) {
        std::size_t src = 0;
        for (int a = 0; a < d; ++a) src = src * n + static_cast<std::size_t>((idx[a] + h) % n);
        out.data[lin] = c.data[src];
        for (int a = d - 1; a >= 0; --a) {
            if (++idx[a] < n) break;
            idx[a] = 0;
        }
    }
    return out;
}

double mixed_norm(const Field& u, OuterNorm outer) {
    if (u.rank != 2) throw ValidationError("mixed_norm: rank-2 field required");
    const std::size_t m = ipow(u.grid.n, u.grid.d);
    const double cell = std::pow(u.grid.dx(), u.grid.d);
    double acc = 0.0;
    for (std::size_t y = 0; y < m; ++y) {
        double col = 0.0;
        for (std::size_t x = 0; x < m; ++x) col += std::norm(u.data[x * m + y]);
        double c = std::sqrt(col * cell);
        if (outer == OuterNorm::Linf)
            acc = std::max(acc, c);
        else
            acc += c * c * c * c * cell;
    }
    return outer == OuterNorm::Linf ? acc : std::pow(acc, 0.25);
}

Field apply_multiplier(const Field& f, const std::function<cplx(std::span<const double>)>& m) {
    Field fh = fft_forward(f);
    for_each_mode(fh, [&](std::size_t lin, std::span<const double> k) { fh.data[lin] *= m(k); });
    return fft_inverse(fh);
}

Field sample(const GridSpec& g, const std::function<cplx(std::span<const double>)>& f) {
    Field out(g, 1);
    std::vector<int> idx(g.d, 0);
    std::vector<double> x(g.d);
    for (std::size_t lin = 0; lin < out.size(); ++lin) {
        for (int a = 0; a < g.d; ++a) x[a] = g.x(idx[a]);
        out.data[lin] = f(x);
        for (int a = g.d - 1; a >= 0; --a) {
            if (++idx[a] < g.n) break;
            idx[a] = 0;
        }
    }
    return out;
}

}  // namespace bl
