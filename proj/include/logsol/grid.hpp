#pragma once

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>
#include <tuple>
#include <vector>

#include "logsol/errors.hpp"
#include "logsol/vec.hpp"

namespace logsol {

using cplx = std::complex<double>;

/// Uniform periodic grid on [-L, L)^d with N points per axis (d = 1 or 2).
class Grid {
public:
    Grid() = default;

    int d() const { return data_->d; }
    int N() const { return data_->N; }
    double L() const { return data_->L; }
    double dx() const { return data_->dx; }
    double cell_volume() const { return data_->dV; }
    std::size_t size() const { return data_->size; }
    double coord(int i) const { return -data_->L + i * data_->dx; }
    /// Wavenumber along one axis in FFT order.
    double k(int i) const { return data_->k[i]; }
    /// Wavenumber used for first derivatives (Nyquist mode zeroed).
    double k_odd(int i) const { return data_->k_odd[i]; }
    const std::vector<double>& k2() const { return data_->k2; }
    double k_max() const { return std::numbers::pi / data_->dx; }

    /// Position of flat index n (x1 is the slow axis in d = 2).
    Vec point(std::size_t n) const {
        const int N = data_->N;
        if (data_->d == 1) return {coord(static_cast<int>(n)), 0.0};
        return {coord(static_cast<int>(n / N)), coord(static_cast<int>(n % N))};
    }

    bool operator==(const Grid& o) const { return d() == o.d() && N() == o.N() && L() == o.L(); }

private:
    struct Data {
        int d = 1;
        int N = 0;
        double L = 0;
        double dx = 0;
        double dV = 0;
        std::size_t size = 0;
        std::vector<double> k, k_odd, k2;
    };
    std::shared_ptr<const Data> data_;

    friend Grid make_grid(int d, int N, double L);
};

inline Grid make_grid(int d, int N, double L) {
    if (d != 1 && d != 2) throw ResolutionTooLow("dimension must be 1 or 2");
    if (N < 2 || (N & (N - 1)) != 0) throw ResolutionTooLow("N must be a power of two");
    if (!(L > 0)) throw ResolutionTooLow("L must be positive");
    if (N * std::numbers::pi / (2 * L) < 8.0)
        throw ResolutionTooLow("max wavenumber " + std::to_string(N * std::numbers::pi / (2 * L)) + " < 8");
    auto D = std::make_shared<Grid::Data>();
    D->d = d;
    D->N = N;
    D->L = L;
    D->dx = 2 * L / N;
    D->dV = std::pow(D->dx, d);
    D->size = d == 1 ? static_cast<std::size_t>(N) : static_cast<std::size_t>(N) * N;
    D->k.resize(N);
    D->k_odd.resize(N);
    const double dk = std::numbers::pi / L;
    for (int i = 0; i < N; ++i) {
        int m = i < N / 2 ? i : i - N;
        D->k[i] = dk * m;
        D->k_odd[i] = (i == N / 2) ? 0.0 : dk * m;
    }
    D->k2.resize(D->size);
    if (d == 1) {
        for (int i = 0; i < N; ++i) D->k2[i] = D->k[i] * D->k[i];
    } else {
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < N; ++j) D->k2[static_cast<std::size_t>(i) * N + j] = D->k[i] * D->k[i] + D->k[j] * D->k[j];
    }
    Grid g;
    g.data_ = std::move(D);
    return g;
}

/// Complex samples on a Grid.
struct ComplexField {
    Grid grid;
    std::vector<cplx> values;

    ComplexField() = default;
    explicit ComplexField(const Grid& g) : grid(g), values(g.size(), cplx(0.0, 0.0)) {}
    ComplexField(const Grid& g, std::vector<cplx> v) : grid(g), values(std::move(v)) {}

    std::size_t size() const { return values.size(); }
    cplx& operator[](std::size_t n) { return values[n]; }
    const cplx& operator[](std::size_t n) const { return values[n]; }

    template <class F>
    static ComplexField sample(const Grid& g, F&& f) {
        ComplexField u(g);
        for (std::size_t n = 0; n < g.size(); ++n) u.values[n] = f(g.point(n));
        return u;
    }

    ComplexField& operator+=(const ComplexField& o) {
        for (std::size_t n = 0; n < size(); ++n) values[n] += o.values[n];
        return *this;
    }
    ComplexField& operator-=(const ComplexField& o) {
        for (std::size_t n = 0; n < size(); ++n) values[n] -= o.values[n];
        return *this;
    }
    ComplexField& operator*=(cplx s) {
        for (auto& v : values) v *= s;
        return *this;
    }
};

inline ComplexField operator+(ComplexField a, const ComplexField& b) { return a += b; }
inline ComplexField operator-(ComplexField a, const ComplexField& b) { return a -= b; }
inline ComplexField operator*(cplx s, ComplexField a) { return a *= s; }

namespace detail {

class FftPlans {
public:
    static FftPlans& instance() {
        static FftPlans plans;
        return plans;
    }

    fftw_plan get(int d, int N, int sign) {
        std::lock_guard<std::mutex> lock(mutex_);
        auto key = std::make_tuple(d, N, sign);
        auto it = plans_.find(key);
        if (it != plans_.end()) return it->second;
        std::size_t n = d == 1 ? static_cast<std::size_t>(N) : static_cast<std::size_t>(N) * N;
        fftw_complex* buf = fftw_alloc_complex(n);
        unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        fftw_plan plan = d == 1 ? fftw_plan_dft_1d(N, buf, buf, sign, flags)
                                : fftw_plan_dft_2d(N, N, buf, buf, sign, flags);
        fftw_free(buf);
        plans_.emplace(key, plan);
        return plan;
    }

    ~FftPlans() {
        for (auto& kv : plans_) fftw_destroy_plan(kv.second);
    }

private:
    std::mutex mutex_;
    std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

}  // namespace detail

/// In-place unnormalized forward transform.
inline void fft_forward(const Grid& g, std::vector<cplx>& v) {
    fftw_plan plan = detail::FftPlans::instance().get(g.d(), g.N(), FFTW_FORWARD);
    fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(v.data()), reinterpret_cast<fftw_complex*>(v.data()));
}

/// In-place inverse transform, normalized so that fft_inverse(fft_forward(v)) = v.
inline void fft_inverse(const Grid& g, std::vector<cplx>& v) {
    fftw_plan plan = detail::FftPlans::instance().get(g.d(), g.N(), FFTW_BACKWARD);
    fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(v.data()), reinterpret_cast<fftw_complex*>(v.data()));
    const double s = 1.0 / static_cast<double>(v.size());
    for (auto& x : v) x *= s;
}

/// Applies a Fourier multiplier m(k1, k2) (k2 = 0 in d = 1).
template <class M>
ComplexField apply_multiplier(const ComplexField& u, M&& m) {
    const Grid& g = u.grid;
    ComplexField out = u;
    fft_forward(g, out.values);
    const int N = g.N();
    if (g.d() == 1) {
        for (int i = 0; i < N; ++i) out.values[i] *= m(i, 0);
    } else {
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < N; ++j) out.values[static_cast<std::size_t>(i) * N + j] *= m(i, j);
    }
    fft_inverse(g, out.values);
    return out;
}

/// Spectral partial derivative along `axis` (0 or 1).
inline ComplexField partial(const ComplexField& u, int axis) {
    const Grid& g = u.grid;
    return apply_multiplier(u, [&](int i, int j) { return cplx(0.0, axis == 0 ? g.k_odd(i) : g.k_odd(j)); });
}

inline ComplexField laplacian(const ComplexField& u) {
    const Grid& g = u.grid;
    const int N = g.N();
    return apply_multiplier(u, [&](int i, int j) { return cplx(-g.k2()[g.d() == 1 ? i : i * N + j], 0.0); });
}

/// (1 - Delta)^{-1} via the multiplier 1 / (1 + |xi|^2).
inline ComplexField helmholtz_inverse(const ComplexField& u) {
    const Grid& g = u.grid;
    const int N = g.N();
    return apply_multiplier(u, [&](int i, int j) { return cplx(1.0 / (1.0 + g.k2()[g.d() == 1 ? i : i * N + j]), 0.0); });
}

/// Real pairing Re \int f conj(g).
inline double inner(const ComplexField& f, const ComplexField& g) {
    double s = 0;
    for (std::size_t n = 0; n < f.size(); ++n) s += (f.values[n] * std::conj(g.values[n])).real();
    return s * f.grid.cell_volume();
}

inline double l2_norm(const ComplexField& u) { return std::sqrt(inner(u, u)); }

inline double sup_norm(const ComplexField& u) {
    double m = 0;
    for (const auto& v : u.values) m = std::max(m, std::abs(v));
    return m;
}

/// Spectral H^1 norm: sqrt(||u||^2 + sum |xi|^2 |u_hat|^2).
inline double h1_norm(const ComplexField& u) {
    const Grid& g = u.grid;
    std::vector<cplx> uh = u.values;
    fft_forward(g, uh);
    double s = 0;
    for (std::size_t n = 0; n < uh.size(); ++n) s += (1.0 + g.k2()[n]) * std::norm(uh[n]);
    return std::sqrt(s * g.cell_volume() / static_cast<double>(uh.size()));
}

/// Periodic shift by whole grid cells (m1 along x1, m2 along x2).
inline ComplexField shift_cells(const ComplexField& u, int m1, int m2 = 0) {
    const Grid& g = u.grid;
    const int N = g.N();
    ComplexField out(g);
    auto wrap = [N](int i) { return ((i % N) + N) % N; };
    if (g.d() == 1) {
        for (int i = 0; i < N; ++i) out.values[wrap(i + m1)] = u.values[i];
    } else {
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < N; ++j)
                out.values[static_cast<std::size_t>(wrap(i + m1)) * N + wrap(j + m2)] =
                    u.values[static_cast<std::size_t>(i) * N + j];
    }
    return out;
}

/// Band-limited translation u(x) -> u(x - a) via phase multiplication.
inline ComplexField translate(const ComplexField& u, const Vec& a) {
    const Grid& g = u.grid;
    return apply_multiplier(u, [&](int i, int j) {
        double ph = g.k_odd(i) * a[0] + (g.d() == 2 ? g.k_odd(j) * a[1] : 0.0);
        return std::polar(1.0, -ph);
    });
}

inline ComplexField conj(const ComplexField& u) {
    ComplexField out = u;
    for (auto& v : out.values) v = std::conj(v);
    return out;
}

}  // namespace logsol
