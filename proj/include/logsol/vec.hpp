#pragma once

#include <array>
#include <cmath>

namespace logsol {

// Spatial vectors live in a fixed two-slot array; in d = 1 the second slot is zero.
using Vec = std::array<double, 2>;

inline Vec operator+(const Vec& a, const Vec& b) { return {a[0] + b[0], a[1] + b[1]}; }
inline Vec operator-(const Vec& a, const Vec& b) { return {a[0] - b[0], a[1] - b[1]}; }
inline Vec operator-(const Vec& a) { return {-a[0], -a[1]}; }
inline Vec operator*(double s, const Vec& a) { return {s * a[0], s * a[1]}; }
inline Vec operator*(const Vec& a, double s) { return s * a; }
inline double dot(const Vec& a, const Vec& b) { return a[0] * b[0] + a[1] * b[1]; }
inline double norm(const Vec& a) { return std::hypot(a[0], a[1]); }

inline Vec unit_or_e1(const Vec& a) {
    double n = norm(a);
    if (n == 0.0) return {1.0, 0.0};
    return {a[0] / n, a[1] / n};
}

}  // namespace logsol
