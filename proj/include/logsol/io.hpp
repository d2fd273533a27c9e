#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "logsol/errors.hpp"
#include "logsol/grid.hpp"

namespace logsol {

/// Writes a header line and rows of numbers as CSV.
inline void write_csv(const std::string& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
    std::ofstream f(path);
    if (!f) throw IoFailure("cannot open " + path);
    for (std::size_t i = 0; i < header.size(); ++i) f << (i ? "," : "") << header[i];
    f << '\n' << std::setprecision(17);
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) f << (i ? "," : "") << r[i];
        f << '\n';
    }
    if (!f) throw IoFailure("write failed: " + path);
}

namespace detail {

template <class T>
void put_le(std::ostream& os, T v) {
    static_assert(std::endian::native == std::endian::little, "little-endian host expected");
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    os.write(buf, sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
    char buf[sizeof(T)];
    if (!is.read(buf, sizeof(T))) throw IoFailure("truncated snapshot");
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

}  // namespace detail

/// Snapshot layout: int32 d, int32 N, float64 L, float64 t, then interleaved re/im float64.
inline void write_snapshot(const std::string& path, const ComplexField& u, double t) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoFailure("cannot open " + path);
    detail::put_le<std::int32_t>(f, u.grid.d());
    detail::put_le<std::int32_t>(f, u.grid.N());
    detail::put_le<double>(f, u.grid.L());
    detail::put_le<double>(f, t);
    for (const auto& v : u.values) {
        detail::put_le<double>(f, v.real());
        detail::put_le<double>(f, v.imag());
    }
    if (!f) throw IoFailure("write failed: " + path);
}

struct Snapshot {
    ComplexField field;
    double t = 0;
};

inline Snapshot read_snapshot(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoFailure("cannot open " + path);
    const int d = detail::get_le<std::int32_t>(f);
    const int N = detail::get_le<std::int32_t>(f);
    const double L = detail::get_le<double>(f);
    Snapshot s;
    s.t = detail::get_le<double>(f);
    s.field = ComplexField(make_grid(d, N, L));
    for (auto& v : s.field.values) {
        double re = detail::get_le<double>(f);
        double im = detail::get_le<double>(f);
        v = cplx(re, im);
    }
    return s;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t h) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

}  // namespace logsol
