#pragma once

// Small shared vocabulary: 2-vectors, 2x2 real and integer matrices,
// axis-aligned rectangles, counter-based RNG and error types used
// throughout the library.

#include <array>
#include <cmath>
#include <limits>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>

namespace specmono {

inline constexpr double two_pi = 6.283185307179586476925286766559;

// ---------------------------------------------------------------------------
// Errors

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DomainError : Error { using Error::Error; };
struct PreconditionError : Error { using Error::Error; };
struct DegenerateTorusError : Error { using Error::Error; };
struct NoCurveError : Error { using Error::Error; };
struct InsufficientDataError : Error { using Error::Error; };
struct DetectionError : Error { using Error::Error; };
struct LabelingError : Error {
    LabelingError(const std::string& msg, double fraction)
        : Error(msg), fraction_labeled(fraction) {}
    double fraction_labeled;
};
struct FitError : Error { using Error::Error; };
struct NonIntegerTransitionError : Error { using Error::Error; };
struct NonUnimodularError : Error { using Error::Error; };
struct IncompleteCoverError : Error { using Error::Error; };
struct ConsistencyError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

// ---------------------------------------------------------------------------
// Vec2

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2 operator/(double s) const { return {x / s, y / s}; }
    Vec2 operator-() const { return {-x, -y}; }
    Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
    Vec2& operator-=(Vec2 o) { x -= o.x; y -= o.y; return *this; }

    double norm() const { return std::hypot(x, y); }
    double norm_inf() const { return std::max(std::abs(x), std::abs(y)); }
    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double cross(Vec2 o) const { return x * o.y - y * o.x; }
    bool finite() const { return std::isfinite(x) && std::isfinite(y); }
};

inline Vec2 operator*(double s, Vec2 v) { return v * s; }

// ---------------------------------------------------------------------------
// 2x2 real matrix, row major

struct Mat2 {
    double a = 0, b = 0, c = 0, d = 0;  // [[a,b],[c,d]]

    static Mat2 identity() { return {1, 0, 0, 1}; }

    double det() const { return a * d - b * c; }

    Mat2 inverse() const {
        const double dt = det();
        if (dt == 0.0) throw Error("Mat2: singular matrix");
        return {d / dt, -b / dt, -c / dt, a / dt};
    }

    Mat2 transpose() const { return {a, c, b, d}; }

    Mat2 operator*(const Mat2& o) const {
        return {a * o.a + b * o.c, a * o.b + b * o.d,
                c * o.a + d * o.c, c * o.b + d * o.d};
    }
    Vec2 operator*(Vec2 v) const { return {a * v.x + b * v.y, c * v.x + d * v.y}; }
    Mat2 operator*(double s) const { return {a * s, b * s, c * s, d * s}; }
    Mat2 operator+(const Mat2& o) const { return {a + o.a, b + o.b, c + o.c, d + o.d}; }
    Mat2 operator-(const Mat2& o) const { return {a - o.a, b - o.b, c - o.c, d - o.d}; }

    double max_abs() const {
        return std::max(std::max(std::abs(a), std::abs(b)),
                        std::max(std::abs(c), std::abs(d)));
    }
};

// ---------------------------------------------------------------------------
// 2x2 integer matrix (exact arithmetic)

struct Mat2i {
    std::int64_t a = 0, b = 0, c = 0, d = 0;

    static Mat2i identity() { return {1, 0, 0, 1}; }

    std::int64_t det() const { return a * d - b * c; }
    std::int64_t trace() const { return a + d; }

    bool unimodular() const { const auto dt = det(); return dt == 1 || dt == -1; }

    // Valid only for unimodular matrices: the exact integer inverse.
    Mat2i inverse() const {
        const auto dt = det();
        if (dt != 1 && dt != -1)
            throw NonUnimodularError("Mat2i: inverse requires det = +/-1");
        return {dt * d, -dt * b, -dt * c, dt * a};
    }

    Mat2i transpose() const { return {a, c, b, d}; }

    Mat2i operator*(const Mat2i& o) const {
        return {a * o.a + b * o.c, a * o.b + b * o.d,
                c * o.a + d * o.c, c * o.b + d * o.d};
    }
    bool operator==(const Mat2i& o) const = default;

    Mat2 to_real() const {
        return {double(a), double(b), double(c), double(d)};
    }
};

// ---------------------------------------------------------------------------
// Axis-aligned rectangle

struct Rect {
    Vec2 center;
    Vec2 half;  // half widths, both > 0

    double lo_x() const { return center.x - half.x; }
    double hi_x() const { return center.x + half.x; }
    double lo_y() const { return center.y - half.y; }
    double hi_y() const { return center.y + half.y; }

    bool contains(Vec2 p, double inflate = 0.0) const {
        return std::abs(p.x - center.x) <= half.x * (1.0 + inflate) &&
               std::abs(p.y - center.y) <= half.y * (1.0 + inflate);
    }

    double diameter() const { return 2.0 * half.norm(); }
};

// ---------------------------------------------------------------------------
// Counter-based RNG. Stateless: every draw is a hash of (seed, counters),
// so parallel generation is deterministic regardless of evaluation order.

namespace rng {

inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t hash(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                          std::uint64_t c = 0) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b);
    h = splitmix64(h ^ c);
    return h;
}

// uniform in [0, 1)
inline double u01(std::uint64_t h) {
    return double(h >> 11) * 0x1.0p-53;
}

inline double uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                      std::uint64_t c = 0) {
    return u01(hash(seed, a, b, c));
}

// standard normal pair via Box-Muller
inline Vec2 normal_pair(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                        std::uint64_t c = 0) {
    const double u1 = u01(hash(seed, a, b, c)) + 0x1.0p-54;  // avoid log(0)
    const double u2 = u01(hash(seed ^ 0x5851f42d4c957f2dULL, a, b, c));
    const double r = std::sqrt(-2.0 * std::log(u1));
    return {r * std::cos(two_pi * u2), r * std::sin(two_pi * u2)};
}

}  // namespace rng

// FNV-1a 64-bit content hash, used for run manifests.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[std::size_t(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

}  // namespace specmono
