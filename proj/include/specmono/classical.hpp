#pragma once

// Completely integrable and nearly integrable Hamiltonians in angle-action
// coordinates: frequency and rotation-number maps, Kolmogorov
// non-degeneracy, Diophantine sieving, torus and time averages, and the
// good-value sieve along an energy curve.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "specmono/core.hpp"

namespace specmono {

// ---------------------------------------------------------------------------
// Domain types

struct ActionPoint {
    double xi1 = 0.0;
    double xi2 = 0.0;

    ActionPoint() = default;
    ActionPoint(double a, double b) : xi1(a), xi2(b) {
        if (!std::isfinite(xi1) || !std::isfinite(xi2))
            throw DomainError("ActionPoint: non-finite component");
    }
    explicit ActionPoint(Vec2 v) : ActionPoint(v.x, v.y) {}
    Vec2 vec() const { return {xi1, xi2}; }
};

// Angles, reduced to the canonical representative in [0, 2pi)^2.
struct AnglePoint {
    double x1 = 0.0;
    double x2 = 0.0;

    AnglePoint() = default;
    AnglePoint(double a, double b) : x1(wrap(a)), x2(wrap(b)) {}

    static double wrap(double t) {
        double r = std::fmod(t, two_pi);
        if (r < 0.0) r += two_pi;
        return r;
    }
};

struct FrequencyVector {
    double omega1 = 0.0;
    double omega2 = 0.0;
    Vec2 vec() const { return {omega1, omega2}; }
    double norm() const { return vec().norm(); }
};

struct IntegrableModel {
    // Unperturbed integrable Hamiltonian p(xi); must not depend on angles.
    std::function<double(ActionPoint)> p;
    // Optional exact derivatives. When absent, central differences are used.
    std::function<Vec2(ActionPoint)> grad_p;
    std::function<Mat2(ActionPoint)> hess_p;
    // Perturbation direction q(x, xi), 2pi-periodic in each angle, real.
    std::function<double(AnglePoint, ActionPoint)> q;
    // Nearly-integrable perturbation p1(x, xi).
    std::function<double(AnglePoint, ActionPoint)> p1;
    Rect action_domain{{0.0, 0.0}, {2.0, 2.0}};
    // Parametrization of the energy curve {p = E}, t in [0,1). Optional.
    std::function<ActionPoint(double E, double t)> energy_curve;
    // Declared singular-fiber vertices (graph S). Empty in the single-edge
    // model; non-empty declarations only trigger a sieve flag.
    std::vector<double> vertices;
    std::string name = "custom";

    bool in_domain(ActionPoint xi) const {
        return action_domain.contains(xi.vec());
    }
};

struct DiophantineVerdict {
    bool is_diophantine = false;
    std::array<std::int64_t, 2> worst_k{0, 0};
    double margin = 0.0;  // min over tested k of |<w,k>| * |k|^(1+d) - alpha
    int k_max = 0;        // truncation actually used
};

struct SemiclassicalRegime {
    double h = 1e-4;
    double eps = 1e-2;
    double delta = 0.5;
    double lambda = 1e-6;
    double alpha = 1e-2;
    double d = 1.0;
};

struct RegimeCheckItem {
    std::string name;
    bool pass = false;
    double slack = 0.0;  // >= 0 when the constraint holds
};

struct RegimeReport {
    std::vector<RegimeCheckItem> checks;
    bool all_pass = true;
};

// ---------------------------------------------------------------------------
// Model catalog

inline IntegrableModel make_quadratic_model() {
    IntegrableModel m;
    m.name = "quadratic";
    m.p = [](ActionPoint xi) { return 0.5 * (xi.xi1 * xi.xi1 + xi.xi2 * xi.xi2); };
    m.grad_p = [](ActionPoint xi) { return Vec2{xi.xi1, xi.xi2}; };
    m.hess_p = [](ActionPoint) { return Mat2::identity(); };
    m.q = [](AnglePoint x, ActionPoint xi) { return std::cos(x.x1) + xi.xi2; };
    m.p1 = [](AnglePoint x, ActionPoint xi) { return std::cos(x.x1 + x.x2) * xi.xi1; };
    m.action_domain = Rect{{0.0, 0.0}, {4.0, 4.0}};
    m.energy_curve = [](double E, double t) {
        if (E <= 0.0) throw NoCurveError("quadratic model: empty energy curve");
        const double r = std::sqrt(2.0 * E);
        return ActionPoint{r * std::cos(two_pi * t), r * std::sin(two_pi * t)};
    };
    return m;
}

inline IntegrableModel make_linear_degenerate_model(double a = 1.0, double b = 2.0) {
    IntegrableModel m;
    m.name = "linear-degenerate";
    m.p = [a, b](ActionPoint xi) { return a * xi.xi1 + b * xi.xi2; };
    m.grad_p = [a, b](ActionPoint) { return Vec2{a, b}; };
    m.hess_p = [](ActionPoint) { return Mat2{}; };
    m.q = [](AnglePoint x, ActionPoint xi) { return std::cos(x.x1) + xi.xi2; };
    m.p1 = [](AnglePoint, ActionPoint) { return 0.0; };
    m.action_domain = Rect{{0.0, 0.0}, {4.0, 4.0}};
    // {p = E} is the line a*xi1 + b*xi2 = E; rotation number is constant.
    m.energy_curve = [a, b](double E, double t) {
        const Vec2 dir = Vec2{-b, a} / std::hypot(a, b);
        const Vec2 base = Vec2{a, b} * (E / (a * a + b * b));
        const Vec2 xi = base + dir * (4.0 * (t - 0.5));
        return ActionPoint{xi.x, xi.y};
    };
    return m;
}

// q(x, xi) = a0 + a1*xi2 + sum_j c_j cos(m_j x1 + n_j x2)
struct TrigTerm {
    int m = 0;
    int n = 0;
    double c = 0.0;
};

inline IntegrableModel make_trig_poly_model(std::vector<TrigTerm> terms,
                                            double a0 = 0.0, double a1 = 1.0) {
    IntegrableModel m = make_quadratic_model();
    m.name = "trigpoly";
    m.q = [terms = std::move(terms), a0, a1](AnglePoint x, ActionPoint xi) {
        double v = a0 + a1 * xi.xi2;
        for (const auto& t : terms) v += t.c * std::cos(t.m * x.x1 + t.n * x.x2);
        return v;
    };
    return m;
}

// ---------------------------------------------------------------------------
// Frequency and rotation number

namespace detail {
inline double fd_step(const IntegrableModel& model) {
    return 1e-5 * model.action_domain.diameter();
}
}  // namespace detail

inline FrequencyVector frequency(const IntegrableModel& model, ActionPoint xi) {
    if (!model.in_domain(xi))
        throw DomainError("frequency: action point outside domain");
    if (model.grad_p) {
        const Vec2 g = model.grad_p(xi);
        return {g.x, g.y};
    }
    const double s = detail::fd_step(model);
    const double w1 = (model.p({xi.xi1 + s, xi.xi2}) - model.p({xi.xi1 - s, xi.xi2})) / (2 * s);
    const double w2 = (model.p({xi.xi1, xi.xi2 + s}) - model.p({xi.xi1, xi.xi2 - s})) / (2 * s);
    return {w1, w2};
}

// Normalized representative of [w1 : w2]: unit vector, first nonzero
// component positive.
inline Vec2 rotation_number(FrequencyVector omega) {
    const double n = omega.norm();
    if (n == 0.0)
        throw DegenerateTorusError("rotation_number: zero frequency");
    Vec2 u = omega.vec() / n;
    if (u.x < 0.0 || (u.x == 0.0 && u.y < 0.0)) u = -u;
    return u;
}

inline Vec2 rotation_number(const IntegrableModel& model, ActionPoint xi) {
    return rotation_number(frequency(model, xi));
}

// ---------------------------------------------------------------------------
// Kolmogorov non-degeneracy

inline Mat2 hessian(const IntegrableModel& model, ActionPoint xi) {
    if (model.hess_p) return model.hess_p(xi);
    const double s = detail::fd_step(model);
    auto p = [&](double a, double b) { return model.p({a, b}); };
    const double pxx =
        (p(xi.xi1 + s, xi.xi2) - 2 * p(xi.xi1, xi.xi2) + p(xi.xi1 - s, xi.xi2)) / (s * s);
    const double pyy =
        (p(xi.xi1, xi.xi2 + s) - 2 * p(xi.xi1, xi.xi2) + p(xi.xi1, xi.xi2 - s)) / (s * s);
    const double pxy = (p(xi.xi1 + s, xi.xi2 + s) - p(xi.xi1 + s, xi.xi2 - s) -
                        p(xi.xi1 - s, xi.xi2 + s) + p(xi.xi1 - s, xi.xi2 - s)) /
                       (4 * s * s);
    return {pxx, pxy, pxy, pyy};
}

struct KolmogorovResult {
    bool nondegenerate = false;
    double min_abs_det = 0.0;
};

inline KolmogorovResult kolmogorov_check(const IntegrableModel& model, Rect region,
                                         int grid_n, double threshold = 1e-6) {
    if (grid_n < 2) throw PreconditionError("kolmogorov_check: grid_n >= 2 required");
    if (!model.action_domain.contains(Vec2{region.lo_x(), region.lo_y()}) ||
        !model.action_domain.contains(Vec2{region.hi_x(), region.hi_y()}))
        throw DomainError("kolmogorov_check: region not contained in action domain");
    double min_det = std::numeric_limits<double>::infinity();
    for (int i = 0; i < grid_n; ++i) {
        for (int j = 0; j < grid_n; ++j) {
            const double x = region.lo_x() + (region.hi_x() - region.lo_x()) * i / (grid_n - 1);
            const double y = region.lo_y() + (region.hi_y() - region.lo_y()) * j / (grid_n - 1);
            min_det = std::min(min_det, std::abs(hessian(model, {x, y}).det()));
        }
    }
    return {min_det > threshold, min_det};
}

// ---------------------------------------------------------------------------
// Diophantine condition

// Brute force over all k != 0 with |k|_inf <= k_max. Margin uses the
// Euclidean norm |k| of the inequality |<w,k>| >= alpha / |k|^(1+d).
inline DiophantineVerdict is_diophantine(FrequencyVector omega, double alpha, double d,
                                         int k_max = 1000) {
    if (alpha <= 0.0 || d <= 0.0 || k_max < 1)
        throw PreconditionError("is_diophantine: alpha > 0, d > 0, k_max >= 1 required");
    const Vec2 w = omega.vec();
    double best = std::numeric_limits<double>::infinity();
    std::array<std::int64_t, 2> best_k{0, 0};
    // Half lattice: k1 > 0, or k1 == 0 && k2 > 0 (the condition is even in k).
    for (int k1 = 0; k1 <= k_max; ++k1) {
        const int j_lo = (k1 == 0) ? 1 : -k_max;
        for (int k2 = j_lo; k2 <= k_max; ++k2) {
            if (k1 == 0 && k2 == 0) continue;
            const double pairing = std::abs(w.x * k1 + w.y * k2);
            const double knorm = std::hypot(double(k1), double(k2));
            const double v = pairing * std::pow(knorm, 1.0 + d);
            if (v < best) {
                best = v;
                best_k = {k1, k2};
            }
        }
    }
    DiophantineVerdict verdict;
    verdict.margin = best - alpha;
    verdict.is_diophantine = verdict.margin >= 0.0;
    verdict.worst_k = best_k;
    verdict.k_max = k_max;
    return verdict;
}

namespace detail {

// Violation-only test, O(k_max): for each k1 only the k2 nearest to the
// resonance line can violate, provided the pivot component of w exceeds
// 2*alpha (then the resonance band is narrower than the lattice spacing).
// Falls back to the full scan otherwise.
inline bool diophantine_fails_fast(Vec2 w, double alpha, double d, int k_max) {
    double wa = w.x, wb = w.y;
    bool swapped = false;
    if (std::abs(wb) < std::abs(wa)) {
        std::swap(wa, wb);
        swapped = true;
    }
    if (std::abs(wb) <= 2.0 * alpha) {
        FrequencyVector f{w.x, w.y};
        return !is_diophantine(f, alpha, d, k_max).is_diophantine;
    }
    (void)swapped;  // the condition is symmetric in the two components
    // k = (k1, k2) in swapped coordinates: pairing = wa*k1 + wb*k2.
    for (int k1 = 0; k1 <= k_max; ++k1) {
        if (k1 == 0) {
            // best k2 is +/-1
            if (std::abs(wb) < alpha) return true;
            continue;
        }
        const double k2_star = -double(k1) * wa / wb;
        const auto k2_mid = (std::int64_t)std::llround(k2_star);
        for (std::int64_t k2 = k2_mid - 1; k2 <= k2_mid + 1; ++k2) {
            if (std::abs(k2) > k_max) continue;
            if (k2 == 0 && k1 == 0) continue;
            const double pairing = std::abs(wa * k1 + wb * double(k2));
            const double knorm = std::hypot(double(k1), double(k2));
            if (pairing * std::pow(knorm, 1.0 + d) < alpha) return true;
        }
    }
    return false;
}

}  // namespace detail

// Monte-Carlo estimate of the fraction of `box` (in frequency space)
// violating the (alpha, d) condition truncated at |k|_inf <= k_max.
// Deterministic for a fixed seed; alpha = 0 counts exact resonances only.
inline double diophantine_complement_measure(Rect box, double alpha, double d, int k_max,
                                             int samples, std::uint64_t seed) {
    if (samples < 100)
        throw PreconditionError("diophantine_complement_measure: samples >= 100 required");
    if (alpha < 0.0 || d <= 0.0 || k_max < 1)
        throw PreconditionError("diophantine_complement_measure: bad parameters");
    std::int64_t fails = 0;
    for (int i = 0; i < samples; ++i) {
        const double u = rng::uniform(seed, std::uint64_t(i), 0);
        const double v = rng::uniform(seed, std::uint64_t(i), 1);
        const Vec2 w{box.lo_x() + (box.hi_x() - box.lo_x()) * u,
                     box.lo_y() + (box.hi_y() - box.lo_y()) * v};
        if (alpha == 0.0) continue;  // exact resonances have measure zero
        if (detail::diophantine_fails_fast(w, alpha, d, k_max)) ++fails;
    }
    return double(fails) / double(samples);
}

// ---------------------------------------------------------------------------
// Averages

// Product-grid quadrature over the torus; exact for trigonometric
// polynomials with harmonics below grid_n.
inline double torus_average(const IntegrableModel& model, ActionPoint xi, int grid_n = 64) {
    if (grid_n < 4) throw PreconditionError("torus_average: grid_n >= 4 required");
    double sum = 0.0;
    for (int i = 0; i < grid_n; ++i)
        for (int j = 0; j < grid_n; ++j)
            sum += model.q(AnglePoint{two_pi * i / grid_n, two_pi * j / grid_n}, xi);
    return sum / (double(grid_n) * double(grid_n));
}

// Symmetric time average (1/T) int_{-T/2}^{T/2} q(x0 + t*w(xi), xi) dt
// along the linear torus flow, by composite 4-point Gauss-Legendre.
inline double time_average(const IntegrableModel& model, ActionPoint xi, AnglePoint x0,
                           double T) {
    if (T <= 0.0) throw PreconditionError("time_average: T > 0 required");
    const Vec2 w = frequency(model, xi).vec();
    const double rate = std::max(1.0, w.norm_inf());
    const auto n = (std::int64_t)std::ceil(T * rate / 0.125);
    const double dt = T / double(n);
    // 4-point Gauss-Legendre nodes/weights on [-1, 1]
    static const double gx[2] = {0.3399810435848563, 0.8611363115940526};
    static const double gw[2] = {0.6521451548625461, 0.3478548451374538};
    double sum = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double mid = -T / 2 + (double(i) + 0.5) * dt;
        for (int g = 0; g < 2; ++g) {
            for (int s = -1; s <= 1; s += 2) {
                const double t = mid + s * gx[g] * dt / 2;
                sum += gw[g] * model.q(AnglePoint{x0.x1 + t * w.x, x0.x2 + t * w.y}, xi);
            }
        }
    }
    return sum * dt / (2.0 * T);
}

// ---------------------------------------------------------------------------
// Good-value sieve

struct SieveEntry {
    double G = 0.0;  // torus average of q, the candidate good value
    ActionPoint xi;
    FrequencyVector omega;
    double dioph_margin = 0.0;
    double dq_norm = 0.0;
    double rho_prime = 0.0;
};

struct SieveResult {
    std::vector<SieveEntry> retained;
    int n_sampled = 0;
    int excluded_diophantine = 0;
    int excluded_dq = 0;
    int excluded_rho = 0;
    int excluded_domain = 0;
    bool rho_constant_flag = false;      // every sample failed the rho' test
    bool vertex_rule_skipped = false;    // model declares vertices; dist(a,S) rule not applied
};

namespace detail {

inline Vec2 grad_torus_average(const IntegrableModel& model, ActionPoint xi, int grid_n) {
    const double s = fd_step(model);
    const double gx = (torus_average(model, {xi.xi1 + s, xi.xi2}, grid_n) -
                       torus_average(model, {xi.xi1 - s, xi.xi2}, grid_n)) /
                      (2 * s);
    const double gy = (torus_average(model, {xi.xi1, xi.xi2 + s}, grid_n) -
                       torus_average(model, {xi.xi1, xi.xi2 - s}, grid_n)) /
                      (2 * s);
    return {gx, gy};
}

// |d(rho)/ds| along the energy curve, arc-length finite differences of the
// normalized projective representative at fixed curve-parameter step.
inline double rho_prime_along_curve(const IntegrableModel& model, double E, double t) {
    const double dt = 1e-4;
    const ActionPoint xp = model.energy_curve(E, t + dt);
    const ActionPoint xm = model.energy_curve(E, t - dt);
    Vec2 rp = rotation_number(model, xp);
    Vec2 rm = rotation_number(model, xm);
    if (rp.dot(rm) < 0.0) rm = -rm;  // representative sign flip across x = 0
    const double ds = (xp.vec() - xm.vec()).norm();
    if (ds == 0.0) return 0.0;
    return (rp - rm).norm() / ds;
}

}  // namespace detail

inline SieveResult good_value_sieve(const IntegrableModel& model, double E, double alpha,
                                    double d, int k_max, int n_samples, int grid_n = 64) {
    if (!model.energy_curve)
        throw NoCurveError("good_value_sieve: model supplies no energy-curve parametrization");
    SieveResult result;
    result.vertex_rule_skipped = !model.vertices.empty();
    int rho_failures = 0;
    for (int i = 0; i < n_samples; ++i) {
        const double t = double(i) / double(n_samples);
        ActionPoint xi;
        try {
            xi = model.energy_curve(E, t);
        } catch (const NoCurveError&) {
            throw;
        }
        if (!model.in_domain(xi)) {
            ++result.excluded_domain;
            continue;
        }
        ++result.n_sampled;
        SieveEntry entry;
        entry.xi = xi;
        entry.omega = frequency(model, xi);
        entry.G = torus_average(model, xi, grid_n);

        const bool dioph_ok =
            !detail::diophantine_fails_fast(entry.omega.vec(), alpha, d, k_max);
        entry.dioph_margin = dioph_ok ? 0.0 : -1.0;  // sign only; exact margin is costly
        entry.dq_norm = detail::grad_torus_average(model, xi, grid_n).norm();
        entry.rho_prime = detail::rho_prime_along_curve(model, E, t);

        if (!dioph_ok) {
            ++result.excluded_diophantine;
            continue;
        }
        if (entry.dq_norm < alpha) {
            ++result.excluded_dq;
            continue;
        }
        if (entry.rho_prime < alpha) {
            ++result.excluded_rho;
            ++rho_failures;
            continue;
        }
        result.retained.push_back(entry);
    }
    result.rho_constant_flag =
        result.n_sampled > 0 && result.retained.empty() &&
        result.excluded_rho == result.n_sampled;
    (void)rho_failures;
    return result;
}

// ---------------------------------------------------------------------------
// Regime diagnostics

inline RegimeReport regime_check(const SemiclassicalRegime& r, double big_C = 1.0) {
    RegimeReport report;
    auto add = [&](std::string name, bool pass, double slack) {
        report.checks.push_back({std::move(name), pass, slack});
        report.all_pass = report.all_pass && pass;
    };
    add("h > 0", r.h > 0.0, r.h);
    add("eps > 0", r.eps > 0.0, r.eps);
    add("delta in (0,1)", r.delta > 0.0 && r.delta < 1.0,
        std::min(r.delta, 1.0 - r.delta));
    add("lambda >= 0", r.lambda >= 0.0, r.lambda);
    add("alpha > 0", r.alpha > 0.0, r.alpha);
    add("d > 0", r.d > 0.0, r.d);
    add("h < eps", r.h < r.eps, r.eps - r.h);
    const double bound = big_C * std::pow(r.h, r.delta);
    add("eps <= C*h^delta", r.eps <= bound, bound - r.eps);
    add("lambda < alpha^2", r.lambda < r.alpha * r.alpha, r.alpha * r.alpha - r.lambda);
    return report;
}

}  // namespace specmono
