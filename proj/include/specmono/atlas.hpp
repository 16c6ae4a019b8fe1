#pragma once

// Quantization atlases over an annulus in the rescaled spectral plane and
// eigenvalue synthesis: chart branch maps, planted integer transition
// cocycle, good rectangles, and the Newton solve that places one eigenvalue
// per lattice point.

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "specmono/classical.hpp"
#include "specmono/core.hpp"

namespace specmono {

// ---------------------------------------------------------------------------
// Domain types

struct Annulus {
    Vec2 center{1.0, 0.4};
    double r_min = 0.008;
    double r_max = 0.014;
};

struct ChartSpec {
    int chart_id = 0;
    double angle_lo = 0.0;    // sector bounds, radians
    double angle_hi = 0.0;
    // Continuous angle branch: theta_j(w) = branch_center + wrap_pi(atan2(w) - branch_center).
    double branch_center = 0.0;
    bool has_cut_term = false;  // focus-focus charts carry the (theta/2pi)*v1 term
    Vec2 tau{0.0, 0.0};
    std::array<int, 2> eta{0, 0};
    Vec2 s_action{0.0, 0.0};    // S = 2*pi*tau by the offset identity; kept explicit
};

struct AtlasSpec {
    std::string name;  // "trivial" | "focus_focus"
    Annulus base;
    std::vector<ChartSpec> charts;
    // Ground-truth M_ij for overlapping ordered pairs (i, j).
    std::map<std::pair<int, int>, Mat2i> planted_transitions;
    double s_shear = 0.1;            // s(w) = w2 + s_shear * w1 * w2
    double correction_scale = 0.05;  // coefficient scale of c1, c2
};

struct Eigenvalue {
    double re = 0.0;
    double im = 0.0;
    int source_chart = -1;                       // -1 when blind
    std::optional<std::array<std::int64_t, 2>> k_label;
};

struct GoodRectangle {
    double E = 0.0;          // Re of the good center
    double K = 0.0;          // center = E + i*eps*K
    double half_width_re = 0.0;    // = h^delta / C1
    double half_width_im = 0.0;    // = eps * h^delta / C1

    // Rescaled-plane rectangle in u = (Re mu, Im mu / eps).
    Rect rescaled(double eps) const {
        return Rect{{E, K}, {half_width_re, half_width_im / eps}};
    }
    bool contains_mu(double re, double im, double eps, double inflate = 0.0) const {
        return rescaled(eps).contains({re, im / eps}, inflate);
    }
};

struct SpectrumProvenance {
    std::string atlas_name;
    std::uint64_t seed = 0;
    double noise_kappa = 0.0;
    double noise_power = 0.0;
    std::string timestamp;
    std::vector<GoodRectangle> rectangles;
};

struct SpectrumDataset {
    std::vector<Eigenvalue> points;
    SemiclassicalRegime regime;
    SpectrumProvenance provenance;
    int newton_failures = 0;
};

// ---------------------------------------------------------------------------
// Atlas construction

namespace detail {
inline double wrap_pm_pi(double t) {
    t = std::fmod(t + two_pi / 2.0, two_pi);
    if (t < 0.0) t += two_pi;
    return t - two_pi / 2.0;
}
}  // namespace detail

// Four overlapping angular sectors, identity-plus-shear branch, all planted
// transitions the identity. The control atlas.
inline AtlasSpec build_trivial_atlas(Annulus annulus, const SemiclassicalRegime&) {
    if (annulus.r_min <= 0.0)
        throw PreconditionError("build_trivial_atlas: r_min > 0 required");
    AtlasSpec atlas;
    atlas.name = "trivial";
    atlas.base = annulus;
    const double pad = two_pi / 16.0;  // pi/8
    for (int j = 0; j < 4; ++j) {
        ChartSpec chart;
        chart.chart_id = j;
        chart.angle_lo = j * two_pi / 4.0 - pad;
        chart.angle_hi = (j + 1) * two_pi / 4.0 + pad;
        chart.branch_center = j * two_pi / 4.0 + two_pi / 8.0;
        chart.has_cut_term = false;
        atlas.charts.push_back(chart);
    }
    for (int j = 0; j < 4; ++j) {
        const int k = (j + 1) % 4;
        atlas.planted_transitions[{j, k}] = Mat2i::identity();
        atlas.planted_transitions[{k, j}] = Mat2i::identity();
    }
    return atlas;
}

// Four sectors with a branch cut at angle 0: the branch of chart j is
// continuous on its sector, and chart 0 differs from chart 3 by a full
// 2*pi turn of theta. Crossing the cut multiplies labels by [[1,0],[1,1]].
inline AtlasSpec build_focus_focus_atlas(Annulus annulus, const SemiclassicalRegime&) {
    if (annulus.r_min <= 0.0)
        throw PreconditionError("build_focus_focus_atlas: r_min > 0 required");
    AtlasSpec atlas;
    atlas.name = "focus_focus";
    atlas.base = annulus;
    const double pad = two_pi / 16.0;
    for (int j = 0; j < 4; ++j) {
        ChartSpec chart;
        chart.chart_id = j;
        chart.angle_lo = j * two_pi / 4.0 - pad;
        chart.angle_hi = (j + 1) * two_pi / 4.0 + pad;
        chart.branch_center = j * two_pi / 4.0 + two_pi / 8.0;
        chart.has_cut_term = true;
        atlas.charts.push_back(chart);
    }
    const Mat2i cut{1, 0, 1, 1};
    for (int j = 0; j < 3; ++j) {
        atlas.planted_transitions[{j, j + 1}] = Mat2i::identity();
        atlas.planted_transitions[{j + 1, j}] = Mat2i::identity();
    }
    atlas.planted_transitions[{3, 0}] = cut;            // M_30 = [[1,0],[1,1]]
    atlas.planted_transitions[{0, 3}] = cut.inverse();
    return atlas;
}

// ---------------------------------------------------------------------------
// Chart maps

namespace detail {

inline double chart_theta(const ChartSpec& chart, Vec2 w) {
    return chart.branch_center + wrap_pm_pi(std::atan2(w.y, w.x) - chart.branch_center);
}

struct ChartEval {
    Vec2 value;
    Mat2 jacobian;
};

}  // namespace detail

// The leading branch g_j(u) = psi^{-1}: without the (eps, h/eps) corrections.
inline Vec2 chart_leading(const AtlasSpec& atlas, const ChartSpec& chart, Vec2 u) {
    if (!chart.has_cut_term) {
        const Vec2 w = u - atlas.base.center;
        return {u.x, u.y + atlas.s_shear * w.x * w.y};
    }
    const Vec2 w = u - atlas.base.center;
    const double s = w.y + atlas.s_shear * w.x * w.y;
    const double theta = detail::chart_theta(chart, w);
    return {w.x, s + theta / two_pi * w.x};
}

// Full chart map f~_j(u) = tau + h*eta/4 + S(theta_j)(v(u)) with
// v(u) = base(u) + eps*c1(u) + (h/eps)*c2(u). Applying the branch shear to
// the corrected value keeps overlapping charts' lattice point sets exactly
// M-related across the cut, which a global generator needs. Analytic
// Jacobian included.
inline detail::ChartEval chart_eval(const AtlasSpec& atlas, const ChartSpec& chart, Vec2 u,
                                    const SemiclassicalRegime& regime) {
    const Vec2 u0 = atlas.base.center;
    const Vec2 w = u - u0;
    const double cs = atlas.correction_scale;
    const double he = regime.h / regime.eps;

    Vec2 v;
    Mat2 J;  // d v / d u
    if (!chart.has_cut_term) {
        v = {u.x, u.y + atlas.s_shear * w.x * w.y};
        J = {1.0, 0.0, atlas.s_shear * w.y, 1.0 + atlas.s_shear * w.x};
    } else {
        v = {w.x, w.y + atlas.s_shear * w.x * w.y};
        J = {1.0, 0.0, atlas.s_shear * w.y, 1.0 + atlas.s_shear * w.x};
    }
    // c1 = cs*(w1*w2, w1^2 - w2^2), c2 = cs*(w2^2 - w1^2, w1*w2)
    v.x += regime.eps * cs * (w.x * w.y) + he * cs * (w.y * w.y - w.x * w.x);
    v.y += regime.eps * cs * (w.x * w.x - w.y * w.y) + he * cs * (w.x * w.y);
    J.a += regime.eps * cs * w.y - 2.0 * he * cs * w.x;
    J.b += regime.eps * cs * w.x + 2.0 * he * cs * w.y;
    J.c += 2.0 * regime.eps * cs * w.x + he * cs * w.y;
    J.d += -2.0 * regime.eps * cs * w.y + he * cs * w.x;

    if (chart.has_cut_term) {
        const double r2 = w.x * w.x + w.y * w.y;
        if (r2 == 0.0) throw DomainError("chart_eval: annulus center excluded");
        const double theta = detail::chart_theta(chart, w);
        const Vec2 dtheta{-w.y / r2, w.x / r2};
        // second component += (theta/2pi) * v1
        const double f = theta / two_pi;
        J.c += f * J.a + v.x / two_pi * dtheta.x;
        J.d += f * J.b + v.x / two_pi * dtheta.y;
        v.y += f * v.x;
    }

    detail::ChartEval out;
    out.value = chart.tau + Vec2{chart.eta[0] / 4.0, chart.eta[1] / 4.0} * regime.h + v;
    out.jacobian = J;
    return out;
}

inline Vec2 chart_value(const AtlasSpec& atlas, const ChartSpec& chart, Vec2 u,
                        const SemiclassicalRegime& regime) {
    return chart_eval(atlas, chart, u, regime).value;
}

// Grid check of the ChartSpec invariant: injective branch with everywhere
// invertible differential on the sector.
inline void validate_atlas(const AtlasSpec& atlas, const SemiclassicalRegime& regime,
                           int grid_n = 12) {
    for (const auto& chart : atlas.charts) {
        for (int i = 0; i <= grid_n; ++i) {
            for (int j = 0; j <= grid_n; ++j) {
                const double r = atlas.base.r_min +
                                 (atlas.base.r_max - atlas.base.r_min) * i / grid_n;
                const double a = chart.angle_lo + (chart.angle_hi - chart.angle_lo) * j / grid_n;
                const Vec2 u = atlas.base.center + Vec2{r * std::cos(a), r * std::sin(a)};
                const Mat2 J = chart_eval(atlas, chart, u, regime).jacobian;
                if (std::abs(J.det()) < 1e-8)
                    throw ConsistencyError("validate_atlas: degenerate chart differential");
            }
        }
    }
    // cocycle identity and unimodularity of the planted transitions
    for (const auto& [ij, m] : atlas.planted_transitions) {
        if (!m.unimodular())
            throw ConsistencyError("validate_atlas: planted transition not in GL(2,Z)");
        const auto ji = atlas.planted_transitions.find({ij.second, ij.first});
        if (ji != atlas.planted_transitions.end() && !(ji->second * m == Mat2i::identity()))
            throw ConsistencyError("validate_atlas: planted M_ji != M_ij^-1");
    }
}

// ---------------------------------------------------------------------------
// Good rectangles

inline GoodRectangle good_rectangle(double center_E, double center_K,
                                    const SemiclassicalRegime& regime, double C1) {
    if (C1 < 1.0) throw PreconditionError("good_rectangle: C1 >= 1 required");
    GoodRectangle rect;
    rect.E = center_E;
    rect.K = center_K;
    rect.half_width_re = std::pow(regime.h, regime.delta) / C1;
    rect.half_width_im = regime.eps * std::pow(regime.h, regime.delta) / C1;
    return rect;
}

// ---------------------------------------------------------------------------
// Synthesis

namespace detail {

// The branch-cut compatibility of offsets: hZ^2 is invariant under every
// planted M, but the shift tau + h*eta/4 must satisfy
// (M - I)(tau + h*eta/4) in h*Z^2, or overlapping charts disagree on the
// planted spectrum.
inline void check_offset_compatibility(const AtlasSpec& atlas,
                                       const SemiclassicalRegime& regime) {
    for (const auto& chart : atlas.charts) {
        const Vec2 shift = chart.tau + Vec2{chart.eta[0] / 4.0, chart.eta[1] / 4.0} * regime.h;
        for (const auto& [ij, m] : atlas.planted_transitions) {
            if (m == Mat2i::identity()) continue;
            const Mat2 mi = m.to_real() - Mat2::identity();
            const Vec2 r = mi * shift;
            const double e1 = std::abs(r.x / regime.h - std::round(r.x / regime.h));
            const double e2 = std::abs(r.y / regime.h - std::round(r.y / regime.h));
            if (e1 > 1e-9 || e2 > 1e-9)
                throw ConsistencyError(
                    "synthesize: offsets tau + h*eta/4 incompatible with the planted "
                    "branch-cut transition ((M-I)*shift not in h*Z^2)");
        }
    }
}

inline bool rect_in_chart(const AtlasSpec& atlas, const ChartSpec& chart,
                          const Rect& rect_u) {
    if (!chart.has_cut_term) return true;  // single-valued branch, defined everywhere
    // The branch is smooth away from the ray opposite the branch center and
    // away from the annulus center.
    const Vec2 u0 = atlas.base.center;
    for (int sx = -1; sx <= 1; ++sx) {
        for (int sy = -1; sy <= 1; ++sy) {
            const Vec2 corner = rect_u.center + Vec2{sx * rect_u.half.x, sy * rect_u.half.y};
            const Vec2 w = corner - u0;
            if (w.norm() == 0.0) return false;
            const double off = wrap_pm_pi(std::atan2(w.y, w.x) - chart.branch_center);
            if (std::abs(off) > two_pi * 0.375) return false;  // within 3pi/4 of the branch center
        }
    }
    return rect_u.contains(u0) ? false : true;
}

struct NewtonResult {
    Vec2 u;
    bool converged = false;
};

inline NewtonResult solve_lattice_point(const AtlasSpec& atlas, const ChartSpec& chart,
                                        Vec2 target, Vec2 seed,
                                        const SemiclassicalRegime& regime) {
    Vec2 u = seed;
    double res = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 50; ++it) {
        const auto eval = chart_eval(atlas, chart, u, regime);
        const Vec2 r = eval.value - target;
        res = r.norm_inf();
        if (res <= 1e-13) return {u, true};
        Vec2 step;
        try {
            step = eval.jacobian.inverse() * r;
        } catch (const Error&) {
            return {u, false};
        }
        // damped update
        double damp = 1.0;
        Vec2 next = u - step;
        for (int half = 0; half < 8; ++half) {
            const Vec2 rn = chart_value(atlas, chart, next, regime) - target;
            if (rn.norm_inf() < res) break;
            damp *= 0.5;
            next = u - step * damp;
        }
        u = next;
    }
    return {u, std::abs(res) <= 1e-13};
}

// Noise key: quantized noiseless solution, so the same physical point gets
// the same draw no matter which chart or rectangle generated it.
inline Vec2 noise_for(std::uint64_t seed, Vec2 u_clean, double h, double magnitude) {
    const auto q1 = (std::int64_t)std::llround(u_clean.x / (h / 2.0));
    const auto q2 = (std::int64_t)std::llround(u_clean.y / (h / 2.0));
    const Vec2 n = rng::normal_pair(seed, std::uint64_t(q1), std::uint64_t(q2));
    return n * magnitude;
}

}  // namespace detail

inline SpectrumDataset synthesize_rectangle(const AtlasSpec& atlas, int chart_id,
                                            const GoodRectangle& rect,
                                            const SemiclassicalRegime& regime,
                                            double noise_kappa, double noise_power,
                                            std::uint64_t seed) {
    const auto it = std::find_if(atlas.charts.begin(), atlas.charts.end(),
                                 [&](const ChartSpec& c) { return c.chart_id == chart_id; });
    if (it == atlas.charts.end())
        throw DomainError("synthesize_rectangle: unknown chart id");
    const ChartSpec& chart = *it;
    const Rect ru = rect.rescaled(regime.eps);
    if (!detail::rect_in_chart(atlas, chart, ru))
        throw DomainError("synthesize_rectangle: rectangle does not meet the chart domain");
    detail::check_offset_compatibility(atlas, regime);

    const double h = regime.h;
    const double noise_mag = noise_kappa * std::pow(h, noise_power);

    // Lattice index bounding box from the image of the rectangle corners.
    double lo1 = std::numeric_limits<double>::infinity(), hi1 = -lo1;
    double lo2 = lo1, hi2 = -lo1;
    for (int sx = -1; sx <= 1; ++sx) {
        for (int sy = -1; sy <= 1; ++sy) {
            const Vec2 u = ru.center + Vec2{sx * ru.half.x, sy * ru.half.y};
            const Vec2 f = chart_value(atlas, chart, u, regime);
            lo1 = std::min(lo1, f.x); hi1 = std::max(hi1, f.x);
            lo2 = std::min(lo2, f.y); hi2 = std::max(hi2, f.y);
        }
    }
    const auto k1_lo = (std::int64_t)std::floor(lo1 / h) - 2;
    const auto k1_hi = (std::int64_t)std::ceil(hi1 / h) + 2;
    const auto k2_lo = (std::int64_t)std::floor(lo2 / h) - 2;
    const auto k2_hi = (std::int64_t)std::ceil(hi2 / h) + 2;

    const auto center_eval = chart_eval(atlas, chart, ru.center, regime);
    const Mat2 J0_inv = center_eval.jacobian.inverse();

    SpectrumDataset ds;
    ds.regime = regime;
    ds.provenance = {atlas.name, seed, noise_kappa, noise_power, "", {rect}};

    for (std::int64_t k1 = k1_lo; k1 <= k1_hi; ++k1) {
        for (std::int64_t k2 = k2_lo; k2 <= k2_hi; ++k2) {
            const Vec2 target{h * double(k1), h * double(k2)};
            const Vec2 seed_u = ru.center + J0_inv * (target - center_eval.value);
            if (!ru.contains(seed_u, 0.35)) continue;
            const auto sol = detail::solve_lattice_point(atlas, chart, target, seed_u, regime);
            if (!sol.converged) {
                ++ds.newton_failures;
                continue;
            }
            if (!ru.contains(sol.u)) continue;
            Vec2 u = sol.u;
            if (noise_mag > 0.0) u += detail::noise_for(seed, sol.u, h, noise_mag);
            Eigenvalue ev;
            ev.re = u.x;
            ev.im = regime.eps * u.y;
            ev.source_chart = chart_id;
            ev.k_label = std::array<std::int64_t, 2>{k1, k2};
            ds.points.push_back(ev);
        }
    }
    std::sort(ds.points.begin(), ds.points.end(), [](const Eigenvalue& a, const Eigenvalue& b) {
        return a.re != b.re ? a.re < b.re : a.im < b.im;
    });
    return ds;
}

namespace detail {

// Deduplicate within distance tol in rescaled coordinates. Points sorted
// canonically first; duplicates from overlapping rectangles are bit-identical
// by the noise keying, so a tolerance sweep suffices.
inline void dedup_points(std::vector<Eigenvalue>& pts, double eps, double tol) {
    std::sort(pts.begin(), pts.end(), [](const Eigenvalue& a, const Eigenvalue& b) {
        if (a.re != b.re) return a.re < b.re;
        if (a.im != b.im) return a.im < b.im;
        return a.source_chart < b.source_chart;
    });
    std::vector<Eigenvalue> out;
    out.reserve(pts.size());
    for (const auto& p : pts) {
        bool dup = false;
        for (auto rit = out.rbegin(); rit != out.rend(); ++rit) {
            if (p.re - rit->re > tol) break;
            if (std::abs(p.im - rit->im) / eps <= tol && std::abs(p.re - rit->re) <= tol) {
                dup = true;
                break;
            }
        }
        if (!dup) out.push_back(p);
    }
    pts = std::move(out);
}

}  // namespace detail

struct BandRectJob {
    GoodRectangle rect;
    int chart_id = -1;
    std::size_t n_points = 0;
};

struct BandResult {
    SpectrumDataset merged;
    std::vector<BandRectJob> jobs;
    // (i, j) -> number of points the two rectangles share
    std::map<std::pair<int, int>, std::size_t> overlap_counts;
};

// Chart assignment: the chart whose branch center is nearest in angle.
inline int chart_for_center(const AtlasSpec& atlas, Vec2 center_u) {
    const Vec2 w = center_u - atlas.base.center;
    const double a = std::atan2(w.y, w.x);
    int best = -1;
    double best_off = std::numeric_limits<double>::infinity();
    for (const auto& chart : atlas.charts) {
        const double off = std::abs(detail::wrap_pm_pi(a - chart.branch_center));
        if (off < best_off) {
            best_off = off;
            best = chart.chart_id;
        }
    }
    return best;
}

inline BandResult synthesize_band(const AtlasSpec& atlas,
                                  const std::vector<std::pair<double, double>>& loop_centers,
                                  const SemiclassicalRegime& regime, double C1,
                                  double noise_kappa, double noise_power,
                                  std::uint64_t seed) {
    BandResult band;
    band.merged.regime = regime;
    band.merged.provenance = {atlas.name, seed, noise_kappa, noise_power, "", {}};

    std::vector<SpectrumDataset> parts;
    for (const auto& [E, K] : loop_centers) {
        const GoodRectangle rect = good_rectangle(E, K, regime, C1);
        const int chart_id = chart_for_center(atlas, {E, K});
        if (chart_id < 0)
            throw DomainError("synthesize_band: center interior to no chart");
        // skip duplicate centers
        bool dup_center = false;
        for (const auto& job : band.jobs)
            if (job.rect.E == E && job.rect.K == K) dup_center = true;
        if (dup_center) continue;
        auto part = synthesize_rectangle(atlas, chart_id, rect, regime, noise_kappa,
                                         noise_power, seed);
        band.jobs.push_back({rect, chart_id, part.points.size()});
        band.merged.provenance.rectangles.push_back(rect);
        band.merged.newton_failures += part.newton_failures;
        parts.push_back(std::move(part));
    }
    // overlap statistics before merging (parts are sorted by (re, im))
    const double tol = regime.h * 1e-6;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        for (std::size_t j = i + 1; j < parts.size(); ++j) {
            if (!band.jobs[i].rect.rescaled(regime.eps).contains(
                    band.jobs[j].rect.rescaled(regime.eps).center,
                    2.0))  // cheap separation test
                continue;
            std::size_t shared = 0;
            const auto& a = parts[i].points;
            const auto& b = parts[j].points;
            std::size_t qi = 0;
            for (const auto& p : a) {
                while (qi < b.size() && b[qi].re < p.re - tol) ++qi;
                for (std::size_t t = qi; t < b.size() && b[t].re <= p.re + tol; ++t) {
                    if (std::abs(b[t].im - p.im) / regime.eps <= tol) {
                        ++shared;
                        break;
                    }
                }
            }
            if (shared > 0) band.overlap_counts[{int(i), int(j)}] = shared;
        }
    }
    for (auto& part : parts)
        band.merged.points.insert(band.merged.points.end(), part.points.begin(),
                                  part.points.end());
    detail::dedup_points(band.merged.points, regime.eps, tol);
    return band;
}

}  // namespace specmono
