#pragma once

// Pseudo-lattice recovery from a raw spectral point cloud: rescaling into
// the u-plane, lattice-basis detection from nearest-neighbor differences,
// breadth-first integer labeling, and polynomial chart fitting.

#include <algorithm>
#include <deque>
#include <map>
#include <optional>
#include <vector>

#include "specmono/atlas.hpp"
#include "specmono/core.hpp"

namespace specmono {

// ---------------------------------------------------------------------------
// Domain types

struct RescaledCloud {
    std::vector<Vec2> points;  // u = (Re mu, Im mu / eps)
    Rect rect;                 // rescaled good rectangle
    SemiclassicalRegime regime;
};

struct LatticeLabeling {
    // labels[i] empty when point i stayed unlabeled
    std::vector<std::optional<std::array<std::int64_t, 2>>> labels;
    Vec2 basis1, basis2;   // detected generators, rescaled units
    std::size_t anchor = 0;
    double coverage = 0.0;

    Mat2 basis_matrix() const { return {basis1.x, basis2.x, basis1.y, basis2.y}; }
};

struct ChartFit {
    int degree = 1;
    Vec2 center;                       // expansion point (rectangle center)
    Rect rect;                         // fitted rectangle, rescaled
    double scale = 1.0;                // monomial scaling used in the fit
    std::vector<double> coeff_x;       // one coefficient per monomial
    std::vector<double> coeff_y;
    double residual_rms = 0.0;         // absolute, rescaled units
    double residual_max = 0.0;
    Mat2 leading_differential;         // Jacobian of the fitted map at `center`
    double h = 0.0;
};

// ---------------------------------------------------------------------------
// Rescale

inline RescaledCloud rescale(const SpectrumDataset& dataset, const GoodRectangle& rect) {
    if (dataset.regime.eps <= 0.0)
        throw PreconditionError("rescale: dataset records no positive eps");
    RescaledCloud cloud;
    cloud.regime = dataset.regime;
    cloud.rect = rect.rescaled(dataset.regime.eps);
    for (const auto& p : dataset.points) {
        const Vec2 u{p.re, p.im / dataset.regime.eps};
        if (cloud.rect.contains(u, 0.01)) cloud.points.push_back(u);
    }
    if (cloud.points.size() < 16)
        throw InsufficientDataError("rescale: fewer than 16 points in rectangle");
    return cloud;
}

// ---------------------------------------------------------------------------
// Basis detection

namespace detail {

// Uniform bucket grid for near-neighbor queries on ~h-spaced clouds.
struct PointGrid {
    double cell;
    Vec2 origin;
    int nx, ny;
    std::vector<std::vector<int>> buckets;

    PointGrid(const std::vector<Vec2>& pts, const Rect& rect, double cell_size)
        : cell(cell_size), origin{rect.lo_x(), rect.lo_y()} {
        nx = std::max(1, int((rect.hi_x() - rect.lo_x()) / cell) + 3);
        ny = std::max(1, int((rect.hi_y() - rect.lo_y()) / cell) + 3);
        buckets.resize(std::size_t(nx) * std::size_t(ny));
        for (int i = 0; i < int(pts.size()); ++i) {
            auto [bx, by] = locate(pts[std::size_t(i)]);
            buckets[idx(bx, by)].push_back(i);
        }
    }

    std::pair<int, int> locate(Vec2 p) const {
        int bx = std::clamp(int((p.x - origin.x) / cell) + 1, 0, nx - 1);
        int by = std::clamp(int((p.y - origin.y) / cell) + 1, 0, ny - 1);
        return {bx, by};
    }
    std::size_t idx(int bx, int by) const {
        return std::size_t(by) * std::size_t(nx) + std::size_t(bx);
    }

    template <class Fn>
    void for_neighborhood(Vec2 p, int ring, Fn&& fn) const {
        auto [bx, by] = locate(p);
        for (int dy = -ring; dy <= ring; ++dy) {
            for (int dx = -ring; dx <= ring; ++dx) {
                const int x = bx + dx, y = by + dy;
                if (x < 0 || x >= nx || y < 0 || y >= ny) continue;
                for (int i : buckets[idx(x, y)]) fn(i);
            }
        }
    }
};

inline double median_nn_distance(const std::vector<Vec2>& pts, const PointGrid& grid) {
    std::vector<double> dists;
    const std::size_t stride = std::max<std::size_t>(1, pts.size() / 256);
    for (std::size_t i = 0; i < pts.size(); i += stride) {
        double best = std::numeric_limits<double>::infinity();
        grid.for_neighborhood(pts[i], 2, [&](int j) {
            if (std::size_t(j) == i) return;
            best = std::min(best, (pts[std::size_t(j)] - pts[i]).norm());
        });
        if (std::isfinite(best)) dists.push_back(best);
    }
    if (dists.empty()) throw DetectionError("detect_basis: no neighbor pairs found");
    std::nth_element(dists.begin(), dists.begin() + std::ptrdiff_t(dists.size() / 2),
                     dists.end());
    return dists[dists.size() / 2];
}

struct DiffCluster {
    Vec2 sum{0, 0};
    int count = 0;
    Vec2 centroid() const { return sum / double(count); }
};

}  // namespace detail

struct BasisPair {
    Vec2 b1, b2;
};

// Lagrange-Gauss reduction of a 2D lattice basis.
inline BasisPair reduce_basis(Vec2 b1, Vec2 b2) {
    for (int it = 0; it < 64; ++it) {
        if (b2.norm() < b1.norm()) std::swap(b1, b2);
        const double m = std::round(b2.dot(b1) / b1.dot(b1));
        if (m == 0.0) break;
        b2 -= b1 * m;
    }
    if (b2.norm() < b1.norm()) std::swap(b1, b2);
    return {b1, b2};
}

inline BasisPair detect_basis(const RescaledCloud& cloud) {
    const auto& pts = cloud.points;
    if (pts.size() < 16)
        throw InsufficientDataError("detect_basis: at least 16 points required");

    const double cell0 = 2.0 * std::sqrt(4.0 * cloud.rect.half.x * cloud.rect.half.y /
                                         double(pts.size()));
    detail::PointGrid grid0(pts, cloud.rect, cell0);
    const double nn = detail::median_nn_distance(pts, grid0);
    detail::PointGrid grid(pts, cloud.rect, 1.5 * nn);

    // Canonicalized nearest-neighbor difference vectors.
    std::vector<detail::DiffCluster> clusters;
    auto canonical = [](Vec2 v) {
        if (v.y < 0.0 || (v.y == 0.0 && v.x < 0.0)) return -v;
        return v;
    };
    for (std::size_t i = 0; i < pts.size(); ++i) {
        // up to 4 nearest within 1.8 * median NN distance
        std::vector<std::pair<double, int>> near;
        grid.for_neighborhood(pts[i], 2, [&](int j) {
            if (std::size_t(j) == i) return;
            const double d = (pts[std::size_t(j)] - pts[i]).norm();
            if (d <= 1.8 * nn) near.emplace_back(d, j);
        });
        std::sort(near.begin(), near.end());
        if (near.size() > 4) near.resize(4);
        for (const auto& [d, j] : near) {
            const Vec2 v = canonical(pts[std::size_t(j)] - pts[i]);
            bool placed = false;
            for (auto& cl : clusters) {
                if ((v - cl.centroid()).norm() <= 0.25 * cl.centroid().norm()) {
                    cl.sum += v;
                    ++cl.count;
                    placed = true;
                    break;
                }
            }
            if (!placed) clusters.push_back({v, 1});
        }
    }
    const int min_count = std::max<int>(4, int(pts.size()) / 50);
    std::vector<Vec2> candidates;
    for (const auto& cl : clusters)
        if (cl.count >= min_count) candidates.push_back(cl.centroid());
    std::sort(candidates.begin(), candidates.end(),
              [](Vec2 a, Vec2 b) { return a.norm() < b.norm(); });
    if (candidates.empty())
        throw DetectionError("detect_basis: no stable difference clusters");

    const Vec2 b1 = candidates.front();
    for (const auto& c : candidates) {
        if (std::abs(b1.cross(c)) >= 0.1 * b1.norm() * c.norm())
            return reduce_basis(b1, c);
    }
    throw DetectionError("detect_basis: difference clusters are collinear");
}

// ---------------------------------------------------------------------------
// Labeling

inline LatticeLabeling label_lattice(const RescaledCloud& cloud, const BasisPair& basis,
                                     double reject_threshold = 0.25,
                                     double min_coverage = 0.95) {
    const auto& pts = cloud.points;
    const Mat2 B{basis.b1.x, basis.b2.x, basis.b1.y, basis.b2.y};
    if (std::abs(B.det()) < 1e-18)
        throw PreconditionError("label_lattice: degenerate basis");
    const Mat2 Binv = B.inverse();

    LatticeLabeling out;
    out.basis1 = basis.b1;
    out.basis2 = basis.b2;
    out.labels.assign(pts.size(), std::nullopt);

    // seed: point nearest the rectangle center
    std::size_t seed = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double d = (pts[i] - cloud.rect.center).norm();
        if (d < best) {
            best = d;
            seed = i;
        }
    }
    out.anchor = seed;

    const double radius = 1.6 * std::max(basis.b1.norm(), basis.b2.norm());
    detail::PointGrid grid(pts, cloud.rect, radius);

    std::map<std::array<std::int64_t, 2>, std::size_t> used;
    out.labels[seed] = std::array<std::int64_t, 2>{0, 0};
    used[{0, 0}] = seed;
    std::deque<std::size_t> queue{seed};
    std::size_t labeled = 1;

    while (!queue.empty()) {
        const std::size_t i = queue.front();
        queue.pop_front();
        const auto li = *out.labels[i];
        grid.for_neighborhood(pts[i], 1, [&](int jj) {
            const auto j = std::size_t(jj);
            if (out.labels[j] || j == i) return;
            const Vec2 d = pts[j] - pts[i];
            if (d.norm() > radius) return;
            const Vec2 c = Binv * d;
            const double r1 = std::round(c.x), r2 = std::round(c.y);
            const double err = std::max(std::abs(c.x - r1), std::abs(c.y - r2));
            if (err > reject_threshold) return;
            if (r1 == 0.0 && r2 == 0.0) return;  // coincident site
            const std::array<std::int64_t, 2> label{li[0] + std::int64_t(r1),
                                                    li[1] + std::int64_t(r2)};
            if (used.count(label)) return;  // injectivity: first assignment wins
            out.labels[j] = label;
            used[label] = j;
            ++labeled;
            queue.push_back(j);
        });
    }
    out.coverage = double(labeled) / double(pts.size());
    if (out.coverage < min_coverage)
        throw LabelingError("label_lattice: coverage " + std::to_string(out.coverage) +
                                " below required " + std::to_string(min_coverage),
                            out.coverage);

    const double cell = std::abs(B.det());
    const double h2 = cloud.regime.h * cloud.regime.h;
    if (cell < 0.5 * h2 || cell > 2.0 * h2)
        throw DetectionError("label_lattice: basis cell area out of the [h^2/2, 2h^2] range");
    return out;
}

// ---------------------------------------------------------------------------
// Chart fitting

namespace detail {

inline int monomial_count(int degree) { return (degree + 1) * (degree + 2) / 2; }

// monomials (du1/s)^a (du2/s)^b ordered by total degree; index 1 and 2 are
// the linear terms.
inline void monomials(Vec2 du, double s, int degree, std::vector<double>& out) {
    out.clear();
    const double x = du.x / s, y = du.y / s;
    for (int total = 0; total <= degree; ++total)
        for (int a = total; a >= 0; --a)
            out.push_back(std::pow(x, a) * std::pow(y, total - a));
}

// dense symmetric-positive solve (normal equations), tiny systems only
inline std::vector<double> solve_spd(std::vector<double> A, std::vector<double> b, int n) {
    // Cholesky A = L L^T
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = A[std::size_t(i) * std::size_t(n) + std::size_t(j)];
            for (int k = 0; k < j; ++k)
                s -= A[std::size_t(i) * std::size_t(n) + std::size_t(k)] *
                     A[std::size_t(j) * std::size_t(n) + std::size_t(k)];
            if (i == j) {
                if (s <= 0.0) throw FitError("fit_chart: normal equations singular");
                A[std::size_t(i) * std::size_t(n) + std::size_t(j)] = std::sqrt(s);
            } else {
                A[std::size_t(i) * std::size_t(n) + std::size_t(j)] =
                    s / A[std::size_t(j) * std::size_t(n) + std::size_t(j)];
            }
        }
    }
    for (int i = 0; i < n; ++i) {
        double s = b[std::size_t(i)];
        for (int k = 0; k < i; ++k)
            s -= A[std::size_t(i) * std::size_t(n) + std::size_t(k)] * b[std::size_t(k)];
        b[std::size_t(i)] = s / A[std::size_t(i) * std::size_t(n) + std::size_t(i)];
    }
    for (int i = n - 1; i >= 0; --i) {
        double s = b[std::size_t(i)];
        for (int k = i + 1; k < n; ++k)
            s -= A[std::size_t(k) * std::size_t(n) + std::size_t(i)] * b[std::size_t(k)];
        b[std::size_t(i)] = s / A[std::size_t(i) * std::size_t(n) + std::size_t(i)];
    }
    return b;
}

}  // namespace detail

inline Vec2 fit_value(const ChartFit& fit, Vec2 u) {
    std::vector<double> m;
    detail::monomials(u - fit.center, fit.scale, fit.degree, m);
    Vec2 v{0, 0};
    for (std::size_t i = 0; i < m.size(); ++i) {
        v.x += fit.coeff_x[i] * m[i];
        v.y += fit.coeff_y[i] * m[i];
    }
    return v;
}

// Jacobian of the fitted polynomial map at an arbitrary point.
inline Mat2 fit_jacobian(const ChartFit& fit, Vec2 u) {
    const double s = fit.scale;
    const double x = (u.x - fit.center.x) / s, y = (u.y - fit.center.y) / s;
    Mat2 J{};
    std::size_t idx = 0;
    for (int total = 0; total <= fit.degree; ++total) {
        for (int a = total; a >= 0; --a, ++idx) {
            const int b = total - a;
            const double dx = a == 0 ? 0.0 : a * std::pow(x, a - 1) * std::pow(y, b);
            const double dy = b == 0 ? 0.0 : b * std::pow(x, a) * std::pow(y, b - 1);
            J.a += fit.coeff_x[idx] * dx / s;
            J.b += fit.coeff_x[idx] * dy / s;
            J.c += fit.coeff_y[idx] * dx / s;
            J.d += fit.coeff_y[idx] * dy / s;
        }
    }
    return J;
}

inline ChartFit fit_chart(const RescaledCloud& cloud, const LatticeLabeling& labeling,
                          int degree, const SemiclassicalRegime& regime,
                          double max_residual_tol_h = 2.0) {
    if (degree < 1 || degree > 3)
        throw PreconditionError("fit_chart: degree must be 1, 2, or 3");
    if (labeling.coverage < 0.95)
        throw PreconditionError("fit_chart: labeling coverage below 95%");

    const int m = detail::monomial_count(degree);
    const double scale = std::max(cloud.rect.half.x, cloud.rect.half.y);
    std::vector<double> AtA(std::size_t(m) * std::size_t(m), 0.0);
    std::vector<double> bx(std::size_t(m), 0.0), by(std::size_t(m), 0.0);
    std::vector<double> mono;

    const double h = regime.h;
    std::size_t n_used = 0;
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
        if (!labeling.labels[i]) continue;
        detail::monomials(cloud.points[i] - cloud.rect.center, scale, degree, mono);
        const auto lab = *labeling.labels[i];
        for (int r = 0; r < m; ++r) {
            for (int c = 0; c <= r; ++c)
                AtA[std::size_t(r) * std::size_t(m) + std::size_t(c)] +=
                    mono[std::size_t(r)] * mono[std::size_t(c)];
            bx[std::size_t(r)] += mono[std::size_t(r)] * h * double(lab[0]);
            by[std::size_t(r)] += mono[std::size_t(r)] * h * double(lab[1]);
        }
        ++n_used;
    }
    if (n_used < std::size_t(2 * m))
        throw FitError("fit_chart: too few labeled points for the requested degree");
    for (int r = 0; r < m; ++r)
        for (int c = r + 1; c < m; ++c)
            AtA[std::size_t(r) * std::size_t(m) + std::size_t(c)] =
                AtA[std::size_t(c) * std::size_t(m) + std::size_t(r)];

    ChartFit fit;
    fit.degree = degree;
    fit.center = cloud.rect.center;
    fit.rect = cloud.rect;
    fit.scale = scale;
    fit.h = h;
    fit.coeff_x = detail::solve_spd(AtA, bx, m);
    fit.coeff_y = detail::solve_spd(AtA, by, m);

    double sq = 0.0, mx = 0.0;
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
        if (!labeling.labels[i]) continue;
        const auto lab = *labeling.labels[i];
        const Vec2 r = fit_value(fit, cloud.points[i]) -
                       Vec2{h * double(lab[0]), h * double(lab[1])};
        sq += r.dot(r);
        mx = std::max(mx, r.norm());
    }
    fit.residual_rms = std::sqrt(sq / double(n_used));
    fit.residual_max = mx;
    fit.leading_differential = fit_jacobian(fit, fit.center);

    if (fit.residual_max > max_residual_tol_h * h)
        throw FitError("fit_chart: max residual " + std::to_string(mx / h) +
                       "h exceeds tolerance");
    if (std::abs(fit.leading_differential.det()) <= 1e-6)
        throw FitError("fit_chart: leading differential not invertible");
    return fit;
}

// Exact relabeling transform: labels k -> B k + t turns the least-squares
// fit into B * fit + h * t, so the refit never has to be repeated.
inline ChartFit relabel_fit(const ChartFit& fit, const Mat2i& B,
                            std::array<std::int64_t, 2> t = {0, 0}) {
    ChartFit out = fit;
    const Mat2 Br = B.to_real();
    for (std::size_t i = 0; i < fit.coeff_x.size(); ++i) {
        const Vec2 v = Br * Vec2{fit.coeff_x[i], fit.coeff_y[i]};
        out.coeff_x[i] = v.x;
        out.coeff_y[i] = v.y;
    }
    out.coeff_x[0] += fit.h * double(t[0]);
    out.coeff_y[0] += fit.h * double(t[1]);
    out.leading_differential = Br * fit.leading_differential;
    return out;
}

}  // namespace specmono
