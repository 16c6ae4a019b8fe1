#pragma once

// Integer transition matrices between overlapping chart fits, Cech cocycle
// validation, loop holonomy, conjugacy fingerprints, and the KAM-adjoint
// correspondence.

#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "specmono/core.hpp"
#include "specmono/detect.hpp"

namespace specmono {

// ---------------------------------------------------------------------------
// Domain types

struct TransitionMatrix {
    Mat2i m;
    Mat2 raw;
    double rounding_error = 0.0;  // max entry deviation before rounding
};

struct CechCocycle {
    std::vector<int> cover;  // chart ids in loop order
    std::map<std::pair<int, int>, TransitionMatrix> transitions;
};

struct HolonomyClass {
    Mat2i representative;
    std::int64_t det = 1;
    std::int64_t trace = 2;
    std::int64_t parabolic_index = 0;

    std::array<std::int64_t, 3> fingerprint() const {
        return {det, std::abs(trace), parabolic_index};
    }
};

struct CocycleViolation {
    std::string kind;  // "inverse" or "triple"
    int i = 0, j = 0, k = 0;
};

struct CocycleReport {
    bool pass = true;
    int inverse_checks = 0;
    int triple_checks = 0;
    std::vector<CocycleViolation> violations;
};

// ---------------------------------------------------------------------------
// Operations

// Fingerprint (det, |trace|, parabolic_index); the parabolic index is the
// gcd of the entries of m - I when det = 1 and trace = 2 (0 for the
// identity), which is a GL(2,Z)-conjugacy invariant.
inline std::array<std::int64_t, 3> conjugacy_fingerprint(const Mat2i& m) {
    if (!m.unimodular())
        throw NonUnimodularError("conjugacy_fingerprint: det must be +/-1");
    std::int64_t index = 0;
    if (m.det() == 1 && m.trace() == 2) {
        const Mat2i d{m.a - 1, m.b, m.c, m.d - 1};
        index = std::gcd(std::gcd(std::abs(d.a), std::abs(d.b)),
                         std::gcd(std::abs(d.c), std::abs(d.d)));
    }
    return {m.det(), std::abs(m.trace()), index};
}

inline HolonomyClass make_holonomy_class(const Mat2i& rep) {
    const auto fp = conjugacy_fingerprint(rep);
    return {rep, fp[0], rep.trace(), fp[2]};
}

inline Mat2i round_to_integer(const Mat2& raw, double& max_err) {
    const Mat2i m{(std::int64_t)std::llround(raw.a), (std::int64_t)std::llround(raw.b),
                  (std::int64_t)std::llround(raw.c), (std::int64_t)std::llround(raw.d)};
    max_err = (raw - m.to_real()).max_abs();
    return m;
}

// M_ij from two chart fits: D_i(x) * D_j(x)^-1 with the Jacobians of the
// fitted polynomial maps evaluated at the overlap center, rounded entrywise.
inline TransitionMatrix transition(const ChartFit& fit_i, const ChartFit& fit_j,
                                   Vec2 overlap_center, double tolerance = 0.1) {
    if (!fit_i.rect.contains(overlap_center) || !fit_j.rect.contains(overlap_center))
        throw PreconditionError("transition: overlap center outside a fitted rectangle");
    const Mat2 raw = fit_jacobian(fit_i, overlap_center) *
                     fit_jacobian(fit_j, overlap_center).inverse();
    TransitionMatrix t;
    t.raw = raw;
    t.m = round_to_integer(raw, t.rounding_error);
    if (t.rounding_error > tolerance)
        throw NonIntegerTransitionError("transition: rounding error " +
                                        std::to_string(t.rounding_error) +
                                        " exceeds tolerance");
    if (!t.m.unimodular())
        throw NonUnimodularError("transition: rounded matrix has |det| != 1");
    return t;
}

// Exact integer verification of M_ji = M_ij^-1 and of every triple-overlap
// identity M_ik = M_ij * M_jk for which all three transitions are present.
inline CocycleReport cocycle_check(const CechCocycle& cocycle) {
    CocycleReport report;
    const auto& tr = cocycle.transitions;
    for (const auto& [ij, t] : tr) {
        if (ij.first >= ij.second) continue;
        const auto ji = tr.find({ij.second, ij.first});
        if (ji == tr.end()) continue;
        ++report.inverse_checks;
        if (!(t.m * ji->second.m == Mat2i::identity())) {
            report.pass = false;
            report.violations.push_back({"inverse", ij.first, ij.second, 0});
        }
    }
    for (const auto& [ik, t_ik] : tr) {
        const int i = ik.first, k = ik.second;
        for (const auto& [jk, t_jk] : tr) {
            const int j = jk.first;
            if (jk.second != k || j == i || j == k) continue;
            const auto ij = tr.find({i, j});
            if (ij == tr.end()) continue;
            ++report.triple_checks;
            if (!(ij->second.m * t_jk.m == t_ik.m)) {
                report.pass = false;
                report.violations.push_back({"triple", i, j, k});
            }
        }
    }
    return report;
}

// Loop product M_{j0 j1} * M_{j1 j2} * ... * M_{j_{L-1} j0}, left to right
// along the (counterclockwise) loop.
inline HolonomyClass holonomy(const CechCocycle& cocycle, const std::vector<int>& loop) {
    if (loop.size() < 2 || loop.front() != loop.back())
        throw IncompleteCoverError("holonomy: loop must close on its first chart");
    Mat2i rep = Mat2i::identity();
    for (std::size_t i = 0; i + 1 < loop.size(); ++i) {
        const auto it = cocycle.transitions.find({loop[i], loop[i + 1]});
        if (it == cocycle.transitions.end())
            throw IncompleteCoverError("holonomy: missing transition (" +
                                       std::to_string(loop[i]) + "," +
                                       std::to_string(loop[i + 1]) + ")");
        rep = rep * it->second.m;
    }
    return make_holonomy_class(rep);
}

// Transitions of the dual (KAM frequency) bundle are the inverse
// transposes of the spectral ones. Involutive.
inline Mat2i kam_adjoint(const Mat2i& m) {
    if (!m.unimodular())
        throw NonUnimodularError("kam_adjoint: det must be +/-1");
    return m.transpose().inverse();
}

inline bool is_trivial(const HolonomyClass& h) {
    return h.fingerprint() == std::array<std::int64_t, 3>{1, 2, 0};
}

}  // namespace specmono
