#pragma once

// Persistence: spectrum CSV, JSON fits/reports/manifests, SVG plots.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "specmono/atlas.hpp"
#include "specmono/detect.hpp"
#include "specmono/monodromy.hpp"

namespace specmono {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// number formatting: shortest round-trip, '.' decimal, locale independent

inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{})
        throw IoError("parse_double: bad number '" + s + "'");
    return v;
}

// ---------------------------------------------------------------------------
// spectrum CSV

inline void write_spectrum_csv(const SpectrumDataset& ds, const std::string& path,
                               bool blind = false) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_spectrum_csv: cannot open " + path);
    out << (blind ? "re,im\n" : "re,im,source_chart,k1,k2\n");
    for (const auto& p : ds.points) {
        out << format_double(p.re) << ',' << format_double(p.im);
        if (!blind) {
            out << ',' << p.source_chart;
            if (p.k_label)
                out << ',' << (*p.k_label)[0] << ',' << (*p.k_label)[1];
            else
                out << ",,";
        }
        out << '\n';
    }
}

inline SpectrumDataset read_spectrum_csv(const std::string& path,
                                         const SemiclassicalRegime& regime) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_spectrum_csv: cannot open " + path);
    SpectrumDataset ds;
    ds.regime = regime;
    std::string line;
    if (!std::getline(in, line)) throw IoError("read_spectrum_csv: empty file " + path);
    const bool blind = line == "re,im" || line == "re,im\r";
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        while (fields.size() < (blind ? 2u : 5u)) fields.emplace_back();
        Eigenvalue ev;
        ev.re = parse_double(fields[0]);
        ev.im = parse_double(fields[1]);
        if (!blind) {
            if (!fields[2].empty()) ev.source_chart = std::stoi(fields[2]);
            if (!fields[3].empty() && !fields[4].empty())
                ev.k_label = std::array<std::int64_t, 2>{std::stoll(fields[3]),
                                                         std::stoll(fields[4])};
        }
        ds.points.push_back(ev);
    }
    return ds;
}

// ---------------------------------------------------------------------------
// JSON serialization

inline json to_json(const SemiclassicalRegime& r) {
    return {{"h", r.h},       {"eps", r.eps},     {"delta", r.delta},
            {"lambda", r.lambda}, {"alpha", r.alpha}, {"d", r.d}};
}

inline SemiclassicalRegime regime_from_json(const json& j) {
    SemiclassicalRegime r;
    r.h = j.at("h");
    r.eps = j.at("eps");
    r.delta = j.at("delta");
    r.lambda = j.at("lambda");
    r.alpha = j.at("alpha");
    r.d = j.at("d");
    return r;
}

inline json to_json(const GoodRectangle& r) {
    return {{"E", r.E},
            {"K", r.K},
            {"half_width_re", r.half_width_re},
            {"half_width_im", r.half_width_im}};
}

inline GoodRectangle rectangle_from_json(const json& j) {
    GoodRectangle r;
    r.E = j.at("E");
    r.K = j.at("K");
    r.half_width_re = j.at("half_width_re");
    r.half_width_im = j.at("half_width_im");
    return r;
}

inline json to_json(const Mat2& m) { return json::array({m.a, m.b, m.c, m.d}); }
inline json to_json(const Mat2i& m) { return json::array({m.a, m.b, m.c, m.d}); }

inline Mat2i mat2i_from_json(const json& j) {
    return {j.at(0).get<std::int64_t>(), j.at(1).get<std::int64_t>(),
            j.at(2).get<std::int64_t>(), j.at(3).get<std::int64_t>()};
}

inline json to_json(const ChartFit& f) {
    return {{"degree", f.degree},
            {"center", {f.center.x, f.center.y}},
            {"rect_center", {f.rect.center.x, f.rect.center.y}},
            {"rect_half", {f.rect.half.x, f.rect.half.y}},
            {"scale", f.scale},
            {"coeff_x", f.coeff_x},
            {"coeff_y", f.coeff_y},
            {"residual_rms", f.residual_rms},
            {"residual_max", f.residual_max},
            {"leading_differential", to_json(f.leading_differential)},
            {"h", f.h}};
}

inline ChartFit fit_from_json(const json& j) {
    ChartFit f;
    f.degree = j.at("degree");
    f.center = {j.at("center").at(0), j.at("center").at(1)};
    f.rect.center = {j.at("rect_center").at(0), j.at("rect_center").at(1)};
    f.rect.half = {j.at("rect_half").at(0), j.at("rect_half").at(1)};
    f.scale = j.at("scale");
    f.coeff_x = j.at("coeff_x").get<std::vector<double>>();
    f.coeff_y = j.at("coeff_y").get<std::vector<double>>();
    f.residual_rms = j.at("residual_rms");
    f.residual_max = j.at("residual_max");
    const auto& ld = j.at("leading_differential");
    f.leading_differential = {ld.at(0), ld.at(1), ld.at(2), ld.at(3)};
    f.h = j.at("h");
    return f;
}

inline json to_json(const TransitionMatrix& t) {
    return {{"m", to_json(t.m)}, {"raw", to_json(t.raw)},
            {"rounding_error", t.rounding_error}};
}

inline json to_json(const CocycleReport& r) {
    json v = json::array();
    for (const auto& viol : r.violations)
        v.push_back({{"kind", viol.kind}, {"i", viol.i}, {"j", viol.j}, {"k", viol.k}});
    return {{"pass", r.pass},
            {"inverse_checks", r.inverse_checks},
            {"triple_checks", r.triple_checks},
            {"violations", v}};
}

inline json to_json(const HolonomyClass& h) {
    return {{"representative", to_json(h.representative)},
            {"det", h.det},
            {"trace", h.trace},
            {"parabolic_index", h.parabolic_index},
            {"fingerprint", h.fingerprint()}};
}

// ---------------------------------------------------------------------------
// file helpers

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_text_file: cannot open " + path);
    out << content;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_text_file: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string file_hash(const std::string& path) {
    const std::string content = read_text_file(path);
    return hex64(fnv1a64(content.data(), content.size()));
}

// ---------------------------------------------------------------------------
// SVG plots

// Scatter of a rescaled cloud with optional fitted gridlines.
inline std::string svg_cloud(const RescaledCloud& cloud, const ChartFit* fit = nullptr,
                             int size_px = 640) {
    const Rect& r = cloud.rect;
    const double sx = size_px / (2.0 * r.half.x * 1.1);
    const double sy = size_px / (2.0 * r.half.y * 1.1);
    auto px = [&](Vec2 u) {
        return Vec2{(u.x - r.center.x) * sx + size_px / 2.0,
                    size_px / 2.0 - (u.y - r.center.y) * sy};
    };
    std::ostringstream out;
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << size_px << "' height='"
        << size_px << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
    if (fit) {
        // fitted gridlines: preimages of the lattice lines under the affine
        // part of the fit
        const Mat2 Dinv = fit->leading_differential.inverse();
        const Vec2 f0 = fit_value(*fit, fit->center);
        const double h = fit->h;
        const double span = std::max(r.half.x, r.half.y) * 3.0;
        for (int axis = 0; axis < 2; ++axis) {
            for (int k = -int(span / h); k <= int(span / h); ++k) {
                const double c = std::round((axis == 0 ? f0.x : f0.y) / h + k) * h;
                // line {f_axis = c} through the rectangle, mapped back
                Vec2 dir = axis == 0 ? Dinv * Vec2{0, 1} : Dinv * Vec2{1, 0};
                Vec2 base = axis == 0 ? Dinv * Vec2{c - f0.x, 0} : Dinv * Vec2{0, c - f0.y};
                base += fit->center;
                const Vec2 p1 = px(base - dir * span), p2 = px(base + dir * span);
                out << "<line x1='" << p1.x << "' y1='" << p1.y << "' x2='" << p2.x
                    << "' y2='" << p2.y << "' stroke='#cccccc' stroke-width='0.5'/>\n";
            }
        }
    }
    for (const auto& p : cloud.points) {
        const Vec2 q = px(p);
        out << "<circle cx='" << q.x << "' cy='" << q.y << "' r='1.6' fill='#1f3d99'/>\n";
    }
    out << "</svg>\n";
    return out.str();
}

// Annulus cover diagram with transition labels on the overlaps.
inline std::string svg_cover(const std::vector<GoodRectangle>& rects,
                             const CechCocycle& cocycle, Vec2 annulus_center,
                             int size_px = 640) {
    std::ostringstream out;
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << size_px << "' height='"
        << size_px << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
    double max_r = 1e-12;
    for (const auto& r : rects)
        max_r = std::max(max_r, (Vec2{r.E, r.K} - annulus_center).norm() + r.half_width_re);
    const double s = size_px * 0.42 / max_r;
    auto px = [&](Vec2 u) {
        return Vec2{(u.x - annulus_center.x) * s + size_px / 2.0,
                    size_px / 2.0 - (u.y - annulus_center.y) * s};
    };
    out << "<circle cx='" << size_px / 2.0 << "' cy='" << size_px / 2.0
        << "' r='3' fill='black'/>\n";
    for (std::size_t i = 0; i < rects.size(); ++i) {
        const auto& r = rects[i];
        const Vec2 c = px({r.E, r.K});
        const double w = 2.0 * r.half_width_re * s;
        out << "<rect x='" << c.x - w / 2 << "' y='" << c.y - w / 2 << "' width='" << w
            << "' height='" << w
            << "' fill='none' stroke='#1f3d99' stroke-width='1'/>\n";
        out << "<text x='" << c.x << "' y='" << c.y
            << "' font-size='11' text-anchor='middle'>" << i << "</text>\n";
    }
    for (const auto& [ij, t] : cocycle.transitions) {
        if (ij.first >= int(rects.size()) || ij.second >= int(rects.size())) continue;
        if (ij.first > ij.second) continue;
        const Vec2 a{rects[std::size_t(ij.first)].E, rects[std::size_t(ij.first)].K};
        const Vec2 b{rects[std::size_t(ij.second)].E, rects[std::size_t(ij.second)].K};
        const Vec2 mid = px((a + b) / 2.0);
        out << "<text x='" << mid.x << "' y='" << mid.y
            << "' font-size='9' text-anchor='middle' fill='#993322'>[" << t.m.a << ","
            << t.m.b << ";" << t.m.c << "," << t.m.d << "]</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

}  // namespace specmono
