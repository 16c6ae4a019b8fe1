#include <catch2/catch_amalgamated.hpp>

#include "specmono/detect.hpp"

using namespace specmono;

namespace {

SemiclassicalRegime regime_h(double h) {
    SemiclassicalRegime r;
    r.h = h;
    r.delta = 0.5;
    r.eps = std::pow(h, r.delta);
    r.lambda = 1e-6;
    r.alpha = 1e-2;
    r.d = 1.0;
    return r;
}

// Cloud of points u = A*(h*k) + b over all labels filling `rect`, with
// optional per-point noise.
RescaledCloud lattice_cloud(const Mat2& A, Vec2 b, double h, Rect rect,
                            double noise = 0.0, std::uint64_t seed = 5) {
    RescaledCloud cloud;
    cloud.rect = rect;
    cloud.regime = regime_h(h);
    const int n = int(rect.half.x / h) + 2;
    for (int k1 = -n; k1 <= n; ++k1) {
        for (int k2 = -n; k2 <= n; ++k2) {
            Vec2 u = A * Vec2{h * k1, h * k2} + b;
            if (noise > 0.0)
                u += rng::normal_pair(seed, std::uint64_t(k1 + n),
                                      std::uint64_t(k2 + n)) *
                     noise;
            if (rect.contains(u)) cloud.points.push_back(u);
        }
    }
    return cloud;
}

}  // namespace

TEST_CASE("rescale") {
    SpectrumDataset ds;
    ds.regime = regime_h(1e-4);
    ds.regime.eps = 1e-2;
    GoodRectangle rect;
    rect.E = 1.0;
    rect.K = 0.4;
    rect.half_width_re = 0.01;
    rect.half_width_im = 0.01 * ds.regime.eps;
    for (int i = 0; i < 40; ++i)
        ds.points.push_back({1.0 + 1e-4 * (i % 7 - 3), 0.004 + 1e-6 * (i / 7), -1, {}});
    const auto cloud = rescale(ds, rect);
    CHECK(cloud.points.size() == 40);
    CHECK(cloud.points[0].x == Catch::Approx(1.0).margin(1e-3));
    CHECK(cloud.points[0].y == Catch::Approx(0.4).margin(0.05));

    GoodRectangle empty;
    empty.E = 5.0;
    empty.K = 0.0;
    empty.half_width_re = 0.01;
    empty.half_width_im = 0.01 * ds.regime.eps;
    CHECK_THROWS_AS(rescale(ds, empty), InsufficientDataError);

    ds.regime.eps = 0.0;
    CHECK_THROWS_AS(rescale(ds, rect), PreconditionError);
}

TEST_CASE("reduce_basis: Lagrange-Gauss") {
    const auto r = reduce_basis({0.01, 0.0}, {0.01, 0.01});
    CHECK(r.b1.norm() == Catch::Approx(0.01));
    CHECK(r.b2.norm() == Catch::Approx(0.01));
    CHECK(std::abs(r.b1.dot(r.b2)) < 1e-12);
}

TEST_CASE("detect_basis: square lattice") {
    const double h = 0.01;
    const auto cloud = lattice_cloud(Mat2::identity(), {0, 0}, h, {{0, 0}, {0.2, 0.2}});
    const auto basis = detect_basis(cloud);
    // up to sign/order: two orthogonal vectors of length h
    CHECK(basis.b1.norm() == Catch::Approx(h).epsilon(0.01));
    CHECK(basis.b2.norm() == Catch::Approx(h).epsilon(0.01));
    CHECK(std::abs(basis.b1.cross(basis.b2)) == Catch::Approx(h * h).epsilon(0.02));
}

TEST_CASE("detect_basis: sheared lattice spans the planted lattice") {
    const double h = 0.01;
    const Mat2 A{1.0, 0.0, 0.3, 1.0};  // generators (h, 0.3h) and (0, h)
    const auto cloud = lattice_cloud(A, {0, 0}, h, {{0, 0}, {0.2, 0.2}});
    const auto basis = detect_basis(cloud);
    // planted generators must have integer coordinates in the detected basis
    const Mat2 B{basis.b1.x, basis.b2.x, basis.b1.y, basis.b2.y};
    const Mat2 Binv = B.inverse();
    for (const Vec2 g : {Vec2{h, 0.3 * h}, Vec2{0.0, h}}) {
        const Vec2 c = Binv * g;
        CHECK(std::abs(c.x - std::round(c.x)) < 0.02);
        CHECK(std::abs(c.y - std::round(c.y)) < 0.02);
    }
    CHECK(std::abs(B.det()) == Catch::Approx(h * h).epsilon(0.05));
}

TEST_CASE("detect_basis: too few points") {
    RescaledCloud cloud;
    cloud.rect = {{0, 0}, {1, 1}};
    cloud.regime = regime_h(0.01);
    for (int i = 0; i < 15; ++i) cloud.points.push_back({0.01 * i, 0.0});
    CHECK_THROWS_AS(detect_basis(cloud), InsufficientDataError);
}

TEST_CASE("label_lattice: exact lattice gets full coverage") {
    const double h = 0.01;
    const auto cloud = lattice_cloud(Mat2::identity(), {0.002, -0.001}, h,
                                     {{0, 0}, {0.2, 0.2}});
    const auto basis = detect_basis(cloud);
    const auto labeling = label_lattice(cloud, basis);
    CHECK(labeling.coverage == 1.0);
    // injectivity
    std::map<std::array<std::int64_t, 2>, int> seen;
    for (const auto& l : labeling.labels) {
        REQUIRE(l.has_value());
        CHECK(++seen[*l] == 1);
    }
    // labels reproduce the geometry: u_j - u_i = B * (k_j - k_i)
    const Mat2 B = labeling.basis_matrix();
    const auto& anchor = cloud.points[labeling.anchor];
    const auto la = *labeling.labels[labeling.anchor];
    for (std::size_t i = 0; i < cloud.points.size(); i += 17) {
        const auto li = *labeling.labels[i];
        const Vec2 pred =
            anchor + B * Vec2{double(li[0] - la[0]), double(li[1] - la[1])};
        CHECK((pred - cloud.points[i]).norm() < 1e-9);
    }
}

TEST_CASE("label_lattice: tolerates 1%-of-cell noise, rejects structureless data") {
    const double h = 0.01;
    const auto noisy = lattice_cloud(Mat2::identity(), {0, 0}, h, {{0, 0}, {0.2, 0.2}},
                                     0.01 * h);
    const auto basis = detect_basis(noisy);
    const auto labeling = label_lattice(noisy, basis);
    CHECK(labeling.coverage == 1.0);

    RescaledCloud random;
    random.rect = {{0, 0}, {0.2, 0.2}};
    random.regime = regime_h(h);
    for (std::size_t i = 0; i < noisy.points.size(); ++i) {
        random.points.push_back(
            {0.4 * (rng::uniform(11, i, 0) - 0.5), 0.4 * (rng::uniform(11, i, 1) - 0.5)});
    }
    CHECK_THROWS_AS(label_lattice(random, BasisPair{{h, 0}, {0, h}}), LabelingError);
}

TEST_CASE("label_lattice: cell-area sanity bound") {
    const double h = 0.01;
    auto cloud = lattice_cloud(Mat2::identity(), {0, 0}, h, {{0, 0}, {0.2, 0.2}});
    cloud.regime = regime_h(2.5 * h);  // declared h inconsistent with the spacing
    const auto basis = detect_basis(cloud);
    CHECK_THROWS_AS(label_lattice(cloud, basis), DetectionError);
}

TEST_CASE("fit_chart: exact affine data") {
    const double h = 1e-3;
    const Mat2 A{1.0, 0.1, -0.2, 1.05};
    const Vec2 b{0.5, 0.25};
    const auto cloud = lattice_cloud(A, b, h, {{0.5, 0.25}, {0.02, 0.02}});
    const auto basis = detect_basis(cloud);
    const auto labeling = label_lattice(cloud, basis);
    const auto fit = fit_chart(cloud, labeling, 1, cloud.regime);
    CHECK(fit.residual_max <= 1e-9 * h);
    // the fitted map inverts u = A*(h k): differential = G*A^{-1} for the
    // labeling's GL(2,Z) gauge G, so composing with A recovers G
    const Mat2 gauge = fit.leading_differential * A;
    CHECK(std::abs(gauge.a - std::round(gauge.a)) < 1e-6);
    CHECK(std::abs(gauge.b - std::round(gauge.b)) < 1e-6);
    CHECK(std::abs(gauge.c - std::round(gauge.c)) < 1e-6);
    CHECK(std::abs(gauge.d - std::round(gauge.d)) < 1e-6);
    CHECK(std::abs(gauge.det()) == Catch::Approx(1.0).margin(1e-6));

    CHECK_THROWS_AS(fit_chart(cloud, labeling, 0, cloud.regime), PreconditionError);
    CHECK_THROWS_AS(fit_chart(cloud, labeling, 4, cloud.regime), PreconditionError);
}

TEST_CASE("fit_chart: quadratic map recovered at degree 2") {
    const double h = 1e-3;
    RescaledCloud cloud;
    cloud.rect = {{0.0, 0.0}, {0.02, 0.02}};
    cloud.regime = regime_h(h);
    // u solves f(u) = h k for f(u) = (u1 + u2^2, u2): u = (hk1 - (hk2)^2, hk2)
    for (int k1 = -25; k1 <= 25; ++k1) {
        for (int k2 = -25; k2 <= 25; ++k2) {
            const Vec2 u{h * k1 - h * k2 * h * k2, h * k2};
            if (cloud.rect.contains(u)) cloud.points.push_back(u);
        }
    }
    const auto basis = detect_basis(cloud);
    const auto labeling = label_lattice(cloud, basis);
    const auto deg1 = fit_chart(cloud, labeling, 1, cloud.regime, 1e9);
    const auto deg2 = fit_chart(cloud, labeling, 2, cloud.regime);
    CHECK(deg2.residual_max < 1e-8 * h);
    CHECK(deg2.residual_max < deg1.residual_max);
}

TEST_CASE("fit_value and fit_jacobian are consistent") {
    const double h = 1e-3;
    const auto cloud = lattice_cloud({1.0, 0.2, 0.0, 1.0}, {0, 0}, h, {{0, 0}, {0.02, 0.02}});
    const auto labeling = label_lattice(cloud, detect_basis(cloud));
    const auto fit = fit_chart(cloud, labeling, 2, cloud.regime);
    const Vec2 u{0.003, -0.004};
    const double step = 1e-7;
    const Mat2 J = fit_jacobian(fit, u);
    const Vec2 dx = (fit_value(fit, {u.x + step, u.y}) - fit_value(fit, {u.x - step, u.y})) /
                    (2 * step);
    const Vec2 dy = (fit_value(fit, {u.x, u.y + step}) - fit_value(fit, {u.x, u.y - step})) /
                    (2 * step);
    CHECK(J.a == Catch::Approx(dx.x).margin(1e-6));
    CHECK(J.c == Catch::Approx(dx.y).margin(1e-6));
    CHECK(J.b == Catch::Approx(dy.x).margin(1e-6));
    CHECK(J.d == Catch::Approx(dy.y).margin(1e-6));
}

TEST_CASE("relabel_fit: exact GL(2,Z) equivariance") {
    const double h = 1e-3;
    const auto cloud = lattice_cloud({1.0, 0.1, -0.2, 1.05}, {0.5, 0.25}, h,
                                     {{0.5, 0.25}, {0.02, 0.02}});
    const auto labeling = label_lattice(cloud, detect_basis(cloud));
    const auto fit = fit_chart(cloud, labeling, 2, cloud.regime);

    const Mat2i B{2, 1, 1, 1};
    const std::array<std::int64_t, 2> t{3, -2};
    const auto moved = relabel_fit(fit, B, t);

    // transformed fit evaluates to B*f(u) + h*t everywhere
    for (const Vec2 u : {Vec2{0.5, 0.25}, Vec2{0.49, 0.26}, Vec2{0.51, 0.24}}) {
        const Vec2 f = fit_value(fit, u);
        const Vec2 expect = B.to_real() * f + Vec2{h * t[0], h * t[1]};
        const Vec2 got = fit_value(moved, u);
        CHECK(got.x == Catch::Approx(expect.x).margin(1e-15));
        CHECK(got.y == Catch::Approx(expect.y).margin(1e-15));
    }
    // and the differential transforms by left multiplication, exactly
    const Mat2 expected = B.to_real() * fit.leading_differential;
    CHECK(moved.leading_differential.a == expected.a);
    CHECK(moved.leading_differential.d == expected.d);

    // the same result comes from refitting with transformed labels
    LatticeLabeling relabeled = labeling;
    for (auto& l : relabeled.labels) {
        const auto k = *l;
        l = std::array<std::int64_t, 2>{B.a * k[0] + B.b * k[1] + t[0],
                                        B.c * k[0] + B.d * k[1] + t[1]};
    }
    const auto refit = fit_chart(cloud, relabeled, 2, cloud.regime, 1e9);
    for (std::size_t i = 0; i < refit.coeff_x.size(); ++i) {
        CHECK(refit.coeff_x[i] == Catch::Approx(moved.coeff_x[i]).margin(1e-8 * h));
        CHECK(refit.coeff_y[i] == Catch::Approx(moved.coeff_y[i]).margin(1e-8 * h));
    }
}
