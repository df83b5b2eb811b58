#include <doctest.h>

#include "gjekit/geometry.hpp"

#include <cmath>
#include <numbers>

using namespace gjekit;

namespace {

// Hull of points at evenly spread angles, so the origin is interior.
Polygon random_convex(Rng& rng, int points, double r) {
    std::vector<P2> pts;
    for (int i = 0; i < points; ++i) {
        const double t = (i + rng.uniform(0.0, 0.5)) * 2 * std::numbers::pi / points, s = r * std::sqrt(rng.uniform(0.3, 1.0));
        pts.emplace_back(s * std::cos(t), s * std::sin(t));
    }
    return convex_hull(pts);
}

}  // namespace

TEST_SUITE("geometry") {
    TEST_CASE("convex hull of a square with interior points") {
        std::vector<P2> pts{{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}, {0.2, 0.7}};
        const Polygon h = convex_hull(pts);
        CHECK(h.size() == 4);
        CHECK(polygon_area(h) == doctest::Approx(1.0));
        CHECK(is_convex_ccw(h));
        CHECK(polygon_perimeter(h) == doctest::Approx(4.0));
    }

    TEST_CASE("scaled polar matches the halfplane construction") {
        Rng rng(3, 1);
        for (int trial = 0; trial < 20; ++trial) {
            const Polygon D = random_convex(rng, 12, 0.05);
            REQUIRE(point_in_polygon(D, P2::Zero()));
            const double h = 0.004;
            // Oracle: h polar(D) = {p : p.x <= h for every vertex x}.
            std::vector<std::pair<P2, double>> hp;
            for (const auto& v : D) hp.emplace_back(v, h);
            const Polygon oracle = halfplane_intersection(hp, 10.0);
            const Polygon polar = scaled_polar(D, h);
            CHECK(polygon_area(convex_hull(polar)) == doctest::Approx(polygon_area(oracle)).epsilon(1e-9));
            CHECK(hausdorff_polygons(convex_hull(polar), oracle) <= 1e-10);
        }
    }

    TEST_CASE("support function and diameter against brute force") {
        Rng rng(4, 2);
        const Polygon D = random_convex(rng, 30, 1.0);
        double diam = 0.0;
        for (const auto& a : D)
            for (const auto& b : D) diam = std::max(diam, (a - b).norm());
        CHECK(polygon_diameter(D) == doctest::Approx(diam));
        for (int i = 0; i < 20; ++i) {
            const P2 w(rng.normal(), rng.normal());
            double s = -kInf;
            for (const auto& v : D) s = std::max(s, v.dot(w));
            CHECK(support_function(D, w) == doctest::Approx(s));
        }
    }

    TEST_CASE("marching squares recovers a disk area") {
        const int n = 400;
        const double r = 0.3, dx = 1.0 / (n - 1);
        std::vector<double> v(static_cast<std::size_t>(n) * n);
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const double x = -0.5 + i * dx, y = -0.5 + j * dx;
                v[static_cast<std::size_t>(j) * n + i] = x * x + y * y - r * r;
            }
        const auto lines = marching_squares(v, n, n, -0.5, -0.5, dx, dx, 0.0);
        REQUIRE(lines.size() == 1);
        CHECK(lines[0].closed);
        CHECK(polylines_area(lines) == doctest::Approx(std::numbers::pi * r * r).epsilon(1e-4));
    }

    TEST_CASE("minimum ellipse of rectangle corners") {
        // The minimum-area ellipse through the corners of [-a,a] x [-b,b] has semi-axes sqrt(2) a, sqrt(2) b.
        const double a = 0.3, b = 0.1;
        PointList pts;
        for (double sx : {-1.0, 1.0})
            for (double sy : {-1.0, 1.0}) {
                Vec p(2);
                p << sx * a, sy * b;
                pts.push_back(p);
            }
        const Ellipsoid E = min_ellipsoid(pts, 1e-10);
        const Vec ax = E.axes();
        CHECK(ax[0] == doctest::Approx(std::sqrt(2.0) * b).epsilon(1e-4));
        CHECK(ax[1] == doctest::Approx(std::sqrt(2.0) * a).epsilon(1e-4));
        CHECK(E.center.norm() <= 1e-8);
        for (const auto& p : pts) CHECK(E.contains(p, 1e-6));
    }

    TEST_CASE("minimum ellipse contains the cloud and is tight") {
        Rng rng(8, 3);
        PointList pts;
        for (int i = 0; i < 40; ++i) {
            Vec p(2);
            p << rng.normal() * 0.2, rng.normal() * 0.05;
            pts.push_back(p);
        }
        const Ellipsoid E = min_ellipsoid(pts, 1e-9);
        for (const auto& p : pts) CHECK(E.contains(p, 1e-6));
        Ellipsoid S = E;
        S.A = E.A / (0.99 * 0.99);
        bool lost = false;
        for (const auto& p : pts) lost = lost || !S.contains(p);
        CHECK(lost);
    }

    TEST_CASE("hausdorff distance of shifted samples") {
        std::vector<P2> a{{0, 0}, {1, 0}}, b{{0, 0.1}, {1, 0.1}};
        CHECK(hausdorff(a, b) == doctest::Approx(0.1));
    }
}
