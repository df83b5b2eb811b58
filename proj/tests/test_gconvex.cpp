#include <doctest.h>

#include "gjekit/gconvex.hpp"

#include <cmath>
#include <numbers>

using namespace gjekit;

namespace {

Vec v2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

SupportFamily random_family(const GeneratorPtr& g, std::size_t n, std::uint64_t seed) {
    Rng rng(seed, 7);
    std::vector<Support> s;
    for (std::size_t i = 0; i < n; ++i) s.push_back({rng.uniform_in(g->domain().V.shrunk(0.8)), rng.uniform(-0.2, 0.2)});
    return SupportFamily(g, s);
}

// Oracle: fraction of uniform samples whose argmax is each support.
std::vector<double> monte_carlo_masses(const SupportFamily& u, const Box& b, std::size_t samples, std::uint64_t seed) {
    Rng rng(seed, 11);
    std::vector<double> m(u.size(), 0.0);
    for (std::size_t s = 0; s < samples; ++s) {
        const Vec x = rng.uniform_in(b);
        std::size_t best = 0;
        double bv = -kInf;
        for (std::size_t i = 0; i < u.size(); ++i) {
            const double v = u.gen().value(x, u[i].y, u[i].z);
            if (v > bv) bv = v, best = i;
        }
        m[best] += 1.0;
    }
    for (auto& x : m) x *= b.volume() / static_cast<double>(samples);
    return m;
}

}  // namespace

TEST_SUITE("gconvex") {
    TEST_CASE("evaluate agrees with a direct max loop") {
        const auto g = make_monge_ampere(2);
        const SupportFamily u = random_family(g, 5, 1);
        Rng rng(2, 1);
        for (int t = 0; t < 100; ++t) {
            const Vec x = rng.uniform_in(g->domain().U.shrunk(0.9));
            double m = -kInf;
            for (std::size_t i = 0; i < u.size(); ++i) m = std::max(m, g->value(x, u[i].y, u[i].z));
            const auto e = evaluate(u, x);
            CHECK(e.value == m);
            REQUIRE(!e.active.empty());
            CHECK(g->value(x, u[e.active[0]].y, u[e.active[0]].z) == m);
        }
    }

    TEST_CASE("symmetric ridge has both supports active") {
        const auto g = make_monge_ampere(2);
        const SupportFamily u(g, {{v2(1, 0), 0.0}, {v2(-1, 0), 0.0}});
        const auto e = evaluate(u, v2(0, 0.3));
        CHECK(e.active.size() == 2);
        const YMap ym = y_mapping(u, v2(0, 0.3));
        CHECK(ym.targets.size() == 2);
        CHECK((ym.covectors[0] - v2(1, 0)).norm() <= 1e-14);
        CHECK((ym.covectors[1] - v2(-1, 0)).norm() <= 1e-14);
        CHECK(evaluate(u, v2(0.2, 0)).active.size() == 1);
    }

    TEST_CASE("y_mapping matches solve_YZ on the finite-difference gradient") {
        const auto g = make_perturbed(0.05, 2);
        const SupportFamily u = random_family(g, 6, 3);
        Rng rng(4, 2);
        int checked = 0;
        for (int t = 0; t < 200 && checked < 50; ++t) {
            const Vec x = rng.uniform_in(g->domain().U.shrunk(0.6));
            const YMap ym = y_mapping(u, x);
            if (ym.indices.size() != 1) continue;
            const double h = 1e-6;
            Vec p(2);
            for (int a = 0; a < 2; ++a) {
                Vec e = Vec::Zero(2);
                e[a] = h;
                const auto i0 = u.argmax(as_span(Vec(x + e))), i1 = u.argmax(as_span(Vec(x - e)));
                if (i0 != ym.indices[0] || i1 != ym.indices[0]) goto skip;
                p[a] = (u.value(x + e) - u.value(x - e)) / (2 * h);
            }
            {
                const YZ r = solve_YZ(*g, x, u.value(x), p);
                CHECK((r.y - ym.targets[0]).norm() <= 1e-5);
                ++checked;
            }
        skip:;
        }
        CHECK(checked >= 20);
    }

    TEST_CASE("one support owns all mass") {
        const auto g = make_monge_ampere(2);
        const GridDomain dom = GridDomain::box(Box::cube(2, -1, 1), {64, 64});
        const MeasureReport r = cell_decomposition(SupportFamily(g, {{v2(0.1, 0.2), 0.0}}), dom);
        CHECK(r.masses[0] == doctest::Approx(dom.total_mass()));
        CHECK(r.counts[0] == dom.nodes());
    }

    TEST_CASE("mirror supports split the square into halves") {
        const auto g = make_monge_ampere(2);
        const GridDomain dom = GridDomain::box(Box::cube(2, -1, 1), {256, 256});
        const MeasureReport r = cell_decomposition(SupportFamily(g, {{v2(1, 0), 0.0}, {v2(-1, 0), 0.0}}), dom);
        CHECK(std::abs(r.masses[0] - r.masses[1]) <= 1e-3 * r.masses[0]);
        CHECK(r.masses[0] + r.masses[1] == doctest::Approx(dom.total_mass()).epsilon(1e-12));
    }

    TEST_CASE("cell masses match the Monte Carlo oracle") {
        const auto g = make_monge_ampere(2);
        const Box b = Box::cube(2, -1, 1);
        const GridDomain dom = GridDomain::box(b, {512, 512});
        const SupportFamily u = random_family(g, 5, 5);
        const MeasureReport r = cell_decomposition(u, dom);
        const std::size_t n = 1000000;
        const auto mc = monte_carlo_masses(u, b, n, 6);
        for (std::size_t i = 0; i < u.size(); ++i) {
            const double p = mc[i] / b.volume();
            const double se = b.volume() * std::sqrt(p * (1 - p) / static_cast<double>(n));
            CAPTURE(i);
            CHECK(std::abs(r.masses[i] - mc[i]) <= 3 * se + 1e-12);
        }
    }

    TEST_CASE("partition and monotonicity in z") {
        const auto g = make_perturbed(0.05, 2);
        const GridDomain dom = GridDomain::box(Box::cube(2, -0.25, 0.25), {80, 80});
        Rng rng(7, 3);
        for (int t = 0; t < 20; ++t) {
            const SupportFamily u = random_family(g, 6, 100 + static_cast<std::uint64_t>(t));
            const MeasureReport a = cell_decomposition(u, dom);
            double sum = 0.0;
            for (double m : a.masses) sum += m;
            CHECK(sum == doctest::Approx(dom.total_mass()).epsilon(1e-12));
            auto z = u.heights();
            const auto i = static_cast<std::size_t>(rng.uniform(0, 6));
            z[i] -= rng.uniform(0.0, 0.05);
            const MeasureReport b = cell_decomposition(u.with_heights(z), dom);
            for (std::size_t k = 0; k < dom.nodes(); ++k)
                if (a.owner[k] == i) CHECK(b.owner[k] == i);
            CHECK(b.counts[i] >= a.counts[i]);
        }
    }

    TEST_CASE("ties go to the lowest index") {
        const auto g = make_monge_ampere(2);
        const GridDomain dom = GridDomain::box(Box::cube(2, -1, 1), {8, 8});
        const MeasureReport r = cell_decomposition(SupportFamily(g, {{v2(0.3, 0), 0.1}, {v2(0.3, 0), 0.1}}), dom);
        CHECK(r.counts[0] == dom.nodes());
        CHECK(r.counts[1] == 0);
    }

    TEST_CASE("no admissible support is an empty domain") {
        GeneratorDomain d = default_domain("monge-ampere", 2);
        d.z_interval = {-0.5, 0.5};
        const auto g = make_monge_ampere(2, d);
        const GridDomain dom = GridDomain::box(Box::cube(2, -1, 1), {8, 8});
        try {
            cell_decomposition(SupportFamily(g, {{v2(0, 0), 3.0}}), dom);
            FAIL("expected EmptyDomain");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::EmptyDomain);
        }
    }

    TEST_CASE("paraboloid section is a ball of area 2 pi h") {
        const auto g = make_monge_ampere(2);
        const GridDomain dom = GridDomain::box(Box::cube(2, -0.6, 0.6), {512, 512});
        auto u = [](const Vec& x) { return 0.5 * x.squaredNorm(); };
        const Vec zero = Vec::Zero(2);
        for (double h : {1e-3, 1e-2, 1e-1}) {
            const Section s = section(u, *g, zero, zero, h, dom);
            CAPTURE(h);
            CHECK(s.compact);
            CHECK(s.area == doctest::Approx(2 * std::numbers::pi * h).epsilon(0.02));
            CHECK(s.depth == doctest::Approx(h).epsilon(1e-3));
        }
    }

    TEST_CASE("sections grow with h and shrink to the contact point") {
        const auto g = make_monge_ampere(2);
        const GridDomain dom = GridDomain::box(Box::cube(2, -0.6, 0.6), {200, 200});
        auto u = [](const Vec& x) { return 0.5 * x.squaredNorm() + 0.2 * x[0] * x[0]; };
        const Vec zero = Vec::Zero(2);
        std::vector<char> prev(dom.nodes(), 0);
        std::size_t prev_count = 0;
        for (double h : {1e-6, 1e-4, 1e-3, 1e-2, 5e-2}) {
            const Section s = section(u, *g, zero, zero, h, dom);
            for (std::size_t k = 0; k < dom.nodes(); ++k)
                if (prev[k]) CHECK(s.mask[k]);
            CHECK(s.count >= prev_count);
            prev = s.mask;
            prev_count = s.count;
        }
        CHECK(section(u, *g, zero, zero, 1e-7, dom).count <= 4);
    }

    TEST_CASE("a section reaching the boundary is not compactly contained") {
        const auto g = make_monge_ampere(2);
        const GridDomain dom = GridDomain::box(Box::cube(2, -0.2, 0.2), {64, 64});
        auto u = [](const Vec& x) { return 0.5 * x.squaredNorm(); };
        const Vec zero = Vec::Zero(2);
        try {
            section(u, *g, zero, zero, 0.1, dom);
            FAIL("expected NotCompactlyContained");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::NotCompactlyContained);
        }
        CHECK_FALSE(section(u, *g, zero, zero, 0.1, dom, false).compact);
    }

    TEST_CASE("paraboloid section has a small hull defect") {
        const auto g = make_monge_ampere(2);
        const GridDomain dom = GridDomain::box(Box::cube(2, -0.6, 0.6), {200, 200});
        auto u = [](const Vec& x) { return 0.5 * x.squaredNorm() + 0.3 * x[0] * x[1]; };
        const Section s = section(u, *g, Vec::Zero(2), Vec::Zero(2), 0.02, dom);
        CHECK(hull_defect(s.mask, dom) <= 2.0 / 200);
    }

    TEST_CASE("pushforward of quadratic fields") {
        GeneratorDomain d = default_domain("monge-ampere", 2);
        d.V = Box::cube(2, -3, 3);
        const auto g = make_monge_ampere(2, d);
        const GridDomain dom = GridDomain::ball(Box::cube(2, -1, 1), {256, 256}, Vec::Zero(2), 1.0);
        const std::vector<char> all(dom.nodes(), 1);
        const auto half = pushforward_density(*g, SmoothField::quadratic(Mat::Identity(2, 2)), dom, all);
        CHECK(half.integral == doctest::Approx(std::numbers::pi).epsilon(0.01));
        const auto full = pushforward_density(*g, SmoothField::quadratic(2 * Mat::Identity(2, 2)), dom, all);
        CHECK(full.integral == doctest::Approx(4 * dom.domain_volume()).epsilon(0.01));
    }

    TEST_CASE("pushforward of a non-convex field is singular") {
        const auto g = make_monge_ampere(2);
        const GridDomain dom = GridDomain::box(Box::cube(2, -0.5, 0.5), {32, 32});
        // det D^2 u = 6 x_2 changes sign across x_2 = 0.
        SmoothField u;
        u.value = [](const Vec& x) { return 0.5 * x[0] * x[0] + x[1] * x[1] * x[1]; };
        const std::vector<char> all(dom.nodes(), 1);
        try {
            pushforward_density(*g, u, dom, all);
            FAIL("expected SingularJacobian");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::SingularJacobian);
        }
    }

    TEST_CASE("pushforward matches the Monte Carlo image area for the perturbed generator") {
        const auto g = make_perturbed(0.05, 2);
        const Box b = Box::cube(2, -0.1, 0.1);
        const GridDomain dom = GridDomain::box(b, {128, 128});
        Mat Q(2, 2);
        Q << 1.0, 0.2, 0.2, 0.8;
        const SmoothField u = SmoothField::quadratic(Q);
        const std::vector<char> all(dom.nodes(), 1);
        const double I = pushforward_density(*g, u, dom, all).integral;
        // Oracle: area of the hull of Y(x, u, Du) over sampled x.
        Rng rng(9, 4);
        std::vector<P2> img;
        for (int i = 0; i < 20000; ++i) {
            const Vec x = rng.uniform_in(b);
            const YZ r = solve_YZ(*g, x, u(x), u.grad(x));
            img.emplace_back(r.y[0], r.y[1]);
        }
        CHECK(I == doctest::Approx(polygon_area(convex_hull(img))).epsilon(0.03));
    }
}
