#include <doctest.h>

#include "gjekit/estimates.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace gjekit;

namespace {

constexpr double kPi2 = std::numbers::pi * std::numbers::pi;

Vec v2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

GridDomain grid(int res, double half = 0.6) { return GridDomain::box(Box::cube(2, -half, half), {res, res}); }

SmoothField diag_quadratic(double a, double b) {
    Mat Q = Mat::Zero(2, 2);
    Q(0, 0) = a;
    Q(1, 1) = b;
    return SmoothField::quadratic(Q);
}

CaseOptions at(double h) {
    CaseOptions o;
    o.h = h;
    return o;
}

template <class F>
ErrorKind kind_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::DomainError;
}

}  // namespace

TEST_SUITE("estimates") {
    TEST_CASE("paraboloid ratios are the closed-form constants at every height") {
        const auto gen = make_monge_ampere(2);
        const GridDomain dom = grid(512);
        for (double h : {1e-3, 1e-2, 1e-1}) {
            const SectionCase c = make_case(gen, diag_quadratic(1, 1), Vec::Zero(2), dom, at(h));
            CHECK(c.density_checked);
            CHECK(c.density_min == doctest::Approx(1.0).epsilon(1e-3));
            CHECK(c.sup == doctest::Approx(h).epsilon(1e-9));
            CHECK(upper_estimate(c) == doctest::Approx(1.0 / (4 * kPi2)).epsilon(0.02));
            CHECK(lower_estimate(c) == doctest::Approx(4 * kPi2).epsilon(0.02));
        }
    }

    TEST_CASE("anisotropic quadratic ratio is flat in h") {
        const auto gen = make_monge_ampere(2);
        const GridDomain dom = grid(512);
        std::vector<double> r;
        for (double h : {1e-3, 1e-2, 1e-1}) r.push_back(upper_estimate(make_case(gen, diag_quadratic(1, 4), Vec::Zero(2), dom, at(h))));
        // Ellipse semi-axes sqrt(2h) and sqrt(h / 2): area pi h.
        for (double v : r) CHECK(v == doctest::Approx(1.0 / kPi2).epsilon(0.03));
        const auto [mn, mx] = std::minmax_element(r.begin(), r.end());
        CHECK(*mx / *mn <= 1.05);
    }

    TEST_CASE("upper and lower ratios are reciprocal") {
        const SectionCase c = make_case(make_perturbed(0.05, 2), diag_quadratic(1, 2), v2(0.05, 0.0), grid(256), at(0.01));
        CHECK(upper_estimate(c) * lower_estimate(c) == doctest::Approx(1.0).epsilon(1e-12));
    }

    TEST_CASE("perturbed generator ratios stay within one order of magnitude") {
        const auto gen = make_perturbed(0.05, 2);
        const GridDomain dom = grid(256, 0.28);
        std::vector<double> r;
        for (double h : {1e-3, 2e-3, 5e-3, 1e-2, 2e-2}) r.push_back(upper_estimate(make_case(gen, diag_quadratic(1, 1), Vec::Zero(2), dom, at(h))));
        const auto [mn, mx] = std::minmax_element(r.begin(), r.end());
        CHECK(*mx / *mn <= 10.0);
    }

    TEST_CASE("invalid sections are rejected") {
        const auto gen = make_monge_ampere(2);
        const GridDomain dom = grid(128);
        CHECK(kind_of([&] { make_case(gen, diag_quadratic(1, 1), Vec::Zero(2), dom, at(0.0)); }) == ErrorKind::InvalidSection);
        // Flat direction: det D^2 u = 0 fails the pinching precondition.
        CHECK(kind_of([&] { make_case(gen, diag_quadratic(1, 0), Vec::Zero(2), dom, at(0.01)); }) == ErrorKind::InvalidSection);
        CHECK(kind_of([&] { make_case(gen, diag_quadratic(1, 1), Vec::Zero(2), dom, at(0.5)); }) == ErrorKind::NotCompactlyContained);
    }

    TEST_CASE("near-boundary ratio follows the closed form and stays bounded") {
        const auto gen = make_monge_ampere(2);
        const SectionCase c = make_case(gen, diag_quadratic(1, 1), Vec::Zero(2), grid(512), at(0.01));
        double top = 0.0;
        for (double eps : {0.3, 0.1, 0.03}) {
            const NearBoundaryResult r = near_boundary_estimate(c, P2(1, 0), eps);
            // Disc of radius sqrt(2h): gap 4 h eps (1 - eps), ratio 4 eps (1 - eps)^2 / pi^2.
            CHECK(r.ratio == doctest::Approx(4 * eps * (1 - eps) * (1 - eps) / kPi2).epsilon(0.1));
            top = std::max(top, r.ratio / eps);
        }
        CHECK(top <= 4.0 / kPi2 * 1.1);
        CHECK(kind_of([&] { near_boundary_estimate(c, P2(1, 0), 0.0); }) == ErrorKind::PreconditionViolated);
        CHECK(kind_of([&] { near_boundary_estimate(c, P2(1, 0), 1.0); }) == ErrorKind::PreconditionViolated);
        CHECK(kind_of([&] { near_boundary_estimate(c, P2(1, 0), 0.1, 10.0); }) == ErrorKind::PreconditionViolated);
    }

    TEST_CASE("central near-boundary probe agrees with the upper ratio within a factor 2") {
        const SectionCase c = make_case(make_monge_ampere(2), diag_quadratic(1, 1), Vec::Zero(2), grid(512), at(0.01));
        const NearBoundaryResult r = near_boundary_estimate(c, P2(0, 1), 0.5);
        const double central = std::pow(r.gap, 2) / (r.area_q * r.area_q);
        CHECK(central <= 2.0 * upper_estimate(c));
        CHECK(central >= 0.5 * upper_estimate(c));
    }

    TEST_CASE("cone comparison on a Monge-Ampere lattice family") {
        const auto gen = make_monge_ampere(2);
        // Supports of |x|^2 / 2 at a 3 x 3 lattice of gradients: bounded sections.
        std::vector<Support> sup;
        for (int i = -1; i <= 1; ++i)
            for (int j = -1; j <= 1; ++j) {
                const Vec y = v2(0.2 * i, 0.2 * j);
                sup.push_back({y, 0.5 * y.squaredNorm()});
            }
        const auto fam = std::make_shared<const SupportFamily>(gen, sup);
        const SectionCase c = make_case(fam, v2(0.02, 0.01), grid(256), at(0.01));
        const ConeComparison r = cone_comparison(c, 2.0);
        CHECK(r.pass);
        CHECK(r.C <= 4.0);
        CHECK(r.supports >= 1);
        // Large K leaves only the contact support, which sits exactly at depth h.
        const ConeComparison far = cone_comparison(c, 1e6);
        CHECK(far.supports == 1);
        CHECK(far.C == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(kind_of([&] { cone_comparison(make_case(gen, diag_quadratic(1, 1), Vec::Zero(2), grid(64), at(0.05)), 2.0); }) ==
              ErrorKind::PreconditionViolated);
    }

    TEST_CASE("summary windows") {
        std::vector<EstimateCase> cs(2);
        cs[0].upper = 1.0, cs[0].lower = 1.0;
        cs[1].upper = 2.0, cs[1].lower = 0.5, cs[1].near = 3.0;
        const EstimateReport r = summarize(cs, {0.5, 2.5}, {0.6, 2.0}, {0.0, 4.0});
        CHECK(r.upper_pass);
        CHECK_FALSE(r.lower_pass);
        CHECK(r.near_pass);
        CHECK_FALSE(r.pass());
        CHECK(r.upper_min == 1.0);
        CHECK(r.upper_max == 2.0);
        CHECK(r.near_max == 3.0);
    }

    TEST_CASE("strict-convexity probe on the paraboloid") {
        const auto gen = make_monge_ampere(2);
        const SmoothField u = diag_quadratic(1, 1);
        const GridDomain dom = grid(512);
        const StrictProbe p = strict_convexity_probe(u.value, *gen, Vec::Zero(2), Vec::Zero(2), {1e-3, 3e-3, 1e-2, 3e-2, 1e-1}, dom);
        CHECK(p.alpha == doctest::Approx(0.5).epsilon(0.1));
        CHECK_FALSE(p.plateau);
        CHECK(p.strict);
        for (std::size_t i = 0; i < p.h.size(); ++i) CHECK(std::abs(p.diam[i] - 2 * std::sqrt(2 * p.h[i])) <= 2 * p.resolution * std::sqrt(2.0));
    }

    TEST_CASE("strict-convexity probe flags a flat ridge") {
        const auto gen = make_monge_ampere(2);
        // Two equal supports: the ridge x_1 = 0 between them is a flat contact set.
        const SupportFamily fam(gen, {{v2(0.2, 0.0), 0.0}, {v2(-0.2, 0.0), 0.0}});
        const StrictProbe p = strict_convexity_probe([&](const Vec& x) { return fam.value(x); }, *gen, Vec::Zero(2), v2(0.0, 0.0),
                                                     {1e-2, 2e-2, 5e-2}, grid(256));
        CHECK(p.plateau);
        CHECK_FALSE(p.strict);
    }

    TEST_CASE("C1 probe on smooth and kinked functions") {
        const auto gen = make_monge_ampere(2);
        const PointList pts{v2(0.1, 0.1), v2(-0.2, 0.05)};
        const C1Probe s = c1_probe(diag_quadratic(1, 1), pts, {1e-2, 1e-4});
        for (double m : s.max) CHECK(m == 0.0);
        const Vec p0 = v2(0.1, -0.1), p1 = v2(-0.3, 0.2);
        const SupportFamily kink(gen, {{p0, 0.0}, {p1, 0.0}});
        const C1Probe k = c1_probe(kink, {v2(0.0, 0.1), v2(0.3, 0.3)}, {1e-2, 1e-4, 1e-8});
        for (const auto& row : k.diameters)
            for (double d : row) CHECK(d == doctest::Approx((p1 - p0).norm()).epsilon(1e-12));
        // The snapped points lie on the ridge.
        for (const auto& x : k.points) CHECK(std::abs(x.dot(p0) - x.dot(p1)) <= 1e-12);
    }

    TEST_CASE("C1 probe without snapping sees a single gradient off the ridge") {
        const auto gen = make_monge_ampere(2);
        const SupportFamily kink(gen, {{v2(0.1, -0.1), 0.0}, {v2(-0.3, 0.2), 0.0}});
        const C1Probe k = c1_probe(kink, {v2(0.3, -0.2)}, {1e-3}, false);
        CHECK(k.diameters[0][0] == 0.0);
    }
}
