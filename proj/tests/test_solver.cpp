#include <doctest.h>

#include "gjekit/solver.hpp"

#include <cmath>

using namespace gjekit;

namespace {

Vec v2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

ProblemSpec ma_problem(const PointList& ys, int res = 256, std::vector<double> weights = {}) {
    ProblemSpec s;
    s.gen = make_monge_ampere(2);
    s.source = std::make_shared<const GridDomain>(GridDomain::box(Box::cube(2, -1.0, 1.0), {res, res}));
    s.targets = equal_targets(ys, s.source->total_mass());
    if (!weights.empty()) {
        double w = 0.0;
        for (double x : weights) w += x;
        for (std::size_t i = 0; i < ys.size(); ++i) s.targets[i].mass = s.source->total_mass() * weights[i] / w;
    }
    return s;
}

std::vector<double> target_masses(const ProblemSpec& s) {
    std::vector<double> m;
    for (const auto& t : s.targets) m.push_back(t.mass);
    return m;
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

TEST_SUITE("solver") {
    TEST_CASE("single target owns the whole domain") {
        ProblemSpec s = ma_problem({v2(0.1, 0.2)}, 64);
        s.pin = Pin{Vec::Zero(2), 0.0};
        const SolveResult r = solve_second_bvp(s);
        CHECK(r.converged);
        CHECK(r.masses[0] == doctest::Approx(4.0).epsilon(1e-12));
        CHECK(r.pin_residual <= 1e-8);
        CHECK_FALSE(validate_solution(*r.solution, s).pinching_tested);
    }

    TEST_CASE("mirror targets split the square into halves") {
        const ProblemSpec s = ma_problem({v2(0.5, 0.0), v2(-0.5, 0.0)});
        const SolveResult r = solve_second_bvp(s);
        CHECK(r.converged);
        CHECK(r.max_rel_error <= 1e-3);
        const MeasureReport cells = cell_decomposition(*r.solution, *s.source);
        for (std::size_t k = 0; k < s.source->nodes(); ++k) CHECK(cells.owner[k] == (s.source->node(k)[0] > 0 ? 0u : 1u));
    }

    TEST_CASE("quadrant targets agree with a Monte Carlo assignment") {
        const ProblemSpec s = ma_problem({v2(0.5, 0.5), v2(-0.5, 0.5), v2(-0.5, -0.5), v2(0.5, -0.5)});
        const SolveResult r = solve_second_bvp(s);
        const auto& u = *r.solution;
        Rng rng(9, 9);
        const std::size_t samples = 1000000;
        std::vector<double> hits(4, 0.0);
        for (std::size_t k = 0; k < samples; ++k) {
            const Vec x = rng.uniform_in(Box::cube(2, -1.0, 1.0));
            const std::size_t i = u.argmax(as_span(x));
            REQUIRE(i != SupportFamily::npos);
            hits[i] += 1.0;
        }
        for (std::size_t i = 0; i < 4; ++i) {
            const double p = hits[i] / samples, se = std::sqrt(p * (1 - p) / samples);
            CHECK(std::abs(4.0 * p - r.masses[i]) <= 3 * 4.0 * se + 4.0 * 1e-3 * 0.25);
        }
    }

    TEST_CASE("two-target heights match a brute-force height search") {
        // Generic positions: boundary lines of small rational slope tie whole node rows.
        const ProblemSpec s = ma_problem({v2(0.53, 0.17), v2(-0.41, -0.12)}, 128, {0.3, 0.7});
        const SolveResult r = solve_second_bvp(s);
        const auto& u = *r.solution;
        // The gauge is an additive constant: scan z_2 - z_1 on a 1e-3 lattice.
        double best = kInf, best_dz = 0.0;
        for (int k = -1500; k <= 1500; ++k) {
            const double dz = k * 1e-3;
            const SupportFamily v(u.gen_ptr(), {{u[0].y, 0.0}, {u[1].y, dz}});
            const double e = cell_decomposition(v, *s.source, target_masses(s)).max_rel_error;
            if (e < best) best = e, best_dz = dz;
        }
        CHECK(std::abs((u[1].z - u[0].z) - best_dz) <= 2e-3);
        CHECK(r.max_rel_error <= best + 1e-3);
    }

    TEST_CASE("lowering one height grows its cell and shrinks the others") {
        ProblemSpec s = ma_problem(random_points(Box::cube(2, -0.8, 0.8), 9, 5, 0.2), 128);
        s.mass_tol = 2e-2;
        const SolveResult r = solve_second_bvp(s);
        const auto& u = *r.solution;
        const auto base = cell_decomposition(u, *s.source).masses;
        Rng rng(10, 10);
        for (int t = 0; t < 20; ++t) {
            const std::size_t i = rng.next_u64() % u.size();
            std::vector<double> z = u.heights();
            z[i] -= rng.uniform(1e-3, 5e-2);
            const auto m = cell_decomposition(u.with_heights(z), *s.source).masses;
            CHECK(m[i] >= base[i]);
            for (std::size_t j = 0; j < u.size(); ++j)
                if (j != i) CHECK(m[j] <= base[j]);
        }
    }

    TEST_CASE("mass is conserved and the history reaches the tolerance") {
        ProblemSpec s = ma_problem(random_points(Box::cube(2, -0.8, 0.8), 20, 3, 0.1), 128);
        s.mass_tol = 1e-2;
        const SolveResult r = solve_second_bvp(s);
        double sum = 0.0;
        for (double m : r.masses) sum += m;
        CHECK(sum == doctest::Approx(s.source->total_mass()).epsilon(1e-12));
        REQUIRE_FALSE(r.history.empty());
        CHECK(r.history.back() <= s.mass_tol);
        CHECK(r.history.size() >= static_cast<std::size_t>(r.iterations));
    }

    TEST_CASE("solves are deterministic") {
        ProblemSpec s = ma_problem(random_points(Box::cube(2, -0.8, 0.8), 12, 4, 0.1), 128);
        s.gen = make_perturbed(0.05, 2);
        s.source = std::make_shared<const GridDomain>(GridDomain::box(Box::cube(2, -0.25, 0.25), {96, 96}));
        s.targets = equal_targets(random_points(Box::cube(2, -0.25, 0.25), 12, 4, 0.05), s.source->total_mass());
        s.mass_tol = 2e-2;
        auto dump = [&] {
            Json j = to_json(solve_second_bvp(s));
            j.erase("wall_time");
            return j.dump();
        };
        CHECK(dump() == dump());
    }

    TEST_CASE("Monge-Ampere pin is a constant shift") {
        ProblemSpec s = ma_problem({v2(0.5, 0.0), v2(-0.5, 0.0), v2(0.0, 0.5)}, 128);
        s.mass_tol = 5e-3;
        const SolveResult free = solve_second_bvp(s);
        // Pinning at the solved value needs no outer round.
        s.pin = Pin{v2(0.1, 0.1), free.solution->value(v2(0.1, 0.1))};
        const SolveResult same = solve_second_bvp(s);
        CHECK(same.rounds == 0);
        CHECK(same.pin_residual <= 1e-8);
        s.pin = Pin{v2(0.1, 0.1), 0.01};
        const SolveResult shifted = solve_second_bvp(s);
        CHECK(shifted.rounds == 1);
        CHECK(shifted.pin_residual <= 1e-8);
        for (std::size_t i = 0; i < 3; ++i) CHECK(shifted.masses[i] == doctest::Approx(free.masses[i]).epsilon(1e-12));
        const SupportFamily p = pin_solution(*free.solution, v2(0.1, 0.1), 0.01);
        const double c = p[0].z - (*free.solution)[0].z;
        for (std::size_t i = 0; i < 3; ++i) CHECK(p[i].z - (*free.solution)[i].z == doctest::Approx(c).epsilon(1e-12));
    }

    TEST_CASE("perturbed pin re-converges within the round budget") {
        ProblemSpec s;
        s.gen = make_perturbed(0.05, 2);
        s.source = std::make_shared<const GridDomain>(GridDomain::box(Box::cube(2, -0.25, 0.25), {128, 128}));
        s.targets = equal_targets(random_points(Box::cube(2, -0.2, 0.2), 9, 6, 0.05), s.source->total_mass());
        s.mass_tol = 2e-2;
        s.pin = Pin{Vec::Zero(2), 0.01};
        const SolveResult r = solve_second_bvp(s);
        CHECK(r.converged);
        CHECK(r.pin_residual <= 1e-8);
        CHECK(r.rounds <= 5);
        CHECK(r.max_rel_error <= s.mass_tol);
    }

    TEST_CASE("pin outside J is rejected") {
        const ProblemSpec s = ma_problem({v2(0.5, 0.0), v2(-0.5, 0.0)}, 64);
        const SolveResult r = solve_second_bvp(s);
        CHECK(kind_of([&] { pin_solution(*r.solution, Vec::Zero(2), 1e6); }) == ErrorKind::HeightOutOfRange);
    }

    TEST_CASE("mass imbalance is rejected") {
        ProblemSpec s = ma_problem({v2(0.5, 0.0), v2(-0.5, 0.0)}, 64);
        s.targets[0].mass *= 1.02;
        CHECK(kind_of([&] { solve_second_bvp(s); }) == ErrorKind::MassImbalance);
    }

    TEST_CASE("a cell below one node of mass starves") {
        // Node mass 4 / 256; the third target asks for a third of a node.
        ProblemSpec s = ma_problem({v2(0.5, 0.0), v2(-0.5, 0.0), v2(0.0, 0.0)}, 16, {1.0, 1.0, 0.0025});
        CHECK(kind_of([&] { solve_second_bvp(s); }) == ErrorKind::StarvedCell);
    }

    TEST_CASE("validation on a lattice solve") {
        // 10 x 10 lattice on 200^2: cell walls fall between node columns.
        ProblemSpec s = ma_problem(lattice_points(Box::cube(2, -1.0, 1.0), 10), 200);
        const SolveResult r = solve_second_bvp(s);
        const ValidationReport v = validate_solution(*r.solution, s, 1);
        CHECK(v.pass());
        CHECK(v.pinching_tested);
        CHECK(v.lambda_emp >= 0.5);
        CHECK(v.Lambda_emp <= 2.0);
        CHECK(v.convexity_worst <= 1e-10);
        // Corrupted heights: the max of supports is still g-convex, the masses are off.
        std::vector<double> z = r.solution->heights();
        for (auto& x : z) x *= 1.1;
        const ValidationReport bad = validate_solution(r.solution->with_heights(z), s, 1);
        CHECK(bad.convexity);
        CHECK_FALSE(bad.mass_ok);
        CHECK_FALSE(bad.pass());
    }

    TEST_CASE("targets outside the target domain fail containment") {
        ProblemSpec s = ma_problem({v2(0.5, 0.0), v2(-0.5, 0.0)}, 64);
        const SolveResult r = solve_second_bvp(s);
        s.target_domain = Box::cube(2, -0.4, 0.6);
        const ValidationReport v = validate_solution(*r.solution, s);
        CHECK_FALSE(v.containment);
        CHECK(v.outside == 1);
    }

    TEST_CASE("target discretizer conserves mass") {
        const auto t = discretize_target([](const Vec& y) { return 1.0 + y[0]; }, Box::cube(2, -0.5, 0.5), {8, 8}, 4.0);
        CHECK(t.size() == 64);
        double sum = 0.0;
        for (const auto& a : t) sum += a.mass;
        CHECK(sum == doctest::Approx(4.0).epsilon(1e-14));
        CHECK(t.front().mass < t.back().mass);
    }
}
