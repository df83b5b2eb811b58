#include <doctest.h>

#include "gjekit/certify.hpp"
#include "gjekit/parallel.hpp"

#include <algorithm>
#include <cmath>

using namespace gjekit;

namespace {

// Oracle: quasiconvexity of h along g-segments, brute-forced on a theta grid.
bool dense_slices_pass(const Generator& g, int slices, std::uint64_t seed) {
    const auto& d = g.domain();
    Rng rng(seed, 99);
    for (int s = 0; s < slices; ++s) {
        QuasiconvexSlice q;
        q.x0 = rng.uniform_in(d.U.shrunk(0.8));
        q.x1 = rng.uniform_in(d.U.shrunk(0.8));
        q.y0 = rng.uniform_in(d.V.shrunk(0.8));
        q.y1 = rng.uniform_in(d.V.shrunk(0.8));
        const double u0 = rng.uniform(-0.1, 0.1);
        q.z0 = dual_g_star(g, q.x0, q.y0, u0);
        q.z1 = dual_g_star(g, q.x0, q.y1, u0);
        const double h0 = q.h(g, 0.0), h1 = q.h(g, 1.0);
        for (int i = 1; i < 100; ++i)
            if (q.h(g, i / 100.0) > std::max(h0, h1) + 1e-9) return false;
    }
    return true;
}

}  // namespace

TEST_SUITE("certify") {
    TEST_CASE("Monge-Ampere passes every condition with C_g = 1 and K = 0") {
        const auto g = make_monge_ampere(2);
        const ConditionReport r = certify(*g, 10000, 1);
        CHECK(r.all_pass());
        CHECK(r.C_g == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(r.a3w_K == 0.0);
        // K0 = sup |g_x| = sup over V of |y|.
        CHECK(r.bounds.K0 == doctest::Approx(std::sqrt(2.0)).epsilon(1e-9));
        for (const auto& c : r.conditions) CHECK(c.status == Status::Pass);
    }

    TEST_CASE("perturbed generator agrees with the dense-slice oracle") {
        const auto g = make_perturbed(0.05, 2);
        const ConditionReport r = certify(*g, 10000, 2);
        CHECK(r.all_pass());
        CHECK(r.get("LMP").status == Status::Pass);
        CHECK(dense_slices_pass(*g, 20, 3) == (r.get("LMP").status == Status::Pass));
        CHECK(r.C_g > 1.0);
    }

    TEST_CASE("cost generators certify at their default boxes") {
        for (const auto& id : cost_ids()) {
            const auto g = make_cost_generator(id, 2);
            const ConditionReport r = certify(*g, 4000, 4);
            CAPTURE(id);
            CHECK(r.all_pass());
        }
    }

    TEST_CASE("a generator with a degenerate twist fails A1 or A2 with a witness") {
        // g = (x.y)^2 - z: g_x(y) = g_x(-y), and E vanishes on x.y = 0.
        GeneratorDomain d = default_domain("monge-ampere", 2);
        const auto g = std::make_shared<CallableGenerator>(
            "squared-twist", 2, d, [](std::span<const double> x, std::span<const double> y, double z) {
                const double xy = x[0] * y[0] + x[1] * y[1];
                return xy * xy - z;
            });
        const ConditionReport r = certify(*g, 2000, 5);
        CHECK_FALSE(r.all_pass());
        const bool a1 = r.get("A1").status == Status::Fail, a2 = r.get("A2").status == Status::Fail;
        CHECK((a1 || a2));
        if (a1) CHECK_FALSE(r.get("A1").witness.empty());
        if (a2) CHECK_FALSE(r.get("A2").witness.empty());
    }

    TEST_CASE("certify is deterministic in (samples, seed) across thread counts") {
        const auto g = make_perturbed(0.05, 2);
        set_thread_count(1);
        const std::string a = to_json(certify(*g, 2000, 9)).dump();
        set_thread_count(3);
        const std::string b = to_json(certify(*g, 2000, 9)).dump();
        set_thread_count(0);
        CHECK(a == b);
        CHECK(a != to_json(certify(*g, 2000, 10)).dump());
    }

    TEST_CASE("A3w constant is the first grid value every slice satisfies") {
        const auto grid = a3w_K_grid();
        REQUIRE(grid.front() == 0.0);
        CHECK(grid.back() == doctest::Approx(1e3));
        const auto g = make_perturbed(0.05, 2);
        const ConditionReport r = certify(*g, 2000, 6);
        CHECK(std::find(grid.begin(), grid.end(), r.a3w_K) != grid.end());
    }

    TEST_CASE("zero samples is a precondition violation") {
        CHECK_THROWS_AS(certify(*make_monge_ampere(2), 0, 1), Error);
    }
}
