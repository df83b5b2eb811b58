// Acceptance run: one pass/fail line per criterion.

#include "gjekit/certify.hpp"
#include "gjekit/cli.hpp"
#include "gjekit/cone.hpp"
#include "gjekit/config.hpp"
#include "gjekit/estimates.hpp"
#include "gjekit/solver.hpp"
#include "gjekit/transform.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>

using namespace gjekit;
namespace fs = std::filesystem;

namespace {

constexpr double kPi2 = std::numbers::pi * std::numbers::pi;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Vec v2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    std::stringstream s;
    s << f.rdbuf();
    return s.str();
}

Json load(const std::string& name) { return load_config(GJEKIT_SOURCE_DIR "/tools/configs/" + name); }

Polygon random_base(Rng& rng, int points, double rmin, double rmax) {
    std::vector<P2> pts;
    for (int i = 0; i < points; ++i) {
        const double t = (i + rng.uniform(0.0, 0.6)) * 2 * std::numbers::pi / points, r = rng.uniform(rmin, rmax);
        pts.emplace_back(r * std::cos(t), r * std::sin(t));
    }
    return convex_hull(pts);
}

void bounding(const ConvexBase& D, P2& a, P2& b) {
    a = b = P2::Zero();
    for (const auto& v : D.vertices()) {
        a = a.cwiseMax(v);
        b = b.cwiseMax(-v);
    }
}

ContextPtr origin_context(const GeneratorPtr& gen, double h) {
    TransformOptions opt;
    opt.cg_samples = 1000;
    return make_context(gen, Vec::Zero(2), Vec::Zero(2), 0.0, h, opt);
}

ProblemSpec ma_square(const PointList& ys, int res) {
    ProblemSpec s;
    s.gen = make_monge_ampere(2);
    s.source = std::make_shared<const GridDomain>(GridDomain::box(Box::cube(2, -1.0, 1.0), {res, res}));
    s.targets = equal_targets(ys, s.source->total_mass());
    return s;
}

// ---------------------------------------------------------------------------

Outcome generator_identities() {
    std::vector<GeneratorPtr> gens{make_monge_ampere(2), make_perturbed(0.05, 2)};
    for (const auto& c : cost_ids()) gens.push_back(make_cost_generator(c, 2));
    double dual = 0.0, yz = 0.0, deriv = 0.0;
    for (const auto& g : gens) {
        Rng rng(2024, 1);
        const auto& d = g->domain();
        const int n = g->dim();
        for (int i = 0; i < 1000; ++i) {
            const Vec x = rng.uniform_in(d.U.shrunk(0.9)), y = rng.uniform_in(d.V.shrunk(0.9));
            const Interval I = d.I(x, y);
            const double z = rng.uniform(I.lo + 0.05 * I.width(), I.hi - 0.05 * I.width());
            const double u = g->value(x, y, z);
            const double zs = dual_g_star(*g, x, y, u);
            dual = std::max({dual, std::abs(g->value(x, y, zs) - u), std::abs(zs - z)});
            const Jet J = g->jet(x, y, z, 1);
            const YZ r = solve_YZ(*g, x, u, J.gx());
            yz = std::max({yz, (r.y - y).norm(), std::abs(r.z - z)});
            const double h = 1e-5;
            auto rel = [](double fd, double an) { return std::abs(fd - an) / (1.0 + std::abs(an)); };
            deriv = std::max(deriv, rel((dual_g_star(*g, x, y, u + h) - dual_g_star(*g, x, y, u - h)) / (2 * h), 1.0 / J.gz()));
            for (int a = 0; a < n; ++a) {
                Vec e = Vec::Zero(n);
                e[a] = h;
                const double dx = (dual_g_star(*g, x + e, y, u) - dual_g_star(*g, x - e, y, u)) / (2 * h);
                const double dy = (dual_g_star(*g, x, y + e, u) - dual_g_star(*g, x, y - e, u)) / (2 * h);
                deriv = std::max({deriv, rel(dx, -J.gx()[a] / J.gz()), rel(dy, -J.gy()[a] / J.gz())});
            }
        }
    }
    return {dual <= 1e-10 && yz <= 1e-10 && deriv <= 1e-5,
            fmt("%zu generators x 1000 samples: dual %.1e, Y/Z %.1e (tol 1e-10), derivative %.1e (tol 1e-5)", gens.size(), dual, yz, deriv)};
}

Outcome monge_ampere_collapse() {
    const auto gen = make_monge_ampere(2);
    const auto ctx = make_context(gen, Vec::Zero(2), Vec::Zero(2), 0.0, 0.005);
    Rng rng(7, 2);
    double gbar = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Vec q = rng.uniform_in(Box::cube(2, -0.5, 0.5)), p = rng.uniform_in(Box::cube(2, -0.5, 0.5));
        const double z = rng.uniform(-0.3, 0.3);
        gbar = std::max(gbar, std::abs(ctx->transformed_g(q, p, z) - (q.dot(p) - z)));
    }
    double cone = 0.0, margin = 0.0;
    for (int t = 0; t < 5; ++t) {
        const ConvexBase D = ConvexBase::polygon(random_base(rng, 7, 0.02, 0.045), 64);
        const GCone c = build_gcone(ctx, D, 0.005);
        const ClassicalCone K = c.classical();
        for (int i = 0; i < 20; ++i) {
            const P2 q = D.vertices()[static_cast<std::size_t>(i) % D.vertices().size()] * rng.uniform(0.0, 0.95);
            cone = std::max(cone, std::abs(c.value(q) - K.value(q)));
        }
        margin = std::max(margin, std::abs(check_upper(c).margin - 1.0));
    }
    const ConditionReport r = certify(*gen, 2000, 1);
    const bool lmp = r.get("LMP").status == Status::Pass, a3w = r.get("A3w").status == Status::Pass;
    const bool ok = std::abs(ctx->C_g() - 1.0) <= 1e-12 && std::abs(r.C_g - 1.0) <= 1e-12 && gbar <= 1e-12 && cone <= 1e-10 &&
                    margin <= 1e-9 && lmp && a3w && r.a3w_K == 0.0;
    return {ok, fmt("C_g %.12g, g-bar %.1e (tol 1e-12), cone %.1e (tol 1e-10), LMP %s, A3w %s with K = %g", ctx->C_g(), gbar, cone,
                    lmp ? "pass" : "fail", a3w ? "pass" : "fail", r.a3w_K)};
}

Outcome expansions() {
    TransformOptions opt;
    opt.cg_samples = 2000;
    const auto ctx = make_context(make_perturbed(0.05, 2), Vec::Zero(2), Vec::Zero(2), 0.0, 1e-3, opt);
    const ExpansionReport r = verify_expansion(*ctx, {0.2, 0.1, 0.05}, 2000, 3);
    double f1 = 0.0;
    for (const auto& l : r.levels) f1 = std::max(f1, l.f1_at_q0);
    const bool ok = r.slope >= 2.7 && r.slope <= 3.3 && f1 <= 1e-10 && r.f1_vertex_ok && r.f1_C_stable;
    return {ok, fmt("slope %.3f in [2.7, 3.3], f1(0,p,z) %.1e (tol 1e-10), f1 <= C|q| stable %s", r.slope, f1, r.f1_C_stable ? "yes" : "no")};
}

Outcome sandwich() {
    const auto gen = make_perturbed(0.05, 2);
    Rng rng(41, 4);
    double worst_margin = 0.0, c_min = kInf, c_ratio = 1.0;
    bool ok = true;
    for (int t = 0; t < 50; ++t) {
        const ConvexBase D = ConvexBase::polygon(random_base(rng, 3 + static_cast<int>(rng.next_u64() % 6), 0.015, 0.05), 48);
        const double h = rng.uniform(2e-3, 1e-2);
        P2 a, b;
        bounding(D, a, b);
        GConeOptions go;
        go.directions = 360;
        const GCone full = build_gcone(origin_context(gen, h), D, h, go);
        const GCone half = build_gcone(origin_context(gen, 0.5 * h), D, 0.5 * h, go);
        const UpperCheck up = check_upper(full);
        const LowerCheck l1 = check_lower(full, a, b, 0.1), l2 = check_lower(half, a, b, 0.1);
        worst_margin = std::max({worst_margin, up.margin, check_upper(half).margin});
        c_min = std::min({c_min, l1.c, l2.c});
        const double ratio = l2.c / l1.c;
        c_ratio = std::max(c_ratio, std::max(ratio, 1.0 / ratio));
        ok = ok && up.pass && l1.pass && l2.pass;
    }
    const auto ma = make_monge_ampere(2);
    double ma_margin = 0.0;
    for (int t = 0; t < 10; ++t) {
        const ConvexBase D = ConvexBase::polygon(random_base(rng, 6, 0.015, 0.05), 48);
        ma_margin = std::max(ma_margin, std::abs(check_upper(build_gcone(origin_context(ma, 0.005), D, 0.005)).margin - 1.0));
    }
    ok = ok && worst_margin <= 2.0 + 1e-6 && c_min >= 0.1 && c_ratio <= 2.0 && ma_margin <= 1e-9;
    return {ok, fmt("50 bases: max margin %.6f (<= 2 + 1e-6), min c %.3f (>= 0.1), c drift under halving x%.3f (<= 2), "
                    "Monge-Ampere |margin - 1| %.1e (tol 1e-9)",
                    worst_margin, c_min, c_ratio, ma_margin)};
}

Outcome section_estimates() {
    const auto gen = make_monge_ampere(2);
    const GridDomain dom = GridDomain::box(Box::cube(2, -0.6, 0.6), {512, 512});
    Mat Q = Mat::Identity(2, 2);
    const SmoothField u = SmoothField::quadratic(Q);
    double up_lo = kInf, up_hi = 0.0, lo_lo = kInf, lo_hi = 0.0;
    for (double h : {1e-3, 1e-2, 1e-1}) {
        CaseOptions o;
        o.h = h;
        const SectionCase c = make_case(gen, u, Vec::Zero(2), dom, o);
        up_lo = std::min(up_lo, upper_estimate(c));
        up_hi = std::max(up_hi, upper_estimate(c));
        lo_lo = std::min(lo_lo, lower_estimate(c));
        lo_hi = std::max(lo_hi, lower_estimate(c));
    }
    const double U = 1.0 / (4 * kPi2), L = 4 * kPi2;
    bool ok = up_lo >= 0.98 * U && up_hi <= 1.02 * U && lo_lo >= 0.98 * L && lo_hi <= 1.02 * L;
    // Near-boundary family: frozen window (0, 0.1] for sup^n / (eps |D|^2).
    CaseOptions o;
    o.h = 0.01;
    const SectionCase c = make_case(gen, u, Vec::Zero(2), dom, o);
    double nb_max = 0.0, nb_min = kInf;
    for (double eps : {0.3, 0.1, 0.03}) {
        const double r = near_boundary_estimate(c, P2(1, 0), eps).ratio;
        nb_max = std::max(nb_max, r);
        nb_min = std::min(nb_min, r);
    }
    ok = ok && nb_min > 0 && nb_max <= 0.1;
    return {ok, fmt("upper %.5f..%.5f (1/(4 pi^2) = %.5f +- 2%%), lower %.3f..%.3f (4 pi^2 = %.3f +- 2%%), near-boundary %.4f..%.4f (<= 0.1)",
                    up_lo, up_hi, U, lo_lo, lo_hi, L, nb_min, nb_max)};
}

Outcome solver() {
    ProblemSpec s20 = ma_square(random_points(Box::cube(2, -0.9, 0.9), 20, 2024, 0.1), 256);
    const auto t0 = std::chrono::steady_clock::now();
    const SolveResult r20 = solve_second_bvp(s20);
    const double t20 = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const ProblemSpec s2 = ma_square({v2(0.5, 0.0), v2(-0.5, 0.0)}, 256);
    const SolveResult r2 = solve_second_bvp(s2);
    const double split = std::abs(r2.masses[0] - r2.masses[1]) / (0.5 * (r2.masses[0] + r2.masses[1]));

    const ProblemSpec s4 = ma_square({v2(0.5, 0.5), v2(-0.5, 0.5), v2(-0.5, -0.5), v2(0.5, -0.5)}, 256);
    const SolveResult r4 = solve_second_bvp(s4);
    Rng rng(99, 6);
    const std::size_t samples = 1000000;
    std::vector<double> hits(4, 0.0);
    for (std::size_t k = 0; k < samples; ++k) hits[r4.solution->argmax(as_span(rng.uniform_in(Box::cube(2, -1.0, 1.0))))] += 1.0;
    double z_worst = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        const double p = hits[i] / samples, se = 4.0 * std::sqrt(p * (1 - p) / samples);
        z_worst = std::max(z_worst, std::abs(4.0 * p - r4.masses[i]) / se);
    }

    const ProblemSpec sp = problem_from_json(load("solve_perturbed_lattice.json"), 11);
    const SolveResult rp = solve_second_bvp(sp);

    const bool ok = r20.converged && r20.max_rel_error <= 1e-3 && t20 < 60.0 && split <= 1e-3 && z_worst <= 3.0 && rp.converged &&
                    rp.pin_residual <= 1e-8 && rp.rounds <= 5;
    return {ok, fmt("20 targets: error %.1e in %.2f s; halves %.1e; quadrants %.2f SE; perturbed lattice pin %.1e after %d rounds "
                    "(mass_tol %g)",
                    r20.max_rel_error, t20, split, z_worst, rp.pin_residual, rp.rounds, sp.mass_tol)};
}

Outcome probes() {
    const auto gen = make_monge_ampere(2);
    const GridDomain dom = GridDomain::box(Box::cube(2, -0.5, 0.5), {512, 512});
    const std::vector<double> hs{1e-4, 3e-4, 1e-3, 3e-3, 1e-2};
    const SmoothField para = SmoothField::quadratic(Mat::Identity(2, 2));
    const StrictProbe sp = strict_convexity_probe(para.value, *gen, Vec::Zero(2), Vec::Zero(2), hs, dom);
    // u = (max(|x_1| - w, 0)^2 + x_2^2) / 2 is flat on the segment |x_1| <= w.
    const double w = 0.1;
    auto ridge = [w](const Vec& x) {
        const double a = std::max(std::abs(x[0]) - w, 0.0);
        return 0.5 * (a * a + x[1] * x[1]);
    };
    const StrictProbe fr = strict_convexity_probe(ridge, *gen, Vec::Zero(2), Vec::Zero(2), hs, dom);

    std::vector<double> medians;
    const std::vector<std::pair<std::size_t, double>> sweep{{25, 5e-3}, {100, 2e-2}, {400, 3e-2}};
    for (const auto& [N, tol] : sweep) {
        ProblemSpec s;
        s.gen = gen;
        s.source = std::make_shared<const GridDomain>(GridDomain::box(Box::cube(2, -0.5, 0.5), {256, 256}));
        s.targets = equal_targets(random_points(Box::cube(2, -0.5, 0.5), N, 500 + N, 0.3 / std::sqrt(static_cast<double>(N))),
                                  s.source->total_mass());
        s.mass_tol = tol;
        const SolveResult r = solve_second_bvp(s);
        Rng rng(77, 7);
        PointList pts;
        for (int i = 0; i < 200; ++i) pts.push_back(s.source->node(static_cast<std::size_t>(rng.next_u64() % s.source->nodes())));
        medians.push_back(c1_probe(*r.solution, pts, {1e-6}).median[0]);
    }
    const bool mono = medians[0] > medians[1] && medians[1] > medians[2];
    const bool ok = std::abs(sp.alpha - 0.5) <= 0.05 && !sp.plateau && fr.plateau && !fr.strict && mono;
    return {ok, fmt("paraboloid alpha %.4f (0.5 +- 0.05); flat ridge plateau %s; median subdifferential diameter N=25/100/400: "
                    "%.4f > %.4f > %.4f",
                    sp.alpha, fr.plateau ? "yes" : "no", medians[0], medians[1], medians[2])};
}

Outcome cone_comparison_family() {
    ProblemSpec s;
    s.gen = make_perturbed(0.05, 2);
    s.source = std::make_shared<const GridDomain>(GridDomain::box(Box::cube(2, -0.25, 0.25), {256, 256}));
    s.targets = equal_targets(random_points(Box::cube(2, -0.25, 0.25), 100, 808, 0.02), s.source->total_mass());
    s.mass_tol = 3e-2;
    const SolveResult r = solve_second_bvp(s);
    Rng rng(8, 8);
    double drift = 1.0, c_hi = 0.0;
    bool ok = true;
    for (int i = 0; i < 10; ++i) {
        const Vec x0 = rng.uniform_in(Box::cube(2, -0.05, 0.05));
        CaseOptions o;
        o.h = 0.01;
        const ConeComparison a = cone_comparison(make_case(r.solution, x0, *s.source, o), 8.0);
        o.h = 0.005;
        const ConeComparison b = cone_comparison(make_case(r.solution, x0, *s.source, o), 8.0);
        ok = ok && a.C > 0 && b.C > 0;
        drift = std::max(drift, std::max(a.C / b.C, b.C / a.C));
        c_hi = std::max({c_hi, a.C, b.C});
    }
    ok = ok && drift <= 2.0;
    return {ok, fmt("10 sections, K = 8: fitted C up to %.3f, drift under h halving x%.3f (<= 2)", c_hi, drift)};
}

Outcome reproducibility() {
    const fs::path root = fs::temp_directory_path() / "gjekit-acceptance";
    std::size_t same = 0, total = 0;
    std::string diff;
    for (const auto& [cmd, cfg] : std::vector<std::pair<std::string, std::string>>{{"certify", "certify_perturbed.json"},
                                                                                      {"transform-verify", "transform_perturbed.json"},
                                                                                      {"cone", "cone_perturbed.json"},
                                                                                      {"solve", "solve_monge_ampere.json"},
                                                                                      {"c1-probe", "c1_random.json"}}) {
        std::string reports[2];
        for (int k = 0; k < 2; ++k) {
            const fs::path dir = root / (cmd + "-" + std::to_string(k));
            fs::remove_all(dir);
            RunOptions opt;
            opt.out_dir = dir.string();
            opt.seed = 12345;
            run_command(cmd, load(cfg), opt);
            reports[k] = slurp(dir / "report.json");
        }
        ++total;
        if (!reports[0].empty() && reports[0] == reports[1]) ++same;
        else diff += " " + cmd;
    }
    return {same == total, fmt("%zu/%zu commands byte-identical report.json under a fixed seed%s", same, total, diff.c_str())};
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        double budget;  // seconds
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> all{
        {"generator identities", 10, generator_identities},
        {"Monge-Ampere collapse", 10, monge_ampere_collapse},
        {"transformation expansions", 30, expansions},
        {"g-cone sandwich", 120, sandwich},
        {"section estimates", 120, section_estimates},
        {"semi-discrete solver", 120, solver},
        {"strict convexity and C1 probes", 120, probes},
        {"cone comparison", 60, cone_comparison_family},
        {"reproducibility", 600, reproducibility},
    };
    int failed = 0;
    for (std::size_t i = 0; i < all.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = all[i].run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool pass = o.pass && t < all[i].budget;
        failed += !pass;
        std::printf("[%s] %zu. %s: %s (%.1f s, budget %.0f s)\n", pass ? "PASS" : "FAIL", i + 1, all[i].name, o.detail.c_str(), t,
                    all[i].budget);
        std::fflush(stdout);
    }
    std::printf("%zu/%zu criteria pass\n", all.size() - static_cast<std::size_t>(failed), all.size());
    return failed == 0 ? 0 : 1;
}
