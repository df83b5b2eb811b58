#pragma once

#include "gjekit/gconvex.hpp"
#include "gjekit/json.hpp"

#include <optional>

namespace gjekit {

struct Target {
    Vec y;
    double mass = 0.0;
};

struct Pin {
    Vec x0;
    double u0 = 0.0;
};

struct ProblemSpec {
    GeneratorPtr gen;
    std::shared_ptr<const GridDomain> source;
    std::vector<Target> targets;
    std::optional<Pin> pin;
    /// Target domain Omega*; defaults to V.
    std::optional<Box> target_domain;
    double mass_tol = 1e-3;
    int max_iter = 2000;  // sweeps
    int max_rounds = 5;   // pin outer loop
    /// Over-relaxation of the per-cell height update.
    double relaxation = 1.0;
};

struct SolveResult {
    std::shared_ptr<const SupportFamily> solution;
    std::vector<double> history;  // max relative cell-mass error per sweep
    int iterations = 0;
    int rounds = 0;
    std::vector<double> pin_history;
    double pin_residual = 0.0;
    double max_rel_error = 0.0;
    std::vector<double> masses;
    std::size_t frozen = 0;
    std::size_t rescues = 0;
    bool converged = false;
    double wall_time = 0.0;
};

/// Equal masses summing to the source mass.
std::vector<Target> equal_targets(const PointList& ys, double total);
/// n x n lattice of centres of the box.
PointList lattice_points(const Box& b, int n);
/// Seeded uniform points kept at least `min_sep` apart.
PointList random_points(const Box& b, std::size_t count, std::uint64_t seed, double min_sep = 0.0);
/// Atoms at midpoint-rule quadrature nodes of the box with masses f*(y) dy,
/// rescaled to `total`.
std::vector<Target> discretize_target(const std::function<double(const Vec&)>& density, const Box& b,
                                      const std::vector<int>& res, double total);

SolveResult solve_second_bvp(const ProblemSpec& spec);

/// Pins u(x0) = u0 by applying a common value shift s at x0 to every support.
/// Returns the shifted family; cells of z-dependent generators move.
SupportFamily pin_solution(const SupportFamily& u, const Vec& x0, double u0);

struct ValidationReport {
    bool containment = true;
    std::size_t outside = 0;
    bool pinching_tested = false;
    double lambda_emp = 0.0, Lambda_emp = 0.0;
    std::size_t boxes = 0;
    bool convexity = true;
    std::size_t convexity_checked = 0;
    double convexity_worst = 0.0;
    double max_rel_error = 0.0;
    bool mass_ok = false;
    bool pass() const { return containment && convexity && mass_ok; }
};
ValidationReport validate_solution(const SupportFamily& u, const ProblemSpec& spec, std::uint64_t seed = 0, std::size_t boxes = 64,
                                   std::size_t convexity_points = 1000);

Json to_json(const SolveResult& r, bool with_supports = true);
Json to_json(const ValidationReport& r);

}  // namespace gjekit
