#pragma once

#include "gjekit/generator.hpp"
#include "gjekit/json.hpp"

#include <cstdint>

namespace gjekit {

enum class Status { Pass, Fail, Untested };
const char* to_string(Status s);

struct ConditionEntry {
    std::string name;
    Status status = Status::Untested;
    std::size_t checked = 0;
    std::size_t skipped = 0;
    std::vector<double> witness;  // reproduces the first violation
    std::string witness_layout;   // names the witness components
    double worst = 0.0;           // largest violation seen (0 when passing)
};

/// Sampled distortion bounds of a generator.
struct DistortionBounds {
    double E_plus = 0.0;   // max singular value of E
    double E_minus = kInf;  // min singular value of E
    double C_z = 0.0;      // sup |g_z|
    double c_z = kInf;     // inf |g_z|
    double K0 = 0.0;       // sup |g_x|
    std::size_t samples = 0;

    double C_g() const;
};

/// Samples Gamma at `samples` random points plus the corners of U x V.
DistortionBounds sample_distortion(const Generator& gen, std::size_t samples, std::uint64_t seed);

struct ConditionReport {
    std::string generator;
    int dim = 0;
    std::size_t samples = 0;
    std::uint64_t seed = 0;
    std::vector<ConditionEntry> conditions;  // A0, A1, A1*, A2, LMP, A3w, A4w, A5
    DistortionBounds bounds;
    double C_g = 1.0;
    double a3w_K = 0.0;  // smallest K on the log grid that every slice satisfies
    double gqq_M = 0.0;  // sampled quasiconvexity constant

    const ConditionEntry& get(const std::string& name) const;
    bool all_pass() const;
};

/// Monte Carlo certification of the structure conditions. Deterministic in
/// (samples, seed) regardless of the worker count.
ConditionReport certify(const Generator& gen, std::size_t samples, std::uint64_t seed);

/// The log grid {0, 1e-3, ..., 1e3} searched for the A3w constant.
std::vector<double> a3w_K_grid();

/// h(theta) = g(x_theta, y1, z1) - g(x_theta, y0, z0) along the g-segment from
/// x0 to x1 with respect to (y0, z0), where z_i = g*(x0, y_i, u0).
struct QuasiconvexSlice {
    Vec x0, x1, y0, y1;
    double z0 = 0.0, z1 = 0.0;
    double h(const Generator& gen, double theta) const;
};

Json to_json(const ConditionReport& r);

}  // namespace gjekit
