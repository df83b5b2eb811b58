#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gjekit {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using PointList = std::vector<Vec>;

inline std::span<const double> as_span(const Vec& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

inline Vec to_vec(std::span<const double> s) {
    Vec v(static_cast<Eigen::Index>(s.size()));
    for (std::size_t i = 0; i < s.size(); ++i) v[static_cast<Eigen::Index>(i)] = s[i];
    return v;
}

enum class ErrorKind {
    DomainError,
    Unattainable,
    NoConvergence,
    OutOfDomain,
    EmptyDomain,
    NotCompactlyContained,
    SingularJacobian,
    HeightOutOfRange,
    BaseTooLarge,
    HeightTooLarge,
    PreconditionViolated,
    DegenerateInput,
    InvalidSection,
    MassImbalance,
    StarvedCell,
    ConfigError,
};

const char* to_string(ErrorKind kind);

/// Every failure raised by the toolkit. `module()` names the component that
/// raised it so the CLI can render a structured error object.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string module, const std::string& message)
        : std::runtime_error(message), kind_(kind), module_(std::move(module)) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& module() const noexcept { return module_; }

private:
    ErrorKind kind_;
    std::string module_;
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double t) const { return t > lo && t < hi; }
    bool contains_closed(double t) const { return t >= lo && t <= hi; }
    double mid() const { return 0.5 * (lo + hi); }
    double width() const { return hi - lo; }
};

/// Axis-aligned box [lo, hi] in R^n.
struct Box {
    Vec lo;
    Vec hi;

    Box() = default;
    Box(Vec lo_, Vec hi_);
    static Box cube(int dim, double lo, double hi);

    int dim() const { return static_cast<int>(lo.size()); }
    bool contains(std::span<const double> x, double slack = 0.0) const;
    bool contains(const Vec& x, double slack = 0.0) const { return contains(as_span(x), slack); }
    double volume() const;
    double scale() const { return (hi - lo).maxCoeff(); }
    Vec center() const { return 0.5 * (lo + hi); }
    Box shrunk(double factor) const;
};

/// Deterministic substream generator: every (seed, stream) pair produces the
/// same sequence on every platform, independent of scheduling.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint64_t next_u64();
    double uniform();  // [0, 1)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal();
    Vec uniform_in(const Box& box);
    Vec unit_vector(int dim);

private:
    std::uint64_t state_;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

inline constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace gjekit
