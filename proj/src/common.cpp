#include "gjekit/common.hpp"

#include <cmath>

namespace gjekit {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::DomainError: return "DomainError";
        case ErrorKind::Unattainable: return "Unattainable";
        case ErrorKind::NoConvergence: return "NoConvergence";
        case ErrorKind::OutOfDomain: return "OutOfDomain";
        case ErrorKind::EmptyDomain: return "EmptyDomain";
        case ErrorKind::NotCompactlyContained: return "NotCompactlyContained";
        case ErrorKind::SingularJacobian: return "SingularJacobian";
        case ErrorKind::HeightOutOfRange: return "HeightOutOfRange";
        case ErrorKind::BaseTooLarge: return "BaseTooLarge";
        case ErrorKind::HeightTooLarge: return "HeightTooLarge";
        case ErrorKind::PreconditionViolated: return "PreconditionViolated";
        case ErrorKind::DegenerateInput: return "DegenerateInput";
        case ErrorKind::InvalidSection: return "InvalidSection";
        case ErrorKind::MassImbalance: return "MassImbalance";
        case ErrorKind::StarvedCell: return "StarvedCell";
        case ErrorKind::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

Box::Box(Vec lo_, Vec hi_) : lo(std::move(lo_)), hi(std::move(hi_)) {
    if (lo.size() != hi.size()) throw Error(ErrorKind::DomainError, "common", "box corners differ in dimension");
    for (Eigen::Index i = 0; i < lo.size(); ++i)
        if (!(hi[i] > lo[i])) throw Error(ErrorKind::DomainError, "common", "box has non-positive extent");
}

Box Box::cube(int dim, double lo, double hi) { return Box(Vec::Constant(dim, lo), Vec::Constant(dim, hi)); }

bool Box::contains(std::span<const double> x, double slack) const {
    if (static_cast<Eigen::Index>(x.size()) != lo.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        if (x[i] < lo[k] - slack || x[i] > hi[k] + slack) return false;
    }
    return true;
}

double Box::volume() const { return (hi - lo).prod(); }

Box Box::shrunk(double factor) const {
    const Vec c = center();
    const Vec half = 0.5 * factor * (hi - lo);
    return Box(c - half, c + half);
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream) : state_(splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ULL))) {}

// xorshift64* on top of a splitmix-derived state
std::uint64_t Rng::next_u64() {
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    if (state_ == 0) state_ = 0x9e3779b97f4a7c15ULL;
    return state_ * 0x2545f4914f6cdd1dULL;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
    // Box-Muller, one value per call
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Vec Rng::uniform_in(const Box& box) {
    Vec v(box.dim());
    for (int i = 0; i < box.dim(); ++i) v[i] = uniform(box.lo[i], box.hi[i]);
    return v;
}

Vec Rng::unit_vector(int dim) {
    Vec v(dim);
    do {
        for (int i = 0; i < dim; ++i) v[i] = normal();
    } while (v.norm() < 1e-12);
    return v.normalized();
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
    const std::size_t m = std::min(x.size(), y.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const double lx = std::log(x[i]);
        const double ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double dm = static_cast<double>(m);
    const double denom = dm * sxx - sx * sx;
    if (denom == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return (dm * sxy - sx * sy) / denom;
}

}  // namespace gjekit
