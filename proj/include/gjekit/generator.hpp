#pragma once

#include "gjekit/common.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>

namespace gjekit {

enum class DerivativeMode { Analytic, FiniteDifference };

/// The bounded set Gamma = {(x, y, z) : x in U, y in V, z in I_{x,y}} together
/// with the height interval J.
struct GeneratorDomain {
    using IntervalFn = std::function<Interval(std::span<const double>, std::span<const double>)>;

    Box U;
    Box V;
    Interval z_interval;      // used when z_interval_fn is empty
    IntervalFn z_interval_fn;  // optional (x, y) -> I_{x,y}
    Interval J;

    Interval I(std::span<const double> x, std::span<const double> y) const {
        return z_interval_fn ? z_interval_fn(x, y) : z_interval;
    }
    Interval I(const Vec& x, const Vec& y) const { return I(as_span(x), as_span(y)); }
};

/// Value and partial derivatives of g at one point. Variables are ordered
/// (x_1..x_n, y_1..y_n, z); `hess` and `third` use that ordering.
struct Jet {
    int n = 0;
    int order = 0;
    double value = 0.0;
    Vec grad;                   // 2n+1
    Mat hess;                   // (2n+1) x (2n+1), order >= 2
    std::vector<double> third;  // (2n+1)^3, order >= 3

    int ix(int i) const { return i; }
    int iy(int j) const { return n + j; }
    int iz() const { return 2 * n; }
    int nvars() const { return 2 * n + 1; }

    Vec gx() const { return grad.head(n); }
    Vec gy() const { return grad.segment(n, n); }
    double gz() const { return grad[2 * n]; }
    Mat gxx() const { return hess.topLeftCorner(n, n); }
    /// gxy()(i, j) = d^2 g / dx_i dy_j
    Mat gxy() const { return hess.block(0, n, n, n); }
    Vec gxz() const { return hess.col(2 * n).head(n); }
    Vec gyz() const { return hess.col(2 * n).segment(n, n); }
    double gzz() const { return hess(2 * n, 2 * n); }
    double d3(int a, int b, int c) const {
        const int m = nvars();
        return third[static_cast<std::size_t>((a * m + b) * m + c)];
    }
};

/// A generating function g(x, y, z) with g_z < 0. Subclasses must provide the
/// value; derivatives default to central finite differences.
class Generator {
public:
    Generator(std::string name, int dim, GeneratorDomain domain, DerivativeMode mode);
    virtual ~Generator() = default;

    const std::string& name() const { return name_; }
    int dim() const { return dim_; }
    const GeneratorDomain& domain() const { return domain_; }
    DerivativeMode derivative_mode() const { return mode_; }

    virtual double value(std::span<const double> x, std::span<const double> y, double z) const = 0;
    double value(const Vec& x, const Vec& y, double z) const { return value(as_span(x), as_span(y), z); }

    /// Derivatives through `order` (1, 2 or 3).
    virtual Jet jet(std::span<const double> x, std::span<const double> y, double z, int order) const;
    Jet jet(const Vec& x, const Vec& y, double z, int order) const { return jet(as_span(x), as_span(y), z, order); }

    /// Finite-difference jet regardless of what the subclass supplies.
    Jet fd_jet(std::span<const double> x, std::span<const double> y, double z, int order) const;

    virtual double dz(std::span<const double> x, std::span<const double> y, double z) const;

    /// Closed-form g* when the subclass knows one.
    virtual std::optional<double> dual_closed_form(std::span<const double> x, std::span<const double> y, double u) const;

    virtual bool contains(std::span<const double> x, std::span<const double> y, double z) const;
    bool contains(const Vec& x, const Vec& y, double z) const { return contains(as_span(x), as_span(y), z); }
    bool contains_xy(std::span<const double> x, std::span<const double> y) const;

    /// Step scale per variable group used by the finite-difference fallback.
    double fd_scale() const { return fd_scale_; }

protected:
    /// Fills third derivatives by differencing the (possibly analytic) Hessian.
    void fill_third_by_differencing(std::span<const double> x, std::span<const double> y, double z, Jet& jet) const;

private:
    std::string name_;
    int dim_;
    GeneratorDomain domain_;
    DerivativeMode mode_;
    double fd_scale_;
};

using GeneratorPtr = std::shared_ptr<const Generator>;

// ---------------------------------------------------------------------------
// Built-ins

/// g(x, y, z) = x.y - z
class MongeAmpereGenerator final : public Generator {
public:
    MongeAmpereGenerator(int dim, GeneratorDomain domain);
    double value(std::span<const double> x, std::span<const double> y, double z) const override;
    Jet jet(std::span<const double> x, std::span<const double> y, double z, int order) const override;
    double dz(std::span<const double>, std::span<const double>, double) const override { return -1.0; }
    std::optional<double> dual_closed_form(std::span<const double> x, std::span<const double> y, double u) const override;
};

/// Cost functions c(x, y) for the optimal-transport generator g = c - z.
class Cost {
public:
    virtual ~Cost() = default;
    virtual std::string id() const = 0;
    virtual double value(std::span<const double> x, std::span<const double> y) const = 0;
    /// Derivatives in the (x, y) variables; `jet.grad`, `jet.hess`, `jet.third`
    /// are sized for 2n+1 variables with the z slots left zero.
    virtual void derivatives(std::span<const double> x, std::span<const double> y, int order, Jet& jet) const = 0;
    virtual bool admissible(std::span<const double>, std::span<const double>) const { return true; }
};

std::shared_ptr<const Cost> make_cost(const std::string& id);
std::vector<std::string> cost_ids();

class CostGenerator final : public Generator {
public:
    CostGenerator(int dim, std::shared_ptr<const Cost> cost, GeneratorDomain domain);
    double value(std::span<const double> x, std::span<const double> y, double z) const override;
    Jet jet(std::span<const double> x, std::span<const double> y, double z, int order) const override;
    double dz(std::span<const double>, std::span<const double>, double) const override { return -1.0; }
    std::optional<double> dual_closed_form(std::span<const double> x, std::span<const double> y, double u) const override;
    bool contains(std::span<const double> x, std::span<const double> y, double z) const override;
    const Cost& cost() const { return *cost_; }

private:
    std::shared_ptr<const Cost> cost_;
};

/// g(x, y, z) = x.y - z + eps * z * (x.y): a z-dependent generator whose
/// supports change shape with height.
class PerturbedZGenerator final : public Generator {
public:
    PerturbedZGenerator(int dim, double epsilon, GeneratorDomain domain);
    double value(std::span<const double> x, std::span<const double> y, double z) const override;
    Jet jet(std::span<const double> x, std::span<const double> y, double z, int order) const override;
    double dz(std::span<const double> x, std::span<const double> y, double z) const override;
    std::optional<double> dual_closed_form(std::span<const double> x, std::span<const double> y, double u) const override;
    double epsilon() const { return epsilon_; }

private:
    double epsilon_;
};

/// Plugin generator backed by a value callable only; every derivative comes
/// from finite differences.
class CallableGenerator final : public Generator {
public:
    using Fn = std::function<double(std::span<const double>, std::span<const double>, double)>;
    CallableGenerator(std::string name, int dim, GeneratorDomain domain, Fn fn);
    double value(std::span<const double> x, std::span<const double> y, double z) const override { return fn_(x, y, z); }

private:
    Fn fn_;
};

GeneratorDomain default_domain(const std::string& id, int dim);
GeneratorPtr make_monge_ampere(int dim = 2);
GeneratorPtr make_monge_ampere(int dim, GeneratorDomain domain);
GeneratorPtr make_perturbed(double epsilon = 0.05, int dim = 2);
GeneratorPtr make_perturbed(double epsilon, int dim, GeneratorDomain domain);
GeneratorPtr make_cost_generator(const std::string& cost_id, int dim = 2);
GeneratorPtr make_cost_generator(const std::string& cost_id, int dim, GeneratorDomain domain);

// ---------------------------------------------------------------------------
// Operations

/// The z with g(x, y, z) = u.
double dual_g_star(const Generator& gen, std::span<const double> x, std::span<const double> y, double u);
inline double dual_g_star(const Generator& gen, const Vec& x, const Vec& y, double u) {
    return dual_g_star(gen, as_span(x), as_span(y), u);
}

struct YZ {
    Vec y;
    double z = 0.0;
    int iterations = 0;
    double residual = 0.0;
};

/// Solves g(x, Y, Z) = u, g_x(x, Y, Z) = p by damped Newton in (y, z).
YZ solve_YZ(const Generator& gen, const Vec& x, double u, const Vec& p, const std::optional<YZ>& warm = std::nullopt);

struct EMatrix {
    Mat E;
    double det = 0.0;
};

EMatrix matrix_E(const Generator& gen, const Vec& x, const Vec& y, double z);
EMatrix matrix_E(const Jet& jet);

/// Point y_theta of the g*-segment from y0 to y1 with respect to (x0, u0).
Vec gstar_segment(const Generator& gen, const Vec& x0, double u0, const Vec& y0, const Vec& y1, double theta);

/// Image of x under x -> (g_y / g_z)(x, y, z).
Vec g_segment_map(const Generator& gen, const Vec& x, const Vec& y, double z);

/// Point x_theta of the g-segment from x0 to x1 with respect to (y, z).
Vec g_segment(const Generator& gen, const Vec& y, double z, const Vec& x0, const Vec& x1, double theta);

/// Inverts x -> (g_y / g_z)(x, y, z) near `start`.
Vec invert_g_segment_map(const Generator& gen, const Vec& y, double z, const Vec& target, const Vec& start);

}  // namespace gjekit
