#pragma once

#include "gjekit/certify.hpp"
#include "gjekit/generator.hpp"
#include "gjekit/json.hpp"

#include <array>

namespace gjekit {

class TransformContext;

/// G(x', y', z) = g(x0 + x', y0 + A^{-1} y', z + z_h) - u0 with A = E(x0, y0, z_h),
/// so G(0, 0, 0) = h and E_G(0, 0, 0) = Id.
class RecentredGenerator final : public Generator {
public:
    RecentredGenerator(GeneratorPtr base, Vec x0, Vec y0, double u0, double z_h, Mat A);

    double value(std::span<const double> x, std::span<const double> y, double z) const override;
    Jet jet(std::span<const double> x, std::span<const double> y, double z, int order) const override;
    double dz(std::span<const double> x, std::span<const double> y, double z) const override;
    bool contains(std::span<const double> x, std::span<const double> y, double z) const override;

    const Generator& base() const { return *base_; }
    Vec to_base_x(std::span<const double> x) const;
    Vec to_base_y(std::span<const double> y) const;
    double to_base_z(double z) const { return z + z_h_; }

private:
    GeneratorPtr base_;
    Vec x0_, y0_;
    double u0_, z_h_;
    Mat A_, Ainv_;
};

/// The transformed generator (q, p, z) -> g-bar(q, p, z) on explicit boxes.
class TransformedGenerator final : public Generator {
public:
    TransformedGenerator(std::shared_ptr<const TransformContext> ctx, GeneratorDomain domain);
    double value(std::span<const double> q, std::span<const double> p, double z) const override;
    double dz(std::span<const double> q, std::span<const double> p, double z) const override;
    bool contains(std::span<const double> q, std::span<const double> p, double z) const override;

private:
    Vec x_of(std::span<const double> q) const;
    Vec y_of(std::span<const double> p) const;

    std::shared_ptr<const TransformContext> ctx_;
};

struct TransformOptions {
    std::size_t cg_samples = 10000;
    std::uint64_t seed = 0;
};

class TransformContext : public std::enable_shared_from_this<TransformContext> {
public:
    static std::shared_ptr<const TransformContext> make(GeneratorPtr gen, const Vec& x0, const Vec& y0, double u0, double h,
                                                       const TransformOptions& opt = {});

    const Generator& gen() const { return *gen_; }
    const GeneratorPtr& gen_ptr() const { return gen_; }
    /// The recentred generator G.
    const Generator& G() const { return *G_; }
    const GeneratorPtr& G_ptr() const { return G_; }

    const Vec& x0() const { return x0_; }
    const Vec& y0() const { return y0_; }
    double u0() const { return u0_; }
    double h() const { return h_; }
    double z_h() const { return z_h_; }
    const Mat& A() const { return A_; }
    double Gz0() const { return Gz0_; }
    double C_g() const { return C_g_; }
    const DistortionBounds& distortion() const { return bounds_; }

    /// Coordinates in the original variables.
    Vec to_q(const Vec& x) const;
    Vec from_q(const Vec& q) const;
    Vec to_p(const Vec& y) const;
    Vec from_p(const Vec& p) const;
    /// dq/dx and dp/dy in the original variables.
    Mat dq_dx(const Vec& x) const;
    Mat dp_dy(const Vec& y) const;

    /// Local (recentred) coordinates x' = x - x0, y' = A (y - y0).
    Vec q_local(const Vec& xl) const;
    Vec xl_from_q(const Vec& q) const;
    Vec p_local(const Vec& yl) const;
    Vec yl_from_p(const Vec& p) const;
    Mat dq_local(const Vec& xl) const;
    Mat dp_local(const Vec& yl) const;

    /// g-tilde in recentred coordinates.
    double g_tilde(const Vec& xl, const Vec& yl, double z) const;
    double transformed_g(const Vec& q, const Vec& p, double z) const;
    /// d g-bar / dz at (q, p, z).
    double transformed_gz(const Vec& q, const Vec& p, double z) const;
    /// g-tilde_z in recentred coordinates.
    double gz_local(const Vec& xl, const Vec& yl, double z) const;

    /// u-bar(q) = G_z(0)/G_z(x', 0, 0) [u(x) - u0 - G(x', 0, 0)] for u given in original x.
    std::function<double(const Vec&)> transform_function(std::function<double(const Vec&)> u) const;

    /// g-bar as a Generator on q x p boxes centred at 0 with the given
    /// half-widths and z interval (-z_half, z_half); J = (-j_half, j_half).
    GeneratorPtr transformed_generator(double q_half, double p_half, double z_half, double j_half) const;

private:
    TransformContext() = default;

    GeneratorPtr gen_;
    GeneratorPtr G_;
    Vec x0_, y0_;
    double u0_ = 0.0, h_ = 0.0, z_h_ = 0.0;
    Mat A_;
    double Gz0_ = -1.0;
    Vec Gx0_;
    double C_g_ = 1.0;
    DistortionBounds bounds_;
};

using ContextPtr = std::shared_ptr<const TransformContext>;

inline ContextPtr make_context(GeneratorPtr gen, const Vec& x0, const Vec& y0, double u0, double h, const TransformOptions& opt = {}) {
    return TransformContext::make(std::move(gen), x0, y0, u0, h, opt);
}

struct ExpansionLevel {
    double r = 0.0;
    double residual_max = 0.0;          // max |g-bar - (q.p - z)|
    double normalised_max = 0.0;        // residual / (|q|^2|p| + |q||z| + |p|^2|q| + |z|^2)
    double f1_C = 0.0;                  // max |f1| / |q|
    double f1_at_q0 = 0.0;              // max |f1(0, p, z)|
    double gz_min = 0.0, gz_max = 0.0;  // range of g-bar_z
    std::size_t samples = 0;
};

struct ExpansionReport {
    std::vector<ExpansionLevel> levels;
    bool exact = false;  // every residual vanished
    double slope = 0.0;  // log-log slope of residual_max against r
    double C_g = 1.0;
    double C_plus = 0.0, C_minus = 0.0;  // -C_minus <= g-bar_z <= -C_plus
    bool gz_bounds_ok = false;
    bool slope_ok = false;
    bool f1_vertex_ok = false;
    bool f1_C_stable = false;
    bool normalised_stable = false;
    std::vector<std::array<double, 5>> scatter;  // r, |q|, |p|, |z|, residual
    bool pass() const { return gz_bounds_ok && (exact || slope_ok) && f1_vertex_ok && f1_C_stable && normalised_stable; }
};

/// Samples (q, p, z) in the box of radius r for each radius.
ExpansionReport verify_expansion(const TransformContext& ctx, const std::vector<double>& radii, std::size_t samples,
                                 std::uint64_t seed);

Json to_json(const ExpansionReport& r);
void write_expansion_csv(const ExpansionReport& r, const std::string& path);

}  // namespace gjekit
