#pragma once

#include "gjekit/gconvex.hpp"
#include "gjekit/geometry.hpp"
#include "gjekit/json.hpp"
#include "gjekit/transform.hpp"

namespace gjekit {

/// Convex polygon containing 0 strictly inside, with dense boundary samples.
class ConvexBase {
public:
    /// Vertices in any order; the list must already be convex.
    static ConvexBase polygon(const Polygon& vertices, int per_edge = 256);
    /// R = {-b_i <= x_i <= a_i}
    static ConvexBase rectangle(const P2& a, const P2& b, int per_edge = 256);

    const Polygon& vertices() const { return vertices_; }
    const std::vector<P2>& boundary() const { return boundary_; }
    int per_edge() const { return per_edge_; }
    double diameter() const { return diameter_; }
    double area() const { return polygon_area(vertices_); }
    double support(const P2& w) const { return support_function(vertices_, w); }
    bool contains(const P2& x) const { return point_in_polygon(vertices_, x); }
    ConvexBase resampled(int per_edge) const { return polygon(vertices_, per_edge); }

private:
    Polygon vertices_;
    std::vector<P2> boundary_;
    int per_edge_ = 0;
    double diameter_ = 0.0;
};

/// K(q) = sup{p.q - h : p.x <= h on D} with subdifferential h * polar(D).
struct ClassicalCone {
    ConvexBase base;
    double h = 0.0;
    Polygon subdifferential;

    static ClassicalCone build(const ConvexBase& base, double h);
    double value(const P2& q) const;
    /// Smallest lambda with p in lambda * subdifferential.
    double gauge(const P2& p) const { return base.support(p) / h; }
};

struct GConeOptions {
    double d0 = 0.1;
    double h0 = 0.01;
    bool enforce = true;
    int directions = 720;
};

/// The g-cone over a base D in q-coordinates, vertex at 0, height h.
class GCone {
public:
    /// Extreme admissible p along one direction.
    struct Ray {
        double theta = 0.0;
        double t = 0.0;
        P2 p = P2::Zero();
        Vec y_local;  // y' with p_local(y') = p
        Vec y;        // original y
        double w = 0.0;           // G*(0, y', h_ctx - h) in recentred z
        double constraint = 0.0;  // max over boundary samples of g-bar(x_b, p, h)
    };

    const TransformContext& ctx() const { return *ctx_; }
    const ContextPtr& ctx_ptr() const { return ctx_; }
    const ConvexBase& base() const { return base_; }
    double h() const { return h_; }
    const GConeOptions& options() const { return opt_; }
    bool within_size() const { return base_.diameter() <= opt_.d0 && h_ <= opt_.h0; }

    const std::vector<Ray>& rays() const { return rays_; }
    ClassicalCone classical() const { return ClassicalCone::build(base_, h_); }

    /// max_b g-bar(x_b, p, h); +inf when p leaves the mapped domain.
    double constraint(const P2& p) const;
    bool admissible(const P2& p) const { return constraint(p) <= 0.0; }
    /// phi_p(q) = g-bar(q, p, h)
    double phi(const P2& p, const P2& q) const;
    /// Extreme admissible p in direction theta.
    Ray extreme(double theta) const;
    /// The cone value by direction sweep with golden-section refinement.
    double value(const P2& q) const;

private:
    friend GCone build_gcone(ContextPtr ctx, const ConvexBase& base, double h, const GConeOptions& opt);
    GCone() = default;

    struct Lifted {
        Vec y_local, y;
        double w = 0.0;
    };
    struct Sample {
        Vec X;             // original x of the boundary sample
        double ratio = 0;  // G_z(0) / G_z(x', 0, 0)
        double g0 = 0;     // g(X, y0, z_h)
    };
    bool lift(const P2& p, Lifted& out) const;
    double constraint_lifted(const Lifted& l) const;
    Sample make_sample(const P2& q) const;
    double phi_lifted(const Lifted& l, const Sample& s) const;

    ContextPtr ctx_;
    ConvexBase base_;
    double h_ = 0.0;
    GConeOptions opt_;
    std::vector<Sample> samples_;
    std::vector<Ray> rays_;
};

GCone build_gcone(ContextPtr ctx, const ConvexBase& base, double h, const GConeOptions& opt = {});

struct VertexImage {
    std::vector<P2> p;  // extreme admissible p per direction
    PointList y;        // the same points through from_p
    Polygon hull;       // hull of p
    double hull_area = 0.0;
};

/// Directions <= 0 reuse the cone's own sweep.
VertexImage y_image_at_vertex(const GCone& cone, int directions = 0);

struct UpperCheck {
    bool pass = false;
    double margin = 0.0;  // max gauge of the image points w.r.t. the classical subdifferential
    std::size_t points = 0;
};
UpperCheck check_upper(const GCone& cone);

struct LowerCheck {
    bool pass = false;
    double c = 0.0;  // largest c with c h R* inside the image hull
    double c_min = 0.0;
    double hull_area = 0.0;
    double volume_bound = 0.0;  // c h^2 prod(1/a_i + 1/b_i)
    bool volume_ok = false;
};
/// R = {-b_i <= x_i <= a_i} must contain the base.
LowerCheck check_lower(const GCone& cone, const P2& a, const P2& b, double c_min = 0.1);

struct ProjectionCheck {
    bool pass = false;
    double area = 0.0;
    double width = 0.0;  // length of the projection orthogonal to nu
    double d = 0.0;
    double c = 0.0;  // area / (d * width)
};
/// |D| >= c_n d H^1(D') for a convex polygon holding a nu-parallel segment of length d.
ProjectionCheck projection_bound(const Polygon& D, const P2& nu, double d, double c_n = 0.5);
/// Same on a node mask; `map` sends node coordinates to q-coordinates.
ProjectionCheck projection_bound(const std::vector<char>& mask, const GridDomain& dom, const P2& nu, double d,
                                 double c_n = 0.5, const std::function<Vec(const Vec&)>& map = nullptr);
/// Longest chord of a convex polygon parallel to nu.
double max_chord(const Polygon& D, const P2& nu);

struct NearBoundaryCheck {
    bool pass = false;
    double ratio = 0.0;  // h^2 / (eps |hull of the vertex image| |D|)
    double eps = 0.0;
    double d = 0.0;
    double image_area = 0.0;
    double base_area = 0.0;
};
NearBoundaryCheck check_near_boundary(const GCone& cone, const P2& nu, double eps, double d, double C_fit = 1.0);

/// Hausdorff shift of the vertex image when boundary sampling doubles.
double refinement_shift(const GCone& cone);

Json to_json(const GCone& cone, const VertexImage& image);
Json to_json(const UpperCheck& c);
Json to_json(const LowerCheck& c);
Json to_json(const NearBoundaryCheck& c);
void write_cone_csv(const GCone& cone, const VertexImage& image, const std::string& path);
/// Base, h * polar(D), 2 h * polar(D) and the image cloud.
void write_cone_svg(const GCone& cone, const VertexImage& image, const std::string& path);

}  // namespace gjekit
