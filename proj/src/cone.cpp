#include "gjekit/cone.hpp"

#include "gjekit/parallel.hpp"
#include "gjekit/report.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gjekit {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

P2 dir(double theta) { return {std::cos(theta), std::sin(theta)}; }
Vec v2(const P2& p) { return Vec(p); }
P2 p2(const Vec& v) { return {v[0], v[1]}; }

/// Uniform angles plus the vertex directions of the classical subdifferential.
std::vector<double> sweep_angles(const ConvexBase& base, double h, int count) {
    std::vector<double> a;
    a.reserve(static_cast<std::size_t>(count) + base.vertices().size());
    for (int k = 0; k < count; ++k) a.push_back(kTwoPi * k / count);
    for (const auto& v : scaled_polar(base.vertices(), h)) {
        double t = std::atan2(v.y(), v.x());
        if (t < 0) t += kTwoPi;
        a.push_back(t);
    }
    std::sort(a.begin(), a.end());
    std::vector<double> out;
    for (double t : a)
        if (out.empty() || t - out.back() > 1e-12) out.push_back(t);
    if (out.size() > 1 && out.front() + kTwoPi - out.back() <= 1e-12) out.pop_back();
    return out;
}

/// Outward halfplanes n.p <= c of a ccw convex polygon.
std::vector<std::pair<P2, double>> edges_of(const Polygon& poly) {
    std::vector<std::pair<P2, double>> e;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const P2 d = poly[(i + 1) % poly.size()] - poly[i];
        const P2 n(d.y(), -d.x());
        e.emplace_back(n, n.dot(poly[i]));
    }
    return e;
}

/// Largest s with s * v inside a convex polygon holding 0.
double ray_scale(const Polygon& hull, const P2& v) {
    double s = kInf;
    for (const auto& [n, c] : edges_of(hull)) {
        const double nv = n.dot(v);
        if (nv > 0) s = std::min(s, c / nv);
    }
    return s;
}

}  // namespace

// ---------------------------------------------------------------------------

ConvexBase ConvexBase::polygon(const Polygon& vertices, int per_edge) {
    if (vertices.size() < 3) throw Error(ErrorKind::DegenerateInput, "cone", "a base needs at least three vertices");
    if (per_edge < 1) throw Error(ErrorKind::PreconditionViolated, "cone", "boundary sampling needs per_edge >= 1");
    Polygon v = vertices;
    if (polygon_area(v) < 0) std::reverse(v.begin(), v.end());
    if (!is_convex_ccw(v)) throw Error(ErrorKind::DegenerateInput, "cone", "base vertices are not convex");
    for (const auto& [n, c] : edges_of(v))
        if (!(c > 1e-14 * n.norm())) throw Error(ErrorKind::DegenerateInput, "cone", "0 must lie strictly inside the base");
    ConvexBase b;
    b.vertices_ = std::move(v);
    b.per_edge_ = per_edge;
    b.boundary_ = sample_boundary(b.vertices_, per_edge);
    b.diameter_ = polygon_diameter(b.vertices_);
    return b;
}

ConvexBase ConvexBase::rectangle(const P2& a, const P2& b, int per_edge) {
    return polygon({{-b.x(), -b.y()}, {a.x(), -b.y()}, {a.x(), a.y()}, {-b.x(), a.y()}}, per_edge);
}

ClassicalCone ClassicalCone::build(const ConvexBase& base, double h) {
    if (!(h > 0)) throw Error(ErrorKind::PreconditionViolated, "cone", "cone height must be positive");
    return {base, h, scaled_polar(base.vertices(), h)};
}

double ClassicalCone::value(const P2& q) const { return support_function(subdifferential, q) - h; }

// ---------------------------------------------------------------------------

GCone build_gcone(ContextPtr ctx, const ConvexBase& base, double h, const GConeOptions& opt) {
    if (!ctx) throw Error(ErrorKind::PreconditionViolated, "cone", "cone needs a transform context");
    if (ctx->gen().dim() != 2) throw Error(ErrorKind::PreconditionViolated, "cone", "g-cones are implemented for n = 2");
    if (!(h > 0)) throw Error(ErrorKind::PreconditionViolated, "cone", "cone height must be positive");
    if (opt.directions < 8) throw Error(ErrorKind::PreconditionViolated, "cone", "direction sweep needs at least 8 directions");
    if (opt.enforce) {
        if (base.diameter() > opt.d0)
            throw Error(ErrorKind::BaseTooLarge, "cone", "base diameter " + std::to_string(base.diameter()) + " exceeds d0");
        if (h > opt.h0) throw Error(ErrorKind::HeightTooLarge, "cone", "height " + std::to_string(h) + " exceeds h0");
    }
    GCone c;
    c.ctx_ = std::move(ctx);
    c.base_ = base;
    c.h_ = h;
    c.opt_ = opt;
    const auto& pts = base.boundary();
    c.samples_.resize(pts.size());
    parallel_for(pts.size(), [&](std::size_t i) { c.samples_[i] = c.make_sample(pts[i]); });

    const auto angles = sweep_angles(base, h, opt.directions);
    c.rays_.resize(angles.size());
    parallel_for(angles.size(), [&](std::size_t k) { c.rays_[k] = c.extreme(angles[k]); });
    return c;
}

GCone::Sample GCone::make_sample(const P2& q) const {
    const auto& gen = ctx_->gen();
    Sample s;
    s.X = ctx_->from_q(v2(q));
    const Vec& y0 = ctx_->y0();
    s.ratio = ctx_->Gz0() / gen.dz(as_span(s.X), as_span(y0), ctx_->z_h());
    s.g0 = gen.value(as_span(s.X), as_span(y0), ctx_->z_h());
    return s;
}

bool GCone::lift(const P2& p, Lifted& out) const {
    try {
        out.y_local = ctx_->yl_from_p(v2(p));
        const Vec zero = Vec::Zero(2);
        out.w = dual_g_star(ctx_->G(), zero, out.y_local, ctx_->h() - h_);
        out.y = ctx_->y0() + ctx_->A().lu().solve(out.y_local);
        return true;
    } catch (const Error&) {
        return false;
    }
}

double GCone::phi_lifted(const Lifted& l, const Sample& s) const {
    const double z = l.w + ctx_->z_h();
    return s.ratio * (ctx_->gen().value(as_span(s.X), as_span(l.y), z) - s.g0);
}

double GCone::constraint_lifted(const Lifted& l) const {
    double m = -kInf;
    for (const auto& s : samples_) m = std::max(m, phi_lifted(l, s));
    return m;
}

double GCone::constraint(const P2& p) const {
    Lifted l;
    if (!lift(p, l)) return kInf;
    return constraint_lifted(l);
}

double GCone::phi(const P2& p, const P2& q) const {
    Lifted l;
    if (!lift(p, l)) throw Error(ErrorKind::OutOfDomain, "cone", "p outside the mapped target domain");
    return phi_lifted(l, make_sample(q));
}

GCone::Ray GCone::extreme(double theta) const {
    const P2 w = dir(theta);
    const double t_cl = h_ / base_.support(w);
    struct Eval {
        double t = 0.0, f = kInf;
        Lifted l;
        bool ok = false;
    };
    auto eval = [&](double t) {
        Eval e;
        e.t = t;
        e.ok = lift(t * w, e.l);
        e.f = e.ok ? constraint_lifted(e.l) : kInf;
        return e;
    };
    Eval lo = eval(0.5 * t_cl);
    for (int k = 0; k < 60 && !(lo.f <= 0.0); ++k) lo = eval(0.5 * lo.t);
    if (!(lo.f <= 0.0)) throw Error(ErrorKind::NoConvergence, "cone", "no admissible point along a direction");
    Eval hi = eval(2.0 * t_cl);
    for (int k = 0; k < 40 && hi.f <= 0.0; ++k) {
        lo = std::move(hi);
        hi = eval(2.0 * lo.t);
    }
    if (hi.f <= 0.0) throw Error(ErrorKind::NoConvergence, "cone", "admissible set is unbounded along a direction");

    // Illinois on the sign change; infinite values fall back to bisection.
    double flo = lo.f, fhi = hi.f;
    int side = 0;
    for (int it = 0; it < 200; ++it) {
        if (hi.t - lo.t <= 1e-15 * hi.t || lo.f >= -1e-17 * h_) break;
        double t = 0.5 * (lo.t + hi.t);
        if (std::isfinite(fhi)) {
            const double rf = lo.t - flo * (hi.t - lo.t) / (fhi - flo);
            if (rf > lo.t && rf < hi.t) t = rf;
        }
        Eval m = eval(t);
        if (m.f <= 0.0) {
            lo = std::move(m);
            flo = lo.f;
            if (side == -1) fhi *= 0.5;
            side = -1;
        } else {
            hi = std::move(m);
            fhi = hi.f;
            if (side == 1) flo *= 0.5;
            side = 1;
        }
    }
    Ray r;
    r.theta = theta;
    r.t = lo.t;
    r.p = lo.t * w;
    r.y_local = lo.l.y_local;
    r.y = lo.l.y;
    r.w = lo.l.w;
    r.constraint = lo.f;
    return r;
}

double GCone::value(const P2& q) const {
    const Sample s = make_sample(q);
    auto at = [&](const Ray& r) {
        Lifted l{r.y_local, r.y, r.w};
        return phi_lifted(l, s);
    };
    const std::size_t n = rays_.size();
    std::size_t best = 0;
    double vbest = -kInf;
    for (std::size_t k = 0; k < n; ++k) {
        const double v = at(rays_[k]);
        if (v > vbest) {
            vbest = v;
            best = k;
        }
    }
    if (q.norm() == 0.0) return vbest;
    double a = rays_[(best + n - 1) % n].theta, b = rays_[(best + 1) % n].theta;
    const double c0 = rays_[best].theta;
    if (a > c0) a -= kTwoPi;
    if (b < c0) b += kTwoPi;
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    auto F = [&](double t) { return at(extreme(t)); };
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = F(x1), f2 = F(x2);
    for (int it = 0; it < 200 && b - a > 1e-12; ++it) {
        if (f1 >= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = F(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = F(x2);
        }
    }
    return std::max({vbest, f1, f2});
}

// ---------------------------------------------------------------------------

VertexImage y_image_at_vertex(const GCone& cone, int directions) {
    std::vector<GCone::Ray> fresh;
    const std::vector<GCone::Ray>* rays = &cone.rays();
    if (directions > 0 && directions != cone.options().directions) {
        const auto angles = sweep_angles(cone.base(), cone.h(), directions);
        fresh.resize(angles.size());
        parallel_for(angles.size(), [&](std::size_t k) { fresh[k] = cone.extreme(angles[k]); });
        rays = &fresh;
    }
    VertexImage img;
    for (const auto& r : *rays) {
        img.p.push_back(r.p);
        img.y.push_back(r.y);
    }
    img.hull = convex_hull(img.p);
    img.hull_area = polygon_area(img.hull);
    return img;
}

UpperCheck check_upper(const GCone& cone) {
    if (!cone.within_size()) throw Error(ErrorKind::PreconditionViolated, "cone", "upper check needs diam(D) <= d0 and h <= h0");
    const ClassicalCone K = cone.classical();
    UpperCheck u;
    for (const auto& r : cone.rays()) u.margin = std::max(u.margin, K.gauge(r.p));
    u.points = cone.rays().size();
    u.pass = u.margin <= 2.0 + 1e-6;
    return u;
}

LowerCheck check_lower(const GCone& cone, const P2& a, const P2& b, double c_min) {
    if (!cone.within_size()) throw Error(ErrorKind::PreconditionViolated, "cone", "lower check needs diam(D) <= d0 and h <= h0");
    if (!(a.minCoeff() > 0 && b.minCoeff() > 0)) throw Error(ErrorKind::PreconditionViolated, "cone", "rectangle extents must be positive");
    for (const auto& v : cone.base().vertices())
        for (int i = 0; i < 2; ++i)
            if (v[i] > a[i] * (1 + 1e-12) || v[i] < -b[i] * (1 + 1e-12))
                throw Error(ErrorKind::PreconditionViolated, "cone", "base is not contained in the rectangle");
    const VertexImage img = y_image_at_vertex(cone);
    LowerCheck l;
    l.c_min = c_min;
    l.hull_area = img.hull_area;
    const std::vector<P2> corners{{1 / a.x(), 1 / a.y()}, {-1 / b.x(), 1 / a.y()}, {-1 / b.x(), -1 / b.y()}, {1 / a.x(), -1 / b.y()}};
    const bool origin_inside = img.hull.size() >= 3 && point_in_polygon(img.hull, P2::Zero());
    l.c = kInf;
    for (const auto& k : corners) l.c = std::min(l.c, origin_inside ? ray_scale(img.hull, k) / cone.h() : 0.0);
    const double h = cone.h();
    l.volume_bound = c_min * h * h * (1 / a.x() + 1 / b.x()) * (1 / a.y() + 1 / b.y());
    l.volume_ok = l.hull_area >= l.volume_bound;
    l.pass = l.c >= c_min;
    return l;
}

// ---------------------------------------------------------------------------

double max_chord(const Polygon& D, const P2& nu_in) {
    const P2 nu = nu_in.normalized();
    const P2 perp(-nu.y(), nu.x());
    double best = 0.0;
    const std::size_t n = D.size();
    for (std::size_t k = 0; k < n; ++k) {
        const double s = D[k].dot(perp);
        double lo = kInf, hi = -kInf;
        for (std::size_t i = 0; i < n; ++i) {
            const P2& a = D[i];
            const P2& b = D[(i + 1) % n];
            const double da = a.dot(perp) - s, db = b.dot(perp) - s;
            auto take = [&](const P2& x) {
                const double t = x.dot(nu);
                lo = std::min(lo, t);
                hi = std::max(hi, t);
            };
            if (std::abs(da) <= 1e-15) take(a);
            if (std::abs(db) <= 1e-15) take(b);
            if (da * db < 0) take(a + (da / (da - db)) * (b - a));
        }
        if (hi > lo) best = std::max(best, hi - lo);
    }
    return best;
}

ProjectionCheck projection_bound(const Polygon& D_in, const P2& nu_in, double d, double c_n) {
    if (D_in.size() < 3) throw Error(ErrorKind::PreconditionViolated, "cone", "projection bound needs a polygon");
    if (!(d > 0)) throw Error(ErrorKind::PreconditionViolated, "cone", "segment length must be positive");
    Polygon D = D_in;
    if (polygon_area(D) < 0) std::reverse(D.begin(), D.end());
    if (!is_convex_ccw(D, 1e-12)) throw Error(ErrorKind::PreconditionViolated, "cone", "projection bound needs a convex set");
    const P2 nu = nu_in.normalized();
    if (max_chord(D, nu) < d * (1 - 1e-9))
        throw Error(ErrorKind::PreconditionViolated, "cone", "set holds no nu-parallel segment of length d");
    const P2 perp(-nu.y(), nu.x());
    ProjectionCheck p;
    p.area = polygon_area(D);
    p.width = support_function(D, perp) + support_function(D, -perp);
    p.d = d;
    p.c = p.area / (d * p.width);
    p.pass = p.area >= c_n * d * p.width * (1 - 1e-12);
    return p;
}

ProjectionCheck projection_bound(const std::vector<char>& mask, const GridDomain& dom, const P2& nu, double d, double c_n,
                                 const std::function<Vec(const Vec&)>& map) {
    if (dom.dim() != 2) throw Error(ErrorKind::PreconditionViolated, "cone", "projection bound on masks is two-dimensional");
    std::vector<P2> pts;
    for (std::size_t k = 0; k < dom.nodes(); ++k)
        if (mask[k]) pts.push_back(p2(map ? map(dom.node(k)) : dom.node(k)));
    const Polygon hull = convex_hull(pts);
    if (hull.size() < 3) throw Error(ErrorKind::PreconditionViolated, "cone", "mask is too small for a projection bound");
    // node hulls lose about one spacing of chord length
    const double slack = 2.0 * std::max(dom.spacing(0), dom.spacing(1));
    const double chord = max_chord(hull, nu);
    if (chord < d - slack) throw Error(ErrorKind::PreconditionViolated, "cone", "mask holds no nu-parallel segment of length d");
    return projection_bound(hull, nu, std::min(d, chord), c_n);
}

NearBoundaryCheck check_near_boundary(const GCone& cone, const P2& nu_in, double eps, double d, double C_fit) {
    if (!(eps > 0 && eps <= 1 && d > 0)) throw Error(ErrorKind::PreconditionViolated, "cone", "need 0 < eps <= 1 and d > 0");
    const P2 nu = nu_in.normalized();
    const auto& D = cone.base().vertices();
    if (std::abs(support_function(D, nu) - eps * d) > 1e-9 * d)
        throw Error(ErrorKind::PreconditionViolated, "cone", "sup over D of <x, nu> must equal eps d");
    if (max_chord(D, nu) < d * (1 - 1e-9))
        throw Error(ErrorKind::PreconditionViolated, "cone", "base holds no nu-parallel segment of length d");
    const VertexImage img = y_image_at_vertex(cone);
    NearBoundaryCheck c;
    c.eps = eps;
    c.d = d;
    c.image_area = img.hull_area;
    c.base_area = cone.base().area();
    c.ratio = cone.h() * cone.h() / (eps * c.image_area * c.base_area);
    c.pass = c.ratio <= C_fit;
    return c;
}

double refinement_shift(const GCone& cone) {
    GConeOptions opt = cone.options();
    opt.enforce = false;
    const GCone fine = build_gcone(cone.ctx_ptr(), cone.base().resampled(2 * cone.base().per_edge()), cone.h(), opt);
    double shift = 0.0;
    const auto& a = cone.rays();
    const auto& b = fine.rays();
    for (std::size_t k = 0; k < std::min(a.size(), b.size()); ++k) shift = std::max(shift, (a[k].p - b[k].p).norm());
    return shift;
}

// ---------------------------------------------------------------------------

namespace {
Json p2_list(const std::vector<P2>& pts) {
    Json a = Json::array();
    for (const auto& p : pts) a.push_back({p.x(), p.y()});
    return a;
}
}  // namespace

Json to_json(const GCone& cone, const VertexImage& image) {
    const auto& ctx = cone.ctx();
    double worst = -kInf;
    for (const auto& r : cone.rays()) worst = std::max(worst, r.constraint);
    return Json{{"generator", ctx.gen().name()},
                {"x0", vec_json(ctx.x0())},
                {"y0", vec_json(ctx.y0())},
                {"u0", ctx.u0()},
                {"h", cone.h()},
                {"C_g", ctx.C_g()},
                {"base", p2_list(cone.base().vertices())},
                {"diameter", cone.base().diameter()},
                {"boundary_samples", cone.base().boundary().size()},
                {"directions", cone.rays().size()},
                {"within_size", cone.within_size()},
                {"max_active_constraint", worst},
                {"image_p", p2_list(image.p)},
                {"image_y", points_json(image.y)},
                {"image_hull", p2_list(image.hull)},
                {"image_hull_area", image.hull_area},
                {"classical_subdifferential", p2_list(cone.classical().subdifferential)}};
}

Json to_json(const UpperCheck& c) { return {{"pass", c.pass}, {"margin", c.margin}, {"points", c.points}}; }

Json to_json(const LowerCheck& c) {
    return {{"pass", c.pass},           {"c", c.c},
            {"c_min", c.c_min},         {"hull_area", c.hull_area},
            {"volume_bound", c.volume_bound}, {"volume_ok", c.volume_ok}};
}

Json to_json(const NearBoundaryCheck& c) {
    return {{"pass", c.pass}, {"ratio", c.ratio}, {"eps", c.eps}, {"d", c.d}, {"image_area", c.image_area}, {"base_area", c.base_area}};
}

void write_cone_csv(const GCone& cone, const VertexImage& image, const std::string& path) {
    auto out = open_output(path, "cone");
    out << "set,index,c0,c1\n";
    auto rows = [&](const char* name, const std::vector<P2>& pts) {
        for (std::size_t i = 0; i < pts.size(); ++i) out << name << ',' << i << ',' << pts[i].x() << ',' << pts[i].y() << '\n';
    };
    rows("base", cone.base().vertices());
    rows("polar", cone.classical().subdifferential);
    rows("image_p", image.p);
    std::vector<P2> ys;
    for (const auto& y : image.y) ys.push_back(p2(y));
    rows("image_y", ys);
}

void write_cone_svg(const GCone& cone, const VertexImage& image, const std::string& path) {
    SvgPlot plot(2);
    const auto& base = cone.base().vertices();
    plot.fit(0, base);
    plot.polygon(0, base, "#1f4e79", "#dce9f5");
    plot.dots(0, {P2::Zero()}, "black", 3.0);
    plot.title(0, "base D (q)");
    const Polygon K = cone.classical().subdifferential;
    Polygon K2;
    for (const auto& v : K) K2.push_back(2.0 * v);
    std::vector<P2> all = K2;
    all.insert(all.end(), image.p.begin(), image.p.end());
    plot.fit(1, all);
    plot.polygon(1, K2, "#999999", "none", 1.0);
    plot.polygon(1, K, "#c0504d", "none", 1.5);
    plot.dots(1, image.p, "#1f4e79", 1.2);
    plot.title(1, "vertex image (p), polar and 2x polar");
    plot.save(path);
}

}  // namespace gjekit
