#include "gjekit/estimates.hpp"

#include "gjekit/cone.hpp"
#include "gjekit/parallel.hpp"
#include "gjekit/report.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace gjekit {

namespace {

P2 p2(const Vec& v) { return {v[0], v[1]}; }

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const std::size_t m = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m), v.end());
    double med = v[m];
    if (v.size() % 2 == 0) med = 0.5 * (med + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m)));
    return med;
}

void finish_case(SectionCase& c, const GridDomain& dom, const CaseOptions& opt) {
    const Section& s = c.section;
    if (s.count == 0) throw Error(ErrorKind::InvalidSection, "estimates", "section holds no grid node; refine the grid");
    if (opt.require_compact && !s.compact)
        throw Error(ErrorKind::NotCompactlyContained, "estimates", "section is not compactly contained in the source domain");
    c.sup = s.depth;
    c.area = s.area;
    c.spacing = 0.0;
    for (int a = 0; a < dom.dim(); ++a) c.spacing = std::max(c.spacing, dom.spacing(a));
    c.nodes = section_points(s, dom);
    if (c.nodes.size() > static_cast<std::size_t>(dom.dim())) {
        try {
            const Ellipsoid e = min_ellipsoid(c.nodes);
            c.ellipsoid_axes = e.axes();
            c.ellipsoid_center = e.center;
        } catch (const Error&) {
            c.ellipsoid_axes = Vec();
        }
    }
}

/// Section of a smooth or discrete solution transformed to q-coordinates.
Polygon section_q(const SectionCase& c, const TransformContext& ctx) {
    std::vector<P2> pts;
    const auto& lines = c.section.boundary;
    const bool closed = !lines.empty() && std::all_of(lines.begin(), lines.end(), [](const Polyline& l) { return l.closed; });
    if (closed) {
        for (const auto& l : lines)
            for (const auto& p : l.points) pts.push_back(p2(ctx.to_q(Vec(p))));
    } else {
        for (const auto& x : c.nodes) pts.push_back(p2(ctx.to_q(x)));
    }
    Polygon hull = convex_hull(pts);
    if (hull.size() < 3) throw Error(ErrorKind::InvalidSection, "estimates", "section is too small in q-coordinates");
    return hull;
}

struct Chord {
    double offset = 0.0, lo = 0.0, hi = 0.0;
};

/// Longest chord of a convex polygon parallel to nu, by offset along nu-perp.
Chord longest_chord(const Polygon& D, const P2& nu) {
    const P2 perp(-nu.y(), nu.x());
    Chord best;
    double len = -1.0;
    const std::size_t n = D.size();
    for (std::size_t k = 0; k < n; ++k) {
        const double s = D[k].dot(perp);
        double lo = kInf, hi = -kInf;
        for (std::size_t i = 0; i < n; ++i) {
            const P2& a = D[i];
            const P2& b = D[(i + 1) % n];
            const double da = a.dot(perp) - s, db = b.dot(perp) - s;
            auto take = [&](const P2& x) {
                lo = std::min(lo, x.dot(nu));
                hi = std::max(hi, x.dot(nu));
            };
            if (std::abs(da) <= 1e-15) take(a);
            if (std::abs(db) <= 1e-15) take(b);
            if (da * db < 0) take(a + (da / (da - db)) * (b - a));
        }
        if (hi - lo > len) {
            len = hi - lo;
            best = {s, lo, hi};
        }
    }
    return best;
}

ContextPtr case_context(const SectionCase& c, const Vec& base, double u_base, double h) {
    TransformOptions to;
    to.cg_samples = 1000;
    return make_context(c.gen, base, c.y0, u_base, h, to);
}

}  // namespace

SectionCase make_case(GeneratorPtr gen, const SmoothField& u, const Vec& x0, const GridDomain& dom, const CaseOptions& opt) {
    if (!(opt.h > 0)) throw Error(ErrorKind::InvalidSection, "estimates", "section height must be positive");
    SectionCase c;
    c.gen = gen;
    c.u = u.value;
    c.x0 = x0;
    c.h = opt.h;
    const YZ yz = solve_YZ(*gen, x0, u(x0), u.grad(x0));
    c.y0 = yz.y;
    c.z0 = yz.z;
    c.section = section(u.value, *gen, x0, c.y0, opt.h, dom, false);
    if (opt.check_density && c.section.count > 0) {
        std::vector<char> E(dom.nodes(), 0);
        const std::size_t stride = std::max<std::size_t>(1, c.section.count / std::max<std::size_t>(1, opt.density_nodes));
        std::size_t seen = 0;
        for (std::size_t k = 0; k < dom.nodes(); ++k)
            if (c.section.mask[k] && seen++ % stride == 0) E[k] = 1;
        PushforwardResult pf;
        try {
            pf = pushforward_density(*gen, u, dom, E);
        } catch (const Error& e) {
            throw Error(ErrorKind::InvalidSection, "estimates", std::string("density check failed: ") + e.what());
        }
        c.density_checked = true;
        c.density_min = pf.det_min;
        c.density_max = pf.det_max;
        if (!(pf.det_min >= opt.lambda && pf.det_max <= opt.Lambda))
            throw Error(ErrorKind::InvalidSection, "estimates",
                        "pushforward density " + std::to_string(pf.det_min) + ".." + std::to_string(pf.det_max) +
                            " is not pinched in [lambda, Lambda]");
    }
    finish_case(c, dom, opt);
    return c;
}

SectionCase make_case(std::shared_ptr<const SupportFamily> u, const Vec& x0, const GridDomain& dom, const CaseOptions& opt) {
    if (!(opt.h > 0)) throw Error(ErrorKind::InvalidSection, "estimates", "section height must be positive");
    const std::size_t i = u->argmax(as_span(x0));
    if (i == SupportFamily::npos) throw Error(ErrorKind::InvalidSection, "estimates", "no admissible support at the contact point");
    SectionCase c;
    c.gen = u->gen_ptr();
    c.family = u;
    c.u = [u](const Vec& x) { return u->value(x); };
    c.x0 = x0;
    c.h = opt.h;
    c.y0 = (*u)[i].y;
    c.z0 = (*u)[i].z;
    c.section = section(*u, x0, c.y0, c.z0, opt.h, dom, false);
    finish_case(c, dom, opt);
    return c;
}

double upper_estimate(const SectionCase& c) {
    if (!(c.h > 0 && c.area > 0)) throw Error(ErrorKind::InvalidSection, "estimates", "invalid section case");
    return std::pow(c.sup, c.dim()) / (c.area * c.area);
}

double lower_estimate(const SectionCase& c) {
    if (!(c.h > 0 && c.area > 0 && c.sup > 0)) throw Error(ErrorKind::InvalidSection, "estimates", "invalid section case");
    return c.area * c.area / std::pow(c.sup, c.dim());
}

NearBoundaryResult near_boundary_estimate(const SectionCase& c, const P2& nu_in, double eps, double d) {
    if (c.dim() != 2) throw Error(ErrorKind::PreconditionViolated, "estimates", "near-boundary estimate is two-dimensional");
    if (!(eps > 0 && eps < 1)) throw Error(ErrorKind::PreconditionViolated, "estimates", "need 0 < eps < 1");
    const P2 nu = nu_in.normalized();
    const auto ctx = case_context(c, c.x0, c.u(c.x0), c.h);
    const Polygon D = section_q(c, *ctx);
    const Chord ch = longest_chord(D, nu);
    if (d <= 0) d = ch.hi - ch.lo;
    if (d > (ch.hi - ch.lo) * (1 + 1e-9))
        throw Error(ErrorKind::PreconditionViolated, "estimates", "D_q holds no nu-parallel segment of length d");
    const double level = support_function(D, nu) - eps * d;
    if (level < ch.lo || level > ch.hi)
        throw Error(ErrorKind::PreconditionViolated, "estimates", "probe level misses the longest chord");
    NearBoundaryResult r;
    r.eps = eps;
    r.d = d;
    r.probe_q = ch.offset * P2(-nu.y(), nu.x()) + level * nu;
    r.probe = ctx->from_q(Vec(r.probe_q));
    const auto ubar = ctx->transform_function(c.u);
    r.gap = std::abs(ubar(Vec(r.probe_q)));
    r.area_q = polygon_area(D);
    r.ratio = std::pow(r.gap, 2) / (eps * r.area_q * r.area_q);
    return r;
}

ConeComparison cone_comparison(const SectionCase& c, double K, double C_max) {
    if (!c.family) throw Error(ErrorKind::PreconditionViolated, "estimates", "cone comparison needs a support family");
    if (c.dim() != 2) throw Error(ErrorKind::PreconditionViolated, "estimates", "cone comparison is two-dimensional");
    if (!(K >= 1)) throw Error(ErrorKind::PreconditionViolated, "estimates", "shrink factor K must be >= 1");
    const auto& fam = *c.family;
    const auto& gen = *c.gen;
    const double z_h = c.section.z_h;

    // Centre q-coordinates at the minimum ellipsoid of D_q.
    const auto ctx0 = case_context(c, c.x0, c.u(c.x0), c.h);
    PointList q0;
    for (const auto& x : c.nodes) q0.push_back(ctx0->to_q(x));
    if (q0.size() < 3) throw Error(ErrorKind::PreconditionViolated, "estimates", "section too small for an ellipsoid");
    const Ellipsoid e = min_ellipsoid(q0);
    const Vec xc = ctx0->from_q(e.center);
    const double uc = c.u(xc);
    const double hc = gen.value(xc, c.y0, z_h) - uc;
    if (!(hc > 0)) throw Error(ErrorKind::PreconditionViolated, "estimates", "ellipsoid centre falls outside the section");
    const auto ctx = case_context(c, xc, uc, hc);

    ConeComparison r;
    r.K = K;
    r.C_max = C_max;
    r.center_q = p2(e.center);
    std::vector<P2> qs;
    for (const auto& x : c.nodes) {
        qs.push_back(p2(ctx->to_q(x)));
        const double ratio = ctx->Gz0() / gen.dz(as_span(x), as_span(c.y0), z_h);
        r.h = std::max(r.h, std::abs(ratio * (c.u(x) - gen.value(x, c.y0, z_h))));
    }
    r.h = std::max(r.h, hc);
    const Polygon D = convex_hull(qs);

    // Supports active on (1/K) D, plus the one at the centre.
    std::set<std::size_t> active;
    for (std::size_t i : fam.evaluate(xc).active) active.insert(i);
    for (std::size_t m = 0; m < qs.size(); ++m) {
        if (!point_in_polygon(D, K * qs[m])) continue;
        ++r.nodes;
        for (std::size_t i : fam.evaluate(c.nodes[m]).active) active.insert(i);
    }
    const double base = gen.value(xc, c.y0, z_h);
    for (std::size_t i : active) {
        const double g00 = gen.value(xc, fam[i].y, fam[i].z) - base;
        r.C = std::max(r.C, std::abs(g00) / r.h);
    }
    r.supports = active.size();
    r.pass = r.C <= C_max;
    return r;
}

EstimateReport summarize(std::vector<EstimateCase> cases, const Window& upper, const Window& lower, const Window& near) {
    EstimateReport r;
    r.cases = std::move(cases);
    for (const auto& c : r.cases) {
        r.upper_min = std::min(r.upper_min, c.upper);
        r.upper_max = std::max(r.upper_max, c.upper);
        r.lower_min = std::min(r.lower_min, c.lower);
        r.lower_max = std::max(r.lower_max, c.lower);
        r.upper_pass = r.upper_pass && upper.contains(c.upper);
        r.lower_pass = r.lower_pass && lower.contains(c.lower);
        if (c.near) {
            r.near_min = std::min(r.near_min, *c.near);
            r.near_max = std::max(r.near_max, *c.near);
            r.near_pass = r.near_pass && near.contains(*c.near);
        }
    }
    return r;
}

// ---------------------------------------------------------------------------

StrictProbe strict_convexity_probe(const std::function<double(const Vec&)>& u, const Generator& gen, const Vec& x0, const Vec& y0,
                                   const std::vector<double>& heights, const GridDomain& dom) {
    if (dom.dim() != 2) throw Error(ErrorKind::PreconditionViolated, "estimates", "strict-convexity probe is two-dimensional");
    StrictProbe p;
    p.resolution = std::max(dom.spacing(0), dom.spacing(1));
    std::vector<double> hs = heights;
    std::sort(hs.begin(), hs.end());
    std::vector<double> fit_h, fit_d;
    for (double h : hs) {
        const Section s = section(u, gen, x0, y0, h, dom, false);
        std::vector<P2> pts;
        for (std::size_t k = 0; k < dom.nodes(); ++k)
            if (s.mask[k]) pts.push_back(p2(dom.node(k)));
        const Polygon hull = convex_hull(pts);
        const double diam = hull.size() >= 2 ? polygon_diameter(hull) : 0.0;
        p.h.push_back(h);
        p.diam.push_back(diam);
        if (diam > 0) {
            fit_h.push_back(h);
            fit_d.push_back(diam);
        }
    }
    if (fit_h.size() >= 2) {
        p.alpha = loglog_slope(fit_h, fit_d);
        double lc = 0.0;
        for (std::size_t i = 0; i < fit_h.size(); ++i) lc += std::log(fit_d[i]) - p.alpha * std::log(fit_h[i]);
        p.C = std::exp(lc / static_cast<double>(fit_h.size()));
    }
    if (p.diam.size() >= 2) {
        const double d0 = p.diam[0], d1 = p.diam[1];
        p.plateau = d0 > 3.0 * p.resolution && d1 > 0 && d0 / d1 >= 0.9;
    }
    p.strict = !p.plateau && p.alpha > 0.1;
    return p;
}

StrictProbe strict_convexity_probe(const SectionCase& c, const std::vector<double>& heights, const GridDomain& dom) {
    return strict_convexity_probe(c.u, *c.gen, c.x0, c.y0, heights, dom);
}

C1Probe c1_probe(const SupportFamily& u, const PointList& points, const std::vector<double>& deltas, bool snap) {
    const auto& gen = u.gen();
    const std::size_t N = u.size();
    C1Probe r;
    r.deltas = deltas;
    r.points = points;
    r.diameters.assign(points.size(), std::vector<double>(deltas.size(), 0.0));
    parallel_for(points.size(), [&](std::size_t m) {
        Vec x = points[m];
        std::vector<double> s(N);
        auto values = [&] {
            for (std::size_t i = 0; i < N; ++i) s[i] = gen.value(x, u[i].y, u[i].z);
        };
        values();
        if (snap && N >= 2) {
            for (int it = 0; it < 40; ++it) {
                std::size_t a = 0, b = 1;
                if (s[b] > s[a]) std::swap(a, b);
                for (std::size_t i = 2; i < N; ++i) {
                    if (s[i] > s[a]) {
                        b = a;
                        a = i;
                    } else if (s[i] > s[b]) {
                        b = i;
                    }
                }
                const double gap = s[a] - s[b];
                if (gap <= 1e-13 * (1.0 + std::abs(s[a]))) break;
                const Vec grad = gen.jet(x, u[a].y, u[a].z, 1).gx() - gen.jet(x, u[b].y, u[b].z, 1).gx();
                const double g2 = grad.squaredNorm();
                if (g2 <= 0) break;
                const Vec next = x - (gap / g2) * grad;
                if (!gen.domain().U.contains(next)) break;
                x = next;
                values();
            }
        }
        r.points[m] = x;
        const double top = *std::max_element(s.begin(), s.end());
        for (std::size_t k = 0; k < deltas.size(); ++k) {
            std::vector<Vec> grads;
            for (std::size_t i = 0; i < N; ++i)
                if (top - s[i] <= deltas[k]) grads.push_back(gen.jet(x, u[i].y, u[i].z, 1).gx());
            double diam = 0.0;
            for (std::size_t i = 0; i < grads.size(); ++i)
                for (std::size_t j = i + 1; j < grads.size(); ++j) diam = std::max(diam, (grads[i] - grads[j]).norm());
            r.diameters[m][k] = diam;
        }
    });
    for (std::size_t k = 0; k < deltas.size(); ++k) {
        std::vector<double> col;
        for (const auto& row : r.diameters) col.push_back(row[k]);
        r.median.push_back(median_of(col));
        r.max.push_back(col.empty() ? 0.0 : *std::max_element(col.begin(), col.end()));
    }
    return r;
}

C1Probe c1_probe(const SmoothField&, const PointList& points, const std::vector<double>& deltas) {
    C1Probe r;
    r.deltas = deltas;
    r.points = points;
    r.diameters.assign(points.size(), std::vector<double>(deltas.size(), 0.0));
    r.median.assign(deltas.size(), 0.0);
    r.max.assign(deltas.size(), 0.0);
    return r;
}

// ---------------------------------------------------------------------------

Json to_json(const SectionCase& c) {
    Json j{{"x0", vec_json(c.x0)},   {"y0", vec_json(c.y0)},     {"z0", c.z0},
           {"h", c.h},               {"z_h", c.section.z_h},     {"sup", c.sup},
           {"area", c.area},         {"node_area", c.section.node_area}, {"nodes", c.section.count},
           {"compact", c.section.compact}, {"density_checked", c.density_checked}};
    if (c.density_checked) {
        j["density_min"] = c.density_min;
        j["density_max"] = c.density_max;
    }
    if (c.ellipsoid_axes.size() > 0) {
        j["ellipsoid_axes"] = vec_json(c.ellipsoid_axes);
        j["ellipsoid_center"] = vec_json(c.ellipsoid_center);
    }
    return j;
}

Json to_json(const NearBoundaryResult& r) {
    return {{"ratio", r.ratio}, {"eps", r.eps},         {"d", r.d},
            {"gap", r.gap},     {"area_q", r.area_q},   {"probe", vec_json(r.probe)},
            {"probe_q", {r.probe_q.x(), r.probe_q.y()}}};
}

Json to_json(const ConeComparison& r) {
    return {{"pass", r.pass},   {"C", r.C},       {"C_max", r.C_max},       {"K", r.K},
            {"h", r.h},         {"nodes", r.nodes}, {"supports", r.supports},
            {"center_q", {r.center_q.x(), r.center_q.y()}}};
}

Json to_json(const EstimateReport& r) {
    Json cases = Json::array();
    for (const auto& c : r.cases) {
        Json j{{"id", c.id}, {"h", c.h}, {"sup", c.sup}, {"area", c.area}, {"upper", c.upper}, {"lower", c.lower}};
        if (c.near) j["near"] = *c.near;
        if (c.eps) j["eps"] = *c.eps;
        cases.push_back(j);
    }
    Json j{{"cases", cases},
           {"upper", {{"min", r.upper_min}, {"max", r.upper_max}, {"pass", r.upper_pass}}},
           {"lower", {{"min", r.lower_min}, {"max", r.lower_max}, {"pass", r.lower_pass}}},
           {"pass", r.pass()}};
    if (r.near_max > 0) j["near"] = {{"min", r.near_min}, {"max", r.near_max}, {"pass", r.near_pass}};
    return j;
}

Json to_json(const StrictProbe& r) {
    return {{"h", r.h},           {"diam", r.diam},       {"alpha", r.alpha},          {"C", r.C},
            {"plateau", r.plateau}, {"strict", r.strict}, {"resolution", r.resolution}};
}

Json to_json(const C1Probe& r) {
    return {{"deltas", r.deltas}, {"median", r.median}, {"max", r.max}, {"points", points_json(r.points)}, {"diameters", r.diameters}};
}

void write_estimates_csv(const EstimateReport& r, const std::string& path) {
    auto out = open_output(path, "estimates");
    out << "id,h,sup,area,upper,lower,eps,near\n";
    for (const auto& c : r.cases) {
        out << c.id << ',' << c.h << ',' << c.sup << ',' << c.area << ',' << c.upper << ',' << c.lower << ',';
        if (c.eps) out << *c.eps;
        out << ',';
        if (c.near) out << *c.near;
        out << '\n';
    }
}

void write_section_svg(const SectionCase& c, const GridDomain& dom, const std::string& path) {
    if (dom.dim() != 2) throw Error(ErrorKind::DomainError, "estimates", "SVG export is two-dimensional");
    SvgPlot plot(1);
    std::vector<P2> all;
    for (const auto& l : c.section.boundary) all.insert(all.end(), l.points.begin(), l.points.end());
    all.push_back(p2(c.x0));
    plot.fit(0, all, 0.3);
    for (const auto& l : c.section.boundary) {
        if (l.closed)
            plot.polygon(0, l.points, "#1f4e79", "#dce9f5");
        else
            plot.polyline(0, l.points, "#1f4e79");
    }
    plot.dots(0, {p2(c.x0)}, "#c0504d", 3.0);
    plot.title(0, "section, h = " + std::to_string(c.h));
    plot.save(path);
}

}  // namespace gjekit
