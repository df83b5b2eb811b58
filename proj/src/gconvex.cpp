#include "gjekit/gconvex.hpp"

#include "gjekit/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace gjekit {

SupportFamily::SupportFamily(GeneratorPtr gen, std::vector<Support> supports) : gen_(std::move(gen)), supports_(std::move(supports)) {
    if (!gen_) throw Error(ErrorKind::DomainError, "gconvex", "support family needs a generator");
    for (const auto& s : supports_)
        if (s.y.size() != gen_->dim()) throw Error(ErrorKind::DomainError, "gconvex", "support target has the wrong dimension");
}

std::vector<double> SupportFamily::heights() const {
    std::vector<double> z;
    z.reserve(supports_.size());
    for (const auto& s : supports_) z.push_back(s.z);
    return z;
}

SupportFamily SupportFamily::with_heights(const std::vector<double>& z) const {
    std::vector<Support> s = supports_;
    for (std::size_t i = 0; i < s.size(); ++i) s[i].z = z[i];
    return SupportFamily(gen_, std::move(s));
}

std::size_t SupportFamily::argmax(std::span<const double> x) const {
    std::size_t best = npos;
    double bv = -kInf;
    for (std::size_t i = 0; i < supports_.size(); ++i) {
        const auto& s = supports_[i];
        const auto ys = as_span(s.y);
        if (!gen_->contains(x, ys, s.z)) continue;
        const double v = gen_->value(x, ys, s.z);
        if (v > bv) {
            bv = v;
            best = i;
        }
    }
    return best;
}

SupportFamily::Eval SupportFamily::evaluate(const Vec& x, double tol) const {
    if (!gen_->domain().U.contains(x)) throw Error(ErrorKind::DomainError, "gconvex", "evaluate: x outside U");
    Eval e;
    std::vector<double> vals(supports_.size(), -kInf);
    for (std::size_t i = 0; i < supports_.size(); ++i) {
        const auto& s = supports_[i];
        if (!gen_->contains(x, s.y, s.z)) continue;
        vals[i] = gen_->value(x, s.y, s.z);
        e.value = std::max(e.value, vals[i]);
    }
    const double thr = tol * (1.0 + std::abs(e.value));
    for (std::size_t i = 0; i < vals.size(); ++i)
        if (std::isfinite(vals[i]) && vals[i] >= e.value - thr) e.active.push_back(i);
    return e;
}

double SupportFamily::value(const Vec& x) const {
    if (!gen_->domain().U.contains(x)) throw Error(ErrorKind::DomainError, "gconvex", "evaluate: x outside U");
    const std::size_t i = argmax(as_span(x));
    return i == npos ? -kInf : gen_->value(x, supports_[i].y, supports_[i].z);
}

// ---------------------------------------------------------------------------

Vec SmoothField::grad(const Vec& x, double step) const {
    if (gradient) return gradient(x);
    Vec g(x.size());
    Vec w = x;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        const double xk = x[k];
        double s = 0.0;
        const double c[4] = {1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0};
        const int o[4] = {-2, -1, 1, 2};
        for (int i = 0; i < 4; ++i) {
            w[k] = xk + o[i] * step;
            s += c[i] * value(w);
        }
        w[k] = xk;
        g[k] = s / step;
    }
    return g;
}

SmoothField SmoothField::quadratic(const Mat& Q) {
    SmoothField f;
    f.value = [Q](const Vec& x) { return 0.5 * x.dot(Q * x); };
    f.gradient = [Q](const Vec& x) { return Vec(0.5 * (Q + Q.transpose()) * x); };
    return f;
}

SmoothField SmoothField::from_family(const SupportFamily& u) {
    SmoothField f;
    f.value = [u](const Vec& x) { return u.value(x); };
    return f;
}

// ---------------------------------------------------------------------------

GridDomain::GridDomain(const Box& b, std::vector<int> res, MaskShape shape, std::function<bool(const Vec&)> inside, Density f)
    : bbox_(b), res_(std::move(res)), shape_(shape), inside_(std::move(inside)) {
    const int n = b.dim();
    if (static_cast<int>(res_.size()) == 1 && n > 1) res_.assign(static_cast<std::size_t>(n), res_[0]);
    if (static_cast<int>(res_.size()) != n) throw Error(ErrorKind::DomainError, "gconvex", "grid resolution must list one entry per axis");
    std::size_t total = 1;
    cell_volume_ = 1.0;
    for (int a = 0; a < n; ++a) {
        if (res_[static_cast<std::size_t>(a)] < 1) throw Error(ErrorKind::DomainError, "gconvex", "grid resolution must be positive");
        total *= static_cast<std::size_t>(res_[static_cast<std::size_t>(a)]);
        cell_volume_ *= spacing(a);
    }
    mask_.assign(total, 0);
    node_of_.assign(total, npos);
    for (std::size_t k = 0; k < total; ++k) {
        const Vec x = grid_point(k);
        if (inside_(x)) {
            mask_[k] = 1;
            node_of_[k] = active_.size();
            active_.push_back(k);
            coords_.insert(coords_.end(), x.data(), x.data() + n);
        }
    }
    if (active_.empty()) throw Error(ErrorKind::EmptyDomain, "gconvex", "grid mask selects no nodes");
    set_density(f);
}

void GridDomain::set_density(const Density& f) {
    mass_.assign(active_.size(), cell_volume_);
    if (f) {
        for (std::size_t k = 0; k < active_.size(); ++k) {
            const double v = f(node(k));
            if (!(v >= 0.0)) throw Error(ErrorKind::DomainError, "gconvex", "density must be nonnegative");
            mass_[k] = v * cell_volume_;
        }
    }
    total_ = 0.0;
    for (double m : mass_) total_ += m;
    if (!(total_ > 0.0)) throw Error(ErrorKind::EmptyDomain, "gconvex", "grid carries zero total mass");
}

Vec GridDomain::grid_point(std::size_t k) const {
    const int n = dim();
    Vec x(n);
    for (int a = 0; a < n; ++a) {
        const auto r = static_cast<std::size_t>(res_[static_cast<std::size_t>(a)]);
        const std::size_t i = k % r;
        k /= r;
        x[a] = bbox_.lo[a] + (static_cast<double>(i) + 0.5) * spacing(a);
    }
    return x;
}

bool GridDomain::contains(const Vec& x) const { return bbox_.contains(x) && inside_(x); }

GridDomain GridDomain::box(const Box& b, std::vector<int> res, Density f) {
    return GridDomain(b, std::move(res), MaskShape::Box, [](const Vec&) { return true; }, std::move(f));
}

GridDomain GridDomain::ball(const Box& b, std::vector<int> res, const Vec& center, double radius, Density f) {
    return GridDomain(
        b, std::move(res), MaskShape::Ball, [center, radius](const Vec& x) { return (x - center).norm() < radius; },
        std::move(f));
}

GridDomain GridDomain::polygon(const Box& b, std::vector<int> res, const Polygon& poly, Density f) {
    if (b.dim() != 2) throw Error(ErrorKind::DomainError, "gconvex", "polygon masks are two-dimensional");
    return GridDomain(
        b, std::move(res), MaskShape::Polygon, [poly](const Vec& x) { return point_in_polygon(poly, P2(x[0], x[1])); },
        std::move(f));
}

// ---------------------------------------------------------------------------

SupportFamily::Eval evaluate(const SupportFamily& u, const Vec& x) { return u.evaluate(x); }

YMap y_mapping(const SupportFamily& u, const Vec& x) {
    const auto e = u.evaluate(x);
    YMap m;
    for (std::size_t i : e.active) {
        m.indices.push_back(i);
        m.targets.push_back(u[i].y);
        m.covectors.push_back(u.gen().jet(x, u[i].y, u[i].z, 1).gx());
    }
    return m;
}

MeasureReport cell_decomposition(const SupportFamily& u, const GridDomain& dom, const std::vector<double>& target_masses) {
    const std::size_t N = u.size();
    if (N == 0) throw Error(ErrorKind::EmptyDomain, "gconvex", "support family is empty");
    MeasureReport r;
    r.owner.assign(dom.nodes(), SupportFamily::npos);
    const auto& U = u.gen().domain().U;
    parallel_for(dom.nodes(), [&](std::size_t k) {
        if (!U.contains(dom.point(k))) throw Error(ErrorKind::DomainError, "gconvex", "grid node outside U");
        r.owner[k] = u.argmax(dom.point(k));
    });
    r.masses.assign(N, 0.0);
    r.counts.assign(N, 0);
    for (std::size_t k = 0; k < dom.nodes(); ++k) {
        const std::size_t i = r.owner[k];
        if (i == SupportFamily::npos) throw Error(ErrorKind::EmptyDomain, "gconvex", "no admissible support at a grid node");
        r.masses[i] += dom.mass(k);
        ++r.counts[i];
    }
    for (double m : r.masses) r.total += m;
    r.domain_total = dom.total_mass();
    if (!target_masses.empty()) {
        r.max_ratio = 0.0;
        r.min_ratio = kInf;
        for (std::size_t i = 0; i < N; ++i) {
            const double ratio = r.masses[i] / target_masses[i];
            r.max_ratio = std::max(r.max_ratio, ratio);
            r.min_ratio = std::min(r.min_ratio, ratio);
            r.max_rel_error = std::max(r.max_rel_error, std::abs(ratio - 1.0));
        }
    }
    return r;
}

// ---------------------------------------------------------------------------

namespace {

/// Section nodes touching the grid boundary or an unmasked neighbour.
bool touches_boundary(const std::vector<char>& mask, const GridDomain& dom) {
    const int n = dom.dim();
    const auto& res = dom.resolution();
    for (std::size_t k = 0; k < dom.nodes(); ++k) {
        if (!mask[k]) continue;
        std::size_t g = dom.grid_index(k);
        std::size_t stride = 1;
        for (int a = 0; a < n; ++a) {
            const auto r = static_cast<std::size_t>(res[static_cast<std::size_t>(a)]);
            const std::size_t i = (g / stride) % r;
            if (i == 0 || i + 1 == r) return true;
            if (!dom.in_mask(g - stride) || !dom.in_mask(g + stride)) return true;
            stride *= r;
        }
    }
    return false;
}

}  // namespace

Section section(const std::function<double(const Vec&)>& u, const Generator& gen, const Vec& x0, const Vec& y0, double h,
                const GridDomain& dom, bool require_compact) {
    if (!(h > 0.0)) throw Error(ErrorKind::InvalidSection, "gconvex", "section height must be positive");
    Section s;
    s.h = h;
    s.contact = x0;
    s.y0 = y0;
    s.z_h = dual_g_star(gen, x0, y0, u(x0) + h);
    std::vector<double> phi(dom.nodes());
    parallel_for(dom.nodes(), [&](std::size_t k) {
        const Vec x = dom.node(k);
        phi[k] = u(x) - gen.value(x, y0, s.z_h);
    });
    s.mask.assign(dom.nodes(), 0);
    s.depth = h;  // the contact point itself
    for (std::size_t k = 0; k < dom.nodes(); ++k) {
        if (phi[k] < 0) {
            s.mask[k] = 1;
            ++s.count;
            s.depth = std::max(s.depth, -phi[k]);
        }
    }
    s.node_area = dom.cell_volume() * static_cast<double>(s.count);
    s.area = s.node_area;
    s.compact = !touches_boundary(s.mask, dom);
    if (require_compact && !s.compact)
        throw Error(ErrorKind::NotCompactlyContained, "gconvex", "section touches the boundary of the source domain");

    if (dom.dim() == 2 && s.count > 0) {
        const int nx = dom.resolution()[0], ny = dom.resolution()[1];
        double big = 1.0;
        for (double v : phi) big = std::max(big, std::abs(v));
        std::vector<double> grid(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny), 2.0 * big);
        for (std::size_t k = 0; k < dom.nodes(); ++k) grid[dom.grid_index(k)] = phi[k];
        s.boundary = marching_squares(grid, nx, ny, dom.bbox().lo[0] + 0.5 * dom.spacing(0), dom.bbox().lo[1] + 0.5 * dom.spacing(1),
                                      dom.spacing(0), dom.spacing(1));
        const bool closed = std::all_of(s.boundary.begin(), s.boundary.end(), [](const Polyline& p) { return p.closed; });
        if (closed && !s.boundary.empty()) s.area = polylines_area(s.boundary);
    }
    return s;
}

Section section(const SupportFamily& u, const Vec& x0, const Vec& y0, double z0, double h, const GridDomain& dom,
                bool require_compact) {
    const double ux0 = u.value(x0);
    const double g0 = u.gen().value(x0, y0, z0);
    if (std::abs(ux0 - g0) > 1e-9 * (1.0 + std::abs(ux0)))
        throw Error(ErrorKind::InvalidSection, "gconvex", "g(., y0, z0) does not support u at the contact point");
    return section([&u](const Vec& x) { return u.value(x); }, u.gen(), x0, y0, h, dom, require_compact);
}

PointList section_points(const Section& s, const GridDomain& dom) {
    PointList pts;
    for (std::size_t k = 0; k < dom.nodes(); ++k)
        if (s.mask[k]) pts.push_back(dom.node(k));
    return pts;
}

double hull_defect(const std::vector<char>& mask, const GridDomain& dom, const std::function<Vec(const Vec&)>& map) {
    if (dom.dim() != 2) throw Error(ErrorKind::DomainError, "gconvex", "hull defect is two-dimensional");
    std::vector<P2> mapped(dom.nodes());
    std::vector<P2> inside;
    std::size_t count = 0;
    for (std::size_t k = 0; k < dom.nodes(); ++k) {
        const Vec x = dom.node(k);
        const Vec q = map ? map(x) : x;
        mapped[k] = P2(q[0], q[1]);
        if (mask[k]) {
            inside.push_back(mapped[k]);
            ++count;
        }
    }
    if (count == 0) return 0.0;
    const Polygon hull = convex_hull(inside);
    if (hull.size() < 3) return 0.0;
    std::size_t extra = 0;
    for (std::size_t k = 0; k < dom.nodes(); ++k) {
        if (mask[k]) continue;
        const P2& p = mapped[k];
        bool in = true;
        for (std::size_t i = 0; i < hull.size() && in; ++i) {
            const P2& a = hull[i];
            const P2& b = hull[(i + 1) % hull.size()];
            const double c = (b - a).x() * (p - a).y() - (b - a).y() * (p - a).x();
            if (c < -1e-12 * (1.0 + (b - a).squaredNorm())) in = false;
        }
        if (in) ++extra;
    }
    return static_cast<double>(extra) / static_cast<double>(count);
}

PushforwardResult pushforward_density(const Generator& gen, const SmoothField& u, const GridDomain& dom, const std::vector<char>& E) {
    const int n = gen.dim();
    const double step = 1e-4 * gen.domain().U.scale();
    auto Y = [&](const Vec& x, const std::optional<YZ>& warm) {
        return solve_YZ(gen, x, u(x), u.grad(x), warm);
    };
    std::vector<double> det(dom.nodes(), 0.0);
    std::vector<char> used(dom.nodes(), 0);
    parallel_for(dom.nodes(), [&](std::size_t k) {
        if (!E[k]) return;
        const Vec x = dom.node(k);
        const YZ centre = Y(x, std::nullopt);
        Mat DY(n, n);
        for (int a = 0; a < n; ++a) {
            Vec xp = x, xm = x;
            xp[a] += step;
            xm[a] -= step;
            DY.col(a) = (Y(xp, centre).y - Y(xm, centre).y) / (2 * step);
        }
        det[k] = DY.determinant();
        used[k] = 1;
    });
    PushforwardResult r;
    r.det_min = kInf;
    r.det_max = -kInf;
    for (std::size_t k = 0; k < dom.nodes(); ++k) {
        if (!used[k]) continue;
        ++r.nodes;
        r.integral += det[k] * dom.cell_volume();
        r.det_min = std::min(r.det_min, det[k]);
        r.det_max = std::max(r.det_max, det[k]);
    }
    if (r.nodes == 0) throw Error(ErrorKind::EmptyDomain, "gconvex", "pushforward over an empty set");
    const double scale = std::max(std::abs(r.det_min), std::abs(r.det_max));
    if (r.det_min < -1e-8 * scale && r.det_max > 1e-8 * scale)
        throw Error(ErrorKind::SingularJacobian, "gconvex", "det DY changes sign on E");
    return r;
}

// ---------------------------------------------------------------------------

Json to_json(const MeasureReport& r, bool with_owner) {
    Json j{{"masses", r.masses}, {"counts", r.counts}, {"total", r.total}, {"domain_total", r.domain_total},
           {"max_ratio", r.max_ratio}, {"min_ratio", r.min_ratio}, {"max_rel_error", r.max_rel_error}};
    if (with_owner) j["owner"] = r.owner;
    return j;
}

Json to_json(const Section& s) {
    Json lines = Json::array();
    for (const auto& l : s.boundary) {
        Json pts = Json::array();
        for (const auto& p : l.points) pts.push_back({p.x(), p.y()});
        lines.push_back({{"closed", l.closed}, {"points", pts}});
    }
    return Json{{"h", s.h},       {"z_h", s.z_h},         {"contact", vec_json(s.contact)}, {"y0", vec_json(s.y0)},
                {"nodes", s.count}, {"area", s.area},     {"node_area", s.node_area},       {"compact", s.compact},
                {"depth", s.depth}, {"boundary", lines}};
}

void write_cells_csv(const MeasureReport& r, const GridDomain& dom, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::ConfigError, "gconvex", "cannot write " + path);
    out << "node";
    for (int a = 0; a < dom.dim(); ++a) out << ",x" << a;
    out << ",index\n";
    out << std::setprecision(17);
    for (std::size_t k = 0; k < dom.nodes(); ++k) {
        out << k;
        for (double v : dom.point(k)) out << ',' << v;
        out << ',' << r.owner[k] << '\n';
    }
}

namespace {
std::string cell_colour(std::size_t i) {
    // golden-angle hue walk
    const double hue = std::fmod(static_cast<double>(i) * 137.50776, 360.0);
    std::ostringstream s;
    s << "hsl(" << std::fixed << std::setprecision(1) << hue << ",65%,62%)";
    return s.str();
}
}  // namespace

void write_cells_svg(const MeasureReport& r, const GridDomain& dom, const std::string& path, const PointList& targets) {
    if (dom.dim() != 2) throw Error(ErrorKind::DomainError, "gconvex", "SVG export is two-dimensional");
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::ConfigError, "gconvex", "cannot write " + path);
    const int nx = dom.resolution()[0], ny = dom.resolution()[1];
    const int stride = std::max(1, std::max(nx, ny) / 128);
    const double W = 512.0;
    const double sx = W / nx, sy = W / ny;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << W << "\" viewBox=\"0 0 " << W << ' ' << W << "\">\n";
    for (int j = 0; j < ny; j += stride) {
        for (int i = 0; i < nx; i += stride) {
            const std::size_t g = static_cast<std::size_t>(i) + static_cast<std::size_t>(nx) * static_cast<std::size_t>(j);
            const std::size_t k = dom.node_of(g);
            if (k == GridDomain::npos) continue;
            out << "<rect x=\"" << i * sx << "\" y=\"" << W - (j + stride) * sy << "\" width=\"" << stride * sx << "\" height=\""
                << stride * sy << "\" fill=\"" << cell_colour(r.owner[k]) << "\"/>\n";
        }
    }
    const auto& b = dom.bbox();
    for (const auto& y : targets) {
        const double px = (y[0] - b.lo[0]) / (b.hi[0] - b.lo[0]) * W;
        const double py = W - (y[1] - b.lo[1]) / (b.hi[1] - b.lo[1]) * W;
        out << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"3\" fill=\"black\"/>\n";
    }
    out << "</svg>\n";
}

}  // namespace gjekit
