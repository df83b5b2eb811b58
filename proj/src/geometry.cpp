#include "gjekit/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace gjekit {

namespace {
double cross(const P2& o, const P2& a, const P2& b) { return (a - o).x() * (b - o).y() - (a - o).y() * (b - o).x(); }
}  // namespace

Polygon convex_hull(std::vector<P2> pts) {
    std::sort(pts.begin(), pts.end(), [](const P2& a, const P2& b) { return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y()); });
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() < 3) return pts;
    Polygon h(2 * pts.size());
    std::size_t k = 0;
    for (const auto& p : pts) {
        while (k >= 2 && cross(h[k - 2], h[k - 1], p) <= 0) --k;
        h[k++] = p;
    }
    for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
        while (k >= t && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
        h[k++] = pts[i];
    }
    h.resize(k - 1);
    return h;
}

Polygon convex_hull(const PointList& pts) {
    std::vector<P2> v;
    v.reserve(pts.size());
    for (const auto& p : pts) v.emplace_back(p[0], p[1]);
    return convex_hull(std::move(v));
}

double polygon_area(const Polygon& poly) {
    double s = 0.0;
    for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
        const P2& a = poly[i];
        const P2& b = poly[(i + 1) % n];
        s += a.x() * b.y() - a.y() * b.x();
    }
    return 0.5 * std::abs(s);
}

double polygon_perimeter(const Polygon& poly) {
    double s = 0.0;
    for (std::size_t i = 0, n = poly.size(); i < n; ++i) s += (poly[(i + 1) % n] - poly[i]).norm();
    return s;
}

bool point_in_polygon(const Polygon& poly, const P2& p) {
    bool inside = false;
    for (std::size_t i = 0, n = poly.size(), j = n - 1; i < n; j = i++) {
        const P2& a = poly[i];
        const P2& b = poly[j];
        if ((a.y() > p.y()) != (b.y() > p.y()) && p.x() < (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x())
            inside = !inside;
    }
    return inside;
}

double polygon_diameter(const Polygon& poly) {
    double d = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i)
        for (std::size_t j = i + 1; j < poly.size(); ++j) d = std::max(d, (poly[i] - poly[j]).norm());
    return d;
}

bool is_convex_ccw(const Polygon& poly, double tol) {
    const std::size_t n = poly.size();
    if (n < 3) return false;
    for (std::size_t i = 0; i < n; ++i)
        if (cross(poly[i], poly[(i + 1) % n], poly[(i + 2) % n]) < -tol) return false;
    return true;
}

double support_function(const Polygon& poly, const P2& w) {
    double s = -kInf;
    for (const auto& v : poly) s = std::max(s, v.dot(w));
    return s;
}

Polygon halfplane_intersection(const std::vector<std::pair<P2, double>>& halfplanes, double bound) {
    Polygon poly{{-bound, -bound}, {bound, -bound}, {bound, bound}, {-bound, bound}};
    for (const auto& [a, b] : halfplanes) {
        Polygon next;
        const std::size_t n = poly.size();
        for (std::size_t i = 0; i < n; ++i) {
            const P2& p = poly[i];
            const P2& q = poly[(i + 1) % n];
            const double fp = a.dot(p) - b, fq = a.dot(q) - b;
            if (fp <= 0) next.push_back(p);
            if ((fp < 0 && fq > 0) || (fp > 0 && fq < 0)) next.push_back(p + (fp / (fp - fq)) * (q - p));
        }
        poly = std::move(next);
        if (poly.empty()) break;
    }
    return poly;
}

Polygon scaled_polar(const Polygon& D, double h) {
    Polygon out;
    const std::size_t n = D.size();
    for (std::size_t i = 0; i < n; ++i) {
        const P2 e = D[(i + 1) % n] - D[i];
        P2 nrm(e.y(), -e.x());  // outward for a ccw polygon
        const double c = nrm.dot(D[i]);
        if (c <= 0) throw Error(ErrorKind::DegenerateInput, "cone", "polar needs the origin strictly inside the base");
        out.push_back(h * nrm / c);
    }
    return out;
}

double hausdorff(const std::vector<P2>& a, const std::vector<P2>& b) {
    auto directed = [](const std::vector<P2>& s, const std::vector<P2>& t) {
        double d = 0.0;
        for (const auto& p : s) {
            double best = kInf;
            for (const auto& q : t) best = std::min(best, (p - q).squaredNorm());
            d = std::max(d, best);
        }
        return std::sqrt(d);
    };
    if (a.empty() || b.empty()) return kInf;
    return std::max(directed(a, b), directed(b, a));
}

std::vector<P2> sample_boundary(const Polygon& poly, int per_edge) {
    std::vector<P2> out;
    const std::size_t n = poly.size();
    out.reserve(n * static_cast<std::size_t>(per_edge));
    for (std::size_t i = 0; i < n; ++i) {
        const P2& a = poly[i];
        const P2& b = poly[(i + 1) % n];
        for (int k = 0; k < per_edge; ++k) out.push_back(a + (static_cast<double>(k) / per_edge) * (b - a));
    }
    return out;
}

double hausdorff_polygons(const Polygon& a, const Polygon& b, int per_edge) {
    return hausdorff(sample_boundary(a, per_edge), sample_boundary(b, per_edge));
}

// ---------------------------------------------------------------------------

std::vector<Polyline> marching_squares(const std::vector<double>& values, int nx, int ny, double x0, double y0,
                                       double dx, double dy, double level) {
    auto val = [&](int i, int j) { return values[static_cast<std::size_t>(i + nx * j)]; };
    auto in = [&](int i, int j) { return val(i, j) < level; };
    auto hid = [&](int i, int j) { return 2LL * (i + static_cast<long long>(nx) * j); };
    auto vid = [&](int i, int j) { return 2LL * (i + static_cast<long long>(nx) * j) + 1; };
    auto on_edge = [&](int ia, int ja, int ib, int jb) {
        const double va = val(ia, ja), vb = val(ib, jb);
        const double t = (level - va) / (vb - va);
        return P2(x0 + (ia + t * (ib - ia)) * dx, y0 + (ja + t * (jb - ja)) * dy);
    };

    std::unordered_map<long long, P2> pts;
    std::unordered_map<long long, std::vector<std::size_t>> incident;
    std::vector<std::pair<long long, long long>> segs;

    for (int j = 0; j + 1 < ny; ++j) {
        for (int i = 0; i + 1 < nx; ++i) {
            const int c = (in(i, j) ? 1 : 0) | (in(i + 1, j) ? 2 : 0) | (in(i + 1, j + 1) ? 4 : 0) | (in(i, j + 1) ? 8 : 0);
            if (c == 0 || c == 15) continue;
            const long long e[4] = {hid(i, j), vid(i + 1, j), hid(i, j + 1), vid(i, j)};
            auto point = [&](int k) {
                if (pts.count(e[k])) return;
                switch (k) {
                    case 0: pts[e[0]] = on_edge(i, j, i + 1, j); break;
                    case 1: pts[e[1]] = on_edge(i + 1, j, i + 1, j + 1); break;
                    case 2: pts[e[2]] = on_edge(i, j + 1, i + 1, j + 1); break;
                    default: pts[e[3]] = on_edge(i, j, i, j + 1); break;
                }
            };
            auto add = [&](int a, int b) {
                point(a);
                point(b);
                incident[e[a]].push_back(segs.size());
                incident[e[b]].push_back(segs.size());
                segs.emplace_back(e[a], e[b]);
            };
            const bool centre_in = 0.25 * (val(i, j) + val(i + 1, j) + val(i + 1, j + 1) + val(i, j + 1)) < level;
            switch (c) {
                case 1: case 14: add(3, 0); break;
                case 2: case 13: add(0, 1); break;
                case 3: case 12: add(3, 1); break;
                case 4: case 11: add(1, 2); break;
                case 6: case 9: add(0, 2); break;
                case 7: case 8: add(3, 2); break;
                case 5:
                    if (centre_in) { add(0, 1); add(2, 3); }
                    else { add(3, 0); add(1, 2); }
                    break;
                case 10:
                    if (centre_in) { add(3, 0); add(1, 2); }
                    else { add(0, 1); add(2, 3); }
                    break;
                default: break;
            }
        }
    }

    std::vector<bool> used(segs.size(), false);
    std::vector<Polyline> out;
    auto walk = [&](std::size_t s0, long long start) {
        Polyline pl;
        long long cur = start;
        std::size_t s = s0;
        pl.points.push_back(pts[cur]);
        while (true) {
            used[s] = true;
            const long long nxt = segs[s].first == cur ? segs[s].second : segs[s].first;
            if (nxt == start) {
                pl.closed = true;
                break;
            }
            pl.points.push_back(pts[nxt]);
            cur = nxt;
            std::size_t ns = segs.size();
            for (std::size_t cand : incident[cur])
                if (!used[cand]) ns = cand;
            if (ns == segs.size()) break;
            s = ns;
        }
        out.push_back(std::move(pl));
    };
    // open chains start at degree-one points on the grid boundary
    for (std::size_t s = 0; s < segs.size(); ++s) {
        if (used[s]) continue;
        for (long long end : {segs[s].first, segs[s].second})
            if (!used[s] && incident[end].size() == 1) walk(s, end);
    }
    for (std::size_t s = 0; s < segs.size(); ++s)
        if (!used[s]) walk(s, segs[s].first);
    return out;
}

double polylines_area(const std::vector<Polyline>& lines) {
    std::vector<const Polyline*> closed;
    for (const auto& l : lines)
        if (l.closed && l.points.size() >= 3) closed.push_back(&l);
    double total = 0.0;
    for (std::size_t a = 0; a < closed.size(); ++a) {
        int depth = 0;
        for (std::size_t b = 0; b < closed.size(); ++b)
            if (a != b && point_in_polygon(closed[b]->points, closed[a]->points.front())) ++depth;
        const double area = polygon_area(closed[a]->points);
        total += depth % 2 == 0 ? area : -area;
    }
    return total;
}

// ---------------------------------------------------------------------------

bool Ellipsoid::contains(const Vec& x, double tol) const {
    const Vec d = x - center;
    return d.dot(A * d) <= 1.0 + tol;
}

double Ellipsoid::volume() const {
    const auto n = static_cast<double>(center.size());
    const double unit = std::pow(M_PI, n / 2.0) / std::tgamma(n / 2.0 + 1.0);
    return unit / std::sqrt(A.determinant());
}

Vec Ellipsoid::axes() const {
    Eigen::SelfAdjointEigenSolver<Mat> es(A);
    Vec ax = es.eigenvalues().cwiseInverse().cwiseSqrt();
    std::sort(ax.data(), ax.data() + ax.size());
    return ax;
}

double ellipse_area_from_A(const Mat& A) { return M_PI / std::sqrt(A.determinant()); }

Ellipsoid min_ellipsoid(const PointList& input, double tol, int max_iter) {
    if (input.empty()) throw Error(ErrorKind::DegenerateInput, "cone", "min_ellipsoid: no points");
    const auto d = input.front().size();
    PointList pts;
    if (d == 2 && input.size() > 3) {
        for (const auto& v : convex_hull(input)) pts.push_back(Vec(v));
    } else {
        pts = input;
    }
    const auto m = static_cast<Eigen::Index>(pts.size());
    if (m < d + 1) throw Error(ErrorKind::DegenerateInput, "cone", "min_ellipsoid: fewer than n+1 affinely independent points");

    Mat Q(d + 1, m);
    for (Eigen::Index j = 0; j < m; ++j) {
        Q.col(j).head(d) = pts[static_cast<std::size_t>(j)];
        Q(d, j) = 1.0;
    }
    // affine rank check, scale invariant
    {
        Mat P = Q.topRows(d);
        const Vec mean = P.rowwise().mean();
        P.colwise() -= mean;
        Eigen::JacobiSVD<Mat> svd(P);
        const Vec s = svd.singularValues();
        if (s.size() < d || s[d - 1] <= 1e-10 * std::max(1.0, s[0]))
            throw Error(ErrorKind::DegenerateInput, "cone", "min_ellipsoid: point set is rank deficient");
    }

    const double dd = static_cast<double>(d + 1);
    Vec u = Vec::Constant(m, 1.0 / static_cast<double>(m));
    Ellipsoid e;
    for (int it = 0; it < max_iter; ++it) {
        const Mat X = Q * u.asDiagonal() * Q.transpose();
        const Eigen::LDLT<Mat> ldlt(X);
        const Mat XiQ = ldlt.solve(Q);
        Vec M(m);
        for (Eigen::Index j = 0; j < m; ++j) M[j] = Q.col(j).dot(XiQ.col(j));
        Eigen::Index jp = 0;
        M.maxCoeff(&jp);
        Eigen::Index jm = -1;
        for (Eigen::Index j = 0; j < m; ++j)
            if (u[j] > 0 && (jm < 0 || M[j] < M[jm])) jm = j;
        const double eps_plus = M[jp] / dd - 1.0;
        const double eps_minus = 1.0 - M[jm] / dd;
        e.iterations = it;
        e.gap = std::max(eps_plus, eps_minus);
        if (e.gap <= tol) break;
        if (eps_plus > eps_minus) {
            const double beta = (M[jp] - dd) / (dd * (M[jp] - 1.0));
            u *= (1.0 - beta);
            u[jp] += beta;
        } else {
            const double beta = std::min((dd - M[jm]) / (dd * (M[jm] - 1.0)), u[jm] / (1.0 - u[jm]));
            u *= (1.0 + beta);
            u[jm] -= beta;
            if (u[jm] < 0) u[jm] = 0;
        }
    }
    const Mat P = Q.topRows(d);
    e.center = P * u;
    const Mat S = P * u.asDiagonal() * P.transpose() - e.center * e.center.transpose();
    e.A = S.inverse() / static_cast<double>(d);
    double worst = 0.0;
    for (const auto& p : input) {
        const Vec r = p - e.center;
        worst = std::max(worst, r.dot(e.A * r));
    }
    if (worst > 1.0) e.A /= worst;
    return e;
}

}  // namespace gjekit
