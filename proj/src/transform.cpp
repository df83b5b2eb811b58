#include "gjekit/transform.hpp"

#include "gjekit/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

namespace gjekit {

namespace {

Box shifted(const Box& b, const Vec& c) { return Box(b.lo - c, b.hi - c); }

/// Bounding box of A (V - y0) over the corners of V.
Box mapped_box(const Box& V, const Vec& y0, const Mat& A) {
    const int n = V.dim();
    Vec lo = Vec::Constant(n, kInf), hi = Vec::Constant(n, -kInf);
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
        Vec c(n);
        for (int i = 0; i < n; ++i) c[i] = (mask >> i) & 1u ? V.hi[i] : V.lo[i];
        const Vec m = A * (c - y0);
        lo = lo.cwiseMin(m);
        hi = hi.cwiseMax(m);
    }
    return Box(lo, hi);
}

/// Damped Newton for F(v) = 0 with the supplied Jacobian.
template <class F, class DF, class Inside>
Vec newton_solve(F&& residual, DF&& jacobian, Inside&& inside, Vec v, double tol, const char* what) {
    if (!inside(v)) throw Error(ErrorKind::OutOfDomain, "transform", std::string(what) + ": start outside the domain");
    Vec r = residual(v);
    double rn = r.lpNorm<Eigen::Infinity>();
    int polish = 0;
    for (int it = 0; it < 50; ++it) {
        if (rn <= tol && polish++ >= 2) break;
        const Mat J = jacobian(v);
        Eigen::FullPivLU<Mat> lu(J);
        if (!lu.isInvertible()) throw Error(ErrorKind::NoConvergence, "transform", std::string(what) + ": singular Jacobian");
        const Vec step = lu.solve(-r);
        double lambda = 1.0;
        bool accepted = false, any_inside = false;
        for (int half = 0; half <= 30; ++half, lambda *= 0.5) {
            Vec t = v + lambda * step;
            if (!inside(t)) continue;
            any_inside = true;
            Vec rt = residual(t);
            const double rtn = rt.lpNorm<Eigen::Infinity>();
            if (rtn < rn) {
                v = std::move(t);
                r = std::move(rt);
                rn = rtn;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (rn <= tol) break;
            if (!any_inside) throw Error(ErrorKind::OutOfDomain, "transform", std::string(what) + ": iterate left the domain");
            throw Error(ErrorKind::NoConvergence, "transform", std::string(what) + ": damping failed");
        }
    }
    if (rn > tol * 1e2) throw Error(ErrorKind::NoConvergence, "transform", std::string(what) + ": iteration cap reached");
    return v;
}

}  // namespace

// ---------------------------------------------------------------------------

RecentredGenerator::RecentredGenerator(GeneratorPtr base, Vec x0, Vec y0, double u0, double z_h, Mat A)
    : Generator(base->name() + ":recentred", base->dim(),
                [&] {
                    GeneratorDomain d;
                    const auto& bd = base->domain();
                    d.U = shifted(bd.U, x0);
                    d.V = mapped_box(bd.V, y0, A);
                    d.J = {bd.J.lo - u0, bd.J.hi - u0};
                    const Mat Ainv = A.inverse();
                    GeneratorPtr b = base;
                    d.z_interval_fn = [b, x0, y0, Ainv, z_h](std::span<const double> x, std::span<const double> y) {
                        const Vec X = x0 + to_vec(x);
                        const Vec Y = y0 + Ainv * to_vec(y);
                        const Interval I = b->domain().I(as_span(X), as_span(Y));
                        return Interval{I.lo - z_h, I.hi - z_h};
                    };
                    return d;
                }(),
                base->derivative_mode()),
      base_(std::move(base)), x0_(std::move(x0)), y0_(std::move(y0)), u0_(u0), z_h_(z_h), A_(std::move(A)), Ainv_(A_.inverse()) {}

Vec RecentredGenerator::to_base_x(std::span<const double> x) const { return x0_ + to_vec(x); }
Vec RecentredGenerator::to_base_y(std::span<const double> y) const { return y0_ + Ainv_ * to_vec(y); }

double RecentredGenerator::value(std::span<const double> x, std::span<const double> y, double z) const {
    const Vec X = to_base_x(x), Y = to_base_y(y);
    return base_->value(as_span(X), as_span(Y), z + z_h_) - u0_;
}

double RecentredGenerator::dz(std::span<const double> x, std::span<const double> y, double z) const {
    const Vec X = to_base_x(x), Y = to_base_y(y);
    return base_->dz(as_span(X), as_span(Y), z + z_h_);
}

bool RecentredGenerator::contains(std::span<const double> x, std::span<const double> y, double z) const {
    if (!domain().U.contains(x)) return false;
    const Vec X = to_base_x(x), Y = to_base_y(y);
    return base_->contains(as_span(X), as_span(Y), z + z_h_);
}

Jet RecentredGenerator::jet(std::span<const double> x, std::span<const double> y, double z, int order) const {
    const int n = dim();
    const int m = 2 * n + 1;
    const Vec X = to_base_x(x), Y = to_base_y(y);
    Jet b = base_->jet(as_span(X), as_span(Y), z + z_h_, order);
    Mat M = Mat::Identity(m, m);
    M.block(n, n, n, n) = Ainv_;
    Jet j;
    j.n = n;
    j.order = b.order;
    j.value = b.value - u0_;
    j.grad = M.transpose() * b.grad;
    if (order >= 2) j.hess = M.transpose() * b.hess * M;
    if (order >= 3 && !b.third.empty()) {
        auto idx = [m](int a, int c, int d) { return static_cast<std::size_t>((a * m + c) * m + d); };
        std::vector<double> t1(b.third.size(), 0.0), t2(b.third.size(), 0.0);
        for (int a = 0; a < m; ++a)
            for (int c = 0; c < m; ++c)
                for (int d = 0; d < m; ++d) {
                    double s = 0.0;
                    for (int i = 0; i < m; ++i) s += b.third[idx(i, c, d)] * M(i, a);
                    t1[idx(a, c, d)] = s;
                }
        for (int a = 0; a < m; ++a)
            for (int c = 0; c < m; ++c)
                for (int d = 0; d < m; ++d) {
                    double s = 0.0;
                    for (int i = 0; i < m; ++i) s += t1[idx(a, i, d)] * M(i, c);
                    t2[idx(a, c, d)] = s;
                }
        j.third.assign(b.third.size(), 0.0);
        for (int a = 0; a < m; ++a)
            for (int c = 0; c < m; ++c)
                for (int d = 0; d < m; ++d) {
                    double s = 0.0;
                    for (int i = 0; i < m; ++i) s += t2[idx(a, c, i)] * M(i, d);
                    j.third[idx(a, c, d)] = s;
                }
    }
    return j;
}

// ---------------------------------------------------------------------------

TransformedGenerator::TransformedGenerator(std::shared_ptr<const TransformContext> ctx, GeneratorDomain domain)
    : Generator(ctx->gen().name() + ":transformed", ctx->gen().dim(), std::move(domain), DerivativeMode::FiniteDifference),
      ctx_(std::move(ctx)) {}

namespace {

/// Recent inverse-map results per thread. Finite-difference stencils move one
/// or two coordinates at a time, so most q and p recur.
class InverseCache {
public:
    template <class F>
    Vec get(const void* owner, std::span<const double> key, F&& compute) {
        for (const auto& e : entries_)
            if (e.owner == owner && std::equal(key.begin(), key.end(), e.key.begin(), e.key.end())) return e.value;
        Vec v = compute();
        Entry e{owner, std::vector<double>(key.begin(), key.end()), v};
        if (entries_.size() < kSize)
            entries_.push_back(std::move(e));
        else
            entries_[next_++ % kSize] = std::move(e);
        return v;
    }

private:
    struct Entry {
        const void* owner;
        std::vector<double> key;
        Vec value;
    };
    static constexpr std::size_t kSize = 64;

    std::vector<Entry> entries_;
    std::size_t next_ = 0;
};

thread_local InverseCache q_cache, p_cache;

}  // namespace

Vec TransformedGenerator::x_of(std::span<const double> q) const {
    return q_cache.get(this, q, [&] { return ctx_->xl_from_q(to_vec(q)); });
}

Vec TransformedGenerator::y_of(std::span<const double> p) const {
    return p_cache.get(this, p, [&] { return ctx_->yl_from_p(to_vec(p)); });
}

double TransformedGenerator::value(std::span<const double> q, std::span<const double> p, double z) const {
    return ctx_->g_tilde(x_of(q), y_of(p), z);
}

double TransformedGenerator::dz(std::span<const double> q, std::span<const double> p, double z) const {
    return ctx_->gz_local(x_of(q), y_of(p), z);
}

bool TransformedGenerator::contains(std::span<const double> q, std::span<const double> p, double z) const {
    if (!Generator::contains(q, p, z)) return false;
    try {
        const Vec xl = x_of(q);
        const Vec yl = y_of(p);
        const Vec zero = Vec::Zero(dim());
        const double w = dual_g_star(ctx_->G(), zero, yl, ctx_->h() - z);
        return ctx_->G().contains(xl, yl, w) && ctx_->G().contains(xl, zero, 0.0);
    } catch (const Error&) {
        return false;
    }
}

// ---------------------------------------------------------------------------

std::shared_ptr<const TransformContext> TransformContext::make(GeneratorPtr gen, const Vec& x0, const Vec& y0, double u0, double h,
                                                              const TransformOptions& opt) {
    if (!gen) throw Error(ErrorKind::DomainError, "transform", "context needs a generator");
    if (!gen->contains_xy(as_span(x0), as_span(y0))) throw Error(ErrorKind::DomainError, "transform", "base point outside U x V");
    if (!gen->domain().J.contains_closed(u0)) throw Error(ErrorKind::DomainError, "transform", "base height outside J");
    if (!(h >= 0.0)) throw Error(ErrorKind::HeightOutOfRange, "transform", "height must be nonnegative");
    double z_h;
    try {
        z_h = dual_g_star(*gen, x0, y0, u0 + h);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::Unattainable) throw Error(ErrorKind::HeightOutOfRange, "transform", "u0 + h is not attainable at the base point");
        throw;
    }
    if (!gen->contains(x0, y0, z_h)) throw Error(ErrorKind::HeightOutOfRange, "transform", "g*(x0, y0, u0 + h) leaves I");
    const EMatrix e = matrix_E(*gen, x0, y0, z_h);
    if (std::abs(e.det) <= 1e-14) throw Error(ErrorKind::SingularJacobian, "transform", "E is singular at the base point");

    auto ctx = std::shared_ptr<TransformContext>(new TransformContext());
    ctx->gen_ = gen;
    ctx->x0_ = x0;
    ctx->y0_ = y0;
    ctx->u0_ = u0;
    ctx->h_ = h;
    ctx->z_h_ = z_h;
    ctx->A_ = e.E;
    ctx->G_ = std::make_shared<RecentredGenerator>(gen, x0, y0, u0, z_h, e.E);
    const Vec zero = Vec::Zero(gen->dim());
    const Jet j0 = ctx->G_->jet(zero, zero, 0.0, 1);
    ctx->Gz0_ = j0.gz();
    ctx->Gx0_ = j0.gx();
    ctx->bounds_ = sample_distortion(*ctx->G_, opt.cg_samples, opt.seed);
    ctx->C_g_ = ctx->bounds_.C_g();
    return ctx;
}

Vec TransformContext::q_local(const Vec& xl) const {
    const Vec zero = Vec::Zero(xl.size());
    const Jet j = G_->jet(xl, zero, 0.0, 1);
    const Jet j0 = G_->jet(zero, zero, 0.0, 1);
    return Gz0_ * (j.gy() / j.gz() - j0.gy() / j0.gz());
}

Mat TransformContext::dq_local(const Vec& xl) const {
    const Vec zero = Vec::Zero(xl.size());
    const Jet j = G_->jet(xl, zero, 0.0, 2);
    return (Gz0_ / j.gz()) * matrix_E(j).E.transpose();
}

Vec TransformContext::xl_from_q(const Vec& q) const {
    const Vec zero = Vec::Zero(q.size());
    const double tol = 1e-14 * (1.0 + q.norm());
    return newton_solve([&](const Vec& x) { return Vec(q_local(x) - q); }, [&](const Vec& x) { return dq_local(x); },
                        [&](const Vec& x) { return G_->contains(x, zero, 0.0); }, q, tol, "from_q");
}

Vec TransformContext::p_local(const Vec& yl) const {
    const Vec zero = Vec::Zero(yl.size());
    const double w = dual_g_star(*G_, zero, yl, h_);
    return G_->jet(zero, yl, w, 1).gx() - Gx0_;
}

Mat TransformContext::dp_local(const Vec& yl) const {
    const Vec zero = Vec::Zero(yl.size());
    const double w = dual_g_star(*G_, zero, yl, h_);
    return matrix_E(G_->jet(zero, yl, w, 2)).E;
}

Vec TransformContext::yl_from_p(const Vec& p) const {
    const Vec zero = Vec::Zero(p.size());
    const double tol = 1e-14 * (1.0 + p.norm());
    auto inside = [&](const Vec& y) {
        if (!G_->domain().V.contains(y)) return false;
        try {
            const double w = dual_g_star(*G_, zero, y, h_);
            return G_->contains(zero, y, w);
        } catch (const Error&) {
            return false;
        }
    };
    return newton_solve([&](const Vec& y) { return Vec(p_local(y) - p); }, [&](const Vec& y) { return dp_local(y); }, inside, p, tol,
                        "from_p");
}

Vec TransformContext::to_q(const Vec& x) const { return q_local(x - x0_); }
Vec TransformContext::from_q(const Vec& q) const { return x0_ + xl_from_q(q); }
Vec TransformContext::to_p(const Vec& y) const { return p_local(A_ * (y - y0_)); }
Vec TransformContext::from_p(const Vec& p) const { return y0_ + A_.inverse() * yl_from_p(p); }
Mat TransformContext::dq_dx(const Vec& x) const { return dq_local(x - x0_); }
Mat TransformContext::dp_dy(const Vec& y) const { return dp_local(A_ * (y - y0_)) * A_; }

double TransformContext::g_tilde(const Vec& xl, const Vec& yl, double z) const {
    const Vec zero = Vec::Zero(xl.size());
    const double w = dual_g_star(*G_, zero, yl, h_ - z);
    const double ratio = Gz0_ / G_->dz(as_span(xl), as_span(zero), 0.0);
    return ratio * (G_->value(xl, yl, w) - G_->value(xl, zero, 0.0));
}

double TransformContext::transformed_g(const Vec& q, const Vec& p, double z) const {
    return g_tilde(xl_from_q(q), yl_from_p(p), z);
}

double TransformContext::transformed_gz(const Vec& q, const Vec& p, double z) const { return gz_local(xl_from_q(q), yl_from_p(p), z); }

double TransformContext::gz_local(const Vec& xl, const Vec& yl, double z) const {
    const Vec zero = Vec::Zero(xl.size());
    const double w = dual_g_star(*G_, zero, yl, h_ - z);
    const double ratio = Gz0_ / G_->dz(as_span(xl), as_span(zero), 0.0);
    return -ratio * G_->dz(as_span(xl), as_span(yl), w) / G_->dz(as_span(zero), as_span(yl), w);
}

std::function<double(const Vec&)> TransformContext::transform_function(std::function<double(const Vec&)> u) const {
    auto self = shared_from_this();
    return [self, u = std::move(u)](const Vec& q) {
        const Vec xl = self->xl_from_q(q);
        const Vec zero = Vec::Zero(xl.size());
        const double ratio = self->Gz0_ / self->G_->dz(as_span(xl), as_span(zero), 0.0);
        return ratio * (u(self->x0_ + xl) - self->u0_ - self->G_->value(xl, zero, 0.0));
    };
}

GeneratorPtr TransformContext::transformed_generator(double q_half, double p_half, double z_half, double j_half) const {
    const int n = gen_->dim();
    GeneratorDomain d;
    d.U = Box::cube(n, -q_half, q_half);
    d.V = Box::cube(n, -p_half, p_half);
    d.z_interval = {-z_half, z_half};
    d.J = {-j_half, j_half};
    return std::make_shared<TransformedGenerator>(shared_from_this(), std::move(d));
}

// ---------------------------------------------------------------------------

ExpansionReport verify_expansion(const TransformContext& ctx, const std::vector<double>& radii, std::size_t samples, std::uint64_t seed) {
    const int n = ctx.gen().dim();
    ExpansionReport rep;
    rep.C_g = ctx.C_g();
    rep.C_plus = std::pow(rep.C_g, -4.0);
    rep.C_minus = std::pow(rep.C_g, 4.0);

    struct Unit {
        Vec q, p;
        double z;
    };
    std::vector<Unit> unit(samples);
    for (std::size_t i = 0; i < samples; ++i) {
        Rng rng(seed, i);
        unit[i].q = rng.uniform_in(Box::cube(n, -1.0, 1.0));
        unit[i].p = rng.uniform_in(Box::cube(n, -1.0, 1.0));
        unit[i].z = rng.uniform(-1.0, 1.0);
    }

    struct Sample {
        double res = 0.0, norm = 0.0, f1C = 0.0, f1_0 = 0.0, gz = 0.0;
        double qn = 0.0, pn = 0.0, zn = 0.0;
        bool ok = false;
    };
    bool any_nonzero = false;
    std::vector<double> rs, maxima;
    for (double r : radii) {
        std::vector<Sample> out(samples);
        parallel_for(samples, [&](std::size_t i) {
            const Vec q = r * unit[i].q, p = r * unit[i].p;
            const double z = r * unit[i].z;
            Sample s;
            try {
                const double gb = ctx.transformed_g(q, p, z);
                s.res = std::abs(gb - (q.dot(p) - z));
                const double qn = q.norm(), pn = p.norm(), zn = std::abs(z);
                s.qn = qn;
                s.pn = pn;
                s.zn = zn;
                const double denom = qn * qn * pn + qn * zn + pn * pn * qn + zn * zn;
                s.norm = denom > 0 ? s.res / denom : 0.0;
                s.gz = ctx.transformed_gz(q, p, z);
                s.f1C = qn > 0 ? std::abs(s.gz + 1.0) / qn : 0.0;
                s.f1_0 = std::abs(ctx.transformed_gz(Vec::Zero(n), p, z) + 1.0);
                s.ok = true;
            } catch (const Error&) {
                s.ok = false;
            }
            out[i] = s;
        });
        ExpansionLevel lv;
        lv.r = r;
        lv.gz_min = kInf;
        lv.gz_max = -kInf;
        for (const auto& s : out) {
            if (!s.ok) continue;
            ++lv.samples;
            lv.residual_max = std::max(lv.residual_max, s.res);
            lv.normalised_max = std::max(lv.normalised_max, s.norm);
            lv.f1_C = std::max(lv.f1_C, s.f1C);
            lv.f1_at_q0 = std::max(lv.f1_at_q0, s.f1_0);
            lv.gz_min = std::min(lv.gz_min, s.gz);
            lv.gz_max = std::max(lv.gz_max, s.gz);
            rep.scatter.push_back({r, s.qn, s.pn, s.zn, s.res});
        }
        if (lv.residual_max > 1e-14) any_nonzero = true;
        rs.push_back(r);
        maxima.push_back(lv.residual_max);
        rep.levels.push_back(lv);
    }
    rep.exact = !any_nonzero;
    rep.slope = rep.exact ? std::numeric_limits<double>::quiet_NaN() : loglog_slope(rs, maxima);
    rep.slope_ok = !rep.exact && rep.slope >= 2.7 && rep.slope <= 3.3;

    // A fitted constant is stable when no smaller box needs more than twice
    // the constant fitted on the largest box.
    auto stable = [&](const std::vector<double>& v) {
        if (v.empty()) return false;
        std::size_t largest = 0;
        for (std::size_t k = 0; k < v.size(); ++k)
            if (rep.levels[k].r > rep.levels[largest].r) largest = k;
        const double ref = v[largest];
        if (!std::isfinite(ref)) return false;
        for (double x : v)
            if (!(x <= 2.0 * ref + 1e-12)) return false;
        return true;
    };
    std::vector<double> f1c, nm;
    rep.gz_bounds_ok = true;
    rep.f1_vertex_ok = true;
    for (const auto& lv : rep.levels) {
        if (lv.samples == 0) {
            rep.gz_bounds_ok = false;
            f1c.push_back(kInf);
            nm.push_back(kInf);
            continue;
        }
        f1c.push_back(lv.f1_C);
        nm.push_back(rep.exact ? 0.0 : lv.normalised_max);
        if (lv.gz_min < -rep.C_minus || lv.gz_max > -rep.C_plus) rep.gz_bounds_ok = false;
        if (lv.f1_at_q0 > 1e-10) rep.f1_vertex_ok = false;
    }
    rep.f1_C_stable = stable(f1c);
    rep.normalised_stable = stable(nm);
    return rep;
}

Json to_json(const ExpansionReport& r) {
    Json levels = Json::array();
    for (const auto& lv : r.levels)
        levels.push_back({{"r", lv.r},
                          {"residual_max", lv.residual_max},
                          {"normalised_max", lv.normalised_max},
                          {"f1_C", lv.f1_C},
                          {"f1_at_q0", lv.f1_at_q0},
                          {"gz_min", lv.gz_min},
                          {"gz_max", lv.gz_max},
                          {"samples", lv.samples}});
    Json j{{"levels", levels},
           {"exact", r.exact},
           {"C_g", r.C_g},
           {"C_plus", r.C_plus},
           {"C_minus", r.C_minus},
           {"gz_bounds_ok", r.gz_bounds_ok},
           {"slope_ok", r.slope_ok},
           {"f1_vertex_ok", r.f1_vertex_ok},
           {"f1_C_stable", r.f1_C_stable},
           {"normalised_stable", r.normalised_stable},
           {"pass", r.pass()}};
    j["slope"] = r.exact ? Json(nullptr) : Json(r.slope);
    return j;
}

void write_expansion_csv(const ExpansionReport& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::ConfigError, "transform", "cannot write " + path);
    out << "r,q_norm,p_norm,z_abs,residual\n" << std::setprecision(17);
    for (const auto& s : r.scatter) out << s[0] << ',' << s[1] << ',' << s[2] << ',' << s[3] << ',' << s[4] << '\n';
}

}  // namespace gjekit
