#include "gjekit/certify.hpp"

#include "gjekit/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace gjekit {

const char* to_string(Status s) {
    switch (s) {
        case Status::Pass: return "pass";
        case Status::Fail: return "fail";
        case Status::Untested: return "untested";
    }
    return "untested";
}

double DistortionBounds::C_g() const {
    return std::max({E_plus, C_z, E_minus > 0 ? 1.0 / E_minus : kInf, c_z > 0 ? 1.0 / c_z : kInf});
}

namespace {

enum Stream : std::uint64_t { kGamma = 1, kA1 = 2, kA1s = 3, kLMP = 4, kSlice = 5, kA4w = 6 };

std::uint64_t stream_id(Stream s, std::size_t i) { return (static_cast<std::uint64_t>(s) << 40) + i; }

struct GammaPoint {
    Vec x, y;
    double z = 0.0;
    bool ok = false;
};

GammaPoint sample_gamma(const Generator& gen, Rng& rng) {
    GammaPoint p;
    p.x = rng.uniform_in(gen.domain().U);
    p.y = rng.uniform_in(gen.domain().V);
    const Interval I = gen.domain().I(as_span(p.x), as_span(p.y));
    p.z = rng.uniform(I.lo, I.hi);
    p.ok = gen.contains(p.x, p.y, p.z);
    return p;
}

std::vector<GammaPoint> corner_points(const Generator& gen) {
    const int n = gen.dim();
    const auto& d = gen.domain();
    std::vector<GammaPoint> out;
    for (unsigned mask = 0; mask < (1u << (2 * n)); ++mask) {
        GammaPoint p;
        p.x.resize(n);
        p.y.resize(n);
        for (int i = 0; i < n; ++i) {
            p.x[i] = (mask >> i) & 1u ? d.U.hi[i] : d.U.lo[i];
            p.y[i] = (mask >> (n + i)) & 1u ? d.V.hi[i] : d.V.lo[i];
        }
        p.z = d.I(as_span(p.x), as_span(p.y)).mid();
        p.ok = gen.contains(p.x, p.y, p.z);
        if (p.ok) out.push_back(std::move(p));
    }
    return out;
}

std::vector<double> pack(std::initializer_list<const Vec*> vs, std::initializer_list<double> scalars) {
    std::vector<double> w;
    for (const Vec* v : vs) w.insert(w.end(), v->data(), v->data() + v->size());
    w.insert(w.end(), scalars.begin(), scalars.end());
    return w;
}

struct PointResult {
    bool ok = false;
    double sv_max = 0.0, sv_min = kInf, gz_abs = 0.0, gx_norm = 0.0;
    bool a0_fail = false, a2_fail = false;
    double a0_violation = 0.0, a2_violation = 0.0;
    std::vector<double> a0_witness, a2_witness;
};

PointResult check_point(const Generator& gen, const GammaPoint& p) {
    PointResult r;
    if (!p.ok) return r;
    r.ok = true;
    const Jet j = gen.jet(p.x, p.y, p.z, 2);
    const EMatrix e = matrix_E(j);
    Eigen::JacobiSVD<Mat> svd(e.E);
    r.sv_max = svd.singularValues().maxCoeff();
    r.sv_min = svd.singularValues().minCoeff();
    r.gz_abs = std::abs(j.gz());
    r.gx_norm = j.gx().norm();

    if (!(j.gz() < 0.0) || std::abs(e.det) <= 1e-12) {
        r.a2_fail = true;
        r.a2_violation = std::max(j.gz(), 1e-12 - std::abs(e.det));
        r.a2_witness = pack({&p.x, &p.y}, {p.z});
    }

    const auto& d = gen.domain();
    const Interval I = d.I(as_span(p.x), as_span(p.y));
    if (!(I.hi > I.lo)) {
        r.a0_fail = true;
        r.a0_violation = I.lo - I.hi;
        r.a0_witness = pack({&p.x, &p.y}, {I.lo, I.hi});
    } else {
        const double top = gen.value(p.x, p.y, I.lo);
        const double bottom = gen.value(p.x, p.y, I.hi);
        const double v = std::max(d.J.hi - top, bottom - d.J.lo);
        if (v > 0.0) {
            r.a0_fail = true;
            r.a0_violation = v;
            r.a0_witness = pack({&p.x, &p.y}, {I.lo, I.hi});
        }
    }
    return r;
}

void record(ConditionEntry& c, bool fail, double violation, const std::vector<double>& witness) {
    ++c.checked;
    if (!fail) return;
    if (c.status != Status::Fail) c.witness = witness;
    c.status = Status::Fail;
    c.worst = std::max(c.worst, violation);
}

void finish(ConditionEntry& c) {
    if (c.status != Status::Fail) c.status = c.checked > 0 ? Status::Pass : Status::Untested;
}

struct GroupResult {
    std::size_t checked = 0, skipped = 0;
    bool fail = false;
    double worst = 0.0;
    std::vector<double> witness;
};

constexpr int kGroup = 16;

// A1: (y, z) -> (g_x, g)(x, y, z) injective for fixed x, u
GroupResult check_a1_group(const Generator& gen, Rng& rng) {
    GroupResult g;
    const auto& d = gen.domain();
    const Vec x = rng.uniform_in(d.U);
    const double u = rng.uniform(d.J.lo, d.J.hi);
    std::vector<Vec> ys, ps;
    std::vector<double> zs;
    for (int k = 0; k < kGroup; ++k) {
        Vec y = rng.uniform_in(d.V);
        double z;
        try {
            z = dual_g_star(gen, x, y, u);
        } catch (const Error&) {
            ++g.skipped;
            continue;
        }
        if (!gen.contains(x, y, z)) {
            ++g.skipped;
            continue;
        }
        ps.push_back(gen.jet(x, y, z, 1).gx());
        ys.push_back(std::move(y));
        zs.push_back(z);
    }
    for (std::size_t a = 0; a < ys.size(); ++a) {
        for (std::size_t b = a + 1; b < ys.size(); ++b) {
            ++g.checked;
            const double dy = (ys[a] - ys[b]).norm();
            const double ratio = (ps[a] - ps[b]).norm() / dy;
            if (dy > 0 && ratio < 1e-9 && !g.fail) {
                g.fail = true;
                g.worst = 1e-9 - ratio;
                g.witness = pack({&x, &ys[a], &ys[b]}, {u});
            }
        }
        // round trip from a cold start
        try {
            const YZ back = solve_YZ(gen, x, u, ps[a]);
            const double err = (back.y - ys[a]).norm();
            if (err > 1e-6 && !g.fail) {
                g.fail = true;
                g.worst = err;
                g.witness = pack({&x, &ys[a], &back.y}, {u});
            }
        } catch (const Error&) {
        }
    }
    return g;
}

// A1*: x -> (g_y / g_z)(x, y, z) injective for fixed (y, z)
GroupResult check_a1s_group(const Generator& gen, Rng& rng) {
    GroupResult g;
    const auto& d = gen.domain();
    GammaPoint base = sample_gamma(gen, rng);
    std::vector<Vec> xs, ms;
    for (int k = 0; k < kGroup; ++k) {
        Vec x = rng.uniform_in(d.U);
        if (!gen.contains(x, base.y, base.z)) {
            ++g.skipped;
            continue;
        }
        ms.push_back(g_segment_map(gen, x, base.y, base.z));
        xs.push_back(std::move(x));
    }
    for (std::size_t a = 0; a < xs.size(); ++a)
        for (std::size_t b = a + 1; b < xs.size(); ++b) {
            ++g.checked;
            const double dx = (xs[a] - xs[b]).norm();
            const double ratio = (ms[a] - ms[b]).norm() / dx;
            if (dx > 0 && ratio < 1e-9 && !g.fail) {
                g.fail = true;
                g.worst = 1e-9 - ratio;
                g.witness = pack({&base.y, &xs[a], &xs[b]}, {base.z});
            }
        }
    return g;
}

struct LmpResult {
    bool ok = false;
    double violation = 0.0;
    std::vector<double> witness;
};

LmpResult check_lmp(const Generator& gen, Rng& rng) {
    LmpResult r;
    const auto& d = gen.domain();
    const Vec x0 = rng.uniform_in(d.U);
    const Vec y0 = rng.uniform_in(d.V);
    const Vec y1 = rng.uniform_in(d.V);
    const double u0 = rng.uniform(d.J.lo, d.J.hi);
    const Vec x = rng.uniform_in(d.U);
    const double theta = rng.uniform();
    try {
        const Vec yt = gstar_segment(gen, x0, u0, y0, y1, theta);
        if (!d.V.contains(yt)) return r;
        auto support = [&](const Vec& y) {
            const double z = dual_g_star(gen, x0, y, u0);
            if (!gen.contains(x, y, z)) throw Error(ErrorKind::OutOfDomain, "generator", "support leaves Gamma");
            return gen.value(x, y, z);
        };
        const double mid = support(yt);
        const double top = std::max(support(y0), support(y1));
        r.ok = true;
        r.violation = mid - top;
        if (r.violation > 1e-9) r.witness = pack({&x0, &y0, &y1, &x}, {u0, theta});
    } catch (const Error&) {
    }
    return r;
}

struct SliceResult {
    bool ok = false;
    std::vector<double> h1, h2;  // h', h'' at stencil centres
    double gqq_ratio = -kInf;
    bool gqq_unbounded = false;
    std::vector<double> witness;
};

SliceResult check_slice(const Generator& gen, Rng& rng) {
    SliceResult r;
    const auto& d = gen.domain();
    QuasiconvexSlice s;
    s.x0 = rng.uniform_in(d.U);
    s.x1 = rng.uniform_in(d.U);
    s.y0 = rng.uniform_in(d.V);
    s.y1 = rng.uniform_in(d.V);
    const double u0 = rng.uniform(d.J.lo, d.J.hi);
    try {
        s.z0 = dual_g_star(gen, s.x0, s.y0, u0);
        s.z1 = dual_g_star(gen, s.x0, s.y1, u0);
        if (!gen.contains(s.x1, s.y0, s.z0) || !gen.contains(s.x1, s.y1, s.z1)) return r;
        constexpr double dt = 0.02;
        for (double c : {0.25, 0.5, 0.75}) {
            const double hm2 = s.h(gen, c - 2 * dt), hm1 = s.h(gen, c - dt), h0 = s.h(gen, c);
            const double hp1 = s.h(gen, c + dt), hp2 = s.h(gen, c + 2 * dt);
            r.h1.push_back((hm2 - 8 * hm1 + 8 * hp1 - hp2) / (12 * dt));
            r.h2.push_back((-hp2 + 16 * hp1 - 30 * h0 + 16 * hm1 - hm2) / (12 * dt * dt));
        }
        const double h_end = s.h(gen, 1.0);
        for (int k = 1; k <= 9; ++k) {
            const double t = 0.1 * k;
            const double ht = s.h(gen, t);
            if (ht <= 1e-12) continue;
            if (h_end <= 1e-9) {
                r.gqq_unbounded = true;
            } else {
                r.gqq_ratio = std::max(r.gqq_ratio, ht / (t * h_end));
            }
        }
        r.witness = pack({&s.x0, &s.x1, &s.y0, &s.y1}, {u0});
        r.ok = true;
    } catch (const Error&) {
        r.ok = false;
    }
    return r;
}

struct A4wResult {
    bool ok = false;
    double violation = 0.0;
    std::vector<double> witness;
};

A4wResult check_a4w(const Generator& gen, Rng& rng) {
    A4wResult r;
    const auto& d = gen.domain();
    GammaPoint p = sample_gamma(gen, rng);
    if (!p.ok) return r;
    const int n = gen.dim();
    const double u = gen.value(p.x, p.y, p.z);
    if (!d.J.contains(u)) return r;
    const Vec pcov = gen.jet(p.x, p.y, p.z, 1).gx();
    const double du = 1e-4 * d.J.width();
    try {
        YZ warm{p.y, p.z, 0, 0.0};
        const YZ plus = solve_YZ(gen, p.x, u + du, pcov, warm);
        const YZ minus = solve_YZ(gen, p.x, u - du, pcov, warm);
        const Mat Ap = gen.jet(p.x, plus.y, plus.z, 2).gxx();
        const Mat Am = gen.jet(p.x, minus.y, minus.z, 2).gxx();
        const Mat D = (Ap - Am) / (2 * du);
        const double tol = 1e-6 * (1.0 + D.cwiseAbs().maxCoeff() + Ap.cwiseAbs().maxCoeff());
        r.ok = true;
        for (int k = 0; k < 3; ++k) {
            const Vec xi = rng.unit_vector(n);
            const double q = xi.dot(D * xi);
            if (-q - tol > r.violation) {
                r.violation = -q - tol;
                r.witness = pack({&p.x, &pcov, &xi}, {u});
            }
        }
    } catch (const Error&) {
        r.ok = false;
    }
    return r;
}

}  // namespace

double QuasiconvexSlice::h(const Generator& gen, double theta) const {
    const Vec xt = g_segment(gen, y0, z0, x0, x1, theta);
    return gen.value(xt, y1, z1) - gen.value(xt, y0, z0);
}

std::vector<double> a3w_K_grid() { return {0.0, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3}; }

DistortionBounds sample_distortion(const Generator& gen, std::size_t samples, std::uint64_t seed) {
    std::vector<GammaPoint> pts = corner_points(gen);
    const std::size_t corners = pts.size();
    pts.resize(corners + samples);
    std::vector<PointResult> res(pts.size());
    parallel_for(pts.size(), [&](std::size_t i) {
        if (i >= corners) {
            Rng rng(seed, stream_id(kGamma, i - corners));
            pts[i] = sample_gamma(gen, rng);
        }
        res[i] = check_point(gen, pts[i]);
    });
    DistortionBounds b;
    for (const auto& r : res) {
        if (!r.ok) continue;
        ++b.samples;
        b.E_plus = std::max(b.E_plus, r.sv_max);
        b.E_minus = std::min(b.E_minus, r.sv_min);
        b.C_z = std::max(b.C_z, r.gz_abs);
        b.c_z = std::min(b.c_z, r.gz_abs);
        b.K0 = std::max(b.K0, r.gx_norm);
    }
    return b;
}

const ConditionEntry& ConditionReport::get(const std::string& name) const {
    for (const auto& c : conditions)
        if (c.name == name) return c;
    throw Error(ErrorKind::DomainError, "generator", "no condition named '" + name + "'");
}

bool ConditionReport::all_pass() const {
    return std::all_of(conditions.begin(), conditions.end(), [](const ConditionEntry& c) { return c.status == Status::Pass; });
}

ConditionReport certify(const Generator& gen, std::size_t samples, std::uint64_t seed) {
    if (samples < 1) throw Error(ErrorKind::PreconditionViolated, "generator", "certify needs at least one sample");
    const int n = gen.dim();
    ConditionReport rep;
    rep.generator = gen.name();
    rep.dim = n;
    rep.samples = samples;
    rep.seed = seed;
    auto entry = [](const char* name) {
        ConditionEntry c;
        c.name = name;
        return c;
    };
    ConditionEntry a0 = entry("A0"), a1 = entry("A1"), a1s = entry("A1*"), a2 = entry("A2"), lmp = entry("LMP"),
                   a3w = entry("A3w"), a4w = entry("A4w"), a5 = entry("A5");
    a0.witness_layout = "x, y, I.lo, I.hi";
    a1.witness_layout = "x, y_a, y_b, u";
    a1s.witness_layout = "y, x_a, x_b, z";
    a2.witness_layout = "x, y, z";
    lmp.witness_layout = "x0, y0, y1, x, u0, theta";
    a3w.witness_layout = "x0, x1, y0, y1, u0";
    a4w.witness_layout = "x, p, xi, u";
    a5.witness_layout = "";

    // pointwise conditions and distortion bounds
    std::vector<GammaPoint> pts = corner_points(gen);
    const std::size_t corners = pts.size();
    pts.resize(corners + samples);
    std::vector<PointResult> pres(pts.size());
    parallel_for(pts.size(), [&](std::size_t i) {
        if (i >= corners) {
            Rng rng(seed, stream_id(kGamma, i - corners));
            pts[i] = sample_gamma(gen, rng);
        }
        pres[i] = check_point(gen, pts[i]);
    });
    DistortionBounds& b = rep.bounds;
    for (const auto& r : pres) {
        if (!r.ok) {
            ++a0.skipped;
            ++a2.skipped;
            continue;
        }
        ++b.samples;
        b.E_plus = std::max(b.E_plus, r.sv_max);
        b.E_minus = std::min(b.E_minus, r.sv_min);
        b.C_z = std::max(b.C_z, r.gz_abs);
        b.c_z = std::min(b.c_z, r.gz_abs);
        b.K0 = std::max(b.K0, r.gx_norm);
        record(a0, r.a0_fail, r.a0_violation, r.a0_witness);
        record(a2, r.a2_fail, r.a2_violation, r.a2_witness);
    }
    rep.C_g = b.C_g();

    // injectivity
    const std::size_t groups = std::max<std::size_t>(1, samples / kGroup);
    std::vector<GroupResult> g1(groups), g1s(groups);
    parallel_for(groups, [&](std::size_t i) {
        Rng r1(seed, stream_id(kA1, i));
        g1[i] = check_a1_group(gen, r1);
        Rng r2(seed, stream_id(kA1s, i));
        g1s[i] = check_a1s_group(gen, r2);
    });
    auto merge = [](ConditionEntry& c, const std::vector<GroupResult>& gs) {
        for (const auto& g : gs) {
            c.checked += g.checked;
            c.skipped += g.skipped;
            if (g.fail) {
                if (c.status != Status::Fail) c.witness = g.witness;
                c.status = Status::Fail;
                c.worst = std::max(c.worst, g.worst);
            }
        }
    };
    merge(a1, g1);
    merge(a1s, g1s);

    // LMP
    std::vector<LmpResult> lres(samples);
    parallel_for(samples, [&](std::size_t i) {
        Rng rng(seed, stream_id(kLMP, i));
        lres[i] = check_lmp(gen, rng);
    });
    for (const auto& r : lres) {
        if (!r.ok) {
            ++lmp.skipped;
            continue;
        }
        record(lmp, r.violation > 1e-9, r.violation, r.witness);
    }

    // A3w slices and the gqq constant
    const std::size_t slices = std::max<std::size_t>(20, samples / 20);
    std::vector<SliceResult> sres(slices);
    parallel_for(slices, [&](std::size_t i) {
        Rng rng(seed, stream_id(kSlice, i));
        sres[i] = check_slice(gen, rng);
    });
    const auto grid = a3w_K_grid();
    std::size_t chosen = grid.size();
    for (std::size_t k = 0; k < grid.size() && chosen == grid.size(); ++k) {
        bool all = true;
        for (const auto& r : sres) {
            if (!r.ok) continue;
            for (std::size_t c = 0; c < r.h2.size(); ++c)
                if (r.h2[c] + grid[k] * std::abs(r.h1[c]) < -1e-9) all = false;
        }
        if (all) chosen = k;
    }
    double M = 0.0;
    for (const auto& r : sres) {
        if (!r.ok) {
            ++a3w.skipped;
            continue;
        }
        ++a3w.checked;
        if (r.gqq_unbounded) M = kInf;
        else if (r.gqq_ratio > M) M = r.gqq_ratio;
        if (chosen == grid.size()) {
            double worst = 0.0;
            for (std::size_t c = 0; c < r.h2.size(); ++c) worst = std::max(worst, -(r.h2[c] + grid.back() * std::abs(r.h1[c])));
            if (worst > 1e-9) {
                if (a3w.status != Status::Fail) a3w.witness = r.witness;
                a3w.status = Status::Fail;
                a3w.worst = std::max(a3w.worst, worst);
            }
        }
    }
    rep.a3w_K = chosen < grid.size() ? grid[chosen] : kInf;
    rep.gqq_M = M;

    // A4w
    const std::size_t a4n = std::max<std::size_t>(1, samples / 4);
    std::vector<A4wResult> ares(a4n);
    parallel_for(a4n, [&](std::size_t i) {
        Rng rng(seed, stream_id(kA4w, i));
        ares[i] = check_a4w(gen, rng);
    });
    for (const auto& r : ares) {
        if (!r.ok) {
            ++a4w.skipped;
            continue;
        }
        record(a4w, r.violation > 0.0, r.violation, r.witness);
    }

    // A5: the sampled gradient bound is finite whenever any sample landed in Gamma
    a5.checked = b.samples;
    a5.worst = 0.0;
    if (b.samples > 0 && !std::isfinite(b.K0)) {
        a5.status = Status::Fail;
    }

    for (ConditionEntry* c : {&a0, &a1, &a1s, &a2, &lmp, &a3w, &a4w, &a5}) {
        finish(*c);
        rep.conditions.push_back(*c);
    }
    return rep;
}

Json to_json(const ConditionReport& r) {
    Json conds = Json::object();
    for (const auto& c : r.conditions) {
        Json e{{"status", to_string(c.status)}, {"checked", c.checked}, {"skipped", c.skipped}};
        if (c.status == Status::Fail) {
            e["witness"] = c.witness;
            e["witness_layout"] = c.witness_layout;
            e["worst_violation"] = c.worst;
        }
        conds[c.name] = e;
    }
    return Json{{"generator", r.generator},
                {"dim", r.dim},
                {"samples", r.samples},
                {"seed", r.seed},
                {"conditions", conds},
                {"bounds",
                 {{"E_plus", r.bounds.E_plus},
                  {"E_minus", r.bounds.E_minus},
                  {"C_z", r.bounds.C_z},
                  {"c_z", r.bounds.c_z},
                  {"C_g", r.C_g},
                  {"K0", r.bounds.K0},
                  {"points", r.bounds.samples}}},
                {"a3w_K", r.a3w_K},
                {"gqq_M", r.gqq_M},
                {"all_pass", r.all_pass()}};
}

}  // namespace gjekit
