#include "gjekit/generator.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace gjekit {

namespace {

constexpr std::array<int, 4> kOffsets{-2, -1, 1, 2};
// fourth-order central first difference weights (divide by h)
constexpr std::array<double, 4> kFirstWeights{1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0};

Jet make_jet(int n, int order) {
    Jet j;
    j.n = n;
    j.order = order;
    const int m = 2 * n + 1;
    j.grad = Vec::Zero(m);
    if (order >= 2) j.hess = Mat::Zero(m, m);
    if (order >= 3) j.third.assign(static_cast<std::size_t>(m * m * m), 0.0);
    return j;
}

void set3(Jet& j, int a, int b, int c, double v) {
    const int m = j.nvars();
    const std::array<std::array<int, 3>, 6> perms{{{a, b, c}, {a, c, b}, {b, a, c}, {b, c, a}, {c, a, b}, {c, b, a}}};
    for (const auto& p : perms) j.third[static_cast<std::size_t>((p[0] * m + p[1]) * m + p[2])] = v;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

Error domain_error(const std::string& what) { return Error(ErrorKind::DomainError, "generator", what); }

}  // namespace

// ---------------------------------------------------------------------------

Generator::Generator(std::string name, int dim, GeneratorDomain domain, DerivativeMode mode)
    : name_(std::move(name)), dim_(dim), domain_(std::move(domain)), mode_(mode) {
    if (dim_ < 1) throw domain_error("generator dimension must be positive");
    if (domain_.U.dim() != dim_ || domain_.V.dim() != dim_) throw domain_error("U and V must match the generator dimension");
    if (!(domain_.J.hi > domain_.J.lo)) throw domain_error("height interval J is empty");
    fd_scale_ = std::max(domain_.U.scale(), domain_.V.scale());
}

bool Generator::contains_xy(std::span<const double> x, std::span<const double> y) const {
    return domain_.U.contains(x) && domain_.V.contains(y);
}

bool Generator::contains(std::span<const double> x, std::span<const double> y, double z) const {
    return contains_xy(x, y) && domain_.I(x, y).contains_closed(z);
}

std::optional<double> Generator::dual_closed_form(std::span<const double>, std::span<const double>, double) const {
    return std::nullopt;
}

double Generator::dz(std::span<const double> x, std::span<const double> y, double z) const {
    const double h = 1e-4 * std::max(1e-3, std::min(domain_.I(x, y).width(), fd_scale_));
    double s = 0.0;
    for (std::size_t k = 0; k < kOffsets.size(); ++k) s += kFirstWeights[k] * value(x, y, z + kOffsets[k] * h);
    return s / h;
}

Jet Generator::jet(std::span<const double> x, std::span<const double> y, double z, int order) const {
    return fd_jet(x, y, z, order);
}

Jet Generator::fd_jet(std::span<const double> x, std::span<const double> y, double z, int order) const {
    const int n = dim_;
    const int m = 2 * n + 1;
    Jet j = make_jet(n, order);

    std::vector<double> v(static_cast<std::size_t>(m));
    std::copy(x.begin(), x.end(), v.begin());
    std::copy(y.begin(), y.end(), v.begin() + n);
    v[static_cast<std::size_t>(2 * n)] = z;

    std::vector<double> scale(static_cast<std::size_t>(m));
    for (int i = 0; i < n; ++i) {
        scale[static_cast<std::size_t>(i)] = domain_.U.hi[i] - domain_.U.lo[i];
        scale[static_cast<std::size_t>(n + i)] = domain_.V.hi[i] - domain_.V.lo[i];
    }
    scale[static_cast<std::size_t>(2 * n)] = std::max(1e-3, std::min(domain_.I(x, y).width(), fd_scale_));

    auto eval = [&](const std::vector<double>& w) {
        return value(std::span<const double>(w.data(), static_cast<std::size_t>(n)),
                     std::span<const double>(w.data() + n, static_cast<std::size_t>(n)), w[static_cast<std::size_t>(2 * n)]);
    };

    j.value = eval(v);
    std::vector<double> w = v;
    for (int a = 0; a < m; ++a) {
        const double h = 1e-4 * scale[static_cast<std::size_t>(a)];
        double s = 0.0;
        for (std::size_t k = 0; k < kOffsets.size(); ++k) {
            w[static_cast<std::size_t>(a)] = v[static_cast<std::size_t>(a)] + kOffsets[k] * h;
            s += kFirstWeights[k] * eval(w);
        }
        w[static_cast<std::size_t>(a)] = v[static_cast<std::size_t>(a)];
        j.grad[a] = s / h;
    }
    if (order < 2) return j;

    for (int a = 0; a < m; ++a) {
        const double ha = 1e-3 * scale[static_cast<std::size_t>(a)];
        // diagonal, fourth-order
        {
            const double fp2 = (w[a] = v[a] + 2 * ha, eval(w));
            const double fp1 = (w[a] = v[a] + ha, eval(w));
            const double fm1 = (w[a] = v[a] - ha, eval(w));
            const double fm2 = (w[a] = v[a] - 2 * ha, eval(w));
            w[a] = v[a];
            j.hess(a, a) = (-fp2 + 16 * fp1 - 30 * j.value + 16 * fm1 - fm2) / (12 * ha * ha);
        }
        for (int b = a + 1; b < m; ++b) {
            const double hb = 1e-3 * scale[static_cast<std::size_t>(b)];
            double s = 0.0;
            for (std::size_t ka = 0; ka < 4; ++ka) {
                for (std::size_t kb = 0; kb < 4; ++kb) {
                    w[a] = v[a] + kOffsets[ka] * ha;
                    w[b] = v[b] + kOffsets[kb] * hb;
                    s += kFirstWeights[ka] * kFirstWeights[kb] * eval(w);
                }
            }
            w[a] = v[a];
            w[b] = v[b];
            j.hess(a, b) = j.hess(b, a) = s / (ha * hb);
        }
    }
    if (order >= 3) fill_third_by_differencing(x, y, z, j);
    return j;
}

void Generator::fill_third_by_differencing(std::span<const double> x, std::span<const double> y, double z, Jet& j) const {
    const int n = dim_;
    const int m = 2 * n + 1;
    j.third.assign(static_cast<std::size_t>(m * m * m), 0.0);
    Vec xv = to_vec(x), yv = to_vec(y);
    std::vector<double> raw(static_cast<std::size_t>(m * m * m), 0.0);
    for (int c = 0; c < m; ++c) {
        double sc;
        if (c < n) sc = domain_.U.hi[c] - domain_.U.lo[c];
        else if (c < 2 * n) sc = domain_.V.hi[c - n] - domain_.V.lo[c - n];
        else sc = std::max(1e-3, std::min(domain_.I(x, y).width(), fd_scale_));
        const double h = 1e-2 * sc;
        Mat acc = Mat::Zero(m, m);
        for (std::size_t k = 0; k < 4; ++k) {
            Vec xs = xv, ys = yv;
            double zs = z;
            const double d = kOffsets[k] * h;
            if (c < n) xs[c] += d;
            else if (c < 2 * n) ys[c - n] += d;
            else zs += d;
            acc += kFirstWeights[k] * this->jet(as_span(xs), as_span(ys), zs, 2).hess;
        }
        acc /= h;
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b) raw[static_cast<std::size_t>((a * m + b) * m + c)] = acc(a, b);
    }
    // symmetrize over index permutations
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b)
            for (int c = 0; c < m; ++c) {
                auto at = [&](int p, int q, int r) { return raw[static_cast<std::size_t>((p * m + q) * m + r)]; };
                const double s = (at(a, b, c) + at(a, c, b) + at(b, a, c) + at(b, c, a) + at(c, a, b) + at(c, b, a)) / 6.0;
                j.third[static_cast<std::size_t>((a * m + b) * m + c)] = s;
            }
    j.order = std::max(j.order, 3);
}

// ---------------------------------------------------------------------------
// Monge-Ampere

MongeAmpereGenerator::MongeAmpereGenerator(int dim, GeneratorDomain domain)
    : Generator("monge-ampere", dim, std::move(domain), DerivativeMode::Analytic) {}

double MongeAmpereGenerator::value(std::span<const double> x, std::span<const double> y, double z) const {
    return dot(x, y) - z;
}

Jet MongeAmpereGenerator::jet(std::span<const double> x, std::span<const double> y, double z, int order) const {
    const int n = dim();
    Jet j = make_jet(n, order);
    j.value = value(x, y, z);
    for (int i = 0; i < n; ++i) {
        j.grad[i] = y[static_cast<std::size_t>(i)];
        j.grad[n + i] = x[static_cast<std::size_t>(i)];
    }
    j.grad[2 * n] = -1.0;
    if (order >= 2)
        for (int i = 0; i < n; ++i) j.hess(i, n + i) = j.hess(n + i, i) = 1.0;
    return j;
}

std::optional<double> MongeAmpereGenerator::dual_closed_form(std::span<const double> x, std::span<const double> y, double u) const {
    return dot(x, y) - u;
}

// ---------------------------------------------------------------------------
// Costs

namespace {

class DotCost final : public Cost {
public:
    std::string id() const override { return "dot"; }
    double value(std::span<const double> x, std::span<const double> y) const override { return dot(x, y); }
    void derivatives(std::span<const double> x, std::span<const double> y, int order, Jet& j) const override {
        const int n = j.n;
        for (int i = 0; i < n; ++i) {
            j.grad[i] = y[static_cast<std::size_t>(i)];
            j.grad[n + i] = x[static_cast<std::size_t>(i)];
        }
        if (order >= 2)
            for (int i = 0; i < n; ++i) j.hess(i, n + i) = j.hess(n + i, i) = 1.0;
    }
};

/// Costs of the form phi(x - y); subclasses give phi and its r-derivatives.
class DifferenceCost : public Cost {
public:
    struct PhiJet {
        double value = 0.0;
        Vec grad;
        Mat hess;
        std::vector<double> third;  // n^3
    };
    virtual PhiJet phi(const Vec& r, int order) const = 0;

    double value(std::span<const double> x, std::span<const double> y) const override {
        return phi(to_vec(x) - to_vec(y), 0).value;
    }

    void derivatives(std::span<const double> x, std::span<const double> y, int order, Jet& j) const override {
        const int n = j.n;
        const Vec r = to_vec(x) - to_vec(y);
        const PhiJet ph = phi(r, order);
        for (int i = 0; i < n; ++i) {
            j.grad[i] = ph.grad[i];
            j.grad[n + i] = -ph.grad[i];
        }
        auto sgn = [n](int v) { return v < n ? 1.0 : -1.0; };
        auto base = [n](int v) { return v < n ? v : v - n; };
        if (order >= 2)
            for (int a = 0; a < 2 * n; ++a)
                for (int b = 0; b < 2 * n; ++b) j.hess(a, b) = sgn(a) * sgn(b) * ph.hess(base(a), base(b));
        if (order >= 3) {
            const int m = j.nvars();
            for (int a = 0; a < 2 * n; ++a)
                for (int b = 0; b < 2 * n; ++b)
                    for (int c = 0; c < 2 * n; ++c)
                        j.third[static_cast<std::size_t>((a * m + b) * m + c)] =
                            sgn(a) * sgn(b) * sgn(c) *
                            ph.third[static_cast<std::size_t>((base(a) * n + base(b)) * n + base(c))];
        }
    }
};

class NegHalfSqDistCost final : public DifferenceCost {
public:
    std::string id() const override { return "neg-half-sqdist"; }
    PhiJet phi(const Vec& r, int order) const override {
        const auto n = r.size();
        PhiJet p;
        p.value = -0.5 * r.squaredNorm();
        p.grad = -r;
        if (order >= 2) p.hess = -Mat::Identity(n, n);
        if (order >= 3) p.third.assign(static_cast<std::size_t>(n * n * n), 0.0);
        return p;
    }
};

/// c = -sqrt(1 - |x - y|^2), defined for |x - y| < 1. This orientation
/// satisfies A3w; the opposite sign breaks the Loeper principle.
class RelativisticCost final : public DifferenceCost {
public:
    std::string id() const override { return "relativistic"; }
    bool admissible(std::span<const double> x, std::span<const double> y) const override {
        return (to_vec(x) - to_vec(y)).squaredNorm() < 1.0;
    }
    PhiJet phi(const Vec& r, int order) const override {
        const auto n = r.size();
        const double s2 = 1.0 - r.squaredNorm();
        const double s = std::sqrt(std::max(s2, 1e-300));
        PhiJet p;
        p.value = -s;
        p.grad = r / s;
        if (order >= 2) p.hess = Mat::Identity(n, n) / s + r * r.transpose() / (s * s * s);
        if (order >= 3) {
            p.third.assign(static_cast<std::size_t>(n * n * n), 0.0);
            const double s3 = s * s * s, s5 = s3 * s * s;
            for (Eigen::Index a = 0; a < n; ++a)
                for (Eigen::Index b = 0; b < n; ++b)
                    for (Eigen::Index c = 0; c < n; ++c) {
                        const double dab = a == b ? 1.0 : 0.0, dac = a == c ? 1.0 : 0.0, dbc = b == c ? 1.0 : 0.0;
                        p.third[static_cast<std::size_t>((a * n + b) * n + c)] =
                            (dab * r[c] + dac * r[b] + dbc * r[a]) / s3 + 3.0 * r[a] * r[b] * r[c] / s5;
                    }
        }
        return p;
    }
};

}  // namespace

std::shared_ptr<const Cost> make_cost(const std::string& id) {
    if (id == "dot") return std::make_shared<DotCost>();
    if (id == "neg-half-sqdist") return std::make_shared<NegHalfSqDistCost>();
    if (id == "relativistic") return std::make_shared<RelativisticCost>();
    throw Error(ErrorKind::ConfigError, "generator", "unknown cost id '" + id + "'");
}

std::vector<std::string> cost_ids() { return {"dot", "neg-half-sqdist", "relativistic"}; }

CostGenerator::CostGenerator(int dim, std::shared_ptr<const Cost> cost, GeneratorDomain domain)
    : Generator("cost:" + cost->id(), dim, std::move(domain), DerivativeMode::Analytic), cost_(std::move(cost)) {}

double CostGenerator::value(std::span<const double> x, std::span<const double> y, double z) const {
    return cost_->value(x, y) - z;
}

Jet CostGenerator::jet(std::span<const double> x, std::span<const double> y, double z, int order) const {
    Jet j = make_jet(dim(), order);
    j.value = value(x, y, z);
    cost_->derivatives(x, y, order, j);
    j.grad[2 * dim()] = -1.0;
    return j;
}

std::optional<double> CostGenerator::dual_closed_form(std::span<const double> x, std::span<const double> y, double u) const {
    return cost_->value(x, y) - u;
}

bool CostGenerator::contains(std::span<const double> x, std::span<const double> y, double z) const {
    return Generator::contains(x, y, z) && cost_->admissible(x, y);
}

// ---------------------------------------------------------------------------
// Perturbed-z

PerturbedZGenerator::PerturbedZGenerator(int dim, double epsilon, GeneratorDomain domain)
    : Generator("perturbed-z", dim, std::move(domain), DerivativeMode::Analytic), epsilon_(epsilon) {}

double PerturbedZGenerator::value(std::span<const double> x, std::span<const double> y, double z) const {
    const double s = dot(x, y);
    return s - z + epsilon_ * z * s;
}

double PerturbedZGenerator::dz(std::span<const double> x, std::span<const double> y, double) const {
    return epsilon_ * dot(x, y) - 1.0;
}

Jet PerturbedZGenerator::jet(std::span<const double> x, std::span<const double> y, double z, int order) const {
    const int n = dim();
    Jet j = make_jet(n, order);
    const double s = dot(x, y);
    const double a = 1.0 + epsilon_ * z;
    j.value = s - z + epsilon_ * z * s;
    for (int i = 0; i < n; ++i) {
        j.grad[i] = a * y[static_cast<std::size_t>(i)];
        j.grad[n + i] = a * x[static_cast<std::size_t>(i)];
    }
    j.grad[2 * n] = epsilon_ * s - 1.0;
    if (order >= 2) {
        for (int i = 0; i < n; ++i) {
            j.hess(i, n + i) = j.hess(n + i, i) = a;
            j.hess(i, 2 * n) = j.hess(2 * n, i) = epsilon_ * y[static_cast<std::size_t>(i)];
            j.hess(n + i, 2 * n) = j.hess(2 * n, n + i) = epsilon_ * x[static_cast<std::size_t>(i)];
        }
    }
    if (order >= 3)
        for (int i = 0; i < n; ++i) set3(j, i, n + i, 2 * n, epsilon_);
    return j;
}

std::optional<double> PerturbedZGenerator::dual_closed_form(std::span<const double> x, std::span<const double> y, double u) const {
    const double s = dot(x, y);
    const double denom = 1.0 - epsilon_ * s;
    if (denom <= 0.0) return std::nullopt;
    return (s - u) / denom;
}

// ---------------------------------------------------------------------------

CallableGenerator::CallableGenerator(std::string name, int dim, GeneratorDomain domain, Fn fn)
    : Generator(std::move(name), dim, std::move(domain), DerivativeMode::FiniteDifference), fn_(std::move(fn)) {}

GeneratorDomain default_domain(const std::string& id, int dim) {
    GeneratorDomain d;
    if (id == "monge-ampere") {
        d.U = Box::cube(dim, -1.0, 1.0);
        d.V = Box::cube(dim, -1.0, 1.0);
        d.z_interval = {-10.0, 10.0};
        d.J = {-5.0, 5.0};
    } else if (id == "perturbed-z") {
        d.U = Box::cube(dim, -0.3, 0.3);
        d.V = Box::cube(dim, -0.3, 0.3);
        d.z_interval = {-1.0, 1.0};
        d.J = {-0.5, 0.5};
    } else if (id == "cost") {
        d.U = Box::cube(dim, -0.3, 0.3);
        d.V = Box::cube(dim, -0.3, 0.3);
        d.z_interval = {-2.0, 2.0};
        d.J = {-1.0, 1.0};
    } else {
        throw Error(ErrorKind::ConfigError, "generator", "no default domain for '" + id + "'");
    }
    return d;
}

GeneratorPtr make_monge_ampere(int dim) { return make_monge_ampere(dim, default_domain("monge-ampere", dim)); }
GeneratorPtr make_monge_ampere(int dim, GeneratorDomain domain) {
    return std::make_shared<MongeAmpereGenerator>(dim, std::move(domain));
}
GeneratorPtr make_perturbed(double epsilon, int dim) { return make_perturbed(epsilon, dim, default_domain("perturbed-z", dim)); }
GeneratorPtr make_perturbed(double epsilon, int dim, GeneratorDomain domain) {
    return std::make_shared<PerturbedZGenerator>(dim, epsilon, std::move(domain));
}
GeneratorPtr make_cost_generator(const std::string& cost_id, int dim) {
    return make_cost_generator(cost_id, dim, default_domain("cost", dim));
}
GeneratorPtr make_cost_generator(const std::string& cost_id, int dim, GeneratorDomain domain) {
    return std::make_shared<CostGenerator>(dim, make_cost(cost_id), std::move(domain));
}

// ---------------------------------------------------------------------------
// Operations

double dual_g_star(const Generator& gen, std::span<const double> x, std::span<const double> y, double u) {
    if (!gen.contains_xy(x, y)) throw domain_error("dual_g_star: (x, y) outside U x V");
    const Interval I = gen.domain().I(x, y);
    const double tol = 1e-12 * (1.0 + std::abs(u));
    double a = I.lo, b = I.hi;
    const double ga = gen.value(x, y, a);
    const double gb = gen.value(x, y, b);
    if (u > ga + tol || u < gb - tol)
        throw Error(ErrorKind::Unattainable, "generator", "dual_g_star: height outside g(x, y, I_{x,y})");
    if (auto closed = gen.dual_closed_form(x, y, u)) return std::clamp(*closed, a, b);

    double z = ga == gb ? 0.5 * (a + b) : a + (ga - u) / (ga - gb) * (b - a);
    for (int it = 0; it < 200; ++it) {
        const double r = gen.value(x, y, z) - u;
        if (std::abs(r) <= tol) {
            const double dz = gen.dz(x, y, z);
            const double polished = z - r / dz;
            if (polished >= a && polished <= b && std::abs(gen.value(x, y, polished) - u) < std::abs(r)) return polished;
            return z;
        }
        if (r > 0) a = z;
        else b = z;
        const double dz = gen.dz(x, y, z);
        double next = dz < 0 ? z - r / dz : 0.5 * (a + b);
        if (!(next > a && next < b)) next = 0.5 * (a + b);
        z = next;
        if (b - a <= 4e-16 * (1.0 + std::abs(z))) return z;
    }
    throw Error(ErrorKind::NoConvergence, "generator", "dual_g_star: iteration cap reached");
}

namespace {

/// (g - u, g_x - p) at (x, y, z)
Vec yz_residual(const Jet& j, double u, const Vec& p) {
    const int n = j.n;
    Vec r(n + 1);
    r[0] = j.value - u;
    r.tail(n) = j.gx() - p;
    return r;
}

}  // namespace

YZ solve_YZ(const Generator& gen, const Vec& x, double u, const Vec& p, const std::optional<YZ>& warm) {
    const int n = gen.dim();
    if (!gen.domain().U.contains(x)) throw domain_error("solve_YZ: x outside U");
    Vec y;
    double z;
    if (warm) {
        y = warm->y;
        z = warm->z;
    } else {
        y = gen.domain().V.center();
        try {
            z = dual_g_star(gen, as_span(x), as_span(y), u);
        } catch (const Error&) {
            z = gen.domain().I(as_span(x), as_span(y)).mid();
        }
    }
    const double tol = 1e-10 * (1.0 + std::abs(u) + p.norm());
    const auto xs = as_span(x);

    Jet j = gen.jet(xs, as_span(y), z, 2);
    Vec r = yz_residual(j, u, p);
    double rnorm = r.lpNorm<Eigen::Infinity>();
    int polish = 0;
    for (int it = 0; it < 50; ++it) {
        if (rnorm <= tol) {
            if (polish++ >= 3) break;
        }
        Mat J(n + 1, n + 1);
        J.row(0).head(n) = j.gy().transpose();
        J(0, n) = j.gz();
        J.bottomLeftCorner(n, n) = j.gxy();
        J.bottomRightCorner(n, 1) = j.gxz();
        Eigen::FullPivLU<Mat> lu(J);
        if (!lu.isInvertible()) throw Error(ErrorKind::NoConvergence, "generator", "solve_YZ: singular Jacobian");
        const Vec step = lu.solve(-r);

        double lambda = 1.0;
        bool accepted = false, any_inside = false;
        for (int half = 0; half <= 30; ++half, lambda *= 0.5) {
            Vec yt = y + lambda * step.head(n);
            const double zt = z + lambda * step[n];
            if (!gen.contains(xs, as_span(yt), zt)) continue;
            any_inside = true;
            Jet jt = gen.jet(xs, as_span(yt), zt, 2);
            Vec rt = yz_residual(jt, u, p);
            const double rtn = rt.lpNorm<Eigen::Infinity>();
            if (rtn < rnorm) {
                y = std::move(yt);
                z = zt;
                j = std::move(jt);
                r = std::move(rt);
                rnorm = rtn;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (rnorm <= tol) break;
            if (!any_inside) throw Error(ErrorKind::OutOfDomain, "generator", "solve_YZ: Newton iterate left Gamma");
            throw Error(ErrorKind::NoConvergence, "generator", "solve_YZ: damping failed to reduce the residual");
        }
        if (rnorm <= tol && polish == 0) polish = 1;
        if (it == 49 && rnorm > tol) break;
    }
    if (rnorm > tol) throw Error(ErrorKind::NoConvergence, "generator", "solve_YZ: iteration cap reached");
    return YZ{y, z, 0, rnorm};
}

EMatrix matrix_E(const Jet& j) {
    EMatrix e;
    e.E = j.gxy() - j.gxz() * j.gy().transpose() / j.gz();
    e.det = e.E.determinant();
    return e;
}

EMatrix matrix_E(const Generator& gen, const Vec& x, const Vec& y, double z) {
    if (!gen.contains(x, y, z)) throw domain_error("matrix_E: point outside Gamma");
    return matrix_E(gen.jet(x, y, z, 2));
}

Vec gstar_segment(const Generator& gen, const Vec& x0, double u0, const Vec& y0, const Vec& y1, double theta) {
    if (theta == 0.0) return y0;
    if (theta == 1.0) return y1;
    const double z0 = dual_g_star(gen, x0, y0, u0);
    const double z1 = dual_g_star(gen, x0, y1, u0);
    const Vec p0 = gen.jet(x0, y0, z0, 1).gx();
    const Vec p1 = gen.jet(x0, y1, z1, 1).gx();
    const Vec pt = (1.0 - theta) * p0 + theta * p1;
    YZ start{(1.0 - theta) * y0 + theta * y1, (1.0 - theta) * z0 + theta * z1, 0, 0.0};
    try {
        if (gen.contains_xy(as_span(x0), as_span(start.y))) start.z = dual_g_star(gen, x0, start.y, u0);
    } catch (const Error&) {
    }
    return solve_YZ(gen, x0, u0, pt, start).y;
}

Vec g_segment_map(const Generator& gen, const Vec& x, const Vec& y, double z) {
    const Jet j = gen.jet(x, y, z, 1);
    return j.gy() / j.gz();
}

Vec invert_g_segment_map(const Generator& gen, const Vec& y, double z, const Vec& target, const Vec& start) {
    const int n = gen.dim();
    Vec x = start;
    auto residual = [&](const Jet& j) { Vec m = j.gy() / j.gz(); return Vec(m - target); };
    if (!gen.contains(x, y, z)) throw Error(ErrorKind::OutOfDomain, "generator", "g_segment: start outside Gamma");
    Jet j = gen.jet(x, y, z, 2);
    Vec r = residual(j);
    double rn = r.lpNorm<Eigen::Infinity>();
    const double tol = 1e-13 * (1.0 + target.norm());
    int polish = 0;
    for (int it = 0; it < 50; ++it) {
        if (rn <= tol && polish++ >= 2) break;
        // M(k, i) = d m_k / d x_i
        Mat M(n, n);
        const double gz = j.gz();
        for (int k = 0; k < n; ++k)
            for (int i = 0; i < n; ++i)
                M(k, i) = (j.hess(j.ix(i), j.iy(k)) * gz - j.grad[j.iy(k)] * j.hess(j.ix(i), j.iz())) / (gz * gz);
        Eigen::FullPivLU<Mat> lu(M);
        if (!lu.isInvertible()) throw Error(ErrorKind::NoConvergence, "generator", "g_segment: singular map");
        const Vec step = lu.solve(-r);
        double lambda = 1.0;
        bool accepted = false, any_inside = false;
        for (int half = 0; half <= 30; ++half, lambda *= 0.5) {
            Vec xt = x + lambda * step;
            if (!gen.contains(xt, y, z)) continue;
            any_inside = true;
            Jet jt = gen.jet(xt, y, z, 2);
            Vec rt = residual(jt);
            const double rtn = rt.lpNorm<Eigen::Infinity>();
            if (rtn < rn) {
                x = std::move(xt);
                j = std::move(jt);
                r = std::move(rt);
                rn = rtn;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (rn <= tol) break;
            if (!any_inside) throw Error(ErrorKind::OutOfDomain, "generator", "g_segment: iterate left U");
            throw Error(ErrorKind::NoConvergence, "generator", "g_segment: damping failed");
        }
    }
    if (rn > tol * 1e3) throw Error(ErrorKind::NoConvergence, "generator", "g_segment: iteration cap reached");
    return x;
}

Vec g_segment(const Generator& gen, const Vec& y, double z, const Vec& x0, const Vec& x1, double theta) {
    if (!gen.contains(x0, y, z) || !gen.contains(x1, y, z)) throw domain_error("g_segment: endpoint outside Gamma");
    if (theta == 0.0) return x0;
    if (theta == 1.0) return x1;
    const Vec m0 = g_segment_map(gen, x0, y, z);
    const Vec m1 = g_segment_map(gen, x1, y, z);
    const Vec target = (1.0 - theta) * m0 + theta * m1;
    return invert_g_segment_map(gen, y, z, target, (1.0 - theta) * x0 + theta * x1);
}

}  // namespace gjekit
