#include "gjekit/solver.hpp"

#include "gjekit/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace gjekit {

namespace {

/// z with g(x, y, z) = u, clamped to the ends of I when u is out of reach:
/// +inf when every admissible z beats u, -inf when none does.
double threshold(const Generator& gen, std::span<const double> x, std::span<const double> y, double u) {
    if (auto z = gen.dual_closed_form(x, y, u)) return *z;
    const Interval I = gen.domain().I(x, y);
    if (u >= gen.value(x, y, I.lo)) return -kInf;
    if (u <= gen.value(x, y, I.hi)) return kInf;
    return dual_g_star(gen, x, y, u);
}

/// Cell assignment with the two leading supports cached per node.
class CellCache {
public:
    CellCache(const Generator& gen, const GridDomain& dom, const std::vector<Vec>& ys, std::vector<double>& z)
        : gen_(gen), dom_(dom), ys_(ys), z_(z), K_(dom.nodes()), N_(ys.size()), best_(K_), second_(K_), bv_(K_), sv_(K_),
          count_(N_, 0), mass_(N_, 0.0) {
        refresh();
    }

    /// Full rescan after a multi-coordinate change of z.
    void refresh() {
        parallel_for(K_, [&](std::size_t k) { rescan(k); });
        recount();
    }

    /// dm_i/dz_j from nodes within one grid spacing of a boundary between
    /// their two leading supports.
    Mat jacobian() const {
        double w0 = 0.0;
        for (int a = 0; a < dom_.dim(); ++a) w0 = std::max(w0, dom_.spacing(a));
        struct Band {
            double wb = 0.0, ws = 0.0;
        };
        std::vector<Band> band(K_);
        parallel_for(K_, [&](std::size_t k) {
            const std::size_t b = best_[k], s = second_[k];
            if (b == npos || s == npos || sv_[k] == -kInf) return;
            const auto x = dom_.point(k);
            const Jet jb = gen_.jet(x, as_span(ys_[b]), z_[b], 1), js = gen_.jet(x, as_span(ys_[s]), z_[s], 1);
            const double w = w0 * (jb.gx() - js.gx()).norm();
            if (!(w > 0) || bv_[k] - sv_[k] >= w) return;
            const double c = dom_.mass(k) / (2.0 * w);
            band[k] = {c * std::abs(jb.gz()), c * std::abs(js.gz())};
        });
        Mat H = Mat::Zero(static_cast<Eigen::Index>(N_), static_cast<Eigen::Index>(N_));
        for (std::size_t k = 0; k < K_; ++k) {
            if (band[k].wb == 0.0) continue;
            const auto b = static_cast<Eigen::Index>(best_[k]), s = static_cast<Eigen::Index>(second_[k]);
            H(b, s) += band[k].ws;
            H(s, b) += band[k].wb;
            H(b, b) -= band[k].wb;
            H(s, s) -= band[k].ws;
        }
        return H;
    }

    double support(std::size_t k, std::size_t i) const {
        const double zi = z_[i];
        const auto x = dom_.point(k);
        const Interval I = gen_.domain().I(x, as_span(ys_[i]));
        if (!(zi >= I.lo && zi <= I.hi)) return -kInf;
        return gen_.value(x, as_span(ys_[i]), zi);
    }

    void rescan(std::size_t k) {
        std::size_t b = npos, s = npos;
        double bv = -kInf, sv = -kInf;
        for (std::size_t i = 0; i < N_; ++i) {
            const double v = support(k, i);
            if (v > bv) {
                s = b;
                sv = bv;
                b = i;
                bv = v;
            } else if (v > sv) {
                s = i;
                sv = v;
            }
        }
        best_[k] = b;
        second_[k] = s;
        bv_[k] = bv;
        sv_[k] = sv;
    }

    void recount() {
        std::fill(count_.begin(), count_.end(), 0);
        std::fill(mass_.begin(), mass_.end(), 0.0);
        for (std::size_t k = 0; k < K_; ++k) {
            if (best_[k] == npos) continue;
            ++count_[best_[k]];
            mass_[best_[k]] += dom_.mass(k);
        }
    }

    /// Height at which cell i would carry `want` (plus the carried rounding
    /// error), by a weighted quantile of the per-node thresholds.
    double quantile(std::size_t i, double want, bool uniform, double& achieved) {
        std::vector<double> tau(K_);
        parallel_for(K_, [&](std::size_t k) {
            const double rival = best_[k] == i ? sv_[k] : bv_[k];
            tau[k] = rival == -kInf ? kInf : threshold(gen_, dom_.point(k), as_span(ys_[i]), rival);
        });
        const Interval I = gen_.domain().z_interval_fn ? Interval{-kInf, kInf} : gen_.domain().z_interval;
        auto clampz = [&](double z) { return std::clamp(z, I.lo, I.hi); };
        if (uniform) {
            const double m = dom_.mass(0);
            std::size_t j = static_cast<std::size_t>(std::llround(want / m));
            j = std::clamp<std::size_t>(j, 1, K_);
            achieved = static_cast<double>(j) * m;
            auto greater = std::greater<double>();
            std::nth_element(tau.begin(), tau.begin() + static_cast<std::ptrdiff_t>(j - 1), tau.end(), greater);
            const double a = tau[j - 1];
            const double b = j < K_ ? *std::max_element(tau.begin() + static_cast<std::ptrdiff_t>(j), tau.end()) : -kInf;
            return clampz(cut(a, b));
        }
        std::vector<std::size_t> order(K_);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return tau[a] > tau[b] || (tau[a] == tau[b] && a < b); });
        double cum = 0.0, best_err = kInf;
        std::size_t jbest = 1;
        for (std::size_t j = 0; j < K_; ++j) {
            cum += dom_.mass(order[j]);
            const double err = std::abs(cum - want);
            if (err < best_err) {
                best_err = err;
                jbest = j + 1;
                achieved = cum;
            }
            if (cum > want) break;
        }
        const double a = tau[order[jbest - 1]];
        const double b = jbest < K_ ? tau[order[jbest]] : -kInf;
        return clampz(cut(a, b));
    }

    /// Just below the largest finite threshold of cell i, or -inf.
    double rescue_height(std::size_t i) const {
        double t = -kInf;
        for (std::size_t k = 0; k < K_; ++k) {
            const double rival = best_[k] == i ? sv_[k] : bv_[k];
            if (rival == -kInf) continue;
            const double tk = threshold(gen_, dom_.point(k), as_span(ys_[i]), rival);
            if (tk < kInf) t = std::max(t, tk);
        }
        return t == -kInf ? t : t - 1e-9 * (1.0 + std::abs(t));
    }

    /// Applies a new z_i and refreshes the cache. Returns false when the
    /// counts move against the monotone direction.
    bool apply(std::size_t i, double z_new) {
        const double z_old = z_[i];
        const std::vector<std::size_t> before = count_;
        z_[i] = z_new;
        parallel_for(K_, [&](std::size_t k) {
            const double v = support(k, i);
            if (best_[k] == i) {
                if (better(v, i, sv_[k], second_[k]))
                    bv_[k] = v;
                else
                    rescan(k);
            } else if (second_[k] == i) {
                if (better(v, i, bv_[k], best_[k])) {
                    second_[k] = best_[k];
                    sv_[k] = bv_[k];
                    best_[k] = i;
                    bv_[k] = v;
                } else if (v >= sv_[k]) {
                    sv_[k] = v;
                } else {
                    rescan(k);
                }
            } else if (better(v, i, bv_[k], best_[k])) {
                second_[k] = best_[k];
                sv_[k] = bv_[k];
                best_[k] = i;
                bv_[k] = v;
            } else if (better(v, i, sv_[k], second_[k])) {
                second_[k] = i;
                sv_[k] = v;
            }
        });
        recount();
        if (z_new == z_old) return true;
        const bool down = z_new < z_old;
        for (std::size_t j = 0; j < N_; ++j) {
            if (j == i) {
                if (down ? count_[j] < before[j] : count_[j] > before[j]) return false;
            } else if (down ? count_[j] > before[j] : count_[j] < before[j]) {
                return false;
            }
        }
        return true;
    }

    const std::vector<std::size_t>& counts() const { return count_; }
    const std::vector<double>& masses() const { return mass_; }

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
    /// Ties go to the lower index, as in a full rescan.
    static bool better(double v, std::size_t i, double w, std::size_t j) { return v > w || (v == w && i < j); }

    static double cut(double a, double b) {
        if (a == kInf) return b == kInf ? 0.0 : (b == -kInf ? 0.0 : b + 1.0);
        if (b == -kInf) return a - std::max(1e-3, 1e-3 * std::abs(a));
        return 0.5 * (a + b);
    }

    const Generator& gen_;
    const GridDomain& dom_;
    const std::vector<Vec>& ys_;
    std::vector<double>& z_;
    std::size_t K_, N_;
    std::vector<std::size_t> best_, second_;
    std::vector<double> bv_, sv_;
    std::vector<std::size_t> count_;
    std::vector<double> mass_;
};

double max_rel_error(const std::vector<double>& got, const std::vector<Target>& want) {
    double e = 0.0;
    for (std::size_t i = 0; i < want.size(); ++i) e = std::max(e, std::abs(got[i] - want[i].mass) / want[i].mass);
    return e;
}

bool uniform_masses(const GridDomain& dom) {
    for (std::size_t k = 1; k < dom.nodes(); ++k)
        if (dom.mass(k) != dom.mass(0)) return false;
    return true;
}

struct CoreOutcome {
    int sweeps = 0;
    double error = kInf;
    std::vector<double> masses;
    std::size_t rescues = 0;
    std::size_t violations = 0;
    bool converged = false;
};

/// Damped Newton on the non-frozen heights. Steps are halved until every
/// cell stays nonempty and the mass error drops; the phase hands over to
/// coordinate sweeps once steps stall at grid granularity.
void newton_phase(const ProblemSpec& spec, CellCache& cache, std::vector<double>& z, std::size_t frozen,
                  std::vector<double>& history, CoreOutcome& out) {
    const std::size_t N = z.size();
    if (N < 2) return;
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 0; i < N; ++i)
        if (i != frozen) idx.push_back(static_cast<Eigen::Index>(i));
    const auto n = static_cast<Eigen::Index>(idx.size());
    const Interval I = spec.gen->domain().z_interval_fn ? Interval{-kInf, kInf} : spec.gen->domain().z_interval;
    auto nonempty = [&] {
        for (std::size_t c : cache.counts())
            if (c == 0) return false;
        return true;
    };
    double err = max_rel_error(cache.masses(), spec.targets);
    int stalls = 0;
    while (out.sweeps < spec.max_iter && err > spec.mass_tol) {
        const Mat H = cache.jacobian();
        Mat Hr(n, n);
        Vec r(n);
        for (Eigen::Index a = 0; a < n; ++a) {
            r[a] = spec.targets[static_cast<std::size_t>(idx[a])].mass - cache.masses()[static_cast<std::size_t>(idx[a])];
            for (Eigen::Index b = 0; b < n; ++b) Hr(a, b) = H(idx[a], idx[b]);
        }
        const Vec step = Hr.fullPivLu().solve(r);
        if (!step.allFinite()) break;
        const std::vector<double> z0 = z;
        bool accepted = false;
        double tau = 1.0, err_new = err;
        for (int t = 0; t < 12 && !accepted; ++t, tau *= 0.5) {
            for (Eigen::Index a = 0; a < n; ++a) {
                const auto i = static_cast<std::size_t>(idx[a]);
                z[i] = std::clamp(z0[i] + tau * step[a], I.lo, I.hi);
            }
            cache.refresh();
            err_new = max_rel_error(cache.masses(), spec.targets);
            accepted = nonempty() && err_new < err;
        }
        if (!accepted) {
            z = z0;
            cache.refresh();
            break;
        }
        ++out.sweeps;
        history.push_back(err_new);
        stalls = err_new > 0.7 * err ? stalls + 1 : 0;
        err = err_new;
        if (stalls >= 3) break;
    }
    out.error = err;
    out.converged = err <= spec.mass_tol;
    out.masses = cache.masses();
}

CoreOutcome balance(const ProblemSpec& spec, const std::vector<Vec>& ys, std::vector<double>& z, std::size_t frozen,
                    std::vector<double>& history) {
    const auto& dom = *spec.source;
    const std::size_t N = ys.size();
    CellCache cache(*spec.gen, dom, ys, z);
    const bool uniform = uniform_masses(dom);
    std::vector<int> rescued(N, 0);
    CoreOutcome out;
    out.error = max_rel_error(cache.masses(), spec.targets);
    if (out.error <= spec.mass_tol) {
        out.converged = true;
        out.masses = cache.masses();
        return out;
    }
    int next_newton = 0;
    while (out.sweeps < spec.max_iter) {
        if (out.sweeps >= next_newton &&
            std::all_of(cache.counts().begin(), cache.counts().end(), [](std::size_t c) { return c > 0; })) {
            const int before = out.sweeps;
            newton_phase(spec, cache, z, frozen, history, out);
            if (out.converged) break;
            next_newton = out.sweeps + (out.sweeps - before > 1 ? 10 : 50);
            if (out.sweeps >= spec.max_iter) break;
        }
        double carry = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            if (i == frozen) continue;
            double achieved = 0.0;
            const double want = spec.targets[i].mass + carry;
            const double zq = cache.quantile(i, want, uniform, achieved);
            carry = want - achieved;
            const double zn = z[i] + spec.relaxation * (zq - z[i]);
            if (!cache.apply(i, zn)) ++out.violations;
            if (cache.counts()[i] > 0) continue;
            // A cell its own update leaves empty gets one rescue: z_i just
            // below its largest threshold.
            if (rescued[i]++ > 0)
                throw Error(ErrorKind::StarvedCell, "solver", "cell " + std::to_string(i) + " starved twice; refine the grid");
            ++out.rescues;
            const double zr = cache.rescue_height(i);
            if (!(zr > -kInf) || (cache.apply(i, zr), cache.counts()[i] == 0))
                throw Error(ErrorKind::StarvedCell, "solver", "cell " + std::to_string(i) + " cannot win any node");
        }
        ++out.sweeps;
        out.error = max_rel_error(cache.masses(), spec.targets);
        history.push_back(out.error);
        if (out.error <= spec.mass_tol) {
            out.converged = true;
            break;
        }
    }
    out.masses = cache.masses();
    return out;
}

void check_spec(const ProblemSpec& spec) {
    if (!spec.gen) throw Error(ErrorKind::DomainError, "solver", "problem needs a generator");
    if (!spec.source || spec.source->nodes() == 0) throw Error(ErrorKind::EmptyDomain, "solver", "source domain has no nodes");
    if (spec.targets.empty()) throw Error(ErrorKind::PreconditionViolated, "solver", "problem needs at least one target");
    if (spec.source->dim() != spec.gen->dim()) throw Error(ErrorKind::DomainError, "solver", "source dimension differs from the generator");
    double total = 0.0;
    for (const auto& t : spec.targets) {
        if (!(t.mass > 0)) throw Error(ErrorKind::PreconditionViolated, "solver", "target masses must be positive");
        if (static_cast<int>(t.y.size()) != spec.gen->dim() || !spec.gen->domain().V.contains(t.y))
            throw Error(ErrorKind::DomainError, "solver", "target outside V");
        total += t.mass;
    }
    const double src = spec.source->total_mass();
    if (std::abs(total - src) > 1e-9 * src)
        throw Error(ErrorKind::MassImbalance, "solver",
                    "target mass " + std::to_string(total) + " differs from source mass " + std::to_string(src) +
                        " (integral of f must equal integral of f*)");
    for (std::size_t i = 0; i < spec.targets.size(); ++i)
        for (std::size_t j = i + 1; j < spec.targets.size(); ++j)
            if ((spec.targets[i].y - spec.targets[j].y).norm() == 0.0)
                throw Error(ErrorKind::PreconditionViolated, "solver", "targets must be distinct");
    for (std::size_t k = 0; k < spec.source->nodes(); ++k)
        if (!spec.gen->domain().U.contains(spec.source->point(k)))
            throw Error(ErrorKind::DomainError, "solver", "source node outside U");
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<Target> equal_targets(const PointList& ys, double total) {
    std::vector<Target> t;
    for (const auto& y : ys) t.push_back({y, total / static_cast<double>(ys.size())});
    return t;
}

PointList lattice_points(const Box& b, int n) {
    const int d = b.dim();
    PointList pts;
    std::size_t count = 1;
    for (int a = 0; a < d; ++a) count *= static_cast<std::size_t>(n);
    for (std::size_t idx = 0; idx < count; ++idx) {
        Vec y(d);
        std::size_t r = idx;
        for (int a = 0; a < d; ++a) {
            const auto i = static_cast<double>(r % static_cast<std::size_t>(n));
            r /= static_cast<std::size_t>(n);
            y[a] = b.lo[a] + (i + 0.5) * (b.hi[a] - b.lo[a]) / n;
        }
        pts.push_back(y);
    }
    return pts;
}

PointList random_points(const Box& b, std::size_t count, std::uint64_t seed, double min_sep) {
    Rng rng(seed, 0x70696e73ULL);
    PointList pts;
    for (std::size_t attempt = 0; pts.size() < count; ++attempt) {
        if (attempt > 1000 * count) throw Error(ErrorKind::PreconditionViolated, "solver", "cannot place points at the requested separation");
        const Vec y = rng.uniform_in(b);
        bool ok = true;
        for (const auto& p : pts)
            if ((p - y).norm() < min_sep) ok = false;
        if (ok) pts.push_back(y);
    }
    return pts;
}

std::vector<Target> discretize_target(const std::function<double(const Vec&)>& density, const Box& b, const std::vector<int>& res,
                                      double total) {
    const auto grid = GridDomain::box(b, res, density);
    std::vector<Target> t;
    double sum = 0.0;
    for (std::size_t k = 0; k < grid.nodes(); ++k) {
        if (grid.mass(k) <= 0) continue;
        t.push_back({grid.node(k), grid.mass(k)});
        sum += grid.mass(k);
    }
    if (!(sum > 0)) throw Error(ErrorKind::MassImbalance, "solver", "target density has no mass");
    for (auto& x : t) x.mass *= total / sum;
    return t;
}

SupportFamily pin_solution(const SupportFamily& u, const Vec& x0, double u0) {
    const auto& gen = u.gen();
    if (!gen.domain().J.contains_closed(u0)) throw Error(ErrorKind::HeightOutOfRange, "solver", "pin value outside J");
    const double s = u0 - u.value(x0);
    std::vector<double> z(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        const Vec& y = u[i].y;
        const double v = gen.value(x0, y, u[i].z) + s;
        try {
            z[i] = dual_g_star(gen, x0, y, v);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::Unattainable)
                throw Error(ErrorKind::HeightOutOfRange, "solver", "pinned support height leaves I");
            throw;
        }
        if (!gen.contains(x0, y, z[i])) throw Error(ErrorKind::HeightOutOfRange, "solver", "pinned support height leaves I");
    }
    return u.with_heights(z);
}

SolveResult solve_second_bvp(const ProblemSpec& spec) {
    const auto t0 = std::chrono::steady_clock::now();
    check_spec(spec);
    const auto& gen = *spec.gen;
    const auto& dom = *spec.source;
    const std::size_t N = spec.targets.size();
    std::vector<Vec> ys;
    for (const auto& t : spec.targets) ys.push_back(t.y);

    // Supports start tangent to a separable quadratic whose gradient carries
    // the source extent onto the target extent, so each y_i is anchored at
    // its own x_i. Anchors the generator cannot reach fall back to the
    // centroid.
    const int n = dom.dim();
    Vec centroid = Vec::Zero(n), slo = Vec::Constant(n, kInf), shi = Vec::Constant(n, -kInf);
    for (std::size_t k = 0; k < dom.nodes(); ++k) {
        if (!(dom.mass(k) > 0)) continue;
        centroid += dom.mass(k) * dom.node(k);
        slo = slo.cwiseMin(dom.node(k));
        shi = shi.cwiseMax(dom.node(k));
    }
    centroid /= dom.total_mass();
    Vec tlo = ys[0], thi = ys[0];
    for (const auto& y : ys) {
        tlo = tlo.cwiseMin(y);
        thi = thi.cwiseMax(y);
    }
    const double u_init = gen.domain().J.mid();
    std::vector<double> z(N);
    for (std::size_t i = 0; i < N; ++i) {
        Vec x = centroid;
        double psi = 0.0;
        for (int a = 0; a < n; ++a) {
            const double sw = 0.8 * (shi[a] - slo[a]), tw = thi[a] - tlo[a];
            if (!(sw > 0) || !(tw > 0)) continue;
            const double A = tw / sw, tc = 0.5 * (tlo[a] + thi[a]), d = (ys[i][a] - tc) / A;
            x[a] = centroid[a] + d;
            psi += 0.5 * A * d * d + tc * d;
        }
        try {
            if (!gen.domain().U.contains(x)) throw Error(ErrorKind::DomainError, "solver", "anchor outside U");
            z[i] = dual_g_star(gen, x, ys[i], u_init + psi);
        } catch (const Error&) {
            z[i] = dual_g_star(gen, centroid, ys[i], u_init);
        }
    }

    SolveResult r;
    std::vector<Support> sup(N);
    auto family = [&] {
        for (std::size_t i = 0; i < N; ++i) sup[i] = {ys[i], z[i]};
        return SupportFamily(spec.gen, sup);
    };
    CoreOutcome core = balance(spec, ys, z, 0, r.history);
    r.iterations = core.sweeps;
    r.rescues = core.rescues;
    if (core.violations > 0)
        throw Error(ErrorKind::NoConvergence, "solver", "cell masses moved against a height step");
    if (!core.converged) throw Error(ErrorKind::NoConvergence, "solver", "mass balance not reached within max_iter sweeps");

    if (spec.pin) {
        const Pin& pin = *spec.pin;
        if (!dom.contains(pin.x0)) throw Error(ErrorKind::DomainError, "solver", "pin point outside the source domain");
        auto residual = [&] { return std::abs(family().value(pin.x0) - pin.u0); };
        r.pin_residual = residual();
        r.pin_history.push_back(r.pin_residual);
        while (r.pin_residual > 1e-8 || !core.converged) {
            if (r.rounds >= spec.max_rounds)
                throw Error(ErrorKind::NoConvergence, "solver", "pin and mass balance not reached within max_rounds");
            const SupportFamily pinned = pin_solution(family(), pin.x0, pin.u0);
            z = pinned.heights();
            r.frozen = pinned.argmax(as_span(pin.x0));
            core = balance(spec, ys, z, r.frozen, r.history);
            r.iterations += core.sweeps;
            r.rescues += core.rescues;
            ++r.rounds;
            r.pin_residual = residual();
            r.pin_history.push_back(r.pin_residual);
            if (core.violations > 0) throw Error(ErrorKind::NoConvergence, "solver", "cell masses moved against a height step");
        }
    }
    r.solution = std::make_shared<SupportFamily>(family());
    r.masses = core.masses;
    r.max_rel_error = max_rel_error(core.masses, spec.targets);
    r.converged = core.converged;
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

ValidationReport validate_solution(const SupportFamily& u, const ProblemSpec& spec, std::uint64_t seed, std::size_t boxes,
                                   std::size_t convexity_points) {
    const auto& dom = *spec.source;
    const auto& gen = u.gen();
    std::vector<double> want;
    for (const auto& t : spec.targets) want.push_back(t.mass);
    const MeasureReport cells = cell_decomposition(u, dom, want);
    ValidationReport v;
    v.max_rel_error = cells.max_rel_error;
    v.mass_ok = cells.max_rel_error <= spec.mass_tol;

    const Box omega_star = spec.target_domain ? *spec.target_domain : gen.domain().V;
    for (std::size_t i = 0; i < u.size(); ++i)
        if (cells.counts[i] > 0 && !omega_star.contains(u[i].y)) ++v.outside;
    v.containment = v.outside == 0;

    // Discrete pinching: target mass of the cells meeting E against |E|.
    if (u.size() >= 2 && boxes > 0) {
        v.pinching_tested = true;
        v.lambda_emp = kInf;
        const Box& bb = dom.bbox();
        const Vec ext = bb.hi - bb.lo;
        for (std::size_t b = 0; b < boxes; ++b) {
            Rng rng(seed, (std::uint64_t{7} << 40) + b);
            const double frac = rng.uniform(0.5, 0.8);
            Vec lo(dom.dim()), hi(dom.dim());
            for (int a = 0; a < dom.dim(); ++a) {
                lo[a] = bb.lo[a] + rng.uniform() * (1.0 - frac) * ext[a];
                hi[a] = lo[a] + frac * ext[a];
            }
            const Box E(lo, hi);
            std::vector<char> hit(u.size(), 0);
            std::size_t nodes = 0;
            for (std::size_t k = 0; k < dom.nodes(); ++k) {
                if (!E.contains(dom.point(k))) continue;
                ++nodes;
                if (cells.owner[k] != SupportFamily::npos) hit[cells.owner[k]] = 1;
            }
            if (nodes == 0) continue;
            double m = 0.0;
            for (std::size_t i = 0; i < u.size(); ++i)
                if (hit[i]) m += spec.targets[i].mass;
            const double ratio = m / (static_cast<double>(nodes) * dom.cell_volume());
            v.lambda_emp = std::min(v.lambda_emp, ratio);
            v.Lambda_emp = std::max(v.Lambda_emp, ratio);
            ++v.boxes;
        }
        if (v.boxes == 0) {
            v.pinching_tested = false;
            v.lambda_emp = 0.0;
        }
    }

    // The active support at x stays below u at other points.
    std::vector<double> worst(convexity_points, 0.0);
    parallel_for(convexity_points, [&](std::size_t m) {
        Rng rng(seed, (std::uint64_t{8} << 40) + m);
        auto draw = [&] { return dom.node(static_cast<std::size_t>(rng.next_u64() % dom.nodes())); };
        const Vec x = draw();
        const std::size_t i = u.argmax(as_span(x));
        if (i == SupportFamily::npos) return;
        double w = std::abs(gen.value(x, u[i].y, u[i].z) - u.value(x));
        for (int t = 0; t < 4; ++t) {
            const Vec xp = draw();
            w = std::max(w, gen.value(xp, u[i].y, u[i].z) - u.value(xp));
        }
        worst[m] = w;
    });
    v.convexity_checked = convexity_points;
    for (double w : worst) v.convexity_worst = std::max(v.convexity_worst, w);
    v.convexity = v.convexity_worst <= 1e-10;
    return v;
}

Json to_json(const SolveResult& r, bool with_supports) {
    Json j{{"iterations", r.iterations},   {"rounds", r.rounds},
           {"history", r.history},         {"pin_history", r.pin_history},
           {"pin_residual", r.pin_residual}, {"max_rel_error", r.max_rel_error},
           {"masses", r.masses},           {"frozen", r.frozen},
           {"rescues", r.rescues},         {"converged", r.converged}};
    if (with_supports && r.solution) {
        Json s = Json::array();
        for (const auto& sp : r.solution->supports()) s.push_back({{"y", vec_json(sp.y)}, {"z", sp.z}});
        j["supports"] = s;
    }
    return j;
}

Json to_json(const ValidationReport& r) {
    Json j{{"pass", r.pass()},
           {"containment", r.containment},
           {"outside", r.outside},
           {"pinching_tested", r.pinching_tested},
           {"boxes", r.boxes},
           {"convexity", r.convexity},
           {"convexity_checked", r.convexity_checked},
           {"convexity_worst", r.convexity_worst},
           {"max_rel_error", r.max_rel_error},
           {"mass_ok", r.mass_ok}};
    if (r.pinching_tested) {
        j["lambda_emp"] = r.lambda_emp;
        j["Lambda_emp"] = r.Lambda_emp;
    }
    return j;
}

}  // namespace gjekit
