#include "gjekit/cli.hpp"

#include "gjekit/certify.hpp"
#include "gjekit/cone.hpp"
#include "gjekit/config.hpp"
#include "gjekit/estimates.hpp"
#include "gjekit/parallel.hpp"
#include "gjekit/report.hpp"
#include "gjekit/solver.hpp"
#include "gjekit/transform.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace gjekit {

namespace {

namespace fs = std::filesystem;

struct Output {
    fs::path dir;
    std::set<std::string> formats;
    std::vector<std::string> files;

    bool wants(const std::string& f) const { return formats.count(f) > 0; }
    std::string path(const std::string& name) {
        const std::string p = (dir / name).string();
        files.push_back(p);
        return p;
    }
};

struct CommandResult {
    Json report;
    bool pass = false;
    Json extra_metadata = Json::object();
};

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

std::uint64_t need_seed(const std::optional<std::uint64_t>& seed, const std::string& command) {
    if (!seed) throw ConfigError("/seed", "command '" + command + "' samples randomly and needs a seed");
    return *seed;
}

Json block(const Json& cfg, const std::string& name) { return cfg.contains(name) ? cfg[name] : Json::object(); }

Vec vec_or(const Json& b, const std::string& key, int dim, const Vec& fallback, const std::string& ptr) {
    return b.contains(key) ? vec_from_json(b[key], dim, ptr + "/" + key) : fallback;
}

std::vector<double> list_or(const Json& b, const std::string& key, std::vector<double> fallback) {
    return b.contains(key) ? b[key].get<std::vector<double>>() : fallback;
}

Window window_from(const Json& b, const std::string& key) {
    Window w;
    if (!b.contains("windows") || !b["windows"].contains(key)) return w;
    const Json& j = b["windows"][key];
    w.lo = j.value("lo", 0.0);
    w.hi = j.value("hi", kInf);
    return w;
}

Json window_json(const Window& w) { return {{"lo", w.lo}, {"hi", std::isinf(w.hi) ? Json(nullptr) : Json(w.hi)}}; }

std::shared_ptr<const GridDomain> grid_of(const Json& cfg, int dim) {
    if (!cfg.contains("grid")) throw ConfigError("", "missing required key 'grid'");
    return std::make_shared<GridDomain>(grid_from_json(cfg["grid"], dim));
}

Vec grid_center(const GridDomain& dom) { return 0.5 * (dom.bbox().lo + dom.bbox().hi); }

/// The solved family for `field.kind = solve` and the c1 probe.
struct Solved {
    ProblemSpec spec;
    SolveResult result;
};
Solved run_solver(const Json& cfg, const std::optional<std::uint64_t>& seed) {
    Solved s;
    s.spec = problem_from_json(cfg, seed);
    s.result = solve_second_bvp(s.spec);
    return s;
}

Json solve_summary(const SolveResult& r) { return to_json(r, false); }

SmoothField flat_ridge(double width) {
    SmoothField f;
    f.value = [width](const Vec& x) {
        const double a = std::max(std::abs(x[0]) - width, 0.0);
        return 0.5 * (a * a + x.tail(x.size() - 1).squaredNorm());
    };
    f.gradient = [width](const Vec& x) {
        Vec g = x;
        const double a = std::max(std::abs(x[0]) - width, 0.0);
        g[0] = std::copysign(a, x[0]);
        return g;
    };
    return f;
}

SmoothField smooth_field(const Json& field, int dim, const std::string& ptr) {
    const std::string kind = field["kind"].get<std::string>();
    if (kind == "quadratic") {
        Mat Q = Mat::Identity(dim, dim);
        if (field.contains("Q")) {
            if (static_cast<int>(field["Q"].size()) != dim) throw ConfigError(ptr + "/Q", "expected a square matrix");
            for (int i = 0; i < dim; ++i) Q.row(i) = vec_from_json(field["Q"][static_cast<std::size_t>(i)], dim, ptr + "/Q").transpose();
        }
        return SmoothField::quadratic(Q);
    }
    if (kind == "flat-ridge") return flat_ridge(field.value("width", 0.1));
    throw ConfigError(ptr + "/kind", "field kind '" + kind + "' is not smooth");
}

// ---------------------------------------------------------------------------

CommandResult cmd_certify(const Json& cfg, std::optional<std::uint64_t> seed, Output& out) {
    const auto gen = generator_from_json(cfg["generator"]);
    const Json b = block(cfg, "certify");
    const auto rep = certify(*gen, b.value("samples", std::size_t{10000}), need_seed(seed, "certify"));
    if (out.wants("csv")) {
        auto f = open_output(out.path("conditions.csv"), "cli");
        f << "condition,status,checked,skipped,worst\n";
        for (const auto& c : rep.conditions)
            f << c.name << ',' << to_string(c.status) << ',' << c.checked << ',' << c.skipped << ',' << c.worst << '\n';
    }
    return {to_json(rep), rep.all_pass()};
}

CommandResult cmd_transform(const Json& cfg, std::optional<std::uint64_t> seed, Output& out) {
    const auto gen = generator_from_json(cfg["generator"]);
    const int n = gen->dim();
    const std::string ptr = "/transform-verify";
    const Json b = block(cfg, "transform-verify");
    const Vec x0 = vec_or(b, "x0", n, Vec::Zero(n), ptr), y0 = vec_or(b, "y0", n, Vec::Zero(n), ptr);
    const auto ctx = make_context(gen, x0, y0, b.value("u0", 0.0), b.value("h", 1e-3));
    const auto rep = verify_expansion(*ctx, list_or(b, "radii", {0.2, 0.1, 0.05}), b.value("samples", std::size_t{1000}),
                                      need_seed(seed, "transform-verify"));
    if (out.wants("csv")) write_expansion_csv(rep, out.path("expansion.csv"));
    return {to_json(rep), rep.pass()};
}

CommandResult cmd_cone(const Json& cfg, Output& out) {
    const auto gen = generator_from_json(cfg["generator"]);
    const int n = gen->dim();
    if (n != 2) throw ConfigError("/generator/dim", "cones are built in two dimensions");
    const std::string ptr = "/cone";
    const Json b = block(cfg, "cone");
    const Vec x0 = vec_or(b, "x0", n, Vec::Zero(n), ptr), y0 = vec_or(b, "y0", n, Vec::Zero(n), ptr);
    const double h = b.value("h", 0.005);
    const auto ctx = make_context(gen, x0, y0, b.value("u0", 0.0), b.value("h_ctx", h));
    const Json base_j = b.value("base", Json::object());
    const int per_edge = base_j.value("per_edge", 256);
    if (base_j.contains("vertices") && base_j.contains("rectangle"))
        throw ConfigError(ptr + "/base", "give either 'vertices' or 'rectangle'");
    ConvexBase base = ConvexBase::rectangle(P2(0.03, 0.02), P2(0.03, 0.02), per_edge);
    if (base_j.contains("rectangle")) {
        const P2 a(base_j["rectangle"][0].get<double>(), base_j["rectangle"][1].get<double>());
        base = ConvexBase::rectangle(a, a, per_edge);
    } else if (base_j.contains("vertices")) {
        Polygon poly;
        for (std::size_t i = 0; i < base_j["vertices"].size(); ++i) {
            const Vec v = vec_from_json(base_j["vertices"][i], 2, ptr + "/base/vertices/" + std::to_string(i));
            poly.emplace_back(v[0], v[1]);
        }
        base = ConvexBase::polygon(poly, per_edge);
    }
    GConeOptions opt;
    opt.d0 = b.value("d0", opt.d0);
    opt.h0 = b.value("h0", opt.h0);
    opt.enforce = b.value("enforce", opt.enforce);
    opt.directions = b.value("directions", opt.directions);
    const GCone cone = build_gcone(ctx, base, h, opt);
    const VertexImage image = y_image_at_vertex(cone);
    P2 a = P2::Zero(), bb = P2::Zero();
    for (const auto& v : base.vertices()) {
        a = a.cwiseMax(v);
        bb = bb.cwiseMax(-v);
    }
    const double c_min = b.value("c_min", gen->name() == "monge-ampere" ? 0.25 : 0.1);
    const UpperCheck up = check_upper(cone);
    const LowerCheck lo = check_lower(cone, a, bb, c_min);
    Json rep{{"cone", to_json(cone, image)}, {"upper", to_json(up)}, {"lower", to_json(lo)}};
    if (out.wants("csv")) write_cone_csv(cone, image, out.path("cone.csv"));
    if (out.wants("svg")) write_cone_svg(cone, image, out.path("cone.svg"));
    const bool pass = up.pass && lo.pass;
    rep["pass"] = pass;
    return {rep, pass};
}

CommandResult cmd_estimates(const Json& cfg, std::optional<std::uint64_t> seed, Output& out) {
    const auto gen = generator_from_json(cfg["generator"]);
    const int n = gen->dim();
    const std::string ptr = "/estimates";
    const Json b = block(cfg, "estimates");
    const Json field = b.value("field", Json{{"kind", "quadratic"}});
    const std::string kind = field["kind"].get<std::string>();
    CaseOptions opt;
    opt.check_density = b.value("check_density", kind != "solve");
    opt.density_nodes = b.value("density_nodes", opt.density_nodes);
    opt.require_compact = true;
    CommandResult res;
    std::shared_ptr<const GridDomain> dom;
    std::shared_ptr<const SupportFamily> family;
    SmoothField smooth;
    if (kind == "solve") {
        if (b.contains("check_density") && b["check_density"].get<bool>())
            throw ConfigError(ptr + "/check_density", "the density check needs a smooth field");
        Solved s = run_solver(cfg, seed);
        dom = s.spec.source;
        family = s.result.solution;
        res.extra_metadata["solve_wall_time"] = s.result.wall_time;
        res.report["solve"] = solve_summary(s.result);
    } else {
        dom = grid_of(cfg, n);
        smooth = smooth_field(field, n, ptr + "/field");
    }
    const Vec x0 = vec_or(b, "x0", n, grid_center(*dom), ptr);
    const auto heights = list_or(b, "heights", {1e-3, 1e-2, 1e-1});
    const auto eps = list_or(b, "eps", {});
    P2 nu(1.0, 0.0);
    if (b.contains("nu")) {
        const Vec v = vec_from_json(b["nu"], 2, ptr + "/nu");
        nu = P2(v[0], v[1]).normalized();
    }
    std::vector<EstimateCase> cases;
    Json comparisons = Json::array();
    Json near_details = Json::array();
    std::optional<SectionCase> first;
    for (double h : heights) {
        opt.h = h;
        SectionCase c = family ? make_case(family, x0, *dom, opt) : make_case(gen, smooth, x0, *dom, opt);
        EstimateCase e;
        std::ostringstream id;
        id << "h=" << h;
        e.id = id.str();
        e.h = h;
        e.sup = c.sup;
        e.area = c.area;
        e.upper = upper_estimate(c);
        e.lower = lower_estimate(c);
        if (eps.empty()) {
            cases.push_back(e);
        } else {
            for (double ep : eps) {
                const NearBoundaryResult nb = near_boundary_estimate(c, nu, ep);
                EstimateCase ee = e;
                std::ostringstream eid;
                eid << e.id << ",eps=" << ep;
                ee.id = eid.str();
                ee.near = nb.ratio;
                ee.eps = ep;
                cases.push_back(ee);
                near_details.push_back(to_json(nb));
            }
        }
        if (b.contains("cone_K")) comparisons.push_back(to_json(cone_comparison(c, b["cone_K"].get<double>())));
        if (!first) first = std::move(c);
    }
    const Window wu = window_from(b, "upper"), wl = window_from(b, "lower"), wn = window_from(b, "near");
    const EstimateReport rep = summarize(cases, wu, wl, wn);
    res.report["estimates"] = to_json(rep);
    res.report["windows"] = {{"upper", window_json(wu)}, {"lower", window_json(wl)}, {"near", window_json(wn)}};
    if (!near_details.empty()) res.report["near_boundary"] = near_details;
    bool cones_ok = true;
    if (!comparisons.empty()) {
        res.report["cone_comparison"] = comparisons;
        for (const auto& c : comparisons) cones_ok = cones_ok && c["pass"].get<bool>();
    }
    if (out.wants("csv")) write_estimates_csv(rep, out.path("estimates.csv"));
    if (out.wants("svg") && first && n == 2) write_section_svg(*first, *dom, out.path("section.svg"));
    res.pass = rep.pass() && cones_ok;
    res.report["pass"] = res.pass;
    return res;
}

CommandResult cmd_solve(const Json& cfg, std::optional<std::uint64_t> seed, Output& out) {
    const std::uint64_t s = need_seed(seed, "solve");
    Solved sv = run_solver(cfg, seed);
    const Json vb = cfg["solve"].value("validate", Json::object());
    const ValidationReport v = validate_solution(*sv.result.solution, sv.spec, s, vb.value("boxes", std::size_t{64}),
                                                 vb.value("convexity_points", std::size_t{1000}));
    CommandResult res;
    res.report = {{"solve", to_json(sv.result)}, {"validation", to_json(v)}, {"targets", sv.spec.targets.size()},
                  {"nodes", sv.spec.source->nodes()}};
    res.extra_metadata["solve_wall_time"] = sv.result.wall_time;
    PointList ys;
    std::vector<double> ms;
    for (const auto& t : sv.spec.targets) {
        ys.push_back(t.y);
        ms.push_back(t.mass);
    }
    if (out.wants("csv") || out.wants("svg")) {
        const MeasureReport cells = cell_decomposition(*sv.result.solution, *sv.spec.source, ms);
        if (out.wants("csv")) {
            write_cells_csv(cells, *sv.spec.source, out.path("cells.csv"));
            auto f = open_output(out.path("history.csv"), "cli");
            f << "sweep,max_rel_error\n";
            for (std::size_t i = 0; i < sv.result.history.size(); ++i) f << i + 1 << ',' << sv.result.history[i] << '\n';
        }
        if (out.wants("svg") && sv.spec.source->dim() == 2) write_cells_svg(cells, *sv.spec.source, out.path("cells.svg"), ys);
    }
    res.pass = sv.result.converged && v.pass();
    res.report["pass"] = res.pass;
    return res;
}

CommandResult cmd_strict(const Json& cfg, std::optional<std::uint64_t> seed, Output& out) {
    const auto gen = generator_from_json(cfg["generator"]);
    const int n = gen->dim();
    const std::string ptr = "/strict-probe";
    const Json b = block(cfg, "strict-probe");
    const Json field = b.value("field", Json{{"kind", "quadratic"}});
    const auto heights = list_or(b, "heights", {1e-4, 3e-4, 1e-3, 3e-3, 1e-2});
    CommandResult res;
    StrictProbe p;
    std::shared_ptr<const GridDomain> dom;
    if (field["kind"].get<std::string>() == "solve") {
        Solved s = run_solver(cfg, seed);
        dom = s.spec.source;
        const auto fam = s.result.solution;
        const Vec x0 = vec_or(b, "x0", n, grid_center(*dom), ptr);
        const std::size_t i = fam->argmax(as_span(x0));
        if (i == SupportFamily::npos) throw ConfigError(ptr + "/x0", "no admissible support at x0");
        p = strict_convexity_probe([fam](const Vec& x) { return fam->value(x); }, *gen, x0, (*fam)[i].y, heights, *dom);
        res.report["solve"] = solve_summary(s.result);
    } else {
        dom = grid_of(cfg, n);
        const SmoothField u = smooth_field(field, n, ptr + "/field");
        const Vec x0 = vec_or(b, "x0", n, grid_center(*dom), ptr);
        const YZ yz = solve_YZ(*gen, x0, u(x0), u.grad(x0));
        p = strict_convexity_probe(u.value, *gen, x0, yz.y, heights, *dom);
    }
    res.report["probe"] = to_json(p);
    res.pass = true;
    if (b.contains("expect")) {
        const std::string e = b["expect"].get<std::string>();
        res.pass = e == "strict" ? p.strict : p.plateau;
        res.report["expect"] = e;
    }
    if (out.wants("csv")) {
        auto f = open_output(out.path("strict.csv"), "cli");
        f << "h,diameter\n";
        for (std::size_t i = 0; i < p.h.size(); ++i) f << p.h[i] << ',' << p.diam[i] << '\n';
    }
    res.report["pass"] = res.pass;
    return res;
}

CommandResult cmd_c1(const Json& cfg, std::optional<std::uint64_t> seed, Output& out) {
    const std::uint64_t s = need_seed(seed, "c1-probe");
    const Json b = block(cfg, "c1-probe");
    Solved sv = run_solver(cfg, seed);
    const auto& dom = *sv.spec.source;
    Rng rng(s, 0xc1);
    PointList pts;
    const std::size_t count = b.value("points", std::size_t{200});
    for (std::size_t i = 0; i < count; ++i) pts.push_back(dom.node(static_cast<std::size_t>(rng.next_u64() % dom.nodes())));
    const C1Probe p = c1_probe(*sv.result.solution, pts, list_or(b, "deltas", {1e-6, 1e-4, 1e-2}), b.value("snap", true));
    CommandResult res;
    res.report = {{"solve", solve_summary(sv.result)}, {"probe", to_json(p)}, {"pass", true}};
    res.extra_metadata["solve_wall_time"] = sv.result.wall_time;
    if (out.wants("csv")) {
        auto f = open_output(out.path("c1.csv"), "cli");
        f << "delta,median,max\n";
        for (std::size_t i = 0; i < p.deltas.size(); ++i) f << p.deltas[i] << ',' << p.median[i] << ',' << p.max[i] << '\n';
    }
    res.pass = true;
    return res;
}

void write_json(const std::string& path, const Json& j) {
    auto f = open_output(path, "cli");
    f << j.dump(2) << '\n';
}

}  // namespace

std::vector<std::string> command_names() {
    return {"certify", "transform-verify", "cone", "estimates", "solve", "strict-probe", "c1-probe"};
}

Json error_json(const std::exception& e, const std::string& pointer) {
    Json err{{"message", e.what()}, {"pointer", pointer}};
    if (const auto* ce = dynamic_cast<const ConfigError*>(&e)) {
        err["kind"] = to_string(ce->kind());
        err["module"] = ce->module();
        err["pointer"] = ce->pointer().empty() ? "/" : ce->pointer();
    } else if (const auto* ge = dynamic_cast<const Error*>(&e)) {
        err["kind"] = to_string(ge->kind());
        err["module"] = ge->module();
    } else {
        err["kind"] = "InternalError";
        err["module"] = "cli";
    }
    return Json{{"error", err}};
}

RunOutcome run_command(const std::string& command, const Json& cfg, const RunOptions& opt) {
    const auto t0 = std::chrono::steady_clock::now();
    RunOutcome o;
    const std::string started = utc_now();
    validate_config(cfg);
    const auto names = command_names();
    if (std::find(names.begin(), names.end(), command) == names.end()) {
        const std::string m = nearest_match(command, names);
        throw ConfigError("/command", "unknown command '" + command + "'" + (m.empty() ? "" : "; did you mean '" + m + "'?"));
    }
    if (cfg.contains("command") && cfg["command"].get<std::string>() != command)
        throw ConfigError("/command", "config is for '" + cfg["command"].get<std::string>() + "', not '" + command + "'");
    if (opt.threads > 0) set_thread_count(opt.threads);

    Output out;
    const Json ob = block(cfg, "output");
    out.dir = !opt.out_dir.empty() ? fs::path(opt.out_dir) : fs::path(ob.value("directory", std::string("gjekit-out")));
    for (const auto& f : ob.value("formats", std::vector<std::string>{"json", "csv", "svg"})) out.formats.insert(f);
    std::error_code ec;
    fs::create_directories(out.dir, ec);
    if (ec) throw ConfigError("/output/directory", "cannot create output directory '" + out.dir.string() + "'");

    std::optional<std::uint64_t> seed = opt.seed;
    if (!seed && cfg.contains("seed")) seed = cfg["seed"].get<std::uint64_t>();

    CommandResult res;
    try {
        if (command == "certify") res = cmd_certify(cfg, seed, out);
        else if (command == "transform-verify") res = cmd_transform(cfg, seed, out);
        else if (command == "cone") res = cmd_cone(cfg, out);
        else if (command == "estimates") res = cmd_estimates(cfg, seed, out);
        else if (command == "solve") res = cmd_solve(cfg, seed, out);
        else if (command == "strict-probe") res = cmd_strict(cfg, seed, out);
        else res = cmd_c1(cfg, seed, out);
        o.report = {{"command", command}, {"seed", seed ? Json(*seed) : Json(nullptr)}, {"result", res.report}, {"pass", res.pass}};
        o.pass = res.pass;
        o.exit_code = res.pass ? 0 : 2;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        o.report = error_json(e, "/" + command);
        o.report["command"] = command;
        o.pass = false;
        o.exit_code = 1;
    }
    o.metadata = {{"command", command},
                  {"started", started},
                  {"finished", utc_now()},
                  {"wall_time", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()},
                  {"threads", thread_count()},
                  {"schema", config_schema().value("$id", "")}};
    o.metadata.update(res.extra_metadata);
    write_json(out.path("report.json"), o.report);
    write_json(out.path("metadata.json"), o.metadata);
    o.files = out.files;
    return o;
}

RunOutcome run_file(const std::string& command, const std::string& config_path, const RunOptions& opt) {
    Json cfg;
    try {
        cfg = load_config(config_path);
        return run_command(command, cfg, opt);
    } catch (const std::exception& e) {
        RunOutcome o;
        o.report = error_json(e, "/");
        o.report["command"] = command;
        o.exit_code = 1;
        // Best effort: the report still lands in the output directory when one is known.
        fs::path dir = !opt.out_dir.empty() ? fs::path(opt.out_dir) : fs::path();
        if (dir.empty() && cfg.is_object() && cfg.contains("output") && cfg["output"].contains("directory"))
            dir = cfg["output"]["directory"].get<std::string>();
        if (!dir.empty()) {
            std::error_code ec;
            fs::create_directories(dir, ec);
            if (!ec) {
                const std::string p = (dir / "report.json").string();
                std::ofstream f(p);
                if (f) {
                    f << o.report.dump(2) << '\n';
                    o.files.push_back(p);
                }
            }
        }
        return o;
    }
}

Json list_builtins(std::size_t samples, std::uint64_t seed) {
    Json out = Json::array();
    auto box_json = [](const Box& b) { return Json{{"lo", vec_json(b.lo)}, {"hi", vec_json(b.hi)}}; };
    const Json& gdef = config_schema()["$defs"]["generator"]["properties"];
    for (const auto& id : builtin_ids()) {
        const GeneratorDomain d = default_domain(id, 2);
        Json e{{"id", id},
               {"defaults", {{"dim", 2}, {"U", box_json(d.U)}, {"V", box_json(d.V)},
                             {"z_interval", {d.z_interval.lo, d.z_interval.hi}}, {"J", {d.J.lo, d.J.hi}}}}};
        Json params = {{"dim", gdef["dim"]}, {"U", gdef["U"]}, {"V", gdef["V"]}, {"z_interval", gdef["z_interval"]}, {"J", gdef["J"]}};
        std::vector<std::pair<std::string, GeneratorPtr>> variants;
        if (id == "monge-ampere") {
            variants.emplace_back("", make_monge_ampere(2));
        } else if (id == "perturbed-z") {
            params["epsilon"] = gdef["epsilon"];
            e["defaults"]["epsilon"] = 0.05;
            variants.emplace_back("", make_perturbed(0.05, 2));
        } else {
            params["cost"] = gdef["cost"];
            for (const auto& c : cost_ids()) variants.emplace_back(c, make_cost_generator(c, 2));
        }
        e["params"] = params;
        Json cert = Json::array();
        for (const auto& [label, gen] : variants) {
            const ConditionReport r = certify(*gen, samples, seed);
            Json c{{"generator", gen->name()}, {"all_pass", r.all_pass()}, {"C_g", r.C_g}};
            Json st = Json::object();
            for (const auto& cond : r.conditions) st[cond.name] = to_string(cond.status);
            c["conditions"] = st;
            cert.push_back(c);
        }
        e["certification"] = cert;
        out.push_back(e);
    }
    return out;
}

}  // namespace gjekit
