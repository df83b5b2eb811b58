#include "gjekit/config.hpp"

#include "gjekit_schema_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace gjekit {

namespace {

std::size_t edit_distance(const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

std::string suggestion(const std::string& s, const std::vector<std::string>& options) {
    const std::string m = nearest_match(s, options);
    return m.empty() ? "" : "; did you mean '" + m + "'?";
}

const Json& resolve(const Json& schema) {
    if (!schema.contains("$ref")) return schema;
    const std::string ref = schema["$ref"].get<std::string>();
    const std::string prefix = "#/$defs/";
    if (ref.rfind(prefix, 0) != 0) throw ConfigError("", "unsupported schema reference " + ref);
    return resolve(config_schema()["$defs"][ref.substr(prefix.size())]);
}

bool type_matches(const Json& v, const std::string& type) {
    if (type == "object") return v.is_object();
    if (type == "array") return v.is_array();
    if (type == "string") return v.is_string();
    if (type == "boolean") return v.is_boolean();
    if (type == "integer") return v.is_number_integer();
    if (type == "number") return v.is_number();
    return false;
}

void check(const Json& v, const Json& raw, const std::string& ptr) {
    const Json& s = resolve(raw);
    if (s.contains("type")) {
        const std::string type = s["type"].get<std::string>();
        if (!type_matches(v, type)) throw ConfigError(ptr, "expected " + type + ", found " + std::string(v.type_name()));
    }
    if (s.contains("enum")) {
        bool found = false;
        for (const auto& e : s["enum"]) found = found || e == v;
        if (!found) {
            std::vector<std::string> names;
            for (const auto& e : s["enum"])
                if (e.is_string()) names.push_back(e.get<std::string>());
            const std::string got = v.is_string() ? v.get<std::string>() : v.dump();
            throw ConfigError(ptr, "unknown value '" + got + "'" + (v.is_string() ? suggestion(got, names) : ""));
        }
    }
    if (v.is_number()) {
        const double x = v.get<double>();
        if (s.contains("minimum") && x < s["minimum"].get<double>())
            throw ConfigError(ptr, "value " + v.dump() + " below minimum " + s["minimum"].dump());
        if (s.contains("maximum") && x > s["maximum"].get<double>())
            throw ConfigError(ptr, "value " + v.dump() + " above maximum " + s["maximum"].dump());
        if (s.contains("exclusiveMinimum") && x <= s["exclusiveMinimum"].get<double>())
            throw ConfigError(ptr, "value " + v.dump() + " must exceed " + s["exclusiveMinimum"].dump());
    }
    if (v.is_object()) {
        if (s.contains("required"))
            for (const auto& r : s["required"])
                if (!v.contains(r.get<std::string>())) throw ConfigError(ptr, "missing required key '" + r.get<std::string>() + "'");
        const Json props = s.value("properties", Json::object());
        std::vector<std::string> names;
        for (auto it = props.begin(); it != props.end(); ++it) names.push_back(it.key());
        for (auto it = v.begin(); it != v.end(); ++it) {
            const std::string child = ptr + "/" + it.key();
            if (props.contains(it.key())) {
                check(it.value(), props[it.key()], child);
            } else if (s.value("additionalProperties", true) == false) {
                throw ConfigError(child, "unknown key '" + it.key() + "'" + suggestion(it.key(), names));
            }
        }
    }
    if (v.is_array()) {
        if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>())
            throw ConfigError(ptr, "expected at least " + s["minItems"].dump() + " items");
        if (s.contains("maxItems") && v.size() > s["maxItems"].get<std::size_t>())
            throw ConfigError(ptr, "expected at most " + s["maxItems"].dump() + " items");
        if (s.contains("items"))
            for (std::size_t i = 0; i < v.size(); ++i) check(v[i], s["items"], ptr + "/" + std::to_string(i));
    }
}

Interval interval_from_json(const Json& j) { return {j[0].get<double>(), j[1].get<double>()}; }

GridDomain::Density density_from_json(const Json& d, int dim, const std::string& ptr) {
    const std::string kind = d["kind"].get<std::string>();
    if (kind == "uniform") return nullptr;
    if (!d.contains("center") || !d.contains("sigma")) throw ConfigError(ptr, "gaussian density needs 'center' and 'sigma'");
    const Vec c = vec_from_json(d["center"], dim, ptr + "/center");
    const double s = d["sigma"].get<double>();
    return [c, s](const Vec& x) { return std::exp(-0.5 * (x - c).squaredNorm() / (s * s)); };
}

}  // namespace

const Json& config_schema() {
    static const Json schema = Json::parse(kConfigSchemaText);
    return schema;
}

void validate_config(const Json& cfg) { check(cfg, config_schema(), ""); }

Json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    Json cfg;
    try {
        cfg = Json::parse(ss.str());
    } catch (const Json::parse_error& e) {
        throw ConfigError("", std::string("config is not valid JSON: ") + e.what());
    }
    validate_config(cfg);
    return cfg;
}

std::string nearest_match(const std::string& s, const std::vector<std::string>& options) {
    std::string best;
    std::size_t d = static_cast<std::size_t>(-1);
    for (const auto& o : options) {
        const std::size_t e = edit_distance(s, o);
        if (e < d) {
            d = e;
            best = o;
        }
    }
    if (best.empty() || 2 * d > std::max(s.size(), best.size())) return "";
    return best;
}

std::vector<std::string> builtin_ids() { return {"monge-ampere", "perturbed-z", "cost"}; }

Vec vec_from_json(const Json& j, int dim, const std::string& pointer) {
    if (!j.is_array() || static_cast<int>(j.size()) != dim)
        throw ConfigError(pointer, "expected a vector of length " + std::to_string(dim));
    return json_vec(j);
}

Box box_from_json(const Json& j, int dim, const std::string& pointer) {
    const Vec lo = vec_from_json(j.at("lo"), dim, pointer + "/lo");
    const Vec hi = vec_from_json(j.at("hi"), dim, pointer + "/hi");
    if (!(lo.array() < hi.array()).all()) throw ConfigError(pointer, "box needs lo < hi in every coordinate");
    return Box(lo, hi);
}

GeneratorPtr generator_from_json(const Json& g) {
    const std::string ptr = "/generator";
    const std::string id = g.at("id").get<std::string>();
    const int dim = g.value("dim", 2);
    const std::string key = id == "cost" ? "cost" : id;
    GeneratorDomain d = default_domain(key, dim);
    if (g.contains("U")) d.U = box_from_json(g["U"], dim, ptr + "/U");
    if (g.contains("V")) d.V = box_from_json(g["V"], dim, ptr + "/V");
    if (g.contains("z_interval")) d.z_interval = interval_from_json(g["z_interval"]);
    if (g.contains("J")) d.J = interval_from_json(g["J"]);
    if (!(d.z_interval.lo < d.z_interval.hi)) throw ConfigError(ptr + "/z_interval", "interval needs lo < hi");
    if (!(d.J.lo < d.J.hi)) throw ConfigError(ptr + "/J", "interval needs lo < hi");
    if (g.contains("epsilon") && id != "perturbed-z") throw ConfigError(ptr + "/epsilon", "only perturbed-z takes epsilon");
    if (g.contains("cost") && id != "cost") throw ConfigError(ptr + "/cost", "only the cost generator takes a cost id");
    if (id == "monge-ampere") return make_monge_ampere(dim, std::move(d));
    if (id == "perturbed-z") return make_perturbed(g.value("epsilon", 0.05), dim, std::move(d));
    if (id == "cost") {
        if (!g.contains("cost")) throw ConfigError(ptr, "missing required key 'cost'");
        return make_cost_generator(g["cost"].get<std::string>(), dim, std::move(d));
    }
    throw ConfigError(ptr + "/id", "unknown generator id '" + id + "'" + suggestion(id, builtin_ids()));
}

GridDomain grid_from_json(const Json& g, int dim) {
    const std::string ptr = "/grid";
    const Box b = box_from_json(g.at("box"), dim, ptr + "/box");
    std::vector<int> res = g.at("resolution").get<std::vector<int>>();
    if (res.size() == 1) res.assign(static_cast<std::size_t>(dim), res[0]);
    if (static_cast<int>(res.size()) != dim) throw ConfigError(ptr + "/resolution", "expected one entry or one per dimension");
    const auto f = g.contains("density") ? density_from_json(g["density"], dim, ptr + "/density") : nullptr;
    const std::string shape = g.contains("mask") ? g["mask"]["shape"].get<std::string>() : "box";
    if (shape == "box") return GridDomain::box(b, res, f);
    const Json& m = g["mask"];
    if (shape == "ball") {
        if (!m.contains("radius")) throw ConfigError(ptr + "/mask", "ball mask needs 'radius'");
        const Vec c = m.contains("center") ? vec_from_json(m["center"], dim, ptr + "/mask/center") : Vec(0.5 * (b.lo + b.hi));
        return GridDomain::ball(b, res, c, m["radius"].get<double>(), f);
    }
    if (!m.contains("vertices")) throw ConfigError(ptr + "/mask", "polygon mask needs 'vertices'");
    Polygon poly;
    for (std::size_t i = 0; i < m["vertices"].size(); ++i) {
        const Vec v = vec_from_json(m["vertices"][i], 2, ptr + "/mask/vertices/" + std::to_string(i));
        poly.emplace_back(v[0], v[1]);
    }
    return GridDomain::polygon(b, res, poly, f);
}

std::vector<Target> targets_from_json(const Json& t, int dim, double total, std::optional<std::uint64_t> seed) {
    const std::string ptr = "/solve/targets";
    int kinds = 0;
    for (const char* k : {"inline", "lattice", "random", "density"}) kinds += t.contains(k) ? 1 : 0;
    if (kinds != 1) throw ConfigError(ptr, "give exactly one of 'inline', 'lattice', 'random', 'density'");
    const double scale = t.value("mass_scale", 1.0);
    std::vector<Target> out;
    if (t.contains("inline")) {
        const Json& a = t["inline"];
        bool any = false, all = true;
        for (const auto& e : a) {
            any = any || e.contains("mass");
            all = all && e.contains("mass");
        }
        if (any && !all) throw ConfigError(ptr + "/inline", "give a mass for every target or for none");
        double sum = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            out.push_back({vec_from_json(a[i]["y"], dim, ptr + "/inline/" + std::to_string(i) + "/y"),
                           all ? a[i]["mass"].get<double>() : 1.0});
            sum += out.back().mass;
        }
        // Masses are relative weights unless they already balance the source.
        if (!all || std::abs(sum - total) > 1e-9 * total)
            for (auto& x : out) x.mass *= total / sum;
    } else if (t.contains("lattice")) {
        const Box b = box_from_json(t["lattice"]["box"], dim, ptr + "/lattice/box");
        out = equal_targets(lattice_points(b, t["lattice"]["n"].get<int>()), total);
    } else if (t.contains("random")) {
        if (!seed) throw ConfigError("/seed", "random targets need a seed");
        const Json& r = t["random"];
        const Box b = box_from_json(r["box"], dim, ptr + "/random/box");
        out = equal_targets(random_points(b, r["count"].get<std::size_t>(), *seed, r.value("min_sep", 0.0)), total);
    } else {
        const Json& d = t["density"];
        const Box b = box_from_json(d["box"], dim, ptr + "/density/box");
        std::vector<int> res = d["resolution"].get<std::vector<int>>();
        if (res.size() == 1) res.assign(static_cast<std::size_t>(dim), res[0]);
        auto f = density_from_json(d, dim, ptr + "/density");
        if (!f) f = [](const Vec&) { return 1.0; };
        out = discretize_target(f, b, res, total);
    }
    for (auto& x : out) x.mass *= scale;
    return out;
}

ProblemSpec problem_from_json(const Json& cfg, std::optional<std::uint64_t> seed) {
    if (!cfg.contains("grid")) throw ConfigError("", "missing required key 'grid'");
    if (!cfg.contains("solve")) throw ConfigError("", "missing required key 'solve'");
    ProblemSpec p;
    p.gen = generator_from_json(cfg["generator"]);
    const int dim = p.gen->dim();
    p.source = std::make_shared<GridDomain>(grid_from_json(cfg["grid"], dim));
    const Json& s = cfg["solve"];
    p.targets = targets_from_json(s["targets"], dim, p.source->total_mass(), seed);
    if (s.contains("pin")) p.pin = Pin{vec_from_json(s["pin"]["x0"], dim, "/solve/pin/x0"), s["pin"]["u0"].get<double>()};
    if (s.contains("target_domain")) p.target_domain = box_from_json(s["target_domain"], dim, "/solve/target_domain");
    p.mass_tol = s.value("mass_tol", p.mass_tol);
    p.max_iter = s.value("max_iter", p.max_iter);
    p.max_rounds = s.value("max_rounds", p.max_rounds);
    p.relaxation = s.value("relaxation", p.relaxation);
    return p;
}

}  // namespace gjekit
