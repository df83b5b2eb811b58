#include <doctest.h>

#include "gjekit/cli.hpp"
#include "gjekit/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace gjekit;
namespace fs = std::filesystem;

namespace {

Json certify_config() {
    return Json::parse(R"({"version": 1, "command": "certify", "seed": 3,
                           "generator": {"id": "perturbed-z", "epsilon": 0.05},
                           "certify": {"samples": 300}})");
}

std::string scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "gjekit-tests" / name;
    fs::remove_all(p);
    return p.string();
}

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    std::stringstream s;
    s << f.rdbuf();
    return s.str();
}

std::string config_error(const Json& cfg) {
    try {
        validate_config(cfg);
    } catch (const ConfigError& e) {
        return e.what();
    }
    FAIL("expected a ConfigError");
    return {};
}

}  // namespace

TEST_SUITE("config") {
    TEST_CASE("nearest match by edit distance") {
        CHECK(nearest_match("generatr", {"generator", "grid", "output"}) == "generator");
        CHECK(nearest_match("perturbd-z", builtin_ids()) == "perturbed-z");
        CHECK(nearest_match("zzzzzz", {"grid", "seed"}).empty());
    }

    TEST_CASE("schema is versioned") {
        const Json& s = config_schema();
        CHECK(s.contains("$id"));
        CHECK(s["$id"].get<std::string>().find("v1") != std::string::npos);
        CHECK_NOTHROW(validate_config(certify_config()));
    }

    TEST_CASE("unknown keys and values name the nearest spelling") {
        Json a = certify_config();
        a["generatr"] = a["generator"];
        a.erase("generator");
        CHECK(config_error(a).find("generator") != std::string::npos);
        Json b = certify_config();
        b["generator"]["id"] = "perturbd-z";
        CHECK(config_error(b).find("perturbed-z") != std::string::npos);
        Json c = certify_config();
        c["certify"]["sampels"] = 10;
        const std::string m = config_error(c);
        CHECK(m.find("samples") != std::string::npos);
        CHECK(m.find("/certify") != std::string::npos);
    }

    TEST_CASE("sampling commands need a seed") {
        Json cfg = certify_config();
        cfg.erase("seed");
        CHECK_THROWS_AS(run_command("certify", cfg, {scratch("noseed")}), ConfigError);
        RunOptions opt{scratch("seeded"), 5};
        CHECK(run_command("certify", cfg, opt).exit_code == 0);
    }

    TEST_CASE("dimension mismatches carry a pointer") {
        try {
            vec_from_json(Json::parse("[1, 2, 3]"), 2, "/estimates/x0");
            FAIL("expected a ConfigError");
        } catch (const ConfigError& e) {
            CHECK(e.pointer() == "/estimates/x0");
        }
    }

    TEST_CASE("identical config and seed give byte-identical reports") {
        const std::string a = scratch("repro-a"), b = scratch("repro-b");
        const RunOutcome ra = run_command("certify", certify_config(), {a});
        const RunOutcome rb = run_command("certify", certify_config(), {b});
        CHECK(ra.exit_code == 0);
        CHECK(slurp(a + "/report.json") == slurp(b + "/report.json"));
        CHECK(fs::exists(a + "/metadata.json"));
        CHECK(ra.report.dump().find("wall_time") == std::string::npos);
    }

    TEST_CASE("exit codes") {
        const std::string cfgs = GJEKIT_SOURCE_DIR "/tools/configs/";
        const std::string imb_dir = scratch("imbalance");
        const RunOutcome imb = run_file("solve", cfgs + "solve_imbalance.json", {imb_dir});
        CHECK(imb.exit_code == 1);
        CHECK(imb.report["error"]["kind"] == "MassImbalance");
        CHECK(imb.report["error"]["module"] == "solver");
        CHECK(Json::parse(slurp(imb_dir + "/report.json"))["error"]["kind"] == "MassImbalance");

        Json est = Json::parse(slurp(cfgs + "estimates_paraboloid.json"));
        est["grid"]["resolution"] = {128, 128};
        est["estimates"]["heights"] = {0.01};
        est["estimates"]["windows"]["upper"] = {{"lo", 1.0}, {"hi", 2.0}};
        CHECK(run_command("estimates", est, {scratch("window")}).exit_code == 2);

        const RunOutcome missing = run_file("certify", "/nonexistent/config.json", {scratch("missing")});
        CHECK(missing.exit_code == 1);
        CHECK(missing.report["error"]["kind"] == "ConfigError");
    }

    TEST_CASE("builtins are listed and certify at their defaults") {
        const Json l = list_builtins(300, 1);
        REQUIRE(l.size() == 3);
        for (const auto& e : l) {
            CHECK(e.contains("params"));
            for (const auto& c : e["certification"]) CHECK(c["all_pass"].get<bool>());
        }
    }
}
