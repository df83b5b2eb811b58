#pragma once

#include "gjekit/gconvex.hpp"
#include "gjekit/json.hpp"
#include "gjekit/solver.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace gjekit {

/// A schema or lookup failure at a JSON pointer into the config.
class ConfigError : public Error {
public:
    ConfigError(std::string pointer, const std::string& message)
        : Error(ErrorKind::ConfigError, "config", message + " (at " + (pointer.empty() ? "/" : pointer) + ")"),
          pointer_(std::move(pointer)) {}
    const std::string& pointer() const noexcept { return pointer_; }

private:
    std::string pointer_;
};

/// The published config schema, embedded at build time.
const Json& config_schema();

/// Checks `cfg` against the schema; unknown keys and unknown enum values name
/// the nearest allowed spelling.
void validate_config(const Json& cfg);
/// Reads, parses and validates a config file.
Json load_config(const std::string& path);

/// Closest candidate by edit distance; empty when none is within half the length.
std::string nearest_match(const std::string& s, const std::vector<std::string>& options);

/// Built-in generator ids.
std::vector<std::string> builtin_ids();
/// Generator from a `generator` block.
GeneratorPtr generator_from_json(const Json& g);
/// Source grid from a `grid` block.
GridDomain grid_from_json(const Json& g, int dim);
/// Targets from a `solve.targets` block, scaled to `total` (times mass_scale).
std::vector<Target> targets_from_json(const Json& t, int dim, double total, std::optional<std::uint64_t> seed);
/// The full problem from the `generator`, `grid` and `solve` blocks.
ProblemSpec problem_from_json(const Json& cfg, std::optional<std::uint64_t> seed);

/// Reads a vector / box from config JSON, checking the dimension.
Vec vec_from_json(const Json& j, int dim, const std::string& pointer);
Box box_from_json(const Json& j, int dim, const std::string& pointer);

}  // namespace gjekit
