#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace sincon::cli {

enum class Command { Solve, Simulate, Check, Example, Oracle };

// Flat, strictly parsed run configuration. The text form is `key = value`
// lines; command-line flags carry the same keys and override the file.
struct RunConfig {
    Command command = Command::Solve;
    std::string problem = "section4";  // section4 | wang | linear_fk

    // Problem parameters (used per problem; harmless otherwise).
    double param_g = 1.0;
    double param_k = 1.0;
    double param_a = 0.0;
    double param_b0 = 0.0;
    double param_sigma0 = 1.0;
    double param_mu = 0.0;
    double param_c = 1.0;
    double horizon = 1.0;

    // Space-time grid.
    double x_min = -2.0;
    double x_max = 2.0;
    double dx = 0.02;
    int time_steps = 50;
    double cfl = 0.9;
    double control_points_per_unit = 41.0;

    // Monte Carlo.
    int mc_paths = 20000;
    int mc_steps = 50;
    std::uint64_t seed = 1;
    int basis_degree = 3;

    // Simulation / evaluation specifics.
    double x0 = 1.0;
    double sim_control = 0.0;
    int jump_node = -1;  // -1 = no jump
    double jump_size = 0.0;
    double point_t = 0.0;
    double point_x = 1.0;

    std::string checks = "all";
    std::string output_dir = ".";
    int threads = 0;

    bool operator==(const RunConfig&) const = default;
};

// Strict parse: unknown keys, duplicate keys, or out-of-bounds values are
// rejected with the offending key named.
RunConfig parse_config(const std::string& text);

// Applies `--key value` style overrides (same key set, same validation).
void apply_overrides(RunConfig& config, const std::vector<std::pair<std::string, std::string>>& kv);

// Canonical text form; parse_config(render_config(c)) == c for valid c.
std::string render_config(const RunConfig& config);

std::string command_name(Command command);

}  // namespace sincon::cli
