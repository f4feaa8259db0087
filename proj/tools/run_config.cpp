#include "run_config.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "sincon/csv.hpp"
#include "sincon/types.hpp"

namespace sincon::cli {

namespace {

double to_double(const std::string& key, const std::string& raw) {
    try {
        size_t pos = 0;
        const double v = std::stod(raw, &pos);
        if (pos != raw.size() || !std::isfinite(v)) throw std::invalid_argument(raw);
        return v;
    } catch (const std::exception&) {
        throw ContractError("config key '" + key + "': expected a finite number, got '" + raw + "'");
    }
}

long to_long(const std::string& key, const std::string& raw) {
    try {
        size_t pos = 0;
        const long v = std::stol(raw, &pos);
        if (pos != raw.size()) throw std::invalid_argument(raw);
        return v;
    } catch (const std::exception&) {
        throw ContractError("config key '" + key + "': expected an integer, got '" + raw + "'");
    }
}

void check_range(const std::string& key, double v, double lo, double hi) {
    if (v < lo || v > hi)
        throw ContractError("config key '" + key + "': value " + std::to_string(v) +
                            " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"command",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             if (v == "solve") c.command = Command::Solve;
             else if (v == "simulate") c.command = Command::Simulate;
             else if (v == "check") c.command = Command::Check;
             else if (v == "example") c.command = Command::Example;
             else if (v == "oracle") c.command = Command::Oracle;
             else
                 throw ContractError("config key '" + k +
                                     "': expected solve|simulate|check|example|oracle");
         }},
        {"problem",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             if (v != "section4" && v != "wang" && v != "linear_fk")
                 throw ContractError("config key '" + k +
                                     "': expected section4|wang|linear_fk");
             c.problem = v;
         }},
        {"param_g", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.param_g = to_double(k, v); check_range(k, c.param_g, 1e-9, 1e6); }},
        {"param_k", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.param_k = to_double(k, v); check_range(k, c.param_k, 1e-9, 1e6); }},
        {"param_a", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.param_a = to_double(k, v); check_range(k, c.param_a, -1e6, 1e6); }},
        {"param_b0", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.param_b0 = to_double(k, v); check_range(k, c.param_b0, -1e6, 1e6); }},
        {"param_sigma0", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.param_sigma0 = to_double(k, v); check_range(k, c.param_sigma0, 1e-9, 1e6); }},
        {"param_mu", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.param_mu = to_double(k, v); check_range(k, c.param_mu, -1e6, 1e6); }},
        {"param_c", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.param_c = to_double(k, v); check_range(k, c.param_c, -1e6, 1e6); }},
        {"horizon", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.horizon = to_double(k, v); check_range(k, c.horizon, 1e-6, 100.0); }},
        {"x_min", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.x_min = to_double(k, v); check_range(k, c.x_min, -1e6, 1e6); }},
        {"x_max", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.x_max = to_double(k, v); check_range(k, c.x_max, -1e6, 1e6); }},
        {"dx", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.dx = to_double(k, v); check_range(k, c.dx, 1e-6, 10.0); }},
        {"time_steps", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.time_steps = static_cast<int>(to_long(k, v));
             check_range(k, c.time_steps, 1, 1000000); }},
        {"cfl", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.cfl = to_double(k, v); check_range(k, c.cfl, 1e-3, 1.0); }},
        {"control_points_per_unit",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.control_points_per_unit = to_double(k, v);
             check_range(k, c.control_points_per_unit, 1.0, 10000.0); }},
        {"mc_paths", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.mc_paths = static_cast<int>(to_long(k, v));
             check_range(k, c.mc_paths, 1, 100000000); }},
        {"mc_steps", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.mc_steps = static_cast<int>(to_long(k, v));
             check_range(k, c.mc_steps, 1, 1000000); }},
        {"seed", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.seed = static_cast<std::uint64_t>(to_long(k, v)); }},
        {"basis_degree", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.basis_degree = static_cast<int>(to_long(k, v));
             check_range(k, c.basis_degree, 0, 10); }},
        {"x0", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.x0 = to_double(k, v); check_range(k, c.x0, -1e6, 1e6); }},
        {"sim_control", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.sim_control = to_double(k, v); check_range(k, c.sim_control, -1e6, 1e6); }},
        {"jump_node", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.jump_node = static_cast<int>(to_long(k, v));
             check_range(k, c.jump_node, -1, 1000000); }},
        {"jump_size", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.jump_size = to_double(k, v); check_range(k, c.jump_size, 0.0, 1e6); }},
        {"point_t", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.point_t = to_double(k, v); check_range(k, c.point_t, 0.0, 100.0); }},
        {"point_x", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.point_x = to_double(k, v); check_range(k, c.point_x, -1e6, 1e6); }},
        {"point",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             // Sugar for point_t, point_x.
             const auto comma = v.find(',');
             if (comma == std::string::npos)
                 throw ContractError("config key '" + k + "': expected 't,x'");
             c.point_t = to_double(k, v.substr(0, comma));
             c.point_x = to_double(k, v.substr(comma + 1));
             check_range("point_t", c.point_t, 0.0, 100.0);
             check_range("point_x", c.point_x, -1e6, 1e6);
         }},
        {"checks",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             static const std::set<std::string> known = {
                 "all", "jump", "inaction", "viscosity", "dpp",
                 "regularity", "verification", "crosscheck"};
             std::stringstream ss(v);
             std::string item;
             while (std::getline(ss, item, ',')) {
                 if (!known.count(item))
                     throw ContractError("config key '" + k + "': unknown check '" + item + "'");
             }
             c.checks = v;
         }},
        {"output_dir", [](RunConfig& c, const std::string&, const std::string& v) {
             c.output_dir = v; }},
        {"threads", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.threads = static_cast<int>(to_long(k, v));
             check_range(k, c.threads, 0, 4096); }},
    };
    return table;
}

void apply_one(RunConfig& config, const std::string& key, const std::string& value) {
    const auto it = setters().find(key);
    if (it == setters().end()) throw ContractError("unknown config key '" + key + "'");
    it->second(config, key, value);
}

void validate(const RunConfig& config) {
    if (!(config.x_min < config.x_max))
        throw ContractError("config: x_min must be < x_max");
    if ((config.x_max - config.x_min) / config.dx < 2)
        throw ContractError("config key 'dx': grid needs >= 3 nodes across [x_min, x_max]");
}

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    RunConfig config;
    std::set<std::string> seen;
    std::stringstream ss(text);
    std::string line;
    int line_no = 0;
    bool any = false;
    while (std::getline(ss, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ContractError("config line " + std::to_string(line_no) +
                                ": expected 'key = value'");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (seen.count(key))
            throw ContractError("duplicate config key '" + key + "' at line " +
                                std::to_string(line_no));
        seen.insert(key);
        apply_one(config, key, value);
        any = true;
    }
    if (!any)
        throw ContractError(
            "empty config; required keys: command, problem (plus optional grid/mc keys)");
    validate(config);
    return config;
}

void apply_overrides(RunConfig& config,
                     const std::vector<std::pair<std::string, std::string>>& kv) {
    std::set<std::string> seen;
    for (const auto& [key, value] : kv) {
        if (seen.count(key)) throw ContractError("duplicate flag '--" + key + "'");
        seen.insert(key);
        apply_one(config, key, value);
    }
    validate(config);
}

std::string command_name(Command command) {
    switch (command) {
        case Command::Solve: return "solve";
        case Command::Simulate: return "simulate";
        case Command::Check: return "check";
        case Command::Example: return "example";
        case Command::Oracle: return "oracle";
    }
    return "solve";
}

std::string render_config(const RunConfig& c) {
    std::ostringstream os;
    const auto num = [](double v) { return csv::format(v); };
    os << "command = " << command_name(c.command) << "\n";
    os << "problem = " << c.problem << "\n";
    os << "param_g = " << num(c.param_g) << "\n";
    os << "param_k = " << num(c.param_k) << "\n";
    os << "param_a = " << num(c.param_a) << "\n";
    os << "param_b0 = " << num(c.param_b0) << "\n";
    os << "param_sigma0 = " << num(c.param_sigma0) << "\n";
    os << "param_mu = " << num(c.param_mu) << "\n";
    os << "param_c = " << num(c.param_c) << "\n";
    os << "horizon = " << num(c.horizon) << "\n";
    os << "x_min = " << num(c.x_min) << "\n";
    os << "x_max = " << num(c.x_max) << "\n";
    os << "dx = " << num(c.dx) << "\n";
    os << "time_steps = " << c.time_steps << "\n";
    os << "cfl = " << num(c.cfl) << "\n";
    os << "control_points_per_unit = " << num(c.control_points_per_unit) << "\n";
    os << "mc_paths = " << c.mc_paths << "\n";
    os << "mc_steps = " << c.mc_steps << "\n";
    os << "seed = " << c.seed << "\n";
    os << "basis_degree = " << c.basis_degree << "\n";
    os << "x0 = " << num(c.x0) << "\n";
    os << "sim_control = " << num(c.sim_control) << "\n";
    os << "jump_node = " << c.jump_node << "\n";
    os << "jump_size = " << num(c.jump_size) << "\n";
    os << "point_t = " << num(c.point_t) << "\n";
    os << "point_x = " << num(c.point_x) << "\n";
    os << "checks = " << c.checks << "\n";
    os << "output_dir = " << c.output_dir << "\n";
    os << "threads = " << c.threads << "\n";
    return os.str();
}

}  // namespace sincon::cli
