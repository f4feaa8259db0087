#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "run_config.hpp"
#include "runner.hpp"
#include "sincon/types.hpp"

using namespace sincon;
using namespace sincon::cli;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::filesystem::path fresh_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("config round-trip: parse(render(c)) == c") {
    SUBCASE("defaults") {
        RunConfig c;
        CHECK(parse_config(render_config(c)) == c);
    }
    SUBCASE("randomized valid configs") {
        std::mt19937 gen(99);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (int trial = 0; trial < 60; ++trial) {
            RunConfig c;
            c.command = static_cast<Command>(trial % 5);
            c.problem = (trial % 3 == 0) ? "section4" : (trial % 3 == 1 ? "wang" : "linear_fk");
            c.param_g = 0.5 + unit(gen);
            c.param_k = 0.5 + unit(gen);
            c.param_c = -1.0 + 2.0 * unit(gen);
            c.horizon = 0.5 + unit(gen);
            c.x_min = -3.0 + unit(gen);
            c.x_max = 1.0 + unit(gen);
            c.dx = 0.01 + 0.2 * unit(gen);
            c.time_steps = 1 + static_cast<int>(50 * unit(gen));
            c.cfl = 0.2 + 0.7 * unit(gen);
            c.mc_paths = 10 + static_cast<int>(1e4 * unit(gen));
            c.mc_steps = 1 + static_cast<int>(100 * unit(gen));
            c.seed = static_cast<std::uint64_t>(1e6 * unit(gen));
            c.basis_degree = static_cast<int>(5 * unit(gen));
            c.x0 = -2.0 + 4.0 * unit(gen);
            c.point_t = unit(gen) * 0.5;
            c.point_x = -1.0 + 2.0 * unit(gen);
            c.jump_node = trial % 2 ? -1 : trial;
            c.jump_size = unit(gen);
            c.checks = trial % 2 ? "all" : "jump,dpp";
            c.output_dir = "/tmp/sincon_prop";
            c.threads = trial % 3;
            CHECK(parse_config(render_config(c)) == c);
        }
    }
}

TEST_CASE("strict parsing failures name the offending key") {
    SUBCASE("empty input lists required keys") {
        try {
            parse_config("");
            CHECK(false);
        } catch (const ContractError& e) {
            CHECK(std::string(e.what()).find("command") != std::string::npos);
        }
    }
    SUBCASE("negative dx is rejected with its bound") {
        try {
            parse_config("command = solve\ndx = -0.01\n");
            CHECK(false);
        } catch (const ContractError& e) {
            const std::string what = e.what();
            CHECK(what.find("dx") != std::string::npos);
            CHECK(what.find("[") != std::string::npos);
        }
    }
    SUBCASE("unknown keys are rejected") {
        CHECK_THROWS_AS(parse_config("command = solve\nmystery = 1\n"), ContractError);
    }
    SUBCASE("duplicate keys are rejected") {
        CHECK_THROWS_AS(parse_config("command = solve\ndx = 0.1\ndx = 0.2\n"), ContractError);
    }
    SUBCASE("bad enum value is rejected") {
        CHECK_THROWS_AS(parse_config("command = fly\n"), ContractError);
        CHECK_THROWS_AS(parse_config("command = solve\nproblem = mystery\n"), ContractError);
        CHECK_THROWS_AS(parse_config("command = check\nchecks = bogus\n"), ContractError);
    }
    SUBCASE("malformed numbers are rejected") {
        CHECK_THROWS_AS(parse_config("command = solve\ndx = abc\n"), ContractError);
        CHECK_THROWS_AS(parse_config("command = solve\ndx = nan\n"), ContractError);
    }
}

TEST_CASE("flag overrides layer over file config") {
    RunConfig c = parse_config("command = solve\nproblem = linear_fk\ndx = 0.1\n");
    apply_overrides(c, {{"dx", "0.05"}, {"point", "0.25,0.5"}});
    CHECK(c.dx == 0.05);
    CHECK(c.point_t == 0.25);
    CHECK(c.point_x == 0.5);
    CHECK(c.problem == "linear_fk");
    CHECK_THROWS_AS(apply_overrides(c, {{"dx", "0.1"}, {"dx", "0.2"}}), ContractError);
}

TEST_CASE("solve run emits the documented artifacts with exact terminal row") {
    const auto dir = fresh_dir("sincon_cli_solve");
    RunConfig c;
    c.command = Command::Solve;
    c.problem = "linear_fk";
    c.dx = 0.1;
    c.time_steps = 10;
    c.output_dir = dir.string();
    CHECK(run(c) == 0);
    CHECK(std::filesystem::exists(dir / "surface.csv"));
    CHECK(std::filesystem::exists(dir / "inaction.csv"));
    CHECK(std::filesystem::exists(dir / "report.txt"));

    // Terminal rows (t = T) carry Phi(x) = x exactly.
    std::ifstream in(dir / "surface.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "t,x_1,u");
    bool saw_terminal = false;
    while (std::getline(in, line)) {
        const auto c1 = line.find(','), c2 = line.rfind(',');
        const double t = std::stod(line.substr(0, c1));
        const double x = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
        const double u = std::stod(line.substr(c2 + 1));
        if (t == 1.0) {
            CHECK(u == x);
            saw_terminal = true;
        }
    }
    CHECK(saw_terminal);
}

TEST_CASE("identical configs produce byte-identical artifacts") {
    const auto dir1 = fresh_dir("sincon_cli_rep1");
    const auto dir2 = fresh_dir("sincon_cli_rep2");
    RunConfig c;
    c.command = Command::Solve;
    c.problem = "section4";
    c.dx = 0.1;
    c.time_steps = 10;
    c.seed = 42;
    c.output_dir = dir1.string();
    CHECK(run(c) == 0);
    c.output_dir = dir2.string();
    CHECK(run(c) == 0);
    CHECK(slurp(dir1 / "surface.csv") == slurp(dir2 / "surface.csv"));
    CHECK(slurp(dir1 / "inaction.csv") == slurp(dir2 / "inaction.csv"));
}

TEST_CASE("simulate run writes the path dump") {
    const auto dir = fresh_dir("sincon_cli_sim");
    RunConfig c;
    c.command = Command::Simulate;
    c.problem = "wang";
    c.mc_paths = 50;
    c.mc_steps = 20;
    c.output_dir = dir.string();
    CHECK(run(c) == 0);
    std::ifstream in(dir / "paths.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "path,step,t,x_1");
}

TEST_CASE("example run reports the closed-form benchmark value") {
    const auto dir = fresh_dir("sincon_cli_example");
    RunConfig c;
    c.command = Command::Example;
    c.problem = "section4";
    c.dx = 0.05;
    c.time_steps = 25;
    c.point_t = 0.0;
    c.point_x = 1.0;
    c.output_dir = dir.string();
    CHECK(run(c) == 0);
    const std::string report = slurp(dir / "report.txt");
    CHECK(report.find("closed_form: 0.367879441") != std::string::npos);
    CHECK(report.find("solved:") != std::string::npos);
}

TEST_CASE("check run returns 0 on pass and 2 on a failing check") {
    const auto dir = fresh_dir("sincon_cli_check");
    RunConfig c;
    c.command = Command::Check;
    c.problem = "linear_fk";
    c.dx = 0.05;
    c.time_steps = 20;
    c.mc_paths = 2000;
    c.mc_steps = 20;
    c.checks = "jump,viscosity,regularity";
    c.output_dir = dir.string();
    CHECK(run(c) == 0);
    const std::string report = slurp(dir / "report.txt");
    CHECK(report.find("all_checks_pass: true") != std::string::npos);

    // Injecting a singular jump inside the inaction region must trip the
    // verification conditions and map to exit code 2.
    RunConfig bad = c;
    bad.problem = "section4";
    bad.checks = "verification";
    bad.mc_paths = 500;
    bad.mc_steps = 20;
    bad.jump_node = 10;
    bad.jump_size = 0.5;
    bad.point_x = 1.0;
    bad.output_dir = fresh_dir("sincon_cli_check_fail").string();
    CHECK(run(bad) == 2);
}
