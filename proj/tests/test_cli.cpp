#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "pdeopt/runio.hpp"

using namespace pdeopt;
namespace fs = std::filesystem;

namespace {

#ifndef PDEOPT_CLI_PATH
#define PDEOPT_CLI_PATH "./pdeopt"
#endif

int run_cli(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " " + std::string(PDEOPT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
    std::ifstream is(path);
    REQUIRE(is.good());
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

const char* kTinyOta =
    "run --problem ex1 --method ota --seed 7 --set lattice.nodes=17 --set train.adam_iters=4 "
    "--set train.lbfgs_iters=2 --set admm.outer_iters=2 --set prox.tv_inner=10";

}  // namespace

TEST_CASE("cli run writes the full artifact set; reference trace has 20 rows") {
    const std::string out = "/tmp/pdeopt_cli_ref";
    fs::remove_all(out);
    const int rc = run_cli("run --problem ex1 --method reference --seed 7 --out " + out);
    CHECK(rc == 0);
    for (const char* f : {"report.json", "trace.csv", "u.csv", "y.csv", "z.csv", "lambda.csv",
                          "preset.json"})
        CHECK(fs::exists(out + "/" + f));
    // 20 outer iterations -> header + 20 rows
    std::istringstream is(slurp(out + "/trace.csv"));
    std::string line;
    int rows = -1;
    while (std::getline(is, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 20);
    // no leftover temporaries
    for (const auto& e : fs::directory_iterator(out))
        CHECK(e.path().extension() != ".tmp");
}

TEST_CASE("same config twice produces byte-identical traces") {
    const std::string a = "/tmp/pdeopt_cli_det_a", b = "/tmp/pdeopt_cli_det_b";
    fs::remove_all(a);
    fs::remove_all(b);
    CHECK(run_cli(std::string(kTinyOta) + " --out " + a) == 0);
    CHECK(run_cli(std::string(kTinyOta) + " --out " + b) == 0);
    CHECK(slurp(a + "/trace.csv") == slurp(b + "/trace.csv"));
    CHECK(slurp(a + "/u.csv") == slurp(b + "/u.csv"));
}

TEST_CASE("traces are identical for PDEOPT_THREADS=1 and 2") {
    const std::string a = "/tmp/pdeopt_cli_t1", b = "/tmp/pdeopt_cli_t2";
    fs::remove_all(a);
    fs::remove_all(b);
    CHECK(run_cli(std::string(kTinyOta) + " --out " + a, "PDEOPT_THREADS=1") == 0);
    CHECK(run_cli(std::string(kTinyOta) + " --out " + b, "PDEOPT_THREADS=2") == 0);
    CHECK(slurp(a + "/trace.csv") == slurp(b + "/trace.csv"));
    CHECK(slurp(a + "/u.csv") == slurp(b + "/u.csv"));
}

TEST_CASE("unknown configuration keys exit with code 2 naming the key") {
    CHECK(run_cli("run --problem ex1 --set admm.bogus=1 --out /tmp/pdeopt_cli_bad") == 2);
    CHECK(run_cli("run --problem ex7 --out /tmp/pdeopt_cli_bad") == 2);
    CHECK(run_cli("run --problem ex4 --method ato --out /tmp/pdeopt_cli_bad") == 2);
}

TEST_CASE("verify subcommand runs the property suites") {
    CHECK(run_cli("verify prox") == 0);
    CHECK(run_cli("verify nosuchsuite") == 2);
}

TEST_CASE("compare of a report with itself is all zeros") {
    const std::string out = "/tmp/pdeopt_cli_cmp";
    fs::remove_all(out);
    REQUIRE(run_cli("run --problem ex1 --method reference --seed 3 --out " + out) == 0);
    const double d = cmd_compare(out, out, "/tmp/pdeopt_cli_cmp_diff.csv");
    CHECK(d == 0.0);
    const std::string csv = slurp("/tmp/pdeopt_cli_cmp_diff.csv");
    CHECK(csv.find("rel_diff_u") != std::string::npos);
    CHECK(csv.find("\n0,0") != std::string::npos);
}

TEST_CASE("config file parsing: dotted keys, comments, echo in report") {
    const std::string cfgp = "/tmp/pdeopt_cli_cfg.txt";
    {
        std::ofstream os(cfgp);
        os << "# tiny run\n";
        os << "problem = ex1\n";
        os << "method = reference\n";
        os << "seed = 11\n";
        os << "admm.beta = 0.2\n";
        os << "admm.outer_iters = 3\n";
    }
    const std::string out = "/tmp/pdeopt_cli_cfgout";
    fs::remove_all(out);
    CHECK(run_cli("run --config " + cfgp + " --out " + out) == 0);
    const std::string rep = slurp(out + "/report.json");
    CHECK(rep.find("\"beta\": 0.2") != std::string::npos);
    CHECK(rep.find("\"outer_iters\": 3") != std::string::npos);
    CHECK(rep.find("\"seed\": 11") != std::string::npos);

    RunConfig rc = parse_config_file(cfgp);
    CHECK(rc.problem == "ex1");
    CHECK(rc.seed == 11);
    CHECK(rc.overrides.at("admm.beta") == 0.2);
    CHECK_THROWS_AS(parse_config_file("/tmp/definitely_missing_cfg.txt"), ConfigError);
}
