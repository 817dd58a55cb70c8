#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pdeopt/runio.hpp"
#include "pdeopt/verify.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace pdeopt;

int main(int argc, char** argv) {
#ifdef _OPENMP
    omp_set_num_threads(worker_count());
#endif
    CLI::App app{"ADMM-PINN solver for nonsmooth PDE-constrained optimization"};
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "execute one experiment and write report artifacts");
    std::string problem = "ex1", method = "ota", out_dir = "out", config_file;
    std::uint64_t seed = 0;
    std::vector<std::string> sets;
    run->add_option("--problem", problem, "preset id (ex1|ex2|ex3|ex4)");
    run->add_option("--method", method, "ato|ota|reference");
    run->add_option("--seed", seed, "run seed");
    run->add_option("--out", out_dir, "output directory");
    run->add_option("--config", config_file, "key=value config file");
    run->add_option("--set", sets, "override, repeatable: --set key=value");

    // verify
    auto* verify = app.add_subcommand("verify", "run property suites");
    std::string suite = "all";
    verify->add_option("suite", suite, "jets|prox|optim|fem|all");

    // compare
    auto* compare = app.add_subcommand("compare", "relative L2 difference of two run directories");
    std::string dir_a, dir_b, out_csv;
    compare->add_option("dir_a", dir_a)->required();
    compare->add_option("dir_b", dir_b)->required();
    compare->add_option("--out", out_csv, "write the difference table to this CSV");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            RunConfig rc;
            if (!config_file.empty()) rc = parse_config_file(config_file, rc);
            if (run->count("--problem")) rc.problem = problem;
            if (run->count("--method")) rc.method = method;
            if (run->count("--seed")) rc.seed = seed;
            if (run->count("--out")) rc.out_dir = out_dir;
            for (const auto& kv : sets) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos)
                    throw ConfigError("--set expects key=value, got '" + kv + "'");
                rc.set(kv.substr(0, eq), kv.substr(eq + 1));
            }
            const RunOutcome out = cmd_run(rc);
            std::printf("wrote %s (%zu iterations, %.1fs)\n", out.report_path.c_str(),
                        out.report.rows.size(), out.report.wall_seconds);
            if (!out.report.rows.empty()) {
                const auto& last = out.report.rows.back();
                std::printf("final: primal_residual=%.6g objective=%.6g", last.primal_residual,
                            last.objective);
                if (std::isfinite(last.rel_err)) std::printf(" rel_err_u=%.6g", last.rel_err);
                std::printf("\n");
            }
            if (out.report.failed) std::printf("FAILED: %s\n", out.report.failure.c_str());
            return out.exit_code;
        }
        if (*verify) {
            const SuiteResult r = run_suite(suite, true);
            return r.ok() ? 0 : 1;
        }
        if (*compare) {
            cmd_compare(dir_a, dir_b, out_csv);
            return 0;
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
