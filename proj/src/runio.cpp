#include "pdeopt/runio.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pdeopt/refsolve.hpp"

namespace pdeopt {

namespace fs = std::filesystem;

void RunConfig::set(const std::string& key, const std::string& value) {
    auto as_num = [&](const char* what) {
        try {
            return std::stod(value);
        } catch (...) {
            throw ConfigError(std::string("invalid numeric value for ") + what + ": " + value);
        }
    };
    if (key == "problem") problem = value;
    else if (key == "method") method = value;
    else if (key == "seed") seed = static_cast<std::uint64_t>(as_num("seed"));
    else if (key == "out") out_dir = value;
    else if (key == "admm.cold_start") cold_start = as_num(key.c_str()) != 0;
    else if (key == "admm.early_stop") early_stop = as_num(key.c_str()) != 0;
    else if (key == "admm.primal_tol") primal_tol = as_num(key.c_str());
    else if (key == "expert.allow_ato") allow_ato_expert = as_num(key.c_str()) != 0;
    else if (key == "run.save_checkpoints") save_checkpoints = as_num(key.c_str()) != 0;
    else if (key == "run.serial") serial = as_num(key.c_str()) != 0;
    else overrides[key] = as_num(key.c_str());  // preset key; validated by make_problem
}

RunConfig parse_config_file(const std::string& path, RunConfig base) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        // trim
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        const auto e = line.find_last_not_of(" \t\r");
        line = line.substr(b, e - b + 1);
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
        std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
        while (!value.empty() && (value.front() == ' ' || value.front() == '\t'))
            value.erase(value.begin());
        base.set(key, value);
    }
    return base;
}

namespace {

void atomic_write(const std::string& path, const std::string& content) {
    const fs::path target(path);
    const fs::path tmp = target.parent_path() / (target.filename().string() + ".tmp");
    {
        std::ofstream os(tmp);
        if (!os) throw ConfigError("cannot open " + tmp.string());
        os << content;
    }
    fs::rename(tmp, target);
}

std::string trace_csv(const ConvergenceReport& rep) {
    std::ostringstream os;
    os << "k,primal_residual,objective,rel_err\n";
    char buf[128];
    for (const auto& r : rep.rows) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,", r.k, r.primal_residual, r.objective);
        os << buf;
        if (std::isfinite(r.rel_err)) {
            std::snprintf(buf, sizeof buf, "%.17g", r.rel_err);
            os << buf;
        }
        os << '\n';
    }
    return os.str();
}

ConvergenceReport run_reference_burgers(const ProblemSpec& spec) {
    Fem1dMesh mesh{spec.lattice.lower(0), spec.lattice.upper(0), spec.lattice.nodes(0) - 1};
    const ScalarField yd = ScalarField::sample(spec.lattice, spec.yd_fn);
    const auto t0 = std::chrono::steady_clock::now();
    ProjGradResult pg = projected_gradient_burgers(mesh, spec.nu, spec.alpha, yd, spec.box_b,
                                                   /*max_iters=*/500);
    ConvergenceReport rep{.u = pg.u, .y = pg.y, .z = pg.u, .lambda = ScalarField(spec.lattice, 0.0)};
    rep.rows.push_back({0, 0.0, objective_value(spec, pg.y, pg.u),
                        std::numeric_limits<double>::quiet_NaN()});
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!pg.converged && pg.iterations >= 500) rep.failure = "projected gradient hit iteration cap";
    return rep;
}

}  // namespace

RunOutcome cmd_run(const RunConfig& rc) {
    const Method method = method_from_string(rc.method);
    ProblemSpec spec = make_problem(rc.problem, rc.overrides);
    if (method == Method::ato && (spec.id == "ex3" || spec.id == "ex4") && !rc.allow_ato_expert)
        throw ConfigError("ato training is unstable for " + spec.id +
                          "; pass --set expert.allow_ato=1 to run it anyway");

    fs::create_directories(rc.out_dir);
    ConvergenceReport rep;
    if (method == Method::reference && spec.id == "ex2") {
        rep = run_reference_burgers(spec);
    } else if (method == Method::reference && spec.id != "ex1") {
        throw ConfigError("no reference solver for " + spec.id);
    } else {
        AdmmConfig ac;
        ac.method = method;
        ac.cold_start = rc.cold_start;
        ac.early_stop = rc.early_stop;
        ac.primal_tol = rc.primal_tol;
        ac.exec = rc.serial ? Exec::serial : Exec::parallel;
        rep = admm_run(spec, ac, rc.seed);
    }

    // artifacts
    write_field_csv_file(rc.out_dir + "/u.csv", rep.u);
    write_field_csv_file(rc.out_dir + "/y.csv", rep.y);
    write_field_csv_file(rc.out_dir + "/z.csv", rep.z);
    write_field_csv_file(rc.out_dir + "/lambda.csv", rep.lambda);
    atomic_write(rc.out_dir + "/trace.csv", trace_csv(rep));
    atomic_write(rc.out_dir + "/preset.json", preset_provenance_json(spec));

    nlohmann::json j;
    j["problem"] = spec.id;
    j["method"] = rc.method;
    j["seed"] = rc.seed;
    j["config"] = {{"cold_start", rc.cold_start},
                   {"early_stop", rc.early_stop},
                   {"primal_tol", rc.primal_tol},
                   {"serial", rc.serial},
                   {"out", rc.out_dir}};
    j["preset"] = nlohmann::json::parse(preset_provenance_json(spec));
    j["rows"] = rep.rows.size();
    j["wall_seconds"] = rep.wall_seconds;
    j["failed"] = rep.failed;
    if (!rep.failure.empty()) j["failure"] = rep.failure;
    j["wolfe_violations"] = rep.wolfe_violations;
    if (!rep.rows.empty()) {
        const auto& last = rep.rows.back();
        j["final"]["k"] = last.k;
        j["final"]["primal_residual"] = last.primal_residual;
        j["final"]["objective"] = last.objective;
        if (std::isfinite(last.rel_err)) j["final"]["rel_err_u"] = last.rel_err;
        const double zn = l2_norm(rep.z);
        j["final"]["rel_primal"] = zn > 0 ? last.primal_residual / zn : 0.0;
        double max_u = 0.0;
        for (double v : rep.u.values()) max_u = std::max(max_u, std::abs(v));
        j["final"]["max_abs_u"] = max_u;
    }
    const std::string report_path = rc.out_dir + "/report.json";
    atomic_write(report_path, j.dump(2) + "\n");

    RunOutcome out{std::move(rep), report_path, 0};
    if (out.report.failed) out.exit_code = 3;
    return out;
}

double cmd_compare(const std::string& dir_a, const std::string& dir_b, const std::string& out_csv) {
    auto load = [](const std::string& dir) {
        std::ifstream is(dir + "/report.json");
        if (!is) throw ConfigError("cannot open " + dir + "/report.json");
        nlohmann::json j;
        is >> j;
        return j;
    };
    const nlohmann::json ja = load(dir_a), jb = load(dir_b);
    if (ja["problem"] != jb["problem"])
        throw ConfigError("compare: reports solve different problems");
    ProblemSpec spec = make_problem(ja["problem"].get<std::string>());
    const auto na = ja["preset"]["lattice_nodes"], nb = jb["preset"]["lattice_nodes"];
    if (na != nb) throw ConfigError("compare: lattice mismatch");
    // rebuild the lattice the runs used (may be overridden from the preset default)
    Overrides ov;
    if (na[0].get<int>() != spec.lattice.nodes(0)) ov["lattice.nodes"] = na[0].get<double>();
    spec = make_problem(ja["problem"].get<std::string>(), ov);

    const ScalarField ua = read_field_csv_file(dir_a + "/u.csv", spec.lattice);
    const ScalarField ub = read_field_csv_file(dir_b + "/u.csv", spec.lattice);
    const ScalarField ya = read_field_csv_file(dir_a + "/y.csv", spec.lattice);
    const ScalarField yb = read_field_csv_file(dir_b + "/y.csv", spec.lattice);
    const double du = l2_norm_diff(ua, ub) / std::max(l2_norm(ub), 1e-300);
    const double dy = l2_norm_diff(ya, yb) / std::max(l2_norm(yb), 1e-300);
    std::ostringstream os;
    char buf[64];
    os << "rel_diff_u,rel_diff_y\n";
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", du, dy);
    os << buf;
    if (!out_csv.empty())
        atomic_write(out_csv, os.str());
    else
        std::fputs(os.str().c_str(), stdout);
    return du;
}

}  // namespace pdeopt
