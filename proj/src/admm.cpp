#include "pdeopt/admm.hpp"

#include <chrono>
#include <cmath>

#include "pdeopt/refsolve.hpp"

namespace pdeopt {

ScalarField multiplier_update(const ScalarField& lambda, const ScalarField& u,
                              const ScalarField& z, double beta) {
    if (!(lambda.lattice() == u.lattice()) || !(lambda.lattice() == z.lattice()))
        throw ConfigError("multiplier_update: lattice mismatch");
    ScalarField out = lambda;
    for (std::size_t k = 0; k < out.size(); ++k) out[k] -= beta * (u[k] - z[k]);
    return out;
}

double relative_l2_error(const ScalarField& u, const ScalarField& truth) {
    return l2_norm_diff(u, truth) / l2_norm(truth);
}

ScalarField apply_prox(const ProblemSpec& spec, const ScalarField& v) {
    switch (spec.prox) {
        case ProxKind::identity:
            return v;
        case ProxKind::box:
            return project_box(v, spec.box_a, spec.box_b);
        case ProxKind::sparse_box:
            return prox_sparse_box(v, spec.rho / spec.beta, spec.box_a, spec.box_b);
        case ProxKind::tv: {
            TvConfig cfg{spec.tv_zeta / spec.beta, spec.tv_inner};
            if (!spec.has_omega_window) return prox_tv(v, spec.gamma / spec.beta, cfg);
            // restrict to the omega window; z stays zero outside
            const Lattice& lat = spec.lattice;
            const int i0 = static_cast<int>(std::lround(spec.omega_lo[0] / lat.spacing(0)));
            const int i1 = static_cast<int>(std::lround(spec.omega_hi[0] / lat.spacing(0)));
            const int j0 = static_cast<int>(std::lround(spec.omega_lo[1] / lat.spacing(1)));
            const int j1 = static_cast<int>(std::lround(spec.omega_hi[1] / lat.spacing(1)));
            Lattice sub = Lattice::rect(spec.omega_lo[0], spec.omega_hi[0], i1 - i0 + 1,
                                        spec.omega_lo[1], spec.omega_hi[1], j1 - j0 + 1);
            ScalarField vs(sub, 0.0);
            for (int j = j0; j <= j1; ++j)
                for (int i = i0; i <= i1; ++i)
                    vs[sub.index({i - i0, j - j0, 0})] = v[lat.index({i, j, 0})];
            const ScalarField zs = prox_tv(vs, spec.gamma / spec.beta, cfg);
            ScalarField out(lat, 0.0);
            for (int j = j0; j <= j1; ++j)
                for (int i = i0; i <= i1; ++i)
                    out[lat.index({i, j, 0})] = zs[sub.index({i - i0, j - j0, 0})];
            return out;
        }
    }
    throw ConfigError("apply_prox: unknown prox kind");
}

namespace {

ScalarField truth_on_lattice(const ProblemSpec& spec) {
    if (spec.has_u_true) return spec.u_true;
    if (spec.has_exact) return ScalarField::sample(spec.lattice, spec.u_exact);
    return ScalarField(spec.lattice, 0.0);
}

ConvergenceReport run_loop(const ProblemSpec& spec, const USolver& solver, const AdmmConfig& cfg,
                           std::uint64_t seed, long* wolfe_violations) {
    const auto t0 = std::chrono::steady_clock::now();
    ConvergenceReport rep{.u = ScalarField(spec.lattice, 0.0),
                          .y = ScalarField(spec.lattice, 0.0),
                          .z = ScalarField(spec.lattice, 0.0),
                          .lambda = ScalarField(spec.lattice, 0.0)};
    rep.seed = seed;
    ScalarField z = cfg.z0.value_or(ScalarField(spec.lattice, 0.0));
    ScalarField lambda = cfg.lambda0.value_or(ScalarField(spec.lattice, 0.0));
    if (!(z.lattice() == spec.lattice) || !(lambda.lattice() == spec.lattice))
        throw ConfigError("admm_run: z0/lambda0 lattice mismatch");
    const bool has_truth = spec.has_u_true || spec.has_exact;
    const ScalarField truth = truth_on_lattice(spec);

    for (int k = 0; k < spec.outer_iters; ++k) {
        ScalarField u(spec.lattice, 0.0), y(spec.lattice, 0.0);
        try {
            auto [uk, yk] = solver(k, z, lambda);
            u = std::move(uk);
            y = std::move(yk);
        } catch (const NumericalError& e) {
            rep.failed = true;
            rep.failure = e.what();
            break;
        }
        // z-step on v = u - lambda/beta
        ScalarField v = u;
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lambda[i] / spec.beta;
        z = apply_prox(spec, v);
        lambda = multiplier_update(lambda, u, z, spec.beta);

        const double primal = l2_norm_diff(u, z);
        const ScalarField u_rep = spec.apply_support_mask(u);
        const double obj = objective_value(spec, y, u_rep, z);
        const double rel =
            has_truth ? relative_l2_error(u_rep, truth) : std::numeric_limits<double>::quiet_NaN();
        rep.rows.push_back({k, primal, obj, rel});
        rep.u = u_rep;
        rep.y = y;
        rep.z = z;
        rep.lambda = lambda;
        if (cfg.early_stop && primal < cfg.primal_tol) break;
    }
    if (wolfe_violations) rep.wolfe_violations = *wolfe_violations;
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

}  // namespace

ConvergenceReport admm_run_custom(const ProblemSpec& spec, const USolver& solver,
                                  const AdmmConfig& cfg, std::uint64_t seed) {
    return run_loop(spec, solver, cfg, seed, nullptr);
}

ConvergenceReport admm_run(const ProblemSpec& spec, const AdmmConfig& cfg, std::uint64_t seed) {
    const Rng run_rng(seed);
    long wolfe_violations = 0;

    if (cfg.method == Method::reference) {
        if (spec.id != "ex1")
            throw ConfigError("reference ADMM solver exists only for ex1 (use cmd_run for ex2)");
        Fem1dMesh mesh{spec.lattice.lower(0), spec.lattice.upper(0), spec.lattice.nodes(0) - 1};
        const ScalarField f = ScalarField::sample(spec.lattice, spec.f_rhs);
        ScalarField u_prev(spec.lattice, 0.0);
        USolver gn = [&, mesh, f](int k, const ScalarField& z, const ScalarField& lam) {
            // fixed small Gauss-Newton budget per outer iteration, warm-started
            GaussNewtonResult r =
                gauss_newton_potential(mesh, spec.nu, f, spec.data, z, lam, spec.beta,
                                       /*iterations=*/5, k == 0 ? ScalarField(spec.lattice, 0.0)
                                                                : u_prev);
            u_prev = r.u;
            const ScalarField y = fem_elliptic_1d(mesh, spec.nu, r.u, f);
            return std::make_pair(r.u, y);
        };
        return run_loop(spec, gn, cfg, seed, nullptr);
    }

    // PINN inner solver
    auto nets = std::make_shared<NetSet>();
    auto samples = std::make_shared<SampleSets>();
    auto init_rng = std::make_shared<Rng>(run_rng.derive("init"));
    *nets = NetSet::create(spec, cfg.method, *init_rng);
    {
        Rng srng = run_rng.derive("samples/k0");
        *samples = sample_points(spec, srng);
    }
    USolver pinn = [&spec, nets, samples, cfg, run_rng, &wolfe_violations](
                       int k, const ScalarField& z, const ScalarField& lam) {
        if (k > 0 && spec.train.resample_each_iter) {
            Rng srng = run_rng.derive("samples/k" + std::to_string(k));
            *samples = sample_points(spec, srng);
        }
        if (k > 0 && (cfg.cold_start || !spec.train.warm_start)) {
            Rng nrng = run_rng.derive("init/k" + std::to_string(k));
            *nets = NetSet::create(spec, cfg.method, nrng);
        }
        const int budget_k = (cfg.cold_start || !spec.train.warm_start) ? 0 : k;
        SubproblemResult r =
            solve_subproblem(spec, *nets, z, lam, cfg.method, budget_k, *samples, cfg.exec);
        wolfe_violations += r.wolfe_violations;
        return std::make_pair(std::move(r.u_lattice), std::move(r.y_lattice));
    };
    return run_loop(spec, pinn, cfg, seed, &wolfe_violations);
}

}  // namespace pdeopt
