#include "pdeopt/pinnsolve.hpp"

#include <cmath>
#include <memory>

namespace pdeopt {

PointBatch lattice_points(const Lattice& lat) {
    PointBatch pts(static_cast<int>(lat.size()), lat.dim());
    for (std::size_t k = 0; k < lat.size(); ++k) {
        const Point x = lat.coords(k);
        for (int a = 0; a < lat.dim(); ++a) pts.at(a, static_cast<int>(k)) = x[a];
    }
    return pts;
}

ScalarField eval_on_lattice(const Mlp& net, const AnsatzSpec& ansatz, const Lattice& lat,
                            Exec exec) {
    JetEvaluator ev(net, ansatz, lat.dim(), JetDepth::value);
    const PointBatch pts = lattice_points(lat);
    JetBatch out;
    ev.forward(pts, out, exec);
    return ScalarField(lat, std::move(out.value));
}

SampleSets sample_points(const ProblemSpec& spec, Rng& rng) {
    SampleSets s;
    if (spec.id == "ex1" || spec.id == "ex2") {
        s.interior = lattice_points(spec.lattice);
    } else if (spec.id == "ex3") {
        const int m = spec.train.n_interior;  // m x m fixed interior grid
        s.interior = PointBatch(m * m, 2);
        for (int j = 0; j < m; ++j)
            for (int i = 0; i < m; ++i) {
                const int k = j * m + i;
                s.interior.at(0, k) = double(i + 1) / (m + 1);
                s.interior.at(1, k) = double(j + 1) / (m + 1);
            }
        const int nb = spec.train.n_boundary;  // per side
        s.boundary = PointBatch(4 * nb, 2);
        s.boundary_normals.resize(4 * nb);
        for (int side = 0; side < 4; ++side)
            for (int j = 0; j < nb; ++j) {
                const int k = side * nb + j;
                const double t = (j + 0.5) / nb;
                switch (side) {
                    case 0: s.boundary.at(0, k) = 0.0; s.boundary.at(1, k) = t;
                            s.boundary_normals[k] = {-1.0, 0.0, 0.0}; break;
                    case 1: s.boundary.at(0, k) = 1.0; s.boundary.at(1, k) = t;
                            s.boundary_normals[k] = {1.0, 0.0, 0.0}; break;
                    case 2: s.boundary.at(0, k) = t; s.boundary.at(1, k) = 0.0;
                            s.boundary_normals[k] = {0.0, -1.0, 0.0}; break;
                    default: s.boundary.at(0, k) = t; s.boundary.at(1, k) = 1.0;
                             s.boundary_normals[k] = {0.0, 1.0, 0.0}; break;
                }
            }
    } else if (spec.id == "ex4") {
        const int ni = spec.train.n_interior;
        s.interior = PointBatch(ni, 3);
        for (int i = 0; i < ni; ++i) {
            s.interior.at(0, i) = rng.uniform();
            s.interior.at(1, i) = rng.uniform();
            s.interior.at(2, i) = rng.uniform();
        }
        const int nb = spec.train.n_boundary;
        s.boundary = PointBatch(nb, 3);
        for (int i = 0; i < nb; ++i) {
            const int side = static_cast<int>(rng.below(4));
            const double pos = rng.uniform();
            const double t = rng.uniform();
            double x0 = 0, x1 = 0;
            switch (side) {
                case 0: x0 = 0.0; x1 = pos; break;
                case 1: x0 = 1.0; x1 = pos; break;
                case 2: x0 = pos; x1 = 0.0; break;
                default: x0 = pos; x1 = 1.0; break;
            }
            s.boundary.at(0, i) = x0;
            s.boundary.at(1, i) = x1;
            s.boundary.at(2, i) = t;
        }
        const int n0 = spec.train.n_initial;
        s.initial = PointBatch(n0, 3);
        for (int i = 0; i < n0; ++i) {
            s.initial.at(0, i) = rng.uniform();
            s.initial.at(1, i) = rng.uniform();
            s.initial.at(2, i) = 0.0;  // time coordinate set per use (t=0 or t=T)
        }
    } else {
        throw ConfigError("sample_points: unknown preset");
    }
    return s;
}

NetSet NetSet::create(const ProblemSpec& spec, Method method, Rng& rng) {
    NetSet n;
    Rng ry = rng.derive("init/net-y");
    n.y = Mlp::init(spec.train.y_widths, ry);
    if (method == Method::ato || spec.id == "ex1") {
        Rng ru = rng.derive("init/net-u");
        n.u = Mlp::init(spec.train.u_widths, ru);
        n.has_u = true;
    }
    if (method == Method::ota) {
        Rng rp = rng.derive("init/net-p");
        n.p = Mlp::init(spec.train.p_widths, rp);
        n.has_p = true;
    }
    return n;
}

namespace {

// Per-point channel data captured by the loss blocks.
struct Aux {
    std::vector<double> lambda, z, data, f;
};

std::shared_ptr<Aux> build_aux(const ProblemSpec& spec, const PointBatch& pts,
                               const ScalarField& z, const ScalarField& lam, bool want_fields,
                               bool want_data, bool want_f) {
    auto aux = std::make_shared<Aux>();
    const int n = pts.n;
    if (want_fields) {
        aux->lambda.resize(n);
        aux->z.resize(n);
    }
    if (want_data) aux->data.resize(n);
    if (want_f) aux->f.resize(n);
    for (int i = 0; i < n; ++i) {
        const Point x = pts.point(i);
        if (want_fields) {
            aux->lambda[i] = interp(lam, x);
            aux->z[i] = interp(z, x);
        }
        if (want_data) {
            if (spec.id == "ex2" || spec.id == "ex4")
                aux->data[i] = spec.yd_fn(x);
            else
                aux->data[i] = interp(spec.data, x);
        }
        if (want_f) aux->f[i] = spec.f_rhs(x);
    }
    return aux;
}

PointBatch clone_with_time(const PointBatch& pts, double t) {
    PointBatch out = pts;
    for (int i = 0; i < out.n; ++i) out.at(2, i) = t;
    return out;
}

}  // namespace

CompositeLoss assemble_ato_loss(const ProblemSpec& spec, NetSet& nets, const ScalarField& z,
                                const ScalarField& lambda, const SampleSets& samples) {
    if (!nets.has_u) throw ConfigError("assemble_ato_loss: control network missing");
    CompositeLoss loss;
    loss.nets.push_back({&nets.u, spec.train.u_ansatz, "u"});
    loss.nets.push_back({&nets.y, spec.train.y_ansatz, "y"});
    const LossWeights& W = spec.train.weights;
    const double beta = spec.beta;
    const std::string id = spec.id;

    {  // interior group: PDE residual + sampled objective
        LossGroup g;
        g.label = "interior";
        g.pts = samples.interior;
        g.used = {true, true};
        g.depth = {JetDepth::value, JetDepth::second};
        auto aux = build_aux(spec, g.pts, z, lambda, true, true, true);
        const double nu = spec.nu, c_coef = spec.c_coef, c0 = spec.c0, alpha = spec.alpha;
        const int dim = spec.dim;
        // PDE block
        LossBlock pde;
        pde.label = "pde";
        pde.weight = W.w_e / g.pts.n;
        pde.term = [aux, nu, c_coef, c0, id, dim](int i, std::span<const JetValue> J,
                                                  std::span<JetValue> S) {
            const JetValue& u = J[0];
            const JetValue& y = J[1];
            double r = 0.0;
            if (id == "ex1") {
                r = -nu * y.diag2[0] + u.value * y.value - aux->f[i];
                S[1].diag2[0] = 2.0 * r * -nu;
                S[1].value = 2.0 * r * u.value;
                S[0].value = 2.0 * r * y.value;
            } else if (id == "ex2") {
                r = -nu * y.diag2[0] + y.value * y.grad[0] - u.value;
                S[1].diag2[0] = 2.0 * r * -nu;
                S[1].grad[0] = 2.0 * r * y.value;
                S[1].value = 2.0 * r * y.grad[0];
                S[0].value = -2.0 * r;
            } else if (id == "ex3") {
                r = -(y.diag2[0] + y.diag2[1]) + c_coef * y.value - u.value;
                S[1].diag2[0] = S[1].diag2[1] = -2.0 * r;
                S[1].value = 2.0 * r * c_coef;
                S[0].value = -2.0 * r;
            } else {  // ex4
                r = y.grad[2] - (y.diag2[0] + y.diag2[1]) + c0 * y.value - u.value - aux->f[i];
                S[1].grad[2] = 2.0 * r;
                S[1].diag2[0] = S[1].diag2[1] = -2.0 * r;
                S[1].value = 2.0 * r * c0;
                S[0].value = -2.0 * r;
            }
            (void)dim;
            return r * r;
        };
        g.blocks.push_back(std::move(pde));
        // objective block (the data-fidelity part of ex3 lives on the boundary)
        LossBlock obj;
        obj.label = "objective";
        obj.weight = W.w_o / g.pts.n;
        obj.term = [aux, beta, alpha, id](int i, std::span<const JetValue> J,
                                          std::span<JetValue> S) {
            const double u = J[0].value;
            const double du = u - aux->z[i];
            double phi = -aux->lambda[i] * du + 0.5 * beta * du * du;
            S[0].value = -aux->lambda[i] + beta * du;
            if (id != "ex3") {
                const double d = J[1].value - aux->data[i];
                phi += 0.5 * d * d;
                S[1].value = d;
            }
            if (id == "ex2" || id == "ex4") {
                phi += 0.5 * alpha * u * u;
                S[0].value += alpha * u;
            }
            return phi;
        };
        g.blocks.push_back(std::move(obj));
        loss.groups.push_back(std::move(g));
    }

    if (spec.id == "ex3") {  // boundary group: fidelity + soft Neumann on y
        LossGroup g;
        g.label = "boundary";
        g.pts = samples.boundary;
        g.used = {false, true};
        g.depth = {JetDepth::value, JetDepth::first};
        auto aux = build_aux(spec, g.pts, z, lambda, false, true, false);
        auto normals = std::make_shared<std::vector<std::array<double, kMaxDim>>>(
            samples.boundary_normals);
        LossBlock fid;
        fid.label = "fidelity";
        fid.weight = W.w_o / g.pts.n;
        fid.term = [aux](int i, std::span<const JetValue> J, std::span<JetValue> S) {
            const double d = J[1].value - aux->data[i];
            S[1].value = d;
            return 0.5 * d * d;
        };
        g.blocks.push_back(std::move(fid));
        LossBlock neu;
        neu.label = "neumann_y";
        neu.weight = W.w_b1 / g.pts.n;
        neu.term = [normals](int i, std::span<const JetValue> J, std::span<JetValue> S) {
            const auto& n = (*normals)[i];
            const double r = J[1].grad[0] * n[0] + J[1].grad[1] * n[1];
            S[1].grad[0] = 2.0 * r * n[0];
            S[1].grad[1] = 2.0 * r * n[1];
            return r * r;
        };
        g.blocks.push_back(std::move(neu));
        loss.groups.push_back(std::move(g));
    }

    if (spec.id == "ex4") {  // soft Dirichlet walls and initial condition on y
        {
            LossGroup g;
            g.label = "boundary";
            g.pts = samples.boundary;
            g.used = {false, true};
            g.depth = {JetDepth::value, JetDepth::value};
            LossBlock bc;
            bc.label = "dirichlet_y";
            bc.weight = W.w_b1 / g.pts.n;
            bc.term = [](int, std::span<const JetValue> J, std::span<JetValue> S) {
                S[1].value = 2.0 * J[1].value;
                return J[1].value * J[1].value;
            };
            g.blocks.push_back(std::move(bc));
            loss.groups.push_back(std::move(g));
        }
        {
            LossGroup g;
            g.label = "initial";
            g.pts = clone_with_time(samples.initial, 0.0);
            g.used = {false, true};
            g.depth = {JetDepth::value, JetDepth::value};
            auto y0 = std::make_shared<std::vector<double>>();
            y0->resize(g.pts.n);
            for (int i = 0; i < g.pts.n; ++i)
                (*y0)[i] = spec.has_exact ? spec.y_exact(g.pts.point(i)) : 0.0;
            LossBlock ic;
            ic.label = "initial_y";
            ic.weight = W.w_b2 / g.pts.n;
            ic.term = [y0](int i, std::span<const JetValue> J, std::span<JetValue> S) {
                const double d = J[1].value - (*y0)[i];
                S[1].value = 2.0 * d;
                return d * d;
            };
            g.blocks.push_back(std::move(ic));
            loss.groups.push_back(std::move(g));
        }
    }
    return loss;
}

CompositeLoss assemble_ota_loss(const ProblemSpec& spec, NetSet& nets, const ScalarField& z,
                                const ScalarField& lambda, const SampleSets& samples) {
    if (!nets.has_p) throw ConfigError("assemble_ota_loss: adjoint network missing");
    CompositeLoss loss;
    const bool full = (spec.id == "ex1");  // full optimality system with a control net
    int iu = -1, iy, ip;
    if (full) {
        loss.nets.push_back({&nets.u, spec.train.u_ansatz, "u"});
        loss.nets.push_back({&nets.y, spec.train.y_ansatz, "y"});
        loss.nets.push_back({&nets.p, spec.train.p_ansatz, "p"});
        iu = 0;
        iy = 1;
        ip = 2;
    } else {
        loss.nets.push_back({&nets.y, spec.train.y_ansatz, "y"});
        loss.nets.push_back({&nets.p, spec.train.p_ansatz, "p"});
        iy = 0;
        ip = 1;
    }
    const LossWeights& W = spec.train.weights;
    const double beta = spec.beta, alpha = spec.alpha, nu = spec.nu, c_coef = spec.c_coef,
                 c0 = spec.c0;
    const std::string id = spec.id;
    const int nnets = static_cast<int>(loss.nets.size());

    {  // interior group: residuals of the (reduced) optimality system
        LossGroup g;
        g.label = "interior";
        g.pts = samples.interior;
        g.used.assign(nnets, true);
        g.depth.assign(nnets, JetDepth::second);
        if (full) g.depth[iu] = JetDepth::value;
        auto aux = build_aux(spec, g.pts, z, lambda, true, id != "ex3", id == "ex1" || id == "ex4");

        if (id == "ex1") {
            LossBlock state;
            state.label = "state";
            state.weight = W.w_y / g.pts.n;
            state.term = [aux, nu, iu, iy](int i, std::span<const JetValue> J,
                                           std::span<JetValue> S) {
                const double r = -nu * J[iy].diag2[0] + J[iu].value * J[iy].value - aux->f[i];
                S[iy].diag2[0] = 2.0 * r * -nu;
                S[iy].value = 2.0 * r * J[iu].value;
                S[iu].value = 2.0 * r * J[iy].value;
                return r * r;
            };
            g.blocks.push_back(std::move(state));
            LossBlock adj;
            adj.label = "adjoint";
            adj.weight = W.w_p / g.pts.n;
            adj.term = [aux, nu, iu, iy, ip](int i, std::span<const JetValue> J,
                                             std::span<JetValue> S) {
                const double r =
                    -nu * J[ip].diag2[0] + J[iu].value * J[ip].value - (J[iy].value - aux->data[i]);
                S[ip].diag2[0] = 2.0 * r * -nu;
                S[ip].value = 2.0 * r * J[iu].value;
                S[iu].value = 2.0 * r * J[ip].value;
                S[iy].value = -2.0 * r;
                return r * r;
            };
            g.blocks.push_back(std::move(adj));
            // the control multiplies the state, so the control derivative of
            // the PDE pairs the adjoint with y: beta u - lambda - beta z - y p = 0
            LossBlock stat;
            stat.label = "stationarity";
            stat.weight = W.w_u / g.pts.n;
            stat.term = [aux, beta, iu, iy, ip](int i, std::span<const JetValue> J,
                                                std::span<JetValue> S) {
                const double r = beta * J[iu].value - aux->lambda[i] - beta * aux->z[i] -
                                 J[iy].value * J[ip].value;
                S[iu].value = 2.0 * r * beta;
                S[iy].value = -2.0 * r * J[ip].value;
                S[ip].value = -2.0 * r * J[iy].value;
                return r * r;
            };
            g.blocks.push_back(std::move(stat));
        } else if (id == "ex2") {
            const double inv_ab = 1.0 / (alpha + beta);
            LossBlock state;
            state.label = "state";
            state.weight = W.w_y / g.pts.n;
            state.term = [aux, nu, beta, inv_ab, iy, ip](int i, std::span<const JetValue> J,
                                                         std::span<JetValue> S) {
                const double u = (-J[ip].value + aux->lambda[i] + beta * aux->z[i]) * inv_ab;
                const double r = -nu * J[iy].diag2[0] + J[iy].value * J[iy].grad[0] - u;
                S[iy].diag2[0] = 2.0 * r * -nu;
                S[iy].grad[0] = 2.0 * r * J[iy].value;
                S[iy].value = 2.0 * r * J[iy].grad[0];
                S[ip].value = 2.0 * r * inv_ab;
                return r * r;
            };
            g.blocks.push_back(std::move(state));
            LossBlock adj;
            adj.label = "adjoint";
            adj.weight = W.w_p / g.pts.n;
            adj.term = [aux, nu, iy, ip](int i, std::span<const JetValue> J,
                                         std::span<JetValue> S) {
                const double r = -nu * J[ip].diag2[0] - J[iy].value * J[ip].grad[0] -
                                 (J[iy].value - aux->data[i]);
                S[ip].diag2[0] = 2.0 * r * -nu;
                S[ip].grad[0] = 2.0 * r * -J[iy].value;
                S[iy].value = 2.0 * r * (-J[ip].grad[0] - 1.0);
                return r * r;
            };
            g.blocks.push_back(std::move(adj));
        } else if (id == "ex3") {
            const double inv_b = 1.0 / beta;
            LossBlock state;
            state.label = "state";
            state.weight = W.w_y * W.w_i / g.pts.n;
            state.term = [aux, c_coef, inv_b, beta, iy, ip](int i, std::span<const JetValue> J,
                                                            std::span<JetValue> S) {
                const double u = (-J[ip].value + aux->lambda[i] + beta * aux->z[i]) * inv_b;
                const double r = -(J[iy].diag2[0] + J[iy].diag2[1]) + c_coef * J[iy].value - u;
                S[iy].diag2[0] = S[iy].diag2[1] = -2.0 * r;
                S[iy].value = 2.0 * r * c_coef;
                S[ip].value = 2.0 * r * inv_b;
                return r * r;
            };
            g.blocks.push_back(std::move(state));
            LossBlock adj;
            adj.label = "adjoint";
            adj.weight = W.w_p * W.w_i / g.pts.n;
            adj.term = [c_coef, ip](int, std::span<const JetValue> J, std::span<JetValue> S) {
                const double r = -(J[ip].diag2[0] + J[ip].diag2[1]) + c_coef * J[ip].value;
                S[ip].diag2[0] = S[ip].diag2[1] = -2.0 * r;
                S[ip].value = 2.0 * r * c_coef;
                return r * r;
            };
            g.blocks.push_back(std::move(adj));
        } else {  // ex4
            const double inv_ab = 1.0 / (alpha + beta);
            LossBlock state;
            state.label = "state";
            state.weight = W.w_y * W.w_i / g.pts.n;
            state.term = [aux, nu, c0, beta, inv_ab, iy, ip](int i, std::span<const JetValue> J,
                                                             std::span<JetValue> S) {
                const double u = (-J[ip].value + aux->lambda[i] + beta * aux->z[i]) * inv_ab;
                const double r = J[iy].grad[2] - nu * (J[iy].diag2[0] + J[iy].diag2[1]) +
                                 c0 * J[iy].value - u - aux->f[i];
                S[iy].grad[2] = 2.0 * r;
                S[iy].diag2[0] = S[iy].diag2[1] = 2.0 * r * -nu;
                S[iy].value = 2.0 * r * c0;
                S[ip].value = 2.0 * r * inv_ab;
                return r * r;
            };
            g.blocks.push_back(std::move(state));
            LossBlock adj;
            adj.label = "adjoint";
            adj.weight = W.w_p * W.w_i / g.pts.n;
            adj.term = [aux, nu, c0, iy, ip](int i, std::span<const JetValue> J,
                                             std::span<JetValue> S) {
                const double r = -J[ip].grad[2] - nu * (J[ip].diag2[0] + J[ip].diag2[1]) +
                                 c0 * J[ip].value - (J[iy].value - aux->data[i]);
                S[ip].grad[2] = -2.0 * r;
                S[ip].diag2[0] = S[ip].diag2[1] = 2.0 * r * -nu;
                S[ip].value = 2.0 * r * c0;
                S[iy].value = -2.0 * r;
                return r * r;
            };
            g.blocks.push_back(std::move(adj));
        }
        loss.groups.push_back(std::move(g));
    }

    if (id == "ex3") {  // Neumann residuals for y and p on the walls
        LossGroup g;
        g.label = "boundary";
        g.pts = samples.boundary;
        g.used.assign(nnets, true);
        g.depth.assign(nnets, JetDepth::first);
        auto aux = build_aux(spec, g.pts, z, lambda, false, true, false);
        auto normals =
            std::make_shared<std::vector<std::array<double, kMaxDim>>>(samples.boundary_normals);
        LossBlock ny;
        ny.label = "neumann_y";
        ny.weight = W.w_b1 / g.pts.n;
        ny.term = [normals, iy](int i, std::span<const JetValue> J, std::span<JetValue> S) {
            const auto& n = (*normals)[i];
            const double r = J[iy].grad[0] * n[0] + J[iy].grad[1] * n[1];
            S[iy].grad[0] = 2.0 * r * n[0];
            S[iy].grad[1] = 2.0 * r * n[1];
            return r * r;
        };
        g.blocks.push_back(std::move(ny));
        LossBlock np;
        np.label = "neumann_p";
        np.weight = W.w_b1 / g.pts.n;
        np.term = [normals, aux, iy, ip](int i, std::span<const JetValue> J,
                                         std::span<JetValue> S) {
            const auto& n = (*normals)[i];
            const double r = J[ip].grad[0] * n[0] + J[ip].grad[1] * n[1] -
                             (J[iy].value - aux->data[i]);
            S[ip].grad[0] = 2.0 * r * n[0];
            S[ip].grad[1] = 2.0 * r * n[1];
            S[iy].value = -2.0 * r;
            return r * r;
        };
        g.blocks.push_back(std::move(np));
        loss.groups.push_back(std::move(g));
    }

    if (id == "ex4") {  // soft walls for y and p; initial y; terminal p
        {
            LossGroup g;
            g.label = "boundary";
            g.pts = samples.boundary;
            g.used.assign(nnets, true);
            g.depth.assign(nnets, JetDepth::value);
            LossBlock bc;
            bc.label = "dirichlet";
            bc.weight = W.w_b1 / g.pts.n;
            bc.term = [iy, ip](int, std::span<const JetValue> J, std::span<JetValue> S) {
                S[iy].value = 2.0 * J[iy].value;
                S[ip].value = 2.0 * J[ip].value;
                return J[iy].value * J[iy].value + J[ip].value * J[ip].value;
            };
            g.blocks.push_back(std::move(bc));
            loss.groups.push_back(std::move(g));
        }
        {
            LossGroup g;
            g.label = "initial";
            g.pts = clone_with_time(samples.initial, spec.lattice.lower(2));
            g.used.assign(nnets, false);
            g.used[iy] = true;
            g.depth.assign(nnets, JetDepth::value);
            auto y0 = std::make_shared<std::vector<double>>();
            y0->resize(g.pts.n);
            for (int i = 0; i < g.pts.n; ++i)
                (*y0)[i] = spec.has_exact ? spec.y_exact(g.pts.point(i)) : 0.0;
            LossBlock ic;
            ic.label = "initial_y";
            ic.weight = W.w_b2 / g.pts.n;
            ic.term = [y0, iy](int i, std::span<const JetValue> J, std::span<JetValue> S) {
                const double d = J[iy].value - (*y0)[i];
                S[iy].value = 2.0 * d;
                return d * d;
            };
            g.blocks.push_back(std::move(ic));
            loss.groups.push_back(std::move(g));
        }
        {
            LossGroup g;
            g.label = "terminal";
            g.pts = clone_with_time(samples.initial, spec.lattice.upper(2));
            g.used.assign(nnets, false);
            g.used[ip] = true;
            g.depth.assign(nnets, JetDepth::value);
            LossBlock tc;
            tc.label = "terminal_p";
            tc.weight = W.w_b2 / g.pts.n;
            tc.term = [ip](int, std::span<const JetValue> J, std::span<JetValue> S) {
                S[ip].value = 2.0 * J[ip].value;
                return J[ip].value * J[ip].value;
            };
            g.blocks.push_back(std::move(tc));
            loss.groups.push_back(std::move(g));
        }
    }
    return loss;
}

SubproblemResult solve_subproblem(const ProblemSpec& spec, NetSet& nets, const ScalarField& z,
                                  const ScalarField& lambda, Method method, int outer_iter,
                                  const SampleSets& samples, Exec exec) {
    if (method == Method::reference)
        throw ConfigError("solve_subproblem: reference method has no network subproblem");
    CompositeLoss loss = (method == Method::ato) ? assemble_ato_loss(spec, nets, z, lambda, samples)
                                                 : assemble_ota_loss(spec, nets, z, lambda, samples);
    loss.exec = exec;
    OptConfig oc = spec.train.opt;
    oc.adam_iters = spec.train.adam_iters_at(outer_iter);
    oc.lbfgs_iters = spec.train.lbfgs_iters_at(outer_iter);

    std::vector<double> theta(loss.param_count());
    loss.get_params(theta);
    GradOracle oracle = [&loss](std::span<const double> th, std::span<double> g) {
        return loss.value_and_grad(th, g);
    };
    SubproblemResult res{ScalarField(spec.lattice, 0.0), ScalarField(spec.lattice, 0.0)};
    try {
        if (oc.adam_iters > 0) {
            OptResult ra = adam_run(oracle, std::move(theta), oc);
            theta = std::move(ra.theta);
            res.final_loss = ra.loss;
            res.final_grad_norm = ra.grad_norm;
        }
        if (oc.lbfgs_iters > 0) {
            OptResult rl = lbfgs_run(oracle, std::move(theta), oc);
            theta = std::move(rl.theta);
            res.final_loss = rl.loss;
            res.final_grad_norm = rl.grad_norm;
            res.wolfe_accepted = rl.wolfe_accepted;
            res.wolfe_violations = rl.wolfe_violations;
            res.line_search_failed = rl.line_search_failed;
        }
    } catch (const NumericalError& e) {
        throw NumericalError("subproblem k=" + std::to_string(outer_iter) + " (" +
                             to_string(method) + "): " + e.what());
    }
    loss.set_params(theta);

    // lattice evaluation
    res.y_lattice = eval_on_lattice(nets.y, spec.train.y_ansatz, spec.lattice, exec);
    if (method == Method::ato || spec.id == "ex1") {
        res.u_lattice = eval_on_lattice(nets.u, spec.train.u_ansatz, spec.lattice, exec);
    } else {
        const ScalarField p = eval_on_lattice(nets.p, spec.train.p_ansatz, spec.lattice, exec);
        for (std::size_t k = 0; k < spec.lattice.size(); ++k)
            res.u_lattice[k] = spec.recover_u(p[k], lambda[k], z[k]);
    }
    res.u_lattice.check_finite("u lattice evaluation");
    res.y_lattice.check_finite("y lattice evaluation");
    return res;
}

}  // namespace pdeopt
