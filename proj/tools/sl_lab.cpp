// Experiment driver: localization rate curves, coupling-based W2 bound
// tables, SL distances, the Gaussian KL check, and distribution fitting.
//
// Each subcommand reads an optional JSON config (--config); explicit flags
// override config fields. Every output artifact embeds the fully resolved
// config and master seed, so re-running an artifact's config reproduces it.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sl/fit.hpp"
#include "sl/metrics.hpp"
#include "sl/presets.hpp"
#include "sl/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sl;

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

void write_text(const std::string& path, const std::string& content) {
    fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InvalidInput("cannot open output file " + path);
    os << content;
}

json load_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw InvalidInput("cannot open config file " + path);
    json j;
    is >> j;
    return j;
}

// Flags win over config-file fields.
struct CommonFlags {
    CLI::App* cmd = nullptr;
    std::string config_path, out_dir;
    std::uint64_t seed = 0;
    int workers = 0;
    double dt = 0.0, horizon = 0.0, delta = 0.0;

    void attach(CLI::App* c) {
        cmd = c;
        c->add_option("--config", config_path, "JSON config file");
        c->add_option("--seed", seed, "master seed");
        c->add_option("--out", out_dir, "output directory");
        c->add_option("--workers", workers, "trajectory parallelism bound");
        c->add_option("--dt", dt, "time step");
        c->add_option("--T", horizon, "time horizon");
        c->add_option("--delta", delta, "regularization parameter");
    }

    json merged(const json& defaults) const {
        json cfg = defaults;
        if (!config_path.empty()) {
            const json file = load_config_file(config_path);
            for (auto it = file.begin(); it != file.end(); ++it) cfg[it.key()] = it.value();
        }
        if (cmd->count("--seed")) cfg["seed"] = seed;
        if (cmd->count("--out")) cfg["out"] = out_dir;
        if (cmd->count("--workers")) cfg["workers"] = workers;
        if (cmd->count("--dt")) cfg["dt"] = dt;
        if (cmd->count("--T")) cfg["T"] = horizon;
        if (cmd->count("--delta")) cfg["delta"] = delta;
        return cfg;
    }
};

SimConfig sim_from(const json& cfg) {
    SimConfig sim;
    sim.dt = cfg.at("dt").get<double>();
    sim.horizon = cfg.at("T").get<double>();
    sim.loc_tol = cfg.value("loc_tol", 0.0);
    sim.seed = cfg.at("seed").get<std::uint64_t>();
    sim.validate();
    return sim;
}

DiscreteMeasure measure_from(const json& spec) {
    if (spec.contains("csv")) return load_measure_csv(spec.at("csv").get<std::string>());
    const std::string gen = spec.at("generator").get<std::string>();
    const int n = spec.value("n", 500);
    const std::uint64_t gseed = spec.value("gen_seed", 1ULL);
    if (gen == "uniform-square") return gen_uniform_square(n, gseed);
    if (gen == "mixture3") return gen_mixture3(n, gseed);
    if (gen == "manifold3d") return gen_manifold3d(n, gseed);
    throw InvalidInput("unknown measure generator '" + gen + "'");
}

std::pair<DiscreteMeasure, DiscreteMeasure> pair_from(const json& spec) {
    if (spec.contains("mu_csv") || spec.contains("nu_csv")) {
        return {load_measure_csv(spec.at("mu_csv").get<std::string>()),
                load_measure_csv(spec.at("nu_csv").get<std::string>())};
    }
    const std::string gen = spec.at("generator").get<std::string>();
    const int n = spec.value("n", 50);
    const std::uint64_t gseed = spec.value("gen_seed", 1ULL);
    if (gen == "mixture4-ring") return gen_mixture4_ring(n, gseed);
    if (gen == "annuli") return gen_annuli(n, gseed);
    throw InvalidInput("unknown pair generator '" + gen + "'");
}

std::vector<JointPolicy> policies_from(const json& cfg) {
    const double delta = cfg.at("delta").get<double>();
    std::vector<JointPolicy> out;
    for (const auto& p : cfg.at("policies")) {
        const std::string kind = p.at("kind").get<std::string>();
        if (kind == "joint-alpha") {
            out.push_back(JointPolicy::joint_alpha(p.at("alpha").get<double>(),
                                                   p.value("delta", delta)));
        } else if (kind == "extrapolation") {
            out.push_back(JointPolicy::extrapolation(p.value("delta", delta)));
        } else {
            throw InvalidInput("unknown policy kind '" + kind + "'");
        }
    }
    if (out.empty()) throw InvalidInput("policy list is empty");
    return out;
}

fs::path out_path(const json& cfg, const std::string& name) {
    return fs::path(cfg.value("out", std::string("."))) / name;
}

// ----- localize ---------------------------------------------------------

int run_localize(const json& cfg) {
    const DiscreteMeasure mu = measure_from(cfg.at("measure"));
    const SimConfig sim = sim_from(cfg);
    const int m = cfg.at("M").get<int>();
    const int workers = cfg.value("workers", 0);
    const double delta = cfg.at("delta").get<double>();

    std::vector<ControlPolicy> policies;
    for (const double alpha : cfg.at("alphas").get<std::vector<double>>()) {
        policies.push_back(alpha == 0.0 ? ControlPolicy::identity()
                                        : ControlPolicy::eldan(alpha, delta));
    }

    const auto curves = localization_rate_curve(mu, policies, sim, m, workers);

    std::ostringstream csv;
    csv << "# config " << cfg.dump() << "\n";
    csv << "alpha,t,mean_trace,std_err\n";
    const auto alphas = cfg.at("alphas").get<std::vector<double>>();
    for (size_t p = 0; p < curves.size(); ++p) {
        for (size_t k = 0; k < curves[p].times.size(); ++k) {
            csv << fmt(alphas[p]) << "," << fmt(curves[p].times[k]) << ","
                << fmt(curves[p].mean_trace[k]) << "," << fmt(curves[p].std_err[k]) << "\n";
        }
    }
    write_text(out_path(cfg, "rates.csv").string(), csv.str());

    json summary;
    summary["config"] = cfg;
    summary["seed"] = cfg.at("seed");
    json per_alpha = json::array();
    for (size_t p = 0; p < curves.size(); ++p) {
        json row;
        row["alpha"] = alphas[p];
        row["initial_trace"] = curves[p].mean_trace.front();
        row["final_trace"] = curves[p].mean_trace.back();
        per_alpha.push_back(row);
    }
    summary["curves"] = per_alpha;
    write_text(out_path(cfg, "summary.json").string(), summary.dump(2) + "\n");

    const int dump_count = cfg.value("dump_trajectories", 0);
    if (dump_count > 0) {
        std::ostringstream traj;
        traj << "# config " << cfg.dump() << "\n";
        traj << "trajectory_id,t,tr_sigma";
        for (int j = 0; j < mu.dim(); ++j) traj << ",a_" << (j + 1);
        traj << "\n";
        for (int id = 0; id < dump_count; ++id) {
            const Trajectory tr = run_localization(
                mu, policies.front(), sim,
                trajectory_seed(cfg.at("seed").get<std::uint64_t>(), id), true);
            for (size_t k = 0; k < tr.times.size(); ++k) {
                traj << id << "," << fmt(tr.times[k]) << "," << fmt(tr.trace_path[k]);
                for (int j = 0; j < mu.dim(); ++j) traj << "," << fmt(tr.mean_path[k][j]);
                traj << "\n";
            }
        }
        write_text(out_path(cfg, "trajectories.csv").string(), traj.str());
    }
    return 0;
}

// ----- couple -----------------------------------------------------------

int run_couple(const json& cfg) {
    const auto [mu, nu] = pair_from(cfg.at("pair"));
    const SimConfig sim = sim_from(cfg);
    const int m = cfg.at("M").get<int>();
    const int workers = cfg.value("workers", 0);
    const auto policies = policies_from(cfg);

    const auto rows = w2_bound_table(mu, nu, policies, sim, m,
                                     cfg.at("seed").get<std::uint64_t>(), workers);

    std::ostringstream csv;
    csv << "# config " << cfg.dump() << "\n";
    csv << "coupling,bound_w2,ci_lo,ci_hi,M\n";
    for (const auto& row : rows) {
        csv << row.coupling << "," << fmt(row.bound_w2) << ",";
        if (row.ci_lo < 0.0 && row.ci_hi < 0.0) {
            csv << "NA,NA";
        } else {
            csv << fmt(row.ci_lo) << "," << fmt(row.ci_hi);
        }
        csv << "," << row.num_samples << "\n";
    }
    write_text(out_path(cfg, "w2_table.csv").string(), csv.str());

    json table;
    table["config"] = cfg;
    table["seed"] = cfg.at("seed");
    json jrows = json::array();
    for (const auto& row : rows) {
        json r;
        r["coupling"] = row.coupling;
        r["bound_w2"] = row.bound_w2;
        r["mean_sq"] = row.mean_sq;
        if (row.ci_lo < 0.0 && row.ci_hi < 0.0) {
            r["ci95"] = nullptr;
        } else {
            r["ci95"] = {row.ci_lo, row.ci_hi};
        }
        r["num_samples"] = row.num_samples;
        jrows.push_back(r);
    }
    table["rows"] = jrows;
    write_text(out_path(cfg, "w2_table.json").string(), table.dump(2) + "\n");

    if (cfg.value("dump_couplings", false)) {
        for (size_t p = 0; p < policies.size(); ++p) {
            const auto samples = sample_coupling(mu, nu, policies[p], sim, m,
                                                 cfg.at("seed").get<std::uint64_t>(), workers);
            save_coupling_csv(samples,
                              out_path(cfg, "couplings_" + policies[p].name() + ".csv").string(),
                              "config " + cfg.dump());
        }
    }
    return 0;
}

// ----- distance ---------------------------------------------------------

int run_distance(const json& cfg) {
    const DiscreteMeasure mu = load_measure_csv(cfg.at("mu_csv").get<std::string>());
    const DiscreteMeasure nu = load_measure_csv(cfg.at("nu_csv").get<std::string>());
    const SimConfig sim = sim_from(cfg);
    const int m = cfg.at("M").get<int>();
    const double alpha = cfg.at("alpha").get<double>();
    const double delta = cfg.at("delta").get<double>();
    const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
    const int workers = cfg.value("workers", 0);

    DistanceEstimate est;
    if (cfg.contains("weight_nodes")) {
        WeightMeasure w;
        for (const auto& node : cfg.at("weight_nodes")) {
            w.nodes.push_back(node.at("t").get<double>());
            w.masses.push_back(node.at("mass").get<double>());
        }
        est = weighted_sl_distance(mu, nu, alpha, delta, w, sim, m, seed, workers);
    } else {
        est = sl_distance(mu, nu, alpha, delta, sim, m, seed, workers);
    }

    json out;
    out["config"] = cfg;
    out["seed"] = seed;
    out["mean_sq"] = est.mean_sq;
    out["distance"] = est.distance;
    out["std_err"] = est.std_err;
    out["ci95"] = {est.ci_lo, est.ci_hi};
    out["num_samples"] = est.num_samples;
    write_text(out_path(cfg, "distance.json").string(), out.dump(2) + "\n");
    std::cout << out.dump(2) << "\n";
    return 0;
}

// ----- klcheck ----------------------------------------------------------

int run_klcheck(const json& cfg) {
    GaussianMeasure g = [&]() {
        const json& spec = cfg.at("gaussian");
        if (spec.contains("json")) return load_gaussian_json(spec.at("json").get<std::string>());
        Vector mean(static_cast<int>(spec.at("mean").size()));
        for (size_t i = 0; i < spec.at("mean").size(); ++i) {
            mean[static_cast<int>(i)] = spec.at("mean")[i].get<double>();
        }
        const auto cov_v = spec.at("cov").get<std::vector<std::vector<double>>>();
        Matrix cov(static_cast<int>(cov_v.size()), static_cast<int>(cov_v.size()));
        for (size_t r = 0; r < cov_v.size(); ++r)
            for (size_t c = 0; c < cov_v.size(); ++c)
                cov(static_cast<int>(r), static_cast<int>(c)) = cov_v[r][c];
        return GaussianMeasure(mean, SymMatrix(cov));
    }();

    const int m = cfg.at("M").get<int>();
    const double dt = cfg.at("dt").get<double>();
    const double t_max = cfg.at("T_max").get<double>();
    const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
    const int workers = cfg.value("workers", 0);

    // Closed-form KL(N(m,Σ) ‖ N(0,I)) = ½(‖m‖² + tr Σ - d - ln det Σ).
    const auto eig = spectral_decompose(g.cov);
    if (eig.eigenvalues.minCoeff() <= 0.0) {
        throw NotPSD("klcheck: covariance must be nonsingular");
    }
    double log_det = 0.0;
    for (int i = 0; i < eig.eigenvalues.size(); ++i) log_det += std::log(eig.eigenvalues[i]);
    const double closed_form =
        0.5 * (g.mean.squaredNorm() + g.cov.trace() - g.dim() - log_det);

    const KlEstimate est = kl_via_sl(g, m, dt, t_max, seed, workers);
    const double rel_err = closed_form != 0.0
                               ? std::abs(est.estimate - closed_form) / std::abs(closed_form)
                               : std::abs(est.estimate);

    json out;
    out["config"] = cfg;
    out["seed"] = seed;
    out["estimate"] = est.estimate;
    out["std_err"] = est.std_err;
    out["closed_form"] = closed_form;
    out["rel_err"] = rel_err;
    out["tail_mass"] = est.tail_mass;
    write_text(out_path(cfg, "klcheck.json").string(), out.dump(2) + "\n");
    std::cout << out.dump(2) << "\n";
    return 0;
}

// ----- fit --------------------------------------------------------------

int run_fit(const json& cfg) {
    const DiscreteMeasure data = measure_from(cfg.at("data"));
    const int latent_n = cfg.at("latent_n").get<int>();
    const int latent_dim = cfg.value("latent_dim", 2);
    const int degree = cfg.at("degree").get<int>();
    const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();

    const LegendreBasis basis = LegendreBasis::uniform(latent_dim, degree);
    const Matrix latents = low_discrepancy(latent_n, latent_dim);

    ParametricMap init = [&]() {
        const std::string kind = cfg.value("init", std::string("informed"));
        if (kind == "informed") return informed_init(data, latents, basis);
        if (kind == "random") {
            const double scale = cfg.value("init_scale", 0.1);
            GaussianStream rng(splitmix64(seed ^ 0xf17ULL));
            Matrix theta(basis.feature_count(), data.dim());
            for (int i = 0; i < theta.rows(); ++i)
                for (int j = 0; j < theta.cols(); ++j) {
                    theta(i, j) = std::sqrt(scale) * rng.next();
                }
            return ParametricMap(basis, theta, latents);
        }
        throw InvalidInput("unknown init kind '" + kind + "'");
    }();

    FitConfig fit_cfg;
    fit_cfg.num_traj = cfg.at("M").get<int>();
    fit_cfg.sim = sim_from(cfg);
    fit_cfg.alpha = cfg.at("alpha").get<double>();
    fit_cfg.delta = cfg.at("delta").get<double>();
    fit_cfg.max_iter = cfg.at("max_iter").get<int>();
    fit_cfg.damping0 = cfg.value("damping", 1e-3);
    fit_cfg.workers = cfg.value("workers", 0);
    const std::string noise = cfg.value("noise", std::string("resample"));
    if (noise == "resample") {
        fit_cfg.noise = NoisePolicy::ResamplePerIteration;
    } else if (noise == "frozen") {
        fit_cfg.noise = NoisePolicy::Frozen;
    } else {
        throw InvalidInput("unknown noise policy '" + noise + "'");
    }

    const FitReport report = fit(data, init, fit_cfg, seed);

    json out;
    out["config"] = cfg;
    out["seed"] = seed;
    out["loss_history"] = report.loss_history;
    out["iterations"] = report.iterations;
    out["converged"] = report.converged;
    std::vector<double> theta_flat;
    for (int f = 0; f < report.theta_final.rows(); ++f)
        for (int l = 0; l < report.theta_final.cols(); ++l)
            theta_flat.push_back(report.theta_final(f, l));
    out["theta"] = theta_flat;
    out["theta_shape"] = {report.theta_final.rows(), report.theta_final.cols()};
    write_text(out_path(cfg, "fit_report.json").string(), out.dump(2) + "\n");

    std::ostringstream csv;
    csv << "# config " << cfg.dump() << "\n";
    csv << "iteration,loss\n";
    for (size_t i = 0; i < report.loss_history.size(); ++i) {
        csv << i << "," << fmt(report.loss_history[i]) << "\n";
    }
    write_text(out_path(cfg, "loss.csv").string(), csv.str());

    std::cout << "final loss " << report.loss_history.back() << " after " << report.iterations
              << " iterations\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stochastic localization laboratory"};
    app.require_subcommand(1);

    CommonFlags localize_flags, couple_flags, distance_flags, klcheck_flags, fit_flags;

    auto* localize = app.add_subcommand("localize", "localization rate curves per alpha");
    localize_flags.attach(localize);
    auto* couple = app.add_subcommand("couple", "coupling-based W2 bound table");
    couple_flags.attach(couple);
    auto* distance = app.add_subcommand("distance", "SL distance between two measures");
    distance_flags.attach(distance);
    auto* klcheck = app.add_subcommand("klcheck", "KL representation check for Gaussians");
    klcheck_flags.attach(klcheck);
    auto* fit_cmd = app.add_subcommand("fit", "fit a pushforward model to data");
    fit_flags.attach(fit_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (localize->parsed()) {
            json defaults = {{"measure", {{"generator", "uniform-square"}, {"n", 500}, {"gen_seed", 1}}},
                             {"alphas", {0.0, 0.3, 0.5, 0.8, 1.0}},
                             {"delta", 0.003},
                             {"dt", 0.05},
                             {"T", 6.0},
                             {"M", 2000},
                             {"seed", 42},
                             {"out", "."}};
            return run_localize(localize_flags.merged(defaults));
        }
        if (couple->parsed()) {
            json defaults = {{"pair", {{"generator", "mixture4-ring"}, {"n", 50}, {"gen_seed", 1}}},
                             {"policies",
                              {{{"kind", "joint-alpha"}, {"alpha", 0.0}},
                               {{"kind", "joint-alpha"}, {"alpha", 0.5}},
                               {{"kind", "joint-alpha"}, {"alpha", 1.0}},
                               {{"kind", "extrapolation"}}}},
                             {"delta", 0.001},
                             {"dt", 0.05},
                             {"T", 30.0},
                             {"M", 300},
                             {"seed", 42},
                             {"out", "."}};
            return run_couple(couple_flags.merged(defaults));
        }
        if (distance->parsed()) {
            json defaults = {{"alpha", 0.5}, {"delta", 0.001}, {"dt", 0.05}, {"T", 25.0},
                             {"M", 500},    {"seed", 42},      {"out", "."}};
            return run_distance(distance_flags.merged(defaults));
        }
        if (klcheck->parsed()) {
            json defaults = {{"gaussian", {{"mean", {1.0, 0.0}}, {"cov", {{1.0, 0.0}, {0.0, 1.0}}}}},
                             {"M", 5000},
                             {"dt", 0.01},
                             {"T_max", 100.0},
                             {"seed", 42},
                             {"out", "."}};
            return run_klcheck(klcheck_flags.merged(defaults));
        }
        if (fit_cmd->parsed()) {
            json defaults = {{"data", {{"generator", "manifold3d"}, {"n", 300}, {"gen_seed", 7}}},
                             {"latent_n", 256},
                             {"latent_dim", 2},
                             {"degree", 2},
                             {"init", "informed"},
                             {"alpha", 0.5},
                             {"delta", 0.001},
                             {"dt", 0.05},
                             {"T", 10.0},
                             {"M", 400},
                             {"max_iter", 15},
                             {"noise", "resample"},
                             {"seed", 42},
                             {"out", "."}};
            return run_fit(fit_flags.merged(defaults));
        }
    } catch (const NumericalBlowup& e) {
        std::cerr << "numerical failure: " << e.what() << " (t=" << e.t
                  << ", |control|=" << e.control_norm << ")\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
