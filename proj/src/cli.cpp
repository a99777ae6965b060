#include "sublab/cli.hpp"

#include "sublab/highdim.hpp"
#include "sublab/io.hpp"
#include "sublab/lowdim.hpp"
#include "sublab/minimax.hpp"
#include "sublab/sim.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>

namespace sublab::cli {

namespace {

using io::format_double;

struct Common {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    int jobs = 1;
};

// Raised when a cell fails numerically; output may still have been written.
struct CellFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

io::LabConfig load(const Common& c) {
    io::LabConfig cfg = io::read_config(c.config);
    if (c.seed) cfg.experiment.seed = *c.seed;
    if (!c.out.empty()) cfg.output.path = c.out;
    return cfg;
}

void echo(std::ostream& out, const std::string& command, const io::LabConfig& cfg, int jobs) {
    out << "# subsample-lab " << command << " (jobs=" << jobs << ")\n";
    out << "# effective config:\n" << io::dump_config(cfg) << "\n";
}

std::string sibling(const std::string& path, const std::string& tag) {
    std::filesystem::path p(path);
    const std::string ext = p.extension().string();
    p.replace_extension();
    return p.string() + "." + tag + ext;
}

lowdim::Population make_population(const io::LowdimConfig& l) {
    switch (l.population) {
        case io::PopulationKind::Uniform: return lowdim::Population::uniform_1d(l.x_max, l.atoms);
        case io::PopulationKind::Powerlaw: return lowdim::Population::powerlaw_1d(l.exponent, l.x_max, l.atoms);
        case io::PopulationKind::Gaussian: return lowdim::Population::gaussian(l.dim, l.grid_points, l.grid_seed);
    }
    throw InvalidArgument("unknown population");
}

lowdim::ConditionalMoments make_moments(const io::LabConfig& cfg, const lowdim::Population& pop) {
    const io::LowdimConfig& l = cfg.lowdim;
    Vector e1 = Vector::Zero(pop.dim());
    e1(0) = l.theta_norm;
    switch (l.model) {
        case io::ModelKind::Linear: return lowdim::ConditionalMoments::linear_regression(l.tau);
        case io::ModelKind::Logistic: return lowdim::ConditionalMoments::glm_logistic(e1);
        case io::ModelKind::Misspecified:
            return lowdim::ConditionalMoments::misspecified_square(cfg.experiment.kernel.with_norm(l.theta_norm), e1);
    }
    throw InvalidArgument("unknown model");
}

EstimationMetric make_metric(MetricKind kind, const lowdim::ConditionalMoments& m, const lowdim::Population& pop) {
    switch (kind) {
        case MetricKind::Sigma: return EstimationMetric(pop.gram(Vector::Ones(pop.size())), MetricKind::Sigma);
        case MetricKind::Hessian: return EstimationMetric(lowdim::population_hessian(m, pop), MetricKind::Hessian);
        default: return EstimationMetric::identity(static_cast<int>(pop.dim()));
    }
}

int cmd_lowdim_rho(const Common& c, std::ostream& out) {
    const io::LabConfig cfg = load(c);
    echo(out, "lowdim-rho", cfg, c.jobs);
    const lowdim::Population pop = make_population(cfg.lowdim);
    const lowdim::ConditionalMoments m = make_moments(cfg, pop);
    const EstimationMetric metric = make_metric(cfg.lowdim.metric, m, pop);
    const Matrix H = lowdim::population_hessian(m, pop);
    const Vector Z = lowdim::evaluate_score(lowdim::unbiased_score(m, metric, H), pop);
    io::Table t;
    t.columns = {"scheme", "gamma", "rho", "iterations", "residual"};
    for (double gamma : cfg.experiment.gammas)
        for (SchemeKind kind : cfg.lowdim.schemes) {
            double rho = 0.0, residual = 0.0;
            int iterations = 0;
            if (kind == SchemeKind::Random) {
                rho = lowdim::rho_coefficient(m, SelectionRule::random(gamma, true), Z, metric, pop).rho;
            } else if (kind == SchemeKind::UnbiasedInfluence) {
                rho = lowdim::optimal_unbiased_pi(Z, gamma, pop).rho_unb;
            } else {
                const auto nr = lowdim::solve_nonreweight_fixed_point(m, metric, gamma, pop);
                rho = nr.rho_nr;
                iterations = nr.fixed_point.iterations;
                residual = nr.fixed_point.residual;
            }
            t.add({to_string(kind), format_double(gamma), format_double(rho), std::to_string(iterations),
                   format_double(residual)});
            out << to_string(kind) << " gamma=" << gamma << " rho=" << rho << "\n";
        }
    io::write_table(t, cfg.output.path, cfg.output.format);
    out << "wrote " << cfg.output.path << "\n";
    return kOk;
}

int cmd_nonmono(const Common& c, std::ostream& out) {
    const io::LabConfig cfg = load(c);
    echo(out, "nonmono-check", cfg, c.jobs);
    const io::LowdimConfig& l = cfg.lowdim;
    const lowdim::Population pop = make_population(l);
    const lowdim::ConditionalMoments m = make_moments(cfg, pop);
    Rng rng(l.draw_seed);
    Matrix draws(l.draws, pop.dim());
    for (Eigen::Index i = 0; i < draws.rows(); ++i)
        for (Eigen::Index j = 0; j < draws.cols(); ++j) draws(i, j) = rng.normal();
    const lowdim::ZQCertificate cert = lowdim::zq_at_full(m, pop, draws);
    const lowdim::AsymptoticCoefficient greedy = lowdim::greedy_drop_negative(m, pop, l.greedy_gamma);
    const double cond_mean = cert.n_negative > 0 ? cert.mean_negative_part / cert.negative_fraction : 0.0;
    // first-order value rho(1) + (1 - gamma) E[Z | Z < 0]
    const double first_order = cert.rho_full + (1.0 - l.greedy_gamma) * cond_mean;
    io::Table t;
    t.columns = {"quantity", "value"};
    t.add({"draws", std::to_string(cert.n_draws)});
    t.add({"negative_count", std::to_string(cert.n_negative)});
    t.add({"negative_fraction", format_double(cert.negative_fraction)});
    t.add({"std_error", format_double(cert.std_error)});
    t.add({"certified", cert.certified ? "1" : "0"});
    t.add({"conditional_mean_negative", format_double(cond_mean)});
    t.add({"rho_full", format_double(cert.rho_full)});
    t.add({"gamma", format_double(l.greedy_gamma)});
    t.add({"rho_greedy", format_double(greedy.rho)});
    t.add({"first_order_value", format_double(first_order)});
    io::write_table(t, cfg.output.path, cfg.output.format);
    out << "P(Z<0) = " << cert.negative_fraction << " +- " << cert.std_error
        << (cert.certified ? " (certified at 3 SE)" : " (not certified)") << "\n";
    out << "rho(1) = " << cert.rho_full << ", greedy rho(" << l.greedy_gamma << ") = " << greedy.rho << "\n";
    out << "wrote " << cfg.output.path << "\n";
    return kOk;
}

int cmd_minimax(const Common& c, std::ostream& out) {
    const io::LabConfig cfg = load(c);
    echo(out, "minimax-discrete", cfg, c.jobs);
    if (!cfg.minimax) throw io::ConfigError("/minimax", "section required for minimax-discrete");
    io::Table t;
    t.columns = {"gamma", "level", "p", "q", "theta_su", "theta_mm", "pi_mm", "pi_plugin",
                 "worst_rho_mm", "worst_rho_plugin", "rho_mm_at_theta_mm"};
    for (double gamma : cfg.experiment.gammas) {
        const minimax::DiscreteMinimaxSpec spec{cfg.minimax->p, cfg.minimax->q, cfg.minimax->theta_su,
                                                cfg.minimax->eps, gamma};
        const minimax::ThetaMM th = minimax::solve_theta_mm(spec);
        const minimax::MinimaxPi mm = minimax::minimax_pi(spec, th.theta);
        const minimax::MinimaxPi plug = minimax::minimax_pi(spec, spec.theta_su);
        const double w_mm = minimax::worst_case_rho(spec, mm.pi);
        const double w_plug = minimax::worst_case_rho(spec, plug.pi);
        const double at = minimax::rho(spec, mm.pi, th.theta);
        for (Eigen::Index x = 0; x < spec.k(); ++x)
            t.add({format_double(gamma), std::to_string(x), format_double(spec.p(x)), format_double(spec.q(x)),
                   format_double(spec.theta_su(x)), format_double(th.theta(x)), format_double(mm.pi(x)),
                   format_double(plug.pi(x)), format_double(w_mm), format_double(w_plug), format_double(at)});
        out << "gamma=" << gamma << " worst-case rho: minimax " << w_mm << ", plug-in " << w_plug << "\n";
    }
    io::write_table(t, cfg.output.path, cfg.output.format);
    out << "wrote " << cfg.output.path << "\n";
    return kOk;
}

double beta_for(const io::LabConfig& cfg, int jobs, double& beta_s, std::string& error) {
    const sim::ExperimentConfig& e = cfg.experiment;
    const Vector theta0 = sim::make_theta0(e.p, e.kernel.theta0_norm(), e.theta0_seed);
    std::vector<std::string> errors;
    const auto sur = sim::replicate_surrogates(e, theta0, jobs, errors);
    double b0 = 0.0, bs = 0.0;
    for (std::size_t r = 0; r < sur.size(); ++r) {
        if (!errors[r].empty() && error.empty()) error = "replicate " + std::to_string(r) + ": " + errors[r];
        const Decomposition d = surrogate_decompose(sur[r].theta_su, theta0);
        b0 += d.beta0;
        bs += d.beta_s;
    }
    beta_s = bs / static_cast<double>(sur.size());
    return b0 / static_cast<double>(sur.size());
}

int cmd_highdim(const Common& c, std::ostream& out, std::ostream& err) {
    const io::LabConfig cfg = load(c);
    echo(out, "highdim-solve", cfg, c.jobs);
    const sim::ExperimentConfig& e = cfg.experiment;
    double beta_s = 0.0;
    std::string sur_error;
    const double beta0 = beta_for(cfg, c.jobs, beta_s, sur_error);
    if (!sur_error.empty()) err << "warning: " << sur_error << "\n";
    const double delta0 = cfg.delta0 ? *cfg.delta0 : static_cast<double>(sim::training_rows(e)) / e.p;
    out << "beta0=" << beta0 << " beta_s=" << beta_s << " delta0=" << delta0 << "\n";
    io::Table t;
    t.columns = {"scheme", "gamma", "alpha", "lambda", "alpha0", "alphas", "alphaperp", "mu", "mu_flat",
                 "realized_gamma", "test_error", "excess_error", "misclassification", "lagrangian",
                 "iterations", "gradient_norm", "status"};
    std::string first_failure;
    const std::string scheme = to_string(e.scheme);
    for (double gamma : e.gammas)
        for (double alpha : e.alphas)
            for (double lambda : e.lambdas) {
                const double a = e.scheme == SchemeKind::TopkHard ? std::numeric_limits<double>::infinity()
                                 : e.scheme == SchemeKind::TopkEasy ? -std::numeric_limits<double>::infinity()
                                                                    : alpha;
                std::vector<std::string> row = {scheme, format_double(gamma), format_double(a), format_double(lambda)};
                try {
                    const auto spec = sim::theory_spec(e, beta0, beta_s, delta0, gamma, alpha, lambda);
                    const highdim::SaddleSolution s = highdim::solve_saddle(spec);
                    for (double v : s.alpha) row.push_back(format_double(v));
                    row.insert(row.end(), {format_double(s.mu), s.mu_flat ? "1" : "0", format_double(s.realized_gamma),
                                           format_double(s.predicted.test_error), format_double(s.predicted.excess_error),
                                           format_double(s.predicted.misclassification),
                                           format_double(s.lagrangian_value), std::to_string(s.iterations),
                                           format_double(s.gradient_norm), "ok"});
                } catch (const std::exception& ex) {
                    const std::string cell = "gamma=" + format_double(gamma) + " alpha=" + format_double(a) +
                                             " lambda=" + format_double(lambda);
                    err << "saddle solve failed at " << cell << ": " << ex.what() << "\n";
                    if (first_failure.empty()) first_failure = cell;
                    row.resize(4);
                    for (int k = 0; k < 12; ++k) row.push_back("nan");
                    row.push_back("saddle-failed");
                }
                t.add(row);
            }
    io::write_table(t, cfg.output.path, cfg.output.format);
    out << "wrote " << cfg.output.path << "\n";
    if (!first_failure.empty()) throw CellFailure("saddle solve failed at " + first_failure);
    return kOk;
}

int cmd_ridgeless(const Common& c, std::ostream& out, bool with_saddle) {
    const io::LabConfig cfg = load(c);
    echo(out, "ridgeless", cfg, c.jobs);
    const sim::ExperimentConfig& e = cfg.experiment;
    io::Table t;
    t.columns = {"delta", "delta0", "gamma", "alpha", "A1", "B1", "C1", "Api", "Bpi", "Cpi", "excess",
                 "saddle_excess"};
    for (double delta : cfg.ridgeless_delta)
        for (double gamma : e.gammas)
            for (double alpha : e.alphas) {
                const SchemeKind kind = e.scheme == SchemeKind::Random ? SchemeKind::Random : SchemeKind::AlphaFamily;
                const double a = e.scheme == SchemeKind::TopkHard ? std::numeric_limits<double>::infinity()
                                 : e.scheme == SchemeKind::TopkEasy ? -std::numeric_limits<double>::infinity()
                                                                    : alpha;
                const SelectionRule rule = highdim::calibrate_rule(kind, gamma, a, false, 1.0);
                const double delta0 = delta / gamma;
                const highdim::RidgelessTerms r = highdim::ridgeless_closed_form(e.kernel, rule, delta0);
                double saddle = std::numeric_limits<double>::quiet_NaN();
                if (with_saddle) {
                    highdim::SaddleSpec spec;
                    spec.loss = {LossKind::Square, TestKind::SameAsTrain};
                    spec.kernel = e.kernel;
                    spec.delta0 = delta0;
                    spec.lambda = 1e-5;
                    spec.selection = rule;
                    spec.orders = e.orders;
                    // closed form is in squared-error units, the Lagrangian loss is halved
                    saddle = 2.0 * highdim::solve_saddle(spec).predicted.excess_error;
                }
                t.add({format_double(delta), format_double(delta0), format_double(gamma), format_double(a),
                       format_double(r.A1), format_double(r.B1), format_double(r.C1), format_double(r.Api),
                       format_double(r.Bpi), format_double(r.Cpi), format_double(r.excess), format_double(saddle)});
                out << "delta=" << delta << " gamma=" << gamma << " alpha=" << a << " excess=" << r.excess << "\n";
            }
    io::write_table(t, cfg.output.path, cfg.output.format);
    out << "wrote " << cfg.output.path << "\n";
    return kOk;
}

int cmd_sweep(const Common& c, std::ostream& out, std::ostream& err, bool theory) {
    io::LabConfig cfg = load(c);
    if (!theory) cfg.experiment.theory = false;
    echo(out, theory ? "sweep" : "simulate", cfg, c.jobs);
    const sim::ExperimentResult res = sim::run_sweep(cfg.experiment, c.jobs);
    io::write_results(res.rows, cfg.output.path, cfg.output.format);
    const std::string cells = sibling(cfg.output.path, "cells");
    io::write_cells(res.cells, cells, cfg.output.format);
    out << "beta0=" << res.beta0 << " beta_s=" << res.beta_s << "\n";
    for (const auto& cell : res.cells)
        out << "gamma=" << cell.gamma << " alpha=" << cell.alpha << " median test=" << cell.median_test
            << " theory=" << cell.theory_test_error << " (n_ok=" << cell.n_ok << ")\n";
    out << "wrote " << cfg.output.path << " and " << cells << "\n";
    std::string first;
    for (const auto& r : res.rows)
        if (r.status != "ok") {
            const std::string cell = "gamma=" + format_double(r.gamma) + " alpha=" + format_double(r.alpha) +
                                     " lambda=" + format_double(r.lambda) + " replicate=" + std::to_string(r.replicate);
            err << r.status << " at " << cell << "\n";
            if (first.empty()) first = r.status + " at " + cell;
        }
    if (!first.empty()) throw CellFailure(first);
    return kOk;
}

int cmd_select(const std::string& data, const std::string& surrogate, const std::optional<std::string>& label,
               double gamma, double alpha, bool no_reweight, const std::string& path, std::uint64_t seed,
               std::ostream& out) {
    out << "# subsample-lab select\n# data=" << data << " surrogate=" << surrogate << " gamma=" << format_double(gamma)
        << " alpha=" << format_double(alpha) << " reweight=" << (no_reweight ? "false" : "true") << " seed=" << seed
        << "\n";
    io::IngestedCsv csv = io::read_dataset_csv(data, label);
    const SurrogateModel s = io::read_surrogate(surrogate);
    if (s.theta_su.size() != csv.data.p())
        throw InvalidArgument("surrogate has " + std::to_string(s.theta_su.size()) + " coefficients, data has " +
                              std::to_string(csv.data.p()) + " features");
    Rng rng(Rng::derive(seed, {13}));
    const sim::SelectionOutcome sel = sim::alpha_family_pi(s.theta_su, csv.data.features, gamma, alpha, !no_reweight, rng);
    io::write_selection(sel, path);
    out << "selected " << sel.realized_n << " of " << csv.data.n() << " (target " << sel.target_n << ")\n";
    out << "wrote " << path << "\n";
    return kOk;
}

}  // namespace

int default_jobs() {
    if (const char* env = std::getenv("SUBSAMPLE_LAB_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
    }
    return 1;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Data selection for weighted ERM: asymptotic and high-dimensional error predictions", "subsample-lab"};
    app.require_subcommand(1, 1);
    app.set_help_all_flag("--help-all");

    Common common;
    common.jobs = default_jobs();
    std::uint64_t seed_value = 0;
    bool with_saddle = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config, "JSON config file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", common.out, "output path (overrides output.path)");
        sub->add_option("--seed", seed_value, "base seed (overrides experiment.seed)")
            ->each([&](const std::string&) { common.seed = seed_value; });
        sub->add_option("--jobs", common.jobs, "worker threads")->check(CLI::PositiveNumber);
    };
    CLI::App* lowdim_rho = app.add_subcommand("lowdim-rho", "asymptotic coefficient over a gamma grid");
    CLI::App* nonmono = app.add_subcommand("nonmono-check", "negativity certificate for the full-sample selection score");
    CLI::App* mm = app.add_subcommand("minimax-discrete", "minimax scheme for discrete covariates");
    CLI::App* hd = app.add_subcommand("highdim-solve", "saddle point per (gamma, alpha, lambda) cell");
    CLI::App* rl = app.add_subcommand("ridgeless", "ridgeless least-squares excess risk");
    CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo sweep without theory overlay");
    CLI::App* sweep = app.add_subcommand("sweep", "Monte Carlo sweep with theory overlay");
    for (CLI::App* s : {lowdim_rho, nonmono, mm, hd, rl, simulate, sweep}) add_common(s);
    rl->add_flag("--with-saddle", with_saddle, "also solve the square-loss saddle at lambda=1e-5");

    CLI::App* sel = app.add_subcommand("select", "per-sample selection export");
    std::string data, surrogate, sel_out;
    std::optional<std::string> label;
    double gamma = 0.0, alpha = 0.0;
    bool no_reweight = false;
    std::uint64_t sel_seed = 1;
    sel->add_option("--data", data, "CSV with a header row")->required()->check(CLI::ExistingFile);
    sel->add_option("--surrogate", surrogate, "JSON with theta_su")->required()->check(CLI::ExistingFile);
    sel->add_option("--label", label, "label column to drop from the features");
    sel->add_option("--gamma", gamma, "target fraction in (0, 1]")->required()->check(CLI::Range(0.0, 1.0));
    sel->add_option("--alpha", alpha, "exponent; inf / -inf for topk")->required();
    sel->add_flag("--no-reweight", no_reweight, "weights 1 instead of 1/pi");
    sel->add_option("--out", sel_out, "selection CSV")->required();
    sel->add_option("--seed", sel_seed, "seed for Bernoulli inclusion");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n" << app.help();
        return kUsage;
    }

    try {
        if (lowdim_rho->parsed()) return cmd_lowdim_rho(common, out);
        if (nonmono->parsed()) return cmd_nonmono(common, out);
        if (mm->parsed()) return cmd_minimax(common, out);
        if (hd->parsed()) return cmd_highdim(common, out, err);
        if (rl->parsed()) return cmd_ridgeless(common, out, with_saddle);
        if (simulate->parsed()) return cmd_sweep(common, out, err, false);
        if (sweep->parsed()) return cmd_sweep(common, out, err, true);
        if (sel->parsed()) {
            if (!(gamma > 0.0)) {
                err << "usage error: --gamma must lie in (0, 1]\n";
                return kUsage;
            }
            return cmd_select(data, surrogate, label, gamma, alpha, no_reweight, sel_out, sel_seed, out);
        }
    } catch (const io::ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const CellFailure& e) {
        err << "numerical failure: " << e.what() << " (partial results written)\n";
        return kNumerical;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << "\n";
        return kNumerical;
    } catch (const InvalidArgument& e) {
        err << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kConfig;
    }
    return kUsage;
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace sublab::cli
