// nsgp: command-line front end for designs, test functions, stationary and nonstationary
// emulators, region selection, validation and LOLHO studies.

#include "nsgp/nsgp.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <numeric>

using namespace nsgp;

namespace {

struct Globals {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
};

RunConfig resolve_config(const Globals& g) {
    RunConfig cfg = g.config_path.empty() ? RunConfig{} : load_config(g.config_path);
    if (g.seed) cfg.seed = *g.seed;
    if (!g.out.empty()) cfg.output_dir = g.out;
    return cfg;
}

void log(const std::string& s) { std::cerr << "nsgp: " << s << "\n"; }

void log_notices(const std::vector<std::string>& notices) {
    for (const auto& n : notices) log("notice: " + n);
}

/// Consecutive equal blocks, or the configured labels.
std::vector<int> fold_labels(const RunConfig& cfg, int folds, Eigen::Index n) {
    if (folds > 0) {
        if (n % folds != 0)
            throw ArgumentError("--folds " + std::to_string(folds) + " does not divide the " + std::to_string(n) + " runs");
        std::vector<int> labels(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = static_cast<int>(i / (n / folds));
        return labels;
    }
    if (cfg.fold_labels.empty()) throw ArgumentError("lolho needs fold labels: pass --folds K or set fold_labels in the config");
    if (static_cast<Eigen::Index>(cfg.fold_labels.size()) != n)
        throw ArgumentError("config fold_labels has " + std::to_string(cfg.fold_labels.size()) + " entries, ensemble has " +
                            std::to_string(n) + " runs");
    return cfg.fold_labels;
}

std::string predictions_csv(const Matrix& X, const PredictiveSummary& p, double alpha) {
    const double z = normal_quantile(1.0 - alpha / 2.0);
    Matrix rows(X.rows(), X.cols() + 4);
    rows.leftCols(X.cols()) = X;
    rows.col(X.cols()) = p.mean;
    rows.col(X.cols() + 1) = p.sd;
    rows.col(X.cols() + 2) = p.mean - z * p.sd;
    rows.col(X.cols() + 3) = p.mean + z * p.sd;
    auto header = io::input_header(X.cols());
    for (const char* h : {"mean", "sd", "lower", "upper"}) header.emplace_back(h);
    return io::csv_text(header, rows);
}

json read_json(const std::string& path) {
    try {
        return json::parse(io::read_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError("'" + path + "': " + e.what());
    }
}

FittedStationaryGP require_stationary(const Model& m, const std::string& path) {
    if (!m.stationary) throw ArgumentError("'" + path + "' is not a stationary emulator artifact");
    return *m.stationary;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stationary and mixture-kernel nonstationary Gaussian process emulators"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_path, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Random seed (overrides the config)");
    app.add_option("--out", g.out, "Output directory (overrides the config)");

    // design
    Eigen::Index n_design = 0, p_design = 0;
    int design_folds = 1;
    std::string design_fn;
    auto* design = app.add_subcommand("design", "Maximin Latin hypercube, optionally k-extended");
    design->add_option("-n,--runs", n_design, "Runs per Latin hypercube")->required()->check(CLI::PositiveNumber);
    design->add_option("-p,--inputs", p_design, "Number of inputs")->check(CLI::PositiveNumber);
    design->add_option("--folds", design_folds, "Number of sequentially extended hypercubes")->check(CLI::PositiveNumber);
    design->add_option("--function", design_fn, "Map onto the domain of a test function (wavy2d, piecewise5d)");

    // eval
    std::string eval_fn, eval_design;
    int eval_grid = 0;
    auto* eval = app.add_subcommand("eval", "Evaluate a test function on a design or a regular grid");
    eval->add_option("--function", eval_fn, "wavy2d or piecewise5d")->required();
    auto* eval_design_opt = eval->add_option("--design", eval_design, "CSV with columns x1..xp")->check(CLI::ExistingFile);
    eval->add_option("--grid", eval_grid, "Points per axis of a regular grid over the domain")
        ->check(CLI::PositiveNumber)
        ->excludes(eval_design_opt);

    // fit
    std::string data_path;
    auto* fit = app.add_subcommand("fit", "Fit the stationary emulator");
    fit->add_option("--data", data_path, "Ensemble CSV x1..xp,y")->required()->check(CLI::ExistingFile);

    // diagnose
    std::string model_path;
    auto* diagnose = app.add_subcommand("diagnose", "Standardized LOO residuals and sampler diagnostics of a fit");
    diagnose->add_option("--model", model_path, "Emulator artifact")->required()->check(CLI::ExistingFile);

    // select-l
    std::string residuals_path;
    auto* select = app.add_subcommand("select-l", "Fit mixture models to LOO residuals and select the number of regions");
    select->add_option("--model", model_path, "Stationary emulator artifact")->required()->check(CLI::ExistingFile);
    select->add_option("--residuals", residuals_path, "Residual CSV x1..xp,e (default: recomputed from the model)")
        ->check(CLI::ExistingFile);

    // fit-ns
    std::string mixture_path;
    auto* fitns = app.add_subcommand("fit-ns", "Fit the nonstationary emulator with a frozen mixing function");
    fitns->add_option("--model", model_path, "Stationary emulator artifact (supplies the ensemble)")
        ->required()
        ->check(CLI::ExistingFile);
    fitns->add_option("--mixture", mixture_path, "Mixture artifact from select-l")->required()->check(CLI::ExistingFile);

    // validate
    std::string validation_path;
    auto* validate = app.add_subcommand("validate", "Score an emulator on held-out runs");
    validate->add_option("--model", model_path, "Emulator artifact")->required()->check(CLI::ExistingFile);
    validate->add_option("--data", validation_path, "Validation CSV x1..xp,y")->required()->check(CLI::ExistingFile);

    // lolho
    int lolho_folds = 0;
    auto* lolho = app.add_subcommand("lolho", "Leave-one-Latin-hypercube-out comparison of both emulators");
    lolho->add_option("--data", data_path, "Ensemble CSV x1..xp,y")->required()->check(CLI::ExistingFile);
    lolho->add_option("--folds", lolho_folds, "Split the runs into K consecutive blocks")->check(CLI::PositiveNumber);

    // predict
    std::string points_path;
    auto* predict = app.add_subcommand("predict", "Predictive mean, sd and interval at new inputs");
    predict->add_option("--model", model_path, "Emulator artifact")->required()->check(CLI::ExistingFile);
    predict->add_option("--points", points_path, "CSV with columns x1..xp")->required()->check(CLI::ExistingFile);

    // run
    auto* run = app.add_subcommand("run", "Full pipeline: stationary fit, diagnostics, selection, nonstationary fit");
    run->add_option("--data", data_path, "Ensemble CSV x1..xp,y")->required()->check(CLI::ExistingFile);
    run->add_option("--validation", validation_path, "Optional validation CSV x1..xp,y")->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    RunConfig cfg;
    try {
        cfg = resolve_config(g);
    } catch (const std::exception& e) {
        log(e.what());
        return 2;
    }

    CLI::App* cmd = app.get_subcommands().front();
    const std::string command = cmd->get_name();
    OutputDirectory out(cfg.output_dir);
    int rc = 0;
    std::string status = "ok";
    try {
        const SamplerConfig sc = cfg.sampler_config();
        if (cmd == design) {
            if (!design_fn.empty()) {
                const auto tf = testfns::test_function(design_fn, cfg.piecewise5d);
                if (p_design != 0 && p_design != tf.dim)
                    throw ArgumentError("--inputs " + std::to_string(p_design) + " does not match " + design_fn);
                p_design = tf.dim;
            }
            if (p_design < 1) throw ArgumentError("design needs --inputs or --function");
            Design d = design_folds > 1 ? extended_lhc(n_design, design_folds, p_design, cfg.seed, cfg.design_optim_iters)
                                        : maximin_lhc(n_design, p_design, cfg.seed, cfg.design_optim_iters, cfg.design_restarts);
            Matrix pts = d.points;
            if (!design_fn.empty()) {
                const auto tf = testfns::test_function(design_fn, cfg.piecewise5d);
                for (Eigen::Index i = 0; i < pts.rows(); ++i) pts.row(i) = tf.to_native(d.points.row(i).transpose()).transpose();
            }
            out.write("design.csv", io::csv_text(io::input_header(p_design), pts));
            out.write("design.json", json{{"runs", d.size()},
                                          {"inputs", d.dim()},
                                          {"folds", d.folds()},
                                          {"fold_labels", d.labels},
                                          {"min_distance", d.min_distance},
                                          {"seed", d.seed}}
                                             .dump(2) + "\n");
            log("design: " + std::to_string(d.size()) + " runs, min distance " + report::fixed(d.min_distance));
        } else if (cmd == eval) {
            const auto tf = testfns::test_function(eval_fn, cfg.piecewise5d);
            Matrix X;
            if (!eval_design.empty()) {
                X = io::read_ensemble_csv(eval_design).X;
                if (X.cols() != tf.dim) throw ArgumentError("design has " + std::to_string(X.cols()) + " inputs, " + eval_fn +
                                                            " takes " + std::to_string(tf.dim));
            } else {
                if (eval_grid < 2) throw ArgumentError("eval needs --design or --grid N with N >= 2");
                Eigen::Index total = 1;
                for (Eigen::Index j = 0; j < tf.dim; ++j) total *= eval_grid;
                X.resize(total, tf.dim);
                for (Eigen::Index i = 0; i < total; ++i) {
                    Eigen::Index r = i;
                    for (Eigen::Index j = 0; j < tf.dim; ++j) {
                        const double t = static_cast<double>(r % eval_grid) / static_cast<double>(eval_grid - 1);
                        X(i, j) = tf.lower(j) + t * (tf.upper(j) - tf.lower(j));
                        r /= eval_grid;
                    }
                }
            }
            const Vector y = tf.evaluate(X);
            Matrix rows(X.rows(), X.cols() + 1);
            rows << X, y;
            auto header = io::input_header(X.cols());
            header.emplace_back("y");
            out.write("ensemble.csv", io::csv_text(header, rows));
            log("eval: " + std::to_string(X.rows()) + " runs of " + eval_fn);
        } else if (cmd == fit) {
            const auto data = io::load_ensemble(data_path, cfg.input_ranges);
            const auto f = run_stage("stationary", [&] { return fit_stationary(data.ensemble, cfg.prior, sc); });
            out.write("stationary.json", stationary_artifact(f, data.standardizer).dump(1) + "\n");
            out.write("stationary_diagnostics.csv", report::diagnostics_table(f.draws()));
            log_notices(f.notices());
            if (!f.converged()) rc = 4;
        } else if (cmd == diagnose) {
            const Model m = load_model(model_path);
            const Vector e = run_stage("loo", [&] { return m.loo_residuals(cfg.loo_mode); });
            Matrix rows(e.size(), m.ensemble().dim() + 1);
            rows << m.standardizer.inputs_inverse(m.ensemble().X), e;
            auto header = io::input_header(m.ensemble().dim());
            header.emplace_back("e");
            out.write("loo_residuals.csv", io::csv_text(header, rows));
            out.write(m.kind + "_diagnostics.csv", report::diagnostics_table(m.draws()));
            const auto flagged = m.draws().diagnostics.flagged_names();
            log("diagnose: max |e| " + report::fixed(e.cwiseAbs().maxCoeff()) + ", flagged parameters " +
                std::to_string(flagged.size()));
            if (!m.converged()) rc = 4;
        } else if (cmd == select) {
            const Model m = load_model(model_path);
            const FittedStationaryGP st = require_stationary(m, model_path);
            Matrix X = st.ensemble().X;
            Vector e;
            if (!residuals_path.empty()) {
                const auto file = io::read_ensemble_csv(residuals_path, "e");
                if (!file.has_response) throw ParseError(residuals_path + ": header has no residual column 'e'");
                if (file.dim() != X.cols()) throw ArgumentError("residual file input dimension does not match the model");
                X = m.standardizer.inputs_forward(file.X);
                e = file.y;
            } else {
                e = run_stage("loo", [&] { return st.loo_residuals(cfg.loo_mode); });
            }
            const auto r = run_stage("select", [&] { return select_regions(X, e, cfg.mixture_prior, sc, cfg.selection(X.cols())); });
            out.write("waic.csv", report::waic_table(r));
            if (const MixtureFit* mf = r.fit_for(r.selected)) {
                out.write("mixture.json", mixture_artifact(*mf, &r).dump(1) + "\n");
                out.write("mixing_weights.csv", report::weights_table(m.standardizer.inputs_inverse(X), mf->lambda_hat.evaluate(X)));
            }
            for (const auto& w : r.warnings) log("warning: " + w);
            log("select-l: selected L = " + std::to_string(r.selected));
            if (r.selected == 1) log(std::string("notice: ") + kNoNonstationarity);
            if (r.selected_unconverged) rc = 4;
        } else if (cmd == fitns) {
            const Model m = load_model(model_path);
            require_stationary(m, model_path);
            const MixtureFit mf = load_mixture(mixture_path);
            auto lambda = std::make_shared<const MixingFunction>(mf.lambda_hat);
            const NonstationaryPriorSpec nsp = cfg.nonstationary_prior();
            const auto f = run_stage("nonstationary", [&] { return fit_nonstationary(m.ensemble(), lambda, nsp, sc); });
            out.write("nonstationary.json", nonstationary_artifact(f, m.standardizer, nsp, &mf).dump(1) + "\n");
            out.write("nonstationary_diagnostics.csv", report::diagnostics_table(f.draws()));
            out.write("region_lengthscales.csv", report::lengthscale_table(region_lengthscale_means(f)));
            log_notices(f.notices());
            if (!f.converged()) rc = 4;
        } else if (cmd == validate) {
            const Model m = load_model(model_path);
            const auto file = io::read_ensemble_csv(validation_path);
            if (!file.has_response) throw ParseError(validation_path + ": header has no response column 'y'");
            const auto sc2 = run_stage("validate", [&] { return score_predictions(m.predict(file.X), file.y, cfg.alpha); });
            out.write("scores.csv", report::score_table({{m.kind, sc2}}));
            out.write("plot_" + m.kind + ".csv", report::plot_data(file.X, sc2));
            log("validate: IS " + report::fixed(sc2.mean_interval_score) + ", RMSE " + report::fixed(sc2.rmse) + ", coverage " +
                report::fixed(sc2.coverage(), 3));
        } else if (cmd == lolho) {
            const auto file = io::read_ensemble_csv(data_path);
            if (!file.has_response) throw ParseError(data_path + ": header has no response column 'y'");
            const auto labels = fold_labels(cfg, lolho_folds, file.size());
            const auto folds = lolho_pipeline(labels, file.X, file.y, cfg, cfg.input_ranges);
            out.write("lolho.csv", lolho_table(folds));
            int wins = 0;
            for (const auto& f : folds) {
                if (f.failed) {
                    log("fold " + std::to_string(f.fold) + " failed: " + f.error);
                    rc = 3;
                }
                if (!f.converged && rc == 0) rc = 4;
                wins += f.nonstationary_wins() ? 1 : 0;
            }
            log("lolho: nonstationary better on " + std::to_string(wins) + " of " + std::to_string(folds.size()) + " folds");
        } else if (cmd == predict) {
            const Model m = load_model(model_path);
            const auto file = io::read_ensemble_csv(points_path);
            out.write("predictions.csv", predictions_csv(file.X, m.predict(file.X), cfg.alpha));
        } else if (cmd == run) {
            const auto data = io::load_ensemble(data_path, cfg.input_ranges);
            std::optional<ValidationSet> v;
            if (!validation_path.empty()) {
                const auto file = io::read_ensemble_csv(validation_path);
                if (!file.has_response) throw ParseError(validation_path + ": header has no response column 'y'");
                v = ValidationSet{file.X, file.y};
            }
            const PipelineResult r = run_pipeline(data, cfg, out.sink(), v);
            log_notices(r.notices);
            log("run: selected L = " + std::to_string(r.selected_L));
            rc = r.exit_code();
        }
        if (rc == 4) status = "unconverged";
        else if (rc == 3) status = "fold failures";
    } catch (const StageError& e) {
        log(e.what());
        rc = exit_code_for(e.kind());
        status = std::string("failed: ") + e.what();
    } catch (const std::exception& e) {
        log(e.what());
        rc = exit_code_for(error_kind(e));
        status = std::string("failed: ") + e.what();
    }
    try {
        out.write_manifest(cfg, command, status, rc);
    } catch (const std::exception& e) {
        log(std::string("cannot write manifest: ") + e.what());
        if (rc == 0) rc = 2;
    }
    return rc;
}
