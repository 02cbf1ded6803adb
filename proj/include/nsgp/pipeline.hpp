#ifndef NSGP_PIPELINE_HPP
#define NSGP_PIPELINE_HPP

// End-to-end orchestration: stationary fit, LOO residual diagnostics, region selection, the
// nonstationary refit and validation, plus the reports, plot data and run manifest.

#include "nsgp/artifact.hpp"
#include "nsgp/config.hpp"
#include "nsgp/io.hpp"
#include "nsgp/mixture.hpp"
#include "nsgp/nonstationary_gp.hpp"
#include "nsgp/stationary_gp.hpp"
#include "nsgp/validation.hpp"

#include <algorithm>
#include <cstdio>
#include <tuple>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#ifndef NSGP_VERSION
#define NSGP_VERSION "0.1.0"
#endif

namespace nsgp {

inline ErrorKind error_kind(const std::exception& e) {
    if (auto* s = dynamic_cast<const StageError*>(&e)) return s->kind();
    if (dynamic_cast<const ParseError*>(&e)) return ErrorKind::parse;
    if (dynamic_cast<const ArgumentError*>(&e)) return ErrorKind::argument;
    if (dynamic_cast<const DomainError*>(&e)) return ErrorKind::domain;
    if (dynamic_cast<const NumericalError*>(&e)) return ErrorKind::numerical;
    return ErrorKind::other;
}

/// 2 for bad input, 3 for numerical trouble.
inline int exit_code_for(ErrorKind k) {
    switch (k) {
        case ErrorKind::argument:
        case ErrorKind::domain:
        case ErrorKind::parse: return 2;
        default: return 3;
    }
}

template <class F>
auto run_stage(const std::string& stage, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what(), error_kind(e));
    }
}

/// Receives (file name, content) for every artifact as soon as its stage finishes.
using ArtifactSink = std::function<void(const std::string&, const std::string&)>;

/// Atomic writer that remembers what it wrote for the manifest.
class OutputDirectory {
public:
    explicit OutputDirectory(std::filesystem::path root) : root_(std::move(root)) {}

    const std::filesystem::path& root() const { return root_; }

    void write(const std::string& name, const std::string& content) {
        io::atomic_write(root_ / name, content);
        files_[name] = {content.size(), io::hex64(io::fnv1a(content))};
    }

    ArtifactSink sink() {
        return [this](const std::string& name, const std::string& content) { write(name, content); };
    }

    std::vector<std::string> files() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : files_) out.push_back(k);
        return out;
    }

    json manifest(const RunConfig& cfg, const std::string& command, const std::string& status, int exit_code) const {
        json files = json::array();
        for (const auto& [name, e] : files_) files.push_back({{"name", name}, {"bytes", e.bytes}, {"fnv1a", e.hash}});
        return {{"format", "nsgp-manifest"},
                {"version", 1},
                {"command", command},
                {"status", status},
                {"exit_code", exit_code},
                {"seed", cfg.seed},
                {"config_hash", config_hash(cfg)},
                {"config", to_json(cfg)},
                {"versions",
                 {{"nsgp", NSGP_VERSION},
                  {"artifact", kArtifactVersion},
                  {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                std::to_string(EIGEN_MINOR_VERSION)},
                  {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                        std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                        std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}},
                {"files", files}};
    }

    void write_manifest(const RunConfig& cfg, const std::string& command, const std::string& status = "ok", int exit_code = 0) {
        io::atomic_write(root_ / "manifest.json", manifest(cfg, command, status, exit_code).dump(2) + "\n");
    }

private:
    struct Entry {
        std::size_t bytes;
        std::string hash;
    };
    std::filesystem::path root_;
    std::map<std::string, Entry> files_;
};

namespace report {

inline std::string fixed(double v, int digits = 4) {
    if (!std::isfinite(v)) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

/// One row per candidate L: WAIC, change from the previous candidate, convergence, selection.
inline std::string waic_table(const ModelSelectionReport& r) {
    std::string s = "L,waic,difference,converged,selected\n";
    for (std::size_t k = 0; k < r.candidates.size(); ++k) {
        const double d = k == 0 ? std::numeric_limits<double>::quiet_NaN() : r.waic[k] - r.waic[k - 1];
        s += std::to_string(r.candidates[k]) + "," + io::format_double(r.waic[k]) + "," + io::format_double(d) + "," +
             (r.converged[k] ? "true" : "false") + "," + (r.candidates[k] == r.selected ? "true" : "false") + "\n";
    }
    return s;
}

inline std::string score_table(const std::vector<std::pair<std::string, ScoreSummary>>& rows) {
    std::string s = "emulator,interval_score,rmse,coverage,failures,points\n";
    for (const auto& [name, sc] : rows)
        s += name + "," + io::format_double(sc.mean_interval_score) + "," + io::format_double(sc.rmse) + "," +
             io::format_double(sc.coverage()) + "," + std::to_string(sc.failures()) + "," + std::to_string(sc.size()) + "\n";
    return s;
}

/// (x..., truth, mean, lower, upper, pass) using the 2-sd plotting band.
inline std::string plot_data(const Matrix& X, const ScoreSummary& sc) {
    Matrix rows(X.rows(), X.cols() + 5);
    rows.leftCols(X.cols()) = X;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const auto& p = sc.points[static_cast<std::size_t>(i)];
        rows(i, X.cols()) = p.truth;
        rows(i, X.cols() + 1) = p.mean;
        rows(i, X.cols() + 2) = p.plot_lower;
        rows(i, X.cols() + 3) = p.plot_upper;
        rows(i, X.cols() + 4) = p.truth >= p.plot_lower && p.truth <= p.plot_upper ? 1.0 : 0.0;
    }
    auto header = io::input_header(X.cols());
    for (const char* h : {"truth", "mean", "lower", "upper", "pass"}) header.emplace_back(h);
    return io::csv_text(header, rows);
}

inline std::string lengthscale_table(const Matrix& means) {
    std::vector<std::string> header{"region"};
    for (const auto& h : io::input_header(means.cols())) header.push_back("delta_" + h);
    Matrix rows(means.rows(), means.cols() + 1);
    for (Eigen::Index l = 0; l < means.rows(); ++l) {
        rows(l, 0) = static_cast<double>(l + 1);
        rows.row(l).tail(means.cols()) = means.row(l);
    }
    return io::csv_text(header, rows);
}

inline std::string weights_table(const Matrix& X, const Matrix& lambda) {
    Matrix rows(X.rows(), X.cols() + lambda.cols());
    rows << X, lambda;
    auto header = io::input_header(X.cols());
    for (Eigen::Index l = 0; l < lambda.cols(); ++l) header.push_back("lambda_" + std::to_string(l + 1));
    return io::csv_text(header, rows);
}

inline std::string diagnostics_table(const DrawSet& d) {
    std::string s = "parameter,mean,sd,rhat,ess,flagged\n";
    for (Eigen::Index k = 0; k < d.dim(); ++k) {
        const auto col = d.draws.col(k);
        const double m = col.mean();
        const double sd = d.size() > 1 ? std::sqrt((col.array() - m).square().sum() / static_cast<double>(d.size() - 1)) : 0.0;
        const bool has = d.diagnostics.rhat.size() == d.dim();
        s += d.names[static_cast<std::size_t>(k)] + "," + io::format_double(m) + "," + io::format_double(sd) + "," +
             (has ? io::format_double(d.diagnostics.rhat(k)) : "nan") + "," +
             (has ? io::format_double(d.diagnostics.ess(k)) : "nan") + "," + (has && d.diagnostics.flagged(k) ? "true" : "false") +
             "\n";
    }
    return s;
}

}  // namespace report

/// Emulators in native units: standardize inputs, predict, map mean and sd back.
template <class Fit>
PredictiveSummary predict_native(const Fit& fit, const Standardizer& s, const Matrix& X_native) {
    PredictiveSummary p = fit.predict(s.inputs_forward(X_native));
    p.mean = s.response_inverse(p.mean);
    p.sd = s.sd_inverse(p.sd);
    return p;
}

struct ValidationSet {
    Matrix X;
    Vector y;
};

struct PipelineResult {
    Standardizer standardizer;
    Ensemble ensemble;
    std::optional<FittedStationaryGP> stationary;
    Vector loo_residuals;
    std::optional<ModelSelectionReport> selection;
    Eigen::Index selected_L = 1;
    std::shared_ptr<const MixingFunction> lambda_hat;
    std::optional<FittedNonstationaryGP> nonstationary;
    std::vector<std::string> notices;
    std::optional<ScoreSummary> stationary_scores;
    std::optional<ScoreSummary> nonstationary_scores;

    bool converged() const {
        if (stationary && !stationary->converged()) return false;
        if (selection && selection->selected_unconverged) return false;
        if (nonstationary && !nonstationary->converged()) return false;
        return true;
    }

    int exit_code() const { return converged() ? 0 : 4; }

    PredictiveSummary predict_stationary(const Matrix& X_native) const { return predict_native(*stationary, standardizer, X_native); }

    /// The nonstationary emulator when one was fitted, otherwise the stationary one.
    PredictiveSummary predict(const Matrix& X_native) const {
        return nonstationary ? predict_native(*nonstationary, standardizer, X_native) : predict_stationary(X_native);
    }
};

inline constexpr const char* kNoNonstationarity = "no nonstationarity detected: selected L = 1, stationary emulator only";

/// Run every stage on a loaded ensemble. Artifacts go to `sink` as each stage completes so a
/// later failure leaves the earlier outputs in place. Failures surface as StageError.
inline PipelineResult run_pipeline(const io::LoadedEnsemble& data, const RunConfig& cfg, const ArtifactSink& sink = {},
                                   const std::optional<ValidationSet>& validation = std::nullopt) {
    cfg.validate();
    auto emit = [&](const std::string& name, const std::string& content) {
        if (sink) sink(name, content);
    };
    PipelineResult r;
    r.standardizer = data.standardizer;
    r.ensemble = data.ensemble;
    const SamplerConfig sc = cfg.sampler_config();
    const Matrix& X = r.ensemble.X;
    const Matrix X_native = r.standardizer.inputs_inverse(X);

    r.stationary.emplace(run_stage("stationary", [&] { return fit_stationary(r.ensemble, cfg.prior, sc); }));
    for (const auto& n : r.stationary->notices()) r.notices.push_back("stationary: " + n);
    emit("stationary.json", stationary_artifact(*r.stationary, r.standardizer).dump(1) + "\n");
    emit("stationary_diagnostics.csv", report::diagnostics_table(r.stationary->draws()));

    r.loo_residuals = run_stage("loo", [&] { return r.stationary->loo_residuals(cfg.loo_mode); });
    {
        Matrix rows(X.rows(), X.cols() + 1);
        rows << X_native, r.loo_residuals;
        auto header = io::input_header(X.cols());
        header.emplace_back("e");
        emit("loo_residuals.csv", io::csv_text(header, rows));
    }

    r.selection.emplace(run_stage("select", [&] {
        return select_regions(X, r.loo_residuals, cfg.mixture_prior, sc, cfg.selection(X.cols()));
    }));
    r.selected_L = r.selection->selected;
    for (const auto& w : r.selection->warnings) r.notices.push_back("selection: " + w);
    emit("waic.csv", report::waic_table(*r.selection));
    if (const MixtureFit* m = r.selection->fit_for(r.selected_L)) {
        emit("mixture.json", mixture_artifact(*m, &*r.selection).dump(1) + "\n");
        emit("mixing_weights.csv", report::weights_table(X_native, m->lambda_hat.evaluate(X)));
    }

    if (r.selected_L >= 2) {
        const MixtureFit* m = r.selection->fit_for(r.selected_L);
        if (!m) throw StageError("nonstationary", "selected mixture fit is missing", ErrorKind::other);
        r.lambda_hat = std::make_shared<const MixingFunction>(m->lambda_hat);
        const NonstationaryPriorSpec nsp = cfg.nonstationary_prior();
        r.nonstationary.emplace(run_stage("nonstationary", [&] { return fit_nonstationary(r.ensemble, r.lambda_hat, nsp, sc); }));
        for (const auto& n : r.nonstationary->notices()) r.notices.push_back("nonstationary: " + n);
        emit("nonstationary.json", nonstationary_artifact(*r.nonstationary, r.standardizer, nsp, m).dump(1) + "\n");
        emit("nonstationary_diagnostics.csv", report::diagnostics_table(r.nonstationary->draws()));
        emit("region_lengthscales.csv", report::lengthscale_table(region_lengthscale_means(*r.nonstationary)));
    } else {
        r.notices.emplace_back(kNoNonstationarity);
    }

    if (validation) {
        run_stage("validate", [&] {
            if (validation->X.cols() != X.cols()) throw ArgumentError("validation set has a different number of inputs");
            std::vector<std::pair<std::string, ScoreSummary>> rows;
            r.stationary_scores = score_predictions(r.predict_stationary(validation->X), validation->y, cfg.alpha);
            rows.emplace_back("stationary", *r.stationary_scores);
            emit("plot_stationary.csv", report::plot_data(validation->X, *r.stationary_scores));
            if (r.nonstationary) {
                r.nonstationary_scores = score_predictions(r.predict(validation->X), validation->y, cfg.alpha);
                rows.emplace_back("nonstationary", *r.nonstationary_scores);
                emit("plot_nonstationary.csv", report::plot_data(validation->X, *r.nonstationary_scores));
            }
            emit("scores.csv", report::score_table(rows));
            return 0;
        });
    }

    std::string text = "runs " + std::to_string(X.rows()) + ", inputs " + std::to_string(X.cols()) + "\n";
    text += "selected L " + std::to_string(r.selected_L) + (r.selection->extended ? " (candidate range extended)" : "") + "\n";
    for (std::size_t k = 0; k < r.selection->candidates.size(); ++k)
        text += "  WAIC(L=" + std::to_string(r.selection->candidates[k]) + ") " + report::fixed(r.selection->waic[k]) +
                (r.selection->converged[k] ? "" : " unconverged") + "\n";
    if (r.stationary_scores)
        text += "stationary IS " + report::fixed(r.stationary_scores->mean_interval_score) + " RMSE " +
                report::fixed(r.stationary_scores->rmse) + " coverage " + report::fixed(r.stationary_scores->coverage(), 3) + "\n";
    if (r.nonstationary_scores)
        text += "nonstationary IS " + report::fixed(r.nonstationary_scores->mean_interval_score) + " RMSE " +
                report::fixed(r.nonstationary_scores->rmse) + " coverage " +
                report::fixed(r.nonstationary_scores->coverage(), 3) + "\n";
    text += std::string("converged ") + (r.converged() ? "yes" : "no") + "\n";
    for (const auto& n : r.notices) text += "notice: " + n + "\n";
    emit("report.txt", text);
    return r;
}

/// Paired stationary / nonstationary scores for one held-out fold.
struct LolhoFold {
    int fold = 0;
    Eigen::Index size = 0;
    Eigen::Index selected_L = 1;
    bool failed = false;
    bool converged = true;
    std::string error;
    ScoreSummary stationary;
    ScoreSummary nonstationary;

    /// Nonstationary interval score beats the stationary one (false when L = 1 was selected).
    bool nonstationary_wins() const {
        return !failed && selected_L >= 2 && nonstationary.mean_interval_score < stationary.mean_interval_score;
    }
};

/// Leave one sub-design out: for each fold label run the pipeline on the remaining runs and
/// score both emulators on the held-out runs. Inputs are standardized with `ranges` (default:
/// observed ranges of the full ensemble) so every refit shares one input scale.
inline std::vector<LolhoFold> lolho_pipeline(const std::vector<int>& labels, const Matrix& X_native, const Vector& y,
                                             const RunConfig& cfg,
                                             std::optional<std::pair<Vector, Vector>> ranges = std::nullopt) {
    if (!ranges) ranges = std::make_pair(Vector(X_native.colwise().minCoeff().transpose()),
                                         Vector(X_native.colwise().maxCoeff().transpose()));
    std::vector<int> ids(labels);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (static_cast<Eigen::Index>(labels.size()) != X_native.rows() || X_native.rows() != y.size())
        throw ArgumentError("lolho: labels, design and responses differ in length");
    if (ids.size() < 2) throw ArgumentError("lolho: need at least two folds");

    std::vector<LolhoFold> out;
    for (int f : ids) {
        LolhoFold lf;
        lf.fold = f;
        std::vector<Eigen::Index> train, test;
        for (Eigen::Index i = 0; i < X_native.rows(); ++i) (labels[static_cast<std::size_t>(i)] == f ? test : train).push_back(i);
        lf.size = static_cast<Eigen::Index>(test.size());
        auto rows_of = [&](const std::vector<Eigen::Index>& idx, Matrix& Xo, Vector& yo) {
            Xo.resize(static_cast<Eigen::Index>(idx.size()), X_native.cols());
            yo.resize(Xo.rows());
            for (std::size_t k = 0; k < idx.size(); ++k) {
                Xo.row(static_cast<Eigen::Index>(k)) = X_native.row(idx[k]);
                yo(static_cast<Eigen::Index>(k)) = y(idx[k]);
            }
        };
        try {
            Matrix Xtr, Xte;
            Vector ytr, yte;
            rows_of(train, Xtr, ytr);
            rows_of(test, Xte, yte);
            io::LoadedEnsemble le;
            std::tie(le.standardizer, le.ensemble) = standardize(Xtr, ytr, ranges);
            const PipelineResult r = run_pipeline(le, cfg);
            lf.selected_L = r.selected_L;
            lf.converged = r.converged();
            lf.stationary = score_predictions(r.predict_stationary(Xte), yte, cfg.alpha);
            lf.nonstationary = score_predictions(r.predict(Xte), yte, cfg.alpha);
        } catch (const std::exception& e) {
            lf.failed = true;
            lf.error = e.what();
        }
        out.push_back(std::move(lf));
    }
    return out;
}

inline std::string lolho_table(const std::vector<LolhoFold>& folds) {
    std::string s = "fold,runs,selected_L,stationary_is,nonstationary_is,stationary_rmse,nonstationary_rmse,"
                    "stationary_failures,nonstationary_failures,converged,error\n";
    for (const auto& f : folds) {
        auto num = [&](double v) { return f.failed ? std::string("nan") : io::format_double(v); };
        s += std::to_string(f.fold) + "," + std::to_string(f.size) + "," + std::to_string(f.selected_L) + "," +
             num(f.stationary.mean_interval_score) + "," + num(f.nonstationary.mean_interval_score) + "," +
             num(f.stationary.rmse) + "," + num(f.nonstationary.rmse) + "," +
             (f.failed ? "0" : std::to_string(f.stationary.failures())) + "," +
             (f.failed ? "0" : std::to_string(f.nonstationary.failures())) + "," + (f.converged ? "true" : "false") + ",\"" +
             f.error + "\"\n";
    }
    return s;
}

}  // namespace nsgp

#endif  // NSGP_PIPELINE_HPP
