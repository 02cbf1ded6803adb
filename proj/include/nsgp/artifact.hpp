#ifndef NSGP_ARTIFACT_HPP
#define NSGP_ARTIFACT_HPP

// JSON model artifacts. Numbers are written in shortest round-trip form and factorizations are
// recomputed from the stored draws on load, so a reloaded emulator predicts bit-for-bit like
// the one that was saved.

#include "nsgp/config.hpp"
#include "nsgp/design.hpp"
#include "nsgp/io.hpp"
#include "nsgp/mixture.hpp"
#include "nsgp/nonstationary_gp.hpp"
#include "nsgp/stationary_gp.hpp"

#include <optional>
#include <string>

namespace nsgp {

inline constexpr int kArtifactVersion = 1;

namespace artifact {

inline json matrix_json(const Matrix& M) {
    json a = json::array();
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
        a.push_back(std::move(row));
    }
    return a;
}

inline double number(const json& v) {
    if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
    if (!v.is_number()) throw ParseError("artifact: expected a number");
    return v.get<double>();
}

inline Vector vector_from(const json& a) {
    if (!a.is_array()) throw ParseError("artifact: expected an array");
    Vector v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t k = 0; k < a.size(); ++k) v(static_cast<Eigen::Index>(k)) = number(a[k]);
    return v;
}

inline Matrix matrix_from(const json& a) {
    if (!a.is_array()) throw ParseError("artifact: expected an array of rows");
    if (a.empty()) return Matrix(0, 0);
    const std::size_t cols = a[0].size();
    Matrix M(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!a[i].is_array() || a[i].size() != cols) throw ParseError("artifact: ragged matrix");
        for (std::size_t j = 0; j < cols; ++j)
            M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = number(a[i][j]);
    }
    return M;
}

inline const json& field(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw ParseError(std::string("artifact: missing field '") + key + "'");
    return j.at(key);
}

inline json standardizer_json(const Standardizer& s) {
    return {{"lower", detail::vector_json(s.lower)},
            {"upper", detail::vector_json(s.upper)},
            {"response_mean", s.response_mean},
            {"response_sd", s.response_sd}};
}

inline Standardizer standardizer_from(const json& j) {
    Standardizer s;
    s.lower = vector_from(field(j, "lower"));
    s.upper = vector_from(field(j, "upper"));
    s.response_mean = number(field(j, "response_mean"));
    s.response_sd = number(field(j, "response_sd"));
    return s;
}

inline json prior_json(const GPPriorSpec& p) {
    RunConfig c;
    c.prior = p;
    return to_json(c)["prior"];
}

inline GPPriorSpec prior_from(const json& j) {
    return config_from_json(json{{"prior", j}}).prior;
}

inline json ensemble_json(const Ensemble& e) { return {{"X", matrix_json(e.X)}, {"F", detail::vector_json(e.F)}}; }

inline Ensemble ensemble_from(const json& j) { return {matrix_from(field(j, "X")), vector_from(field(j, "F"))}; }

inline json drawset_json(const DrawSet& d) {
    json info = json::array();
    for (const auto& c : d.chain_info)
        info.push_back({{"kernel", c.kernel}, {"step_size", c.step_size}, {"mean_accept", c.mean_accept},
                        {"divergences", c.divergences}});
    return {{"names", d.names},
            {"chains", d.chains},
            {"keep_per_chain", d.keep_per_chain},
            {"draws", matrix_json(d.draws)},
            {"chain_info", info},
            {"warnings", d.warnings},
            {"diagnostics",
             {{"rhat", detail::vector_json(d.diagnostics.rhat)},
              {"ess", detail::vector_json(d.diagnostics.ess)},
              {"rhat_threshold", d.diagnostics.rhat_threshold},
              {"ess_threshold", d.diagnostics.ess_threshold},
              {"converged", d.chains >= 2 && d.converged()},
              {"flagged", d.diagnostics.flagged_names()}}}};
}

inline DrawSet drawset_from(const json& j) {
    DrawSet d;
    d.names = field(j, "names").get<std::vector<std::string>>();
    d.chains = field(j, "chains").get<int>();
    d.keep_per_chain = field(j, "keep_per_chain").get<int>();
    d.draws = matrix_from(field(j, "draws"));
    for (const auto& c : field(j, "chain_info"))
        d.chain_info.push_back({field(c, "kernel").get<std::string>(), number(field(c, "step_size")),
                                number(field(c, "mean_accept")), field(c, "divergences").get<int>()});
    d.warnings = field(j, "warnings").get<std::vector<std::string>>();
    const json& g = field(j, "diagnostics");
    d.diagnostics.names = d.names;
    d.diagnostics.rhat = vector_from(field(g, "rhat"));
    d.diagnostics.ess = vector_from(field(g, "ess"));
    d.diagnostics.rhat_threshold = number(field(g, "rhat_threshold"));
    d.diagnostics.ess_threshold = number(field(g, "ess_threshold"));
    if (d.draws.rows() != static_cast<Eigen::Index>(d.chains) * d.keep_per_chain ||
        d.draws.cols() != static_cast<Eigen::Index>(d.names.size()))
        throw ParseError("artifact: draw matrix shape does not match its metadata");
    return d;
}

inline json mixing_function_json(const MixingFunction& m) {
    Matrix flat(static_cast<Eigen::Index>(m.coefficient_draws().size()), m.components() * m.feature_map().size());
    for (std::size_t d = 0; d < m.coefficient_draws().size(); ++d) {
        const Matrix& A = m.coefficient_draws()[d];
        for (Eigen::Index l = 0; l < A.rows(); ++l)
            for (Eigen::Index k = 0; k < A.cols(); ++k) flat(static_cast<Eigen::Index>(d), l * A.cols() + k) = A(l, k);
    }
    return {{"inputs", m.inputs()},
            {"intercept", m.feature_map().intercept},
            {"components", m.components()},
            {"coefficient_draws", matrix_json(flat)}};
}

inline MixingFunction mixing_function_from(const json& j) {
    FeatureMap fm{field(j, "inputs").get<Eigen::Index>(), field(j, "intercept").get<bool>()};
    const auto L = field(j, "components").get<Eigen::Index>();
    const Matrix flat = matrix_from(field(j, "coefficient_draws"));
    if (flat.cols() != L * fm.size()) throw ParseError("artifact: coefficient draw width does not match L x dim(g)");
    std::vector<Matrix> draws;
    for (Eigen::Index d = 0; d < flat.rows(); ++d) draws.push_back(detail::unpack_coefficients(flat.row(d).transpose(), L, fm.size()));
    return MixingFunction(fm, std::move(draws));
}

inline json waic_json(const WaicResult& w) {
    return {{"waic", w.waic}, {"lppd", w.lppd}, {"p_waic", w.p_waic}, {"pointwise", detail::vector_json(w.pointwise)}};
}

inline WaicResult waic_from(const json& j) {
    return {number(field(j, "waic")), number(field(j, "lppd")), number(field(j, "p_waic")), vector_from(field(j, "pointwise"))};
}

inline json mixture_prior_json(const MixturePriorSpec& p) {
    return {{"coefficient_sd", p.coefficient.sd}, {"scale_meanlog", p.scale.meanlog}, {"scale_sdlog", p.scale.sdlog}};
}

inline MixturePriorSpec mixture_prior_from(const json& j) {
    MixturePriorSpec p;
    p.coefficient.sd = number(field(j, "coefficient_sd"));
    p.scale.meanlog = number(field(j, "scale_meanlog"));
    p.scale.sdlog = number(field(j, "scale_sdlog"));
    return p;
}

}  // namespace artifact

inline json mixture_artifact(const MixtureFit& fit, const ModelSelectionReport* selection = nullptr) {
    using namespace artifact;
    json j{{"format", "nsgp-mixture"},
           {"version", kArtifactVersion},
           {"L", fit.L},
           {"prior", mixture_prior_json(fit.priors)},
           {"mixing_function", mixing_function_json(fit.lambda_hat)},
           {"draws", drawset_json(fit.draws)},
           {"waic", waic_json(fit.waic)}};
    if (selection) {
        j["selection"] = {{"candidates", selection->candidates},
                          {"waic", selection->waic},
                          {"converged", selection->converged},
                          {"selected", selection->selected},
                          {"extended", selection->extended},
                          {"warnings", selection->warnings}};
    }
    return j;
}

inline MixtureFit mixture_from_json(const json& j) {
    using namespace artifact;
    if (field(j, "format") != "nsgp-mixture") throw ParseError("artifact: not a mixture artifact");
    if (field(j, "version").get<int>() != kArtifactVersion) throw ParseError("artifact: unsupported mixture version");
    MixtureFit f;
    f.L = field(j, "L").get<Eigen::Index>();
    f.priors = mixture_prior_from(field(j, "prior"));
    f.lambda_hat = mixing_function_from(field(j, "mixing_function"));
    f.feature_map = f.lambda_hat.feature_map();
    f.draws = drawset_from(field(j, "draws"));
    f.coefficients = f.lambda_hat.coefficient_draws();
    f.scales = f.draws.draws.rightCols(f.L);
    f.waic = waic_from(field(j, "waic"));
    return f;
}

/// A reloaded (or freshly fitted) emulator of either kind together with its standardizer.
struct Model {
    std::string kind;
    Standardizer standardizer;
    std::optional<FittedStationaryGP> stationary;
    std::optional<FittedNonstationaryGP> nonstationary;

    const DrawSet& draws() const { return stationary ? stationary->draws() : nonstationary->draws(); }
    const Ensemble& ensemble() const { return stationary ? stationary->ensemble() : nonstationary->ensemble(); }
    const std::vector<std::string>& notices() const { return stationary ? stationary->notices() : nonstationary->notices(); }
    bool converged() const { return stationary ? stationary->converged() : nonstationary->converged(); }

    PredictiveSummary predict_standardized(const Matrix& Xs, bool keep_draws = false) const {
        return stationary ? stationary->predict(Xs, keep_draws) : nonstationary->predict(Xs, keep_draws);
    }

    /// Prediction at native-unit inputs, returned in native response units.
    PredictiveSummary predict(const Matrix& X_native) const {
        PredictiveSummary p = predict_standardized(standardizer.inputs_forward(X_native));
        p.mean = standardizer.response_inverse(p.mean);
        p.sd = standardizer.sd_inverse(p.sd);
        return p;
    }

    Vector loo_residuals(LooMode mode = LooMode::average_over_draws) const {
        return stationary ? stationary->loo_residuals(mode) : nonstationary->loo_residuals(mode);
    }
};

inline json stationary_artifact(const FittedStationaryGP& fit, const Standardizer& s) {
    using namespace artifact;
    return {{"format", "nsgp-emulator"},
            {"version", kArtifactVersion},
            {"kind", "stationary"},
            {"standardizer", standardizer_json(s)},
            {"prior", prior_json(fit.model().prior)},
            {"ensemble", ensemble_json(fit.ensemble())},
            {"draws", drawset_json(fit.draws())},
            {"notices", fit.notices()}};
}

inline json nonstationary_artifact(const FittedNonstationaryGP& fit, const Standardizer& s, const NonstationaryPriorSpec& prior,
                                   const MixtureFit* mixture = nullptr) {
    using namespace artifact;
    const Eigen::Index L = fit.model().lambda_hat->components();
    json j{{"format", "nsgp-emulator"},
           {"version", kArtifactVersion},
           {"kind", "nonstationary"},
           {"regions", L},
           {"standardizer", standardizer_json(s)},
           {"prior", prior_json(prior.region)},
           {"estimate_nuggets", prior.estimate_nuggets},
           {"nugget_prior", {{"shape", prior.nugget_prior.shape}, {"scale", prior.nugget_prior.scale}}},
           {"ensemble", ensemble_json(fit.ensemble())},
           {"mixing_function", mixing_function_json(*fit.model().lambda_hat)},
           {"draws", drawset_json(fit.draws())},
           {"notices", fit.notices()}};
    if (mixture) j["mixture"] = mixture_artifact(*mixture);
    return j;
}

namespace artifact {

inline std::vector<std::string> notices_from(const json& j) {
    return j.contains("notices") ? j.at("notices").get<std::vector<std::string>>() : std::vector<std::string>{};
}

inline FittedStationaryGP stationary_from_parts(const GPPriorSpec& prior, const Ensemble& ens, DrawSet draws) {
    const Eigen::Index p = ens.dim();
    const Vector phi = prior.exponents_for(p);
    if (draws.dim() != 1 + p + (p + 1)) throw ParseError("artifact: stationary draw width does not match ensemble dimension");
    std::vector<StationaryKernelSpec> params;
    Matrix betas = draws.draws.rightCols(p + 1);
    for (Eigen::Index d = 0; d < draws.size(); ++d)
        params.push_back({CorrelationSpec{CorrelationFamily::power_exponential, phi, draws.draws.row(d).segment(1, p).transpose()},
                          draws.draws(d, 0), prior.nugget});
    return FittedStationaryGP(StationaryModel{prior}, ens, std::move(params), std::move(betas), std::move(draws));
}

}  // namespace artifact

inline Model model_from_json(const json& j) {
    using namespace artifact;
    if (field(j, "format") != "nsgp-emulator") throw ParseError("artifact: not an emulator artifact");
    if (field(j, "version").get<int>() != kArtifactVersion) throw ParseError("artifact: unsupported emulator version");
    Model m;
    m.kind = field(j, "kind").get<std::string>();
    m.standardizer = standardizer_from(field(j, "standardizer"));
    const GPPriorSpec prior = prior_from(field(j, "prior"));
    Ensemble ens = ensemble_from(field(j, "ensemble"));
    ens.validate();
    DrawSet draws = drawset_from(field(j, "draws"));
    const auto notices = notices_from(j);
    if (m.kind == "stationary") {
        m.stationary.emplace(stationary_from_parts(prior, ens, std::move(draws)));
        for (const auto& s : notices) m.stationary->add_notice(s);
        return m;
    }
    if (m.kind != "nonstationary") throw ParseError("artifact: unknown emulator kind '" + m.kind + "'");
    NonstationaryPriorSpec ns{prior, field(j, "estimate_nuggets").get<bool>(),
                              InverseGammaPrior{number(field(field(j, "nugget_prior"), "shape")),
                                                number(field(field(j, "nugget_prior"), "scale"))}};
    auto lambda = std::make_shared<const MixingFunction>(mixing_function_from(field(j, "mixing_function")));
    const Eigen::Index L = lambda->components();
    const Eigen::Index p = ens.dim();
    std::vector<RegionKernelSet> params;
    Matrix betas = draws.draws.rightCols(p + 1);
    if (L == 1) {
        FittedStationaryGP st = stationary_from_parts(prior, ens, draws);
        for (const auto& k : st.params()) params.push_back(RegionKernelSet{{k}});
    } else {
        const Eigen::Index width = L + L * p + (ns.estimate_nuggets ? L : 0) + p + 1;
        if (draws.dim() != width) throw ParseError("artifact: mixture draw width does not match regions and inputs");
        const Vector phi = prior.exponents_for(p);
        for (Eigen::Index d = 0; d < draws.size(); ++d)
            params.push_back(detail::region_kernels_from(draws.draws.row(d).transpose(), L, p, phi, ns));
    }
    m.nonstationary.emplace(MixtureKernelModel{lambda}, ens, std::move(params), std::move(betas), std::move(draws));
    for (const auto& s : notices) m.nonstationary->add_notice(s);
    return m;
}

inline Model load_model(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(io::read_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError("artifact '" + path.string() + "': " + e.what());
    }
    return model_from_json(j);
}

inline MixtureFit load_mixture(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(io::read_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError("artifact '" + path.string() + "': " + e.what());
    }
    if (j.contains("format") && j.at("format") == "nsgp-emulator" && j.contains("mixture")) return mixture_from_json(j.at("mixture"));
    return mixture_from_json(j);
}

}  // namespace nsgp

#endif  // NSGP_ARTIFACT_HPP
