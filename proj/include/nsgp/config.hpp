#ifndef NSGP_CONFIG_HPP
#define NSGP_CONFIG_HPP

// Run configuration: JSON document, every field optional, unknown keys rejected.

#include "nsgp/io.hpp"
#include "nsgp/mixture.hpp"
#include "nsgp/nonstationary_gp.hpp"
#include "nsgp/stationary_gp.hpp"
#include "nsgp/testfns.hpp"

#include <nlohmann/json.hpp>

#include <initializer_list>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace nsgp {

using json = nlohmann::json;

struct RunConfig {
    std::uint64_t seed = 1;
    std::string output_dir = "nsgp_out";
    SamplerConfig sampler;
    GPPriorSpec prior;
    MixturePriorSpec mixture_prior;
    Eigen::Index L_max = 4;
    double selection_threshold = 2.0;
    bool extend_selection = true;
    bool mixture_intercept = false;
    bool estimate_nuggets = false;
    InverseGammaPrior nugget_prior{2.0, 0.01};
    double alpha = 0.05;
    LooMode loo_mode = LooMode::average_over_draws;
    std::optional<std::pair<Vector, Vector>> input_ranges;
    std::vector<int> fold_labels;
    int design_optim_iters = 2000;
    int design_restarts = 10;
    testfns::Piecewise5D piecewise5d;

    SamplerConfig sampler_config() const {
        SamplerConfig c = sampler;
        c.seed = seed;
        return c;
    }

    SelectionOptions selection(Eigen::Index inputs) const {
        SelectionOptions o;
        o.L_max = L_max;
        o.threshold = selection_threshold;
        o.extend = extend_selection;
        o.feature_map = FeatureMap{inputs, mixture_intercept};
        return o;
    }

    NonstationaryPriorSpec nonstationary_prior() const { return {prior, estimate_nuggets, nugget_prior}; }

    void validate() const {
        sampler.validate();
        if (L_max < 1) throw ArgumentError("config: mixture.L_max must be at least 1");
        if (!(selection_threshold >= 0.0)) throw ArgumentError("config: mixture.threshold must be nonnegative");
        if (!(alpha > 0.0 && alpha < 1.0)) throw ArgumentError("config: alpha must lie in (0, 1)");
        if (design_optim_iters < 1 || design_restarts < 1) throw ArgumentError("config: design settings must be positive");
        mixture_prior.validate();
        if (input_ranges) {
            if (input_ranges->first.size() != input_ranges->second.size())
                throw ArgumentError("config: input_ranges lower and upper differ in length");
            for (Eigen::Index j = 0; j < input_ranges->first.size(); ++j)
                if (!(input_ranges->second(j) > input_ranges->first(j)))
                    throw ArgumentError("config: input_ranges upper must exceed lower for x" + std::to_string(j + 1));
        }
    }
};

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ParseError("config: '" + where + "' must be an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!ok.count(it.key()))
            throw ParseError("config: unknown key '" + (where.empty() ? "" : where + ".") + it.key() + "'");
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ParseError("config: '" + (where.empty() ? "" : where + ".") + key + "' has the wrong type");
    }
}

inline Vector read_vector(const json& j, const std::string& where) {
    if (!j.is_array()) throw ParseError("config: '" + where + "' must be an array of numbers");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t k = 0; k < j.size(); ++k) {
        if (!j[k].is_number()) throw ParseError("config: '" + where + "' must be an array of numbers");
        v(static_cast<Eigen::Index>(k)) = j[k].get<double>();
    }
    return v;
}

inline json vector_json(const Vector& v) {
    json a = json::array();
    for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v(k));
    return a;
}

inline std::string kernel_name(SamplerKernel k) {
    switch (k) {
        case SamplerKernel::nuts: return "nuts";
        case SamplerKernel::adaptive_metropolis: return "adaptive_metropolis";
        default: return "automatic";
    }
}

inline SamplerKernel parse_kernel(const std::string& s) {
    if (s == "automatic") return SamplerKernel::automatic;
    if (s == "nuts") return SamplerKernel::nuts;
    if (s == "adaptive_metropolis") return SamplerKernel::adaptive_metropolis;
    throw ParseError("config: sampler.kernel must be automatic, nuts or adaptive_metropolis");
}

template <std::size_t N>
void read_array(const json& j, const char* key, std::array<double, N>& out, const std::string& where) {
    if (!j.contains(key)) return;
    Vector v = read_vector(j.at(key), where + "." + key);
    if (v.size() != static_cast<Eigen::Index>(N))
        throw ParseError("config: '" + where + "." + key + "' must have " + std::to_string(N) + " entries");
    for (std::size_t k = 0; k < N; ++k) out[k] = v(static_cast<Eigen::Index>(k));
}

}  // namespace detail

inline json to_json(const RunConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir;
    j["alpha"] = c.alpha;
    j["loo_mode"] = c.loo_mode == LooMode::posterior_mean ? "posterior_mean" : "average_over_draws";
    j["sampler"] = {{"chains", c.sampler.chains},
                    {"warmup_iters", c.sampler.warmup_iters},
                    {"keep_iters", c.sampler.keep_iters},
                    {"target_accept", c.sampler.target_accept},
                    {"max_tree_depth", c.sampler.max_tree_depth},
                    {"kernel", detail::kernel_name(c.sampler.kernel)},
                    {"init_radius", c.sampler.init_radius},
                    {"rhat_threshold", c.sampler.rhat_threshold},
                    {"ess_threshold", c.sampler.ess_threshold}};
    json overrides = json::object();
    for (const auto& [k, g] : c.prior.lengthscale_overrides)
        overrides[std::to_string(k + 1)] = {{"shape", g.shape}, {"rate", g.rate}};
    j["prior"] = {{"beta_sd", c.prior.beta_sd},
                  {"lengthscale", {{"shape", c.prior.lengthscale.shape}, {"rate", c.prior.lengthscale.rate}}},
                  {"lengthscale_overrides", overrides},
                  {"variance", {{"shape", c.prior.variance.shape}, {"scale", c.prior.variance.scale}}},
                  {"nugget", c.prior.nugget},
                  {"exponents", detail::vector_json(c.prior.exponents)}};
    j["mixture"] = {{"L_max", c.L_max},
                    {"threshold", c.selection_threshold},
                    {"extend", c.extend_selection},
                    {"intercept", c.mixture_intercept},
                    {"coefficient_sd", c.mixture_prior.coefficient.sd},
                    {"scale_meanlog", c.mixture_prior.scale.meanlog},
                    {"scale_sdlog", c.mixture_prior.scale.sdlog}};
    j["nonstationary"] = {{"estimate_nuggets", c.estimate_nuggets},
                          {"nugget_prior", {{"shape", c.nugget_prior.shape}, {"scale", c.nugget_prior.scale}}}};
    j["input_ranges"] = c.input_ranges ? json{{"lower", detail::vector_json(c.input_ranges->first)},
                                              {"upper", detail::vector_json(c.input_ranges->second)}}
                                       : json(nullptr);
    j["fold_labels"] = c.fold_labels;
    j["design"] = {{"optim_iters", c.design_optim_iters}, {"restarts", c.design_restarts}};
    auto arr = [](const auto& a) { return json(std::vector<double>(a.begin(), a.end())); };
    j["piecewise5d"] = {{"linear", arr(c.piecewise5d.linear)},
                        {"amplitude", arr(c.piecewise5d.amplitude)},
                        {"frequency", arr(c.piecewise5d.frequency)},
                        {"buffer", c.piecewise5d.buffer}};
    return j;
}

inline RunConfig config_from_json(const json& j) {
    using detail::check_keys;
    using detail::read;
    RunConfig c;
    check_keys(j, {"seed", "output_dir", "alpha", "loo_mode", "sampler", "prior", "mixture", "nonstationary",
                   "input_ranges", "fold_labels", "design", "piecewise5d"},
               "");
    read(j, "seed", c.seed, "");
    read(j, "output_dir", c.output_dir, "");
    read(j, "alpha", c.alpha, "");
    if (j.contains("loo_mode")) {
        std::string m;
        read(j, "loo_mode", m, "");
        if (m == "average_over_draws") c.loo_mode = LooMode::average_over_draws;
        else if (m == "posterior_mean") c.loo_mode = LooMode::posterior_mean;
        else throw ParseError("config: loo_mode must be average_over_draws or posterior_mean");
    }
    if (j.contains("sampler")) {
        const json& s = j.at("sampler");
        check_keys(s, {"chains", "warmup_iters", "keep_iters", "target_accept", "max_tree_depth", "kernel", "init_radius",
                       "rhat_threshold", "ess_threshold"},
                   "sampler");
        read(s, "chains", c.sampler.chains, "sampler");
        read(s, "warmup_iters", c.sampler.warmup_iters, "sampler");
        read(s, "keep_iters", c.sampler.keep_iters, "sampler");
        read(s, "target_accept", c.sampler.target_accept, "sampler");
        read(s, "max_tree_depth", c.sampler.max_tree_depth, "sampler");
        read(s, "init_radius", c.sampler.init_radius, "sampler");
        read(s, "rhat_threshold", c.sampler.rhat_threshold, "sampler");
        read(s, "ess_threshold", c.sampler.ess_threshold, "sampler");
        if (s.contains("kernel")) {
            std::string k;
            read(s, "kernel", k, "sampler");
            c.sampler.kernel = detail::parse_kernel(k);
        }
    }
    if (j.contains("prior")) {
        const json& p = j.at("prior");
        check_keys(p, {"beta_sd", "lengthscale", "lengthscale_overrides", "variance", "nugget", "exponents"}, "prior");
        read(p, "beta_sd", c.prior.beta_sd, "prior");
        read(p, "nugget", c.prior.nugget, "prior");
        if (p.contains("lengthscale")) {
            check_keys(p.at("lengthscale"), {"shape", "rate"}, "prior.lengthscale");
            read(p.at("lengthscale"), "shape", c.prior.lengthscale.shape, "prior.lengthscale");
            read(p.at("lengthscale"), "rate", c.prior.lengthscale.rate, "prior.lengthscale");
        }
        if (p.contains("variance")) {
            check_keys(p.at("variance"), {"shape", "scale"}, "prior.variance");
            read(p.at("variance"), "shape", c.prior.variance.shape, "prior.variance");
            read(p.at("variance"), "scale", c.prior.variance.scale, "prior.variance");
        }
        if (p.contains("lengthscale_overrides")) {
            const json& o = p.at("lengthscale_overrides");
            if (!o.is_object()) throw ParseError("config: 'prior.lengthscale_overrides' must be an object");
            for (auto it = o.begin(); it != o.end(); ++it) {
                int idx = 0;
                auto r = std::from_chars(it.key().data(), it.key().data() + it.key().size(), idx);
                if (r.ec != std::errc() || r.ptr != it.key().data() + it.key().size() || idx < 1)
                    throw ParseError("config: lengthscale override key '" + it.key() + "' must be a 1-based input index");
                const std::string where = "prior.lengthscale_overrides." + it.key();
                check_keys(it.value(), {"shape", "rate"}, where);
                GammaPrior g{4.0, 4.0};
                read(it.value(), "shape", g.shape, where);
                read(it.value(), "rate", g.rate, where);
                c.prior.lengthscale_overrides[idx - 1] = g;
            }
        }
        if (p.contains("exponents")) {
            const json& e = p.at("exponents");
            if (e.is_number()) c.prior.exponents = Vector::Constant(1, e.get<double>());
            else c.prior.exponents = detail::read_vector(e, "prior.exponents");
        }
    }
    if (j.contains("mixture")) {
        const json& m = j.at("mixture");
        check_keys(m, {"L_max", "threshold", "extend", "intercept", "coefficient_sd", "scale_meanlog", "scale_sdlog"},
                   "mixture");
        read(m, "L_max", c.L_max, "mixture");
        read(m, "threshold", c.selection_threshold, "mixture");
        read(m, "extend", c.extend_selection, "mixture");
        read(m, "intercept", c.mixture_intercept, "mixture");
        read(m, "coefficient_sd", c.mixture_prior.coefficient.sd, "mixture");
        read(m, "scale_meanlog", c.mixture_prior.scale.meanlog, "mixture");
        read(m, "scale_sdlog", c.mixture_prior.scale.sdlog, "mixture");
    }
    if (j.contains("nonstationary")) {
        const json& n = j.at("nonstationary");
        check_keys(n, {"estimate_nuggets", "nugget_prior"}, "nonstationary");
        read(n, "estimate_nuggets", c.estimate_nuggets, "nonstationary");
        if (n.contains("nugget_prior")) {
            check_keys(n.at("nugget_prior"), {"shape", "scale"}, "nonstationary.nugget_prior");
            read(n.at("nugget_prior"), "shape", c.nugget_prior.shape, "nonstationary.nugget_prior");
            read(n.at("nugget_prior"), "scale", c.nugget_prior.scale, "nonstationary.nugget_prior");
        }
    }
    if (j.contains("input_ranges") && !j.at("input_ranges").is_null()) {
        const json& r = j.at("input_ranges");
        check_keys(r, {"lower", "upper"}, "input_ranges");
        if (!r.contains("lower") || !r.contains("upper")) throw ParseError("config: input_ranges needs lower and upper");
        c.input_ranges = std::make_pair(detail::read_vector(r.at("lower"), "input_ranges.lower"),
                                        detail::read_vector(r.at("upper"), "input_ranges.upper"));
    }
    read(j, "fold_labels", c.fold_labels, "");
    if (j.contains("design")) {
        check_keys(j.at("design"), {"optim_iters", "restarts"}, "design");
        read(j.at("design"), "optim_iters", c.design_optim_iters, "design");
        read(j.at("design"), "restarts", c.design_restarts, "design");
    }
    if (j.contains("piecewise5d")) {
        const json& f = j.at("piecewise5d");
        check_keys(f, {"linear", "amplitude", "frequency", "buffer"}, "piecewise5d");
        detail::read_array(f, "linear", c.piecewise5d.linear, "piecewise5d");
        detail::read_array(f, "amplitude", c.piecewise5d.amplitude, "piecewise5d");
        detail::read_array(f, "frequency", c.piecewise5d.frequency, "piecewise5d");
        read(f, "buffer", c.piecewise5d.buffer, "piecewise5d");
    }
    c.validate();
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(io::read_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError("config '" + path.string() + "': " + e.what());
    }
    return config_from_json(j);
}

/// Hash of the canonical (sorted-key) serialization, leaving out where output goes.
inline std::string config_hash(const RunConfig& c) {
    json j = to_json(c);
    j.erase("output_dir");
    return io::hex64(io::fnv1a(j.dump()));
}

}  // namespace nsgp

#endif  // NSGP_CONFIG_HPP
