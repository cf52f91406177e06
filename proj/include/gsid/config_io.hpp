#pragma once
#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include <gsid/errors.hpp>
#include <gsid/experiments.hpp>

namespace gsid {

enum class ExperimentKind
{
    Trials,
    LorenzRegimes,
    Switching,
};

/// Parsed experiment file. Only the part matching `kind` is meaningful.
struct ExperimentFile
{
    ExperimentKind kind = ExperimentKind::Trials;
    std::string output = "out";
    bool svg = false;
    ExperimentConfig trials;
    SwitchingConfig switching;
};

namespace detail {

/// Collects schema violations as "path: message" lines.
class SchemaReader
{
public:
    std::vector<std::string> errors;

    void fail(const std::string& path, const std::string& msg) { errors.push_back(path + ": " + msg); }

    void allow_only(const nlohmann::json& obj, const std::string& path, const std::set<std::string>& keys)
    {
        if (!obj.is_object()) return;
        for (const auto& [k, v] : obj.items()) {
            if (!keys.contains(k)) fail(join_path(path, k), "unknown key");
        }
    }

    static std::string join_path(const std::string& base, const std::string& key)
    {
        return base.empty() ? key : base + "." + key;
    }

    bool object(const nlohmann::json& obj, const std::string& path)
    {
        if (obj.is_object()) return true;
        fail(path.empty() ? "<root>" : path, "expected an object");
        return false;
    }

    template <typename T>
    void read(const nlohmann::json& obj, const std::string& base, const std::string& key, T& target, bool required = false)
    {
        const auto path = join_path(base, key);
        if (!obj.contains(key)) {
            if (required) fail(path, "required");
            return;
        }
        const auto& v = obj.at(key);
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) return fail(path, "expected true/false");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) return fail(path, "expected a string");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) return fail(path, "expected an integer");
            if constexpr (std::is_unsigned_v<T>) {
                if (v.is_number_unsigned() == false && v.get<std::int64_t>() < 0) return fail(path, "must be >= 0");
            }
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) return fail(path, "expected a number");
        }
        target = v.get<T>();
    }

    void read_vector(const nlohmann::json& obj, const std::string& base, const std::string& key, std::vector<double>& target,
                     bool required = false)
    {
        const auto path = join_path(base, key);
        if (!obj.contains(key)) {
            if (required) fail(path, "required");
            return;
        }
        const auto& v = obj.at(key);
        if (!v.is_array()) return fail(path, "expected an array of numbers");
        std::vector<double> out;
        for (std::size_t k = 0; k < v.size(); ++k) {
            if (!v[k].is_number()) return fail(path + "[" + std::to_string(k) + "]", "expected a number");
            out.push_back(v[k].get<double>());
        }
        target = std::move(out);
    }
};

inline void read_solver(SchemaReader& r, const nlohmann::json& j, const std::string& path, SolverConfig& s)
{
    if (!r.object(j, path)) return;
    r.allow_only(j, path, {"threshold", "tol", "max_iter", "variant", "init", "sparsity", "k_factor"});
    r.read(j, path, "threshold", s.threshold);
    r.read(j, path, "tol", s.tol);
    r.read(j, path, "max_iter", s.max_iter);
    r.read(j, path, "sparsity", s.sparsity);
    r.read(j, path, "k_factor", s.k_factor);
    std::string text;
    if (j.contains("variant")) {
        r.read(j, path, "variant", text);
        try {
            s.variant = parse_variant(text);
        } catch (const StructuralError& e) {
            r.fail(path + ".variant", e.what());
        }
    }
    if (j.contains("init")) {
        text.clear();
        r.read(j, path, "init", text);
        try {
            s.init = parse_initialization(text);
        } catch (const StructuralError& e) {
            r.fail(path + ".init", e.what());
        }
    }
}

} // namespace detail

/// Parses and validates an experiment file; all violations are reported in one ConfigError.
inline ExperimentFile parse_experiment(const nlohmann::json& j)
{
    detail::SchemaReader r;
    ExperimentFile file;
    if (!r.object(j, "")) throw ConfigError(r.errors.front());

    r.allow_only(j, "", {"experiment", "name", "output", "svg", "system", "dt", "degree", "trials", "seed", "threads",
                         "record_traces", "variants", "solver", "sources", "switching"});
    std::string kind = "trials";
    r.read(j, "", "experiment", kind, true);
    if (kind == "trials") file.kind = ExperimentKind::Trials;
    else if (kind == "lorenz_regimes") file.kind = ExperimentKind::LorenzRegimes;
    else if (kind == "switching") file.kind = ExperimentKind::Switching;
    else r.fail("experiment", "expected trials, lorenz_regimes or switching");

    r.read(j, "", "output", file.output);
    r.read(j, "", "svg", file.svg);

    if (file.kind == ExperimentKind::Switching) {
        auto& sw = file.switching;
        r.read(j, "", "dt", sw.dt);
        r.read(j, "", "degree", sw.degree);
        r.read(j, "", "seed", sw.seed);
        if (j.contains("solver")) detail::read_solver(r, j.at("solver"), "solver", sw.solver);
        for (const char* key : {"trials", "threads", "record_traces", "variants", "sources", "system"}) {
            if (j.contains(key)) r.fail(key, "not used by switching experiments");
        }
        if (j.contains("switching")) {
            const auto& s = j.at("switching");
            if (r.object(s, "switching")) {
                r.allow_only(s, "switching",
                             {"alpha_before", "alpha_after", "x0", "t_final", "t_switch", "segments", "noise", "component"});
                r.read(s, "switching", "alpha_before", sw.alpha_before);
                r.read(s, "switching", "alpha_after", sw.alpha_after);
                r.read_vector(s, "switching", "x0", sw.x0);
                r.read(s, "switching", "t_final", sw.t_final);
                if (s.contains("t_switch")) {
                    double t = 0.0;
                    r.read(s, "switching", "t_switch", t);
                    sw.t_switch = t;
                }
                r.read(s, "switching", "segments", sw.segments);
                r.read(s, "switching", "noise", sw.noise);
                int component = sw.component + 1;
                r.read(s, "switching", "component", component);
                sw.component = component - 1;
            }
        }
        if (r.errors.empty()) {
            try {
                sw.validate();
            } catch (const ConfigError& e) {
                r.errors.push_back(e.what());
            }
        }
    } else {
        auto& c = file.trials;
        if (file.kind == ExperimentKind::LorenzRegimes) c = lorenz_regimes_config();
        r.read(j, "", "name", c.name);
        if (j.contains("system")) {
            std::string sys;
            r.read(j, "", "system", sys);
            try {
                c.system = parse_system(sys);
            } catch (const StructuralError& e) {
                r.fail("system", e.what());
            }
        } else if (file.kind == ExperimentKind::Trials) {
            r.fail("system", "required");
        }
        if (file.kind == ExperimentKind::LorenzRegimes && c.system != SystemKind::Lorenz) {
            r.fail("system", "lorenz_regimes requires lorenz");
        }
        r.read(j, "", "dt", c.dt);
        r.read(j, "", "degree", c.degree);
        r.read(j, "", "trials", c.trials);
        r.read(j, "", "seed", c.base_seed);
        r.read(j, "", "threads", c.threads);
        r.read(j, "", "record_traces", c.record_traces);
        if (j.contains("variants")) {
            const auto& v = j.at("variants");
            if (!v.is_array()) {
                r.fail("variants", "expected an array of strings");
            } else {
                c.variants.clear();
                for (std::size_t k = 0; k < v.size(); ++k) {
                    const auto path = "variants[" + std::to_string(k) + "]";
                    if (!v[k].is_string()) {
                        r.fail(path, "expected a string");
                        continue;
                    }
                    try {
                        c.variants.push_back(parse_variant(v[k].get<std::string>()));
                    } catch (const StructuralError& e) {
                        r.fail(path, e.what());
                    }
                }
            }
        }
        if (j.contains("solver")) detail::read_solver(r, j.at("solver"), "solver", c.solver);
        if (j.contains("switching")) r.fail("switching", "only valid when experiment = switching");
        if (j.contains("sources")) {
            const auto& s = j.at("sources");
            if (!s.is_array()) {
                r.fail("sources", "expected an array");
            } else {
                c.sources.clear();
                for (std::size_t i = 0; i < s.size(); ++i) {
                    const auto path = "sources[" + std::to_string(i) + "]";
                    SourceSetup src;
                    if (!r.object(s[i], path)) continue;
                    r.allow_only(s[i], path, {"params", "x0", "t_final", "noise"});
                    r.read_vector(s[i], path, "x0", src.x0, true);
                    r.read(s[i], path, "t_final", src.t_final, true);
                    r.read(s[i], path, "noise", src.noise);
                    if (!s[i].contains("params")) {
                        r.fail(path + ".params", "required");
                    } else if (r.object(s[i].at("params"), path + ".params")) {
                        for (const auto& [k, v] : s[i].at("params").items()) {
                            if (!v.is_number()) r.fail(path + ".params." + k, "expected a number");
                            else src.params[k] = v.get<double>();
                        }
                        if (r.errors.empty()) {
                            const auto names = parameter_names(c.system);
                            for (const auto& [k, v] : src.params) {
                                if (std::find(names.begin(), names.end(), k) == names.end()) {
                                    r.fail(path + ".params." + k, "unknown parameter for " + to_string(c.system));
                                }
                            }
                        }
                    }
                    c.sources.push_back(std::move(src));
                }
            }
        } else if (file.kind == ExperimentKind::Trials) {
            r.fail("sources", "required");
        }
        if (r.errors.empty()) {
            try {
                c.validate();
            } catch (const ConfigError& e) {
                r.errors.push_back(e.what());
            }
        }
    }

    if (!r.errors.empty()) {
        std::string msg = "invalid experiment config:";
        for (const auto& e : r.errors) msg += "\n  " + e;
        throw ConfigError(msg);
    }
    return file;
}

inline ExperimentFile load_experiment(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError(path.string() + ": cannot open");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in, nullptr, true, true);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    try {
        return parse_experiment(j);
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

} // namespace gsid
