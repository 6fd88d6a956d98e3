#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "wipp/error.hpp"
#include "wipp/grid.hpp"
#include "wipp/mlmc.hpp"
#include "wipp/model.hpp"

namespace wipp {

using Json = nlohmann::ordered_json;

inline constexpr const char* kBoreholeHeader = "name,easting,northing,log10_T";
inline constexpr const char* kDataDirVariable = "WIPP_DATA_DIR";
inline constexpr const char* kBoreholeFile = "wipp_boreholes.csv";

namespace detail {

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline double parse_number(const std::string& text, const std::string& where)
{
    const std::string t = trim(text);
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(t, &used);
    } catch (const std::exception&) {
        fail(ErrorKind::Parse, where + ": '" + t + "' is not a number");
    }
    if (used != t.size()) fail(ErrorKind::Parse, where + ": trailing characters in '" + t + "'");
    if (!std::isfinite(v)) fail(ErrorKind::Parse, where + ": value is not finite");
    return v;
}

} // namespace detail

/// Reads `name,easting,northing,log10_T` rows in file order. With a domain,
/// every borehole must lie inside it.
inline std::vector<Borehole> load_boreholes(const std::string& path, const DomainSpec* domain = nullptr)
{
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open borehole file " + path);
    std::vector<Borehole> out;
    std::string line;
    int line_no = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        if (!header) {
            require(t == kBoreholeHeader, ErrorKind::Parse,
                    path + ":" + std::to_string(line_no) + ": expected header '" + kBoreholeHeader + "'");
            header = true;
            continue;
        }
        std::vector<std::string> cols;
        std::stringstream ss(t);
        std::string cell;
        while (std::getline(ss, cell, ',')) cols.push_back(detail::trim(cell));
        const std::string where = path + ":" + std::to_string(line_no);
        require(cols.size() == 4, ErrorKind::Parse, where + ": expected 4 columns, got " + std::to_string(cols.size()));
        require(!cols[0].empty(), ErrorKind::Parse, where + ": empty borehole name");
        Borehole b{cols[0], detail::parse_number(cols[1], where), detail::parse_number(cols[2], where),
                   detail::parse_number(cols[3], where)};
        if (domain != nullptr) {
            require(domain->contains(b.location()), ErrorKind::Range,
                    where + ": borehole " + b.name + " lies outside the domain");
        }
        out.push_back(std::move(b));
    }
    require(!out.empty(), ErrorKind::EmptyDataset, "no borehole records in " + path);
    return out;
}

/// Bundled dataset path: $WIPP_DATA_DIR/wipp_boreholes.csv, else the build-time data directory.
inline std::string default_borehole_path()
{
    if (const char* dir = std::getenv(kDataDirVariable); dir != nullptr && *dir != '\0')
        return (std::filesystem::path(dir) / kBoreholeFile).string();
#ifdef WIPP_DEFAULT_DATA_DIR
    return (std::filesystem::path(WIPP_DEFAULT_DATA_DIR) / kBoreholeFile).string();
#else
    return (std::filesystem::path("data") / kBoreholeFile).string();
#endif
}

/// All run settings. Keys in config files match the names in `config_keys()`.
struct RunConfig {
    ModelOptions model;
    MlmcOptions mlmc;
    std::uint64_t mc_init = 100;
    std::uint64_t study_samples = 5000;
    std::string data_path;
    std::string out_dir = ".";

    void validate() const
    {
        model.validate();
        mlmc.validate();
        require(mlmc.max_level <= model.max_level, ErrorKind::Range,
                "mlmc max_level exceeds the model's max_level");
        require(mc_init >= 2, ErrorKind::Range, "mc_init must be >= 2");
        require(study_samples >= 2, ErrorKind::Range, "study_samples must be >= 2");
    }
};

namespace detail {

struct ConfigKey {
    std::string name;
    std::function<void(RunConfig&, const Json&)> set;
    std::function<Json(const RunConfig&)> get;
};

template <class T>
T as(const Json& v, const std::string& key)
{
    try {
        return v.get<T>();
    } catch (const nlohmann::json::exception&) {
        fail(ErrorKind::Parse, "config key '" + key + "' has the wrong type");
    }
}

template <class Member>
ConfigKey number_key(std::string name, Member member)
{
    return {name,
            [member, name](RunConfig& c, const Json& v) { member(c) = as<std::decay_t<decltype(member(c))>>(v, name); },
            [member](const RunConfig& c) { return Json(member(const_cast<RunConfig&>(c))); }};
}

} // namespace detail

inline const std::vector<detail::ConfigKey>& config_keys()
{
    using detail::number_key;
    static const std::vector<detail::ConfigKey> keys = [] {
        std::vector<detail::ConfigKey> k;
        k.push_back(number_key("mean", [](RunConfig& c) -> double& { return c.model.cov.mean; }));
        k.push_back(number_key("sigma2", [](RunConfig& c) -> double& { return c.model.cov.variance; }));
        k.push_back(number_key("lambda", [](RunConfig& c) -> double& { return c.model.cov.correlation_length; }));
        k.push_back(number_key("center_x", [](RunConfig& c) -> double& { return c.model.domain.center_x; }));
        k.push_back(number_key("center_y", [](RunConfig& c) -> double& { return c.model.domain.center_y; }));
        k.push_back(number_key("extent_x", [](RunConfig& c) -> double& { return c.model.domain.extent_x; }));
        k.push_back(number_key("extent_y", [](RunConfig& c) -> double& { return c.model.domain.extent_y; }));
        k.push_back(number_key("inner_half_width", [](RunConfig& c) -> double& { return c.model.domain.inner_half_width; }));
        k.push_back(number_key("inner_half_height", [](RunConfig& c) -> double& { return c.model.domain.inner_half_height; }));
        k.push_back({"release",
                     [](RunConfig& c, const Json& v) {
                         if (v.is_null()) {
                             c.model.domain.release.reset();
                             return;
                         }
                         require(v.is_array() && v.size() == 2, ErrorKind::Parse,
                                 "config key 'release' must be [x, y] or null");
                         c.model.domain.release = Point{detail::as<double>(v[0], "release"),
                                                        detail::as<double>(v[1], "release")};
                     },
                     [](const RunConfig& c) {
                         if (!c.model.domain.release) return Json(nullptr);
                         return Json::array({c.model.domain.release->x, c.model.domain.release->y});
                     }});
        k.push_back(number_key("a0", [](RunConfig& c) -> double& { return c.model.head.a0; }));
        k.push_back(number_key("a1", [](RunConfig& c) -> double& { return c.model.head.a1; }));
        k.push_back(number_key("a2", [](RunConfig& c) -> double& { return c.model.head.a2; }));
        k.push_back(number_key("x0", [](RunConfig& c) -> double& { return c.model.head.x0; }));
        k.push_back(number_key("y0", [](RunConfig& c) -> double& { return c.model.head.y0; }));
        k.push_back(number_key("thickness", [](RunConfig& c) -> double& { return c.model.thickness; }));
        k.push_back(number_key("porosity", [](RunConfig& c) -> double& { return c.model.porosity; }));
        k.push_back(number_key("max_time", [](RunConfig& c) -> double& { return c.model.max_time; }));
        k.push_back({"face_average",
                     [](RunConfig& c, const Json& v) {
                         const auto s = detail::as<std::string>(v, "face_average");
                         if (s == "harmonic") c.model.averaging = FaceAveraging::Harmonic;
                         else if (s == "geometric") c.model.averaging = FaceAveraging::Geometric;
                         else fail(ErrorKind::Range, "face_average must be 'harmonic' or 'geometric'");
                     },
                     [](const RunConfig& c) {
                         return Json(c.model.averaging == FaceAveraging::Harmonic ? "harmonic" : "geometric");
                     }});
        k.push_back(number_key("solver_tolerance", [](RunConfig& c) -> double& { return c.model.solver.relative_tolerance; }));
        k.push_back(number_key("solver_max_iterations", [](RunConfig& c) -> int& { return c.model.solver.max_iterations; }));
        k.push_back(number_key("n0", [](RunConfig& c) -> int& { return c.model.n0; }));
        k.push_back(number_key("snap_cells", [](RunConfig& c) -> int& { return c.model.snap_cells; }));
        k.push_back(number_key("model_max_level", [](RunConfig& c) -> int& { return c.model.max_level; }));
        k.push_back(number_key("conditional", [](RunConfig& c) -> bool& { return c.model.conditional; }));
        k.push_back(number_key("antithetic", [](RunConfig& c) -> bool& { return c.model.antithetic; }));
        k.push_back(number_key("seed", [](RunConfig& c) -> std::uint64_t& { return c.model.seed; }));
        k.push_back(number_key("eps", [](RunConfig& c) -> double& { return c.mlmc.eps; }));
        k.push_back(number_key("n_init", [](RunConfig& c) -> std::uint64_t& { return c.mlmc.n_init; }));
        k.push_back(number_key("min_level", [](RunConfig& c) -> int& { return c.mlmc.min_level; }));
        k.push_back(number_key("max_level", [](RunConfig& c) -> int& { return c.mlmc.max_level; }));
        k.push_back({"bias_rate",
                     [](RunConfig& c, const Json& v) {
                         if (v.is_null()) c.mlmc.bias_rate.reset();
                         else c.mlmc.bias_rate = detail::as<double>(v, "bias_rate");
                     },
                     [](const RunConfig& c) { return c.mlmc.bias_rate ? Json(*c.mlmc.bias_rate) : Json(nullptr); }});
        k.push_back(number_key("bias_rate_floor", [](RunConfig& c) -> double& { return c.mlmc.bias_rate_floor; }));
        k.push_back(number_key("max_reject_rate", [](RunConfig& c) -> double& { return c.mlmc.max_reject_rate; }));
        k.push_back(number_key("workers", [](RunConfig& c) -> int& { return c.mlmc.workers; }));
        k.push_back(number_key("mc_init", [](RunConfig& c) -> std::uint64_t& { return c.mc_init; }));
        k.push_back(number_key("study_samples", [](RunConfig& c) -> std::uint64_t& { return c.study_samples; }));
        k.push_back(number_key("data", [](RunConfig& c) -> std::string& { return c.data_path; }));
        k.push_back(number_key("out", [](RunConfig& c) -> std::string& { return c.out_dir; }));
        return k;
    }();
    return keys;
}

inline RunConfig default_config()
{
    RunConfig c;
    c.mlmc.max_level = 3;
    c.model.max_level = 4;
    c.data_path = default_borehole_path();
    return c;
}

/// Applies the keys of a JSON object on top of `base`. Unknown keys are an
/// error in strict mode.
inline RunConfig config_from_json(const Json& j, RunConfig base = default_config(), bool strict = true)
{
    require(j.is_object(), ErrorKind::Parse, "config must be a JSON object");
    const auto& keys = config_keys();
    for (auto it = j.begin(); it != j.end(); ++it) {
        const auto k = std::find_if(keys.begin(), keys.end(), [&](const auto& key) { return key.name == it.key(); });
        if (k == keys.end()) {
            require(!strict, ErrorKind::Parse, "unknown config key '" + it.key() + "'");
            continue;
        }
        k->set(base, it.value());
    }
    base.validate();
    return base;
}

/// Every key with its current value, in a fixed order.
inline Json config_to_json(const RunConfig& c)
{
    Json j = Json::object();
    for (const auto& k : config_keys()) j[k.name] = k.get(c);
    return j;
}

/// Reads a JSON config file (comments allowed). An empty file means all defaults.
inline RunConfig load_config(const std::string& path, bool strict = true)
{
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open config file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    if (detail::trim(text).empty()) return config_from_json(Json::object(), default_config(), strict);
    Json j;
    try {
        j = Json::parse(text, nullptr, true, true);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::Parse, path + ": " + e.what());
    }
    return config_from_json(j, default_config(), strict);
}

inline std::string format_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline constexpr const char* kLevelCsvHeader = "level,N,mean_Y,var_Y,mean_Q,var_Q,cost,rejects";

/// Per-level table, 17 significant digits per value.
inline std::string level_csv(const std::vector<LevelStats>& levels)
{
    std::string out = std::string(kLevelCsvHeader) + "\n";
    for (const auto& l : levels) {
        out += std::to_string(l.level) + "," + std::to_string(l.n()) + "," + format_double(l.y.mean) + "," +
               format_double(l.y.variance()) + "," + format_double(l.q.mean) + "," +
               format_double(l.q.variance()) + "," + format_double(l.cost()) + "," +
               std::to_string(l.rejects) + "\n";
    }
    return out;
}

inline const char* to_string(Estimator e)
{
    return e == Estimator::MC ? "mc" : "mlmc";
}

inline Json summary_json(const MlmcState& st, const RunConfig& cfg)
{
    Json j;
    j["estimator"] = to_string(st.estimator);
    j["eps"] = st.eps;
    j["estimate"] = st.estimate;
    j["variance"] = st.variance;
    j["bias_estimate"] = st.bias_estimate;
    j["bias_rate_used"] = st.bias_rate_used;
    j["converged"] = st.converged;
    j["failure"] = st.failure;
    j["finest_level"] = st.finest_level;
    j["cost"] = st.cost;
    j["work"] = st.work;
    j["wall_seconds"] = st.wall_seconds;
    Json rates;
    rates["alpha"] = st.rates.has_alpha ? Json(st.rates.alpha) : Json(nullptr);
    rates["beta"] = st.rates.has_beta ? Json(st.rates.beta) : Json(nullptr);
    rates["alpha_h"] = st.rates.has_alpha ? Json(st.rates.alpha_h()) : Json(nullptr);
    rates["beta_h"] = st.rates.has_beta ? Json(st.rates.beta_h()) : Json(nullptr);
    j["rates"] = rates;
    j["seed"] = cfg.model.seed;
    Json levels = Json::array();
    for (const auto& l : st.levels) {
        Json e;
        e["level"] = l.level;
        e["cells"] = cfg.model.n0 << l.level;
        e["N"] = l.n();
        e["mean_Y"] = l.y.mean;
        e["var_Y"] = l.y.variance();
        e["mean_Q"] = l.q.mean;
        e["var_Q"] = l.q.variance();
        e["cost_per_sample"] = l.cost_per_sample;
        e["rejects"] = l.rejects;
        e["seconds"] = l.seconds;
        levels.push_back(e);
    }
    j["levels"] = levels;
    j["config"] = config_to_json(cfg);
    return j;
}

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
    out << text;
    require(static_cast<bool>(out), ErrorKind::Io, "write failed for " + path.string());
}

struct ResultPaths {
    std::filesystem::path levels_csv;
    std::filesystem::path summary_json;
};

/// Writes `<stem>_levels.csv` and `<stem>_summary.json` into `dir`.
inline ResultPaths write_results(const MlmcState& st, const RunConfig& cfg, const std::filesystem::path& dir,
                                 const std::string& stem)
{
    ResultPaths p{dir / (stem + "_levels.csv"), dir / (stem + "_summary.json")};
    write_text(p.levels_csv, level_csv(st.levels));
    write_text(p.summary_json, summary_json(st, cfg).dump(2) + "\n");
    return p;
}

inline Json read_json(const std::filesystem::path& path)
{
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::Parse, path.string() + ": " + e.what());
    }
}

} // namespace wipp
