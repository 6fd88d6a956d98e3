#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "wipp/wipp.hpp"

using namespace wipp;

namespace {

// Exit codes: 0 ok, 2 usage, 10 + ErrorKind for library failures.
constexpr int kUsageExit = 2;
constexpr int kErrorBase = 10;

int exit_code(ErrorKind k) { return kErrorBase + static_cast<int>(k); }

void log(const std::string& msg)
{
    static const auto t0 = std::chrono::steady_clock::now();
    const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::fprintf(stderr, "[%8.1fs] %s\n", t, msg.c_str());
}

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<double> eps;
    bool conditional = false;
    bool unconditional = false;
    bool antithetic = false;
    std::optional<int> levels;
    std::optional<std::string> out;
    std::optional<std::string> data;
    std::optional<int> workers;
    std::optional<int> level;
    std::optional<std::uint64_t> samples;
    std::uint64_t index = 0;
    int max_cells = 256;
    std::vector<double> eps_list{2e-2, 1e-2, 5e-3};
    bool skip_cost = false;
};

void add_common(CLI::App* cmd, Flags& f)
{
    cmd->add_option("--config", f.config, "JSON config file (// comments allowed)")->check(CLI::ExistingFile);
    cmd->add_option("--seed", f.seed, "Master seed; all randomness derives from it");
    auto* c = cmd->add_flag("--conditional", f.conditional, "Condition fields on the borehole data (default)");
    auto* u = cmd->add_flag("--unconditional", f.unconditional, "Sample unconditioned fields");
    c->excludes(u);
    cmd->add_flag("--antithetic", f.antithetic, "Pair each field with its antithetic partner");
    cmd->add_option("--data", f.data, "Borehole CSV (default: $" + std::string(kDataDirVariable) + "/" +
                                          kBoreholeFile + ")");
}

RunConfig resolve(const Flags& f)
{
    RunConfig cfg = f.config.empty() ? default_config() : load_config(f.config);
    if (f.seed) cfg.model.seed = *f.seed;
    if (f.eps) cfg.mlmc.eps = *f.eps;
    if (f.conditional) cfg.model.conditional = true;
    if (f.unconditional) cfg.model.conditional = false;
    if (f.antithetic) cfg.model.antithetic = true;
    if (f.levels) {
        cfg.mlmc.max_level = *f.levels;
        cfg.model.max_level = std::max(cfg.model.max_level, *f.levels);
    }
    if (f.level) cfg.model.max_level = std::max(cfg.model.max_level, *f.level);
    if (f.out) cfg.out_dir = *f.out;
    if (f.data) cfg.data_path = *f.data;
    if (f.workers) cfg.mlmc.workers = *f.workers;
    if (f.samples) cfg.study_samples = *f.samples;
    cfg.validate();
    return cfg;
}

ObservationSet observations(const RunConfig& cfg)
{
    ObservationSet obs;
    if (cfg.model.conditional) obs.records = load_boreholes(cfg.data_path, &cfg.model.domain);
    return obs;
}

WippModel make_model(const RunConfig& cfg)
{
    return WippModel(cfg.model, observations(cfg));
}

int level_arg(const Flags& f) { return f.level.value_or(0); }

std::string model_tag(const ModelOptions& m)
{
    return std::string(m.conditional ? "conditional" : "unconditional") + (m.antithetic ? "+av" : "");
}

int cmd_field(const Flags& f)
{
    const RunConfig cfg = resolve(f);
    const WippModel model = make_model(cfg);
    const int level = level_arg(f);
    const LevelGrid& g = model.resources(level).fine;
    const auto z = model.realization(level, f.index);
    std::ostringstream out;
    out << "x,y,log10_T\n";
    for (int j = 0; j < g.cells(); ++j) {
        for (int i = 0; i < g.cells(); ++i) {
            const Point p = g.cell_center(i, j);
            out << format_double(p.x) << ',' << format_double(p.y) << ','
                << format_double(z.field.fine[static_cast<std::size_t>(j) * g.cells() + i]) << '\n';
        }
    }
    std::cout << out.str();
    log("field: level " + std::to_string(level) + ", " + std::to_string(g.cells()) + "^2 cells, " +
        model_tag(cfg.model));
    return 0;
}

int cmd_krige(const Flags& f)
{
    RunConfig cfg = resolve(f);
    require(cfg.model.conditional, ErrorKind::InvalidArgument, "krige needs conditional mode");
    const WippModel model = make_model(cfg);
    const int level = level_arg(f);
    const LevelGrid& g = model.resources(level).fine;
    const auto obs_pts = observation_nodes(g, model.observations());
    const CovBlocks blocks = assemble_obs_blocks(fine_nodes(g), obs_pts, cfg.model.cov);
    const ConditioningOperator op = build_operator(blocks, model.observations().values(), cfg.model.cov);
    const Eigen::VectorXd var = conditional_variance(op, blocks, cfg.model.cov);
    std::ostringstream out;
    out << "x,y,mean,std\n";
    for (int j = 0; j < g.cells(); ++j) {
        for (int i = 0; i < g.cells(); ++i) {
            const Point p = g.cell_center(i, j);
            const auto k = static_cast<Eigen::Index>(j) * g.cells() + i;
            out << format_double(p.x) << ',' << format_double(p.y) << ','
                << format_double(op.conditional_mean[k]) << ','
                << format_double(std::sqrt(std::max(0.0, var[k]))) << '\n';
        }
    }
    std::cout << out.str();
    log("krige: level " + std::to_string(level) + ", " + std::to_string(obs_pts.size()) + " observations");
    return 0;
}

int cmd_solve(const Flags& f)
{
    const RunConfig cfg = resolve(f);
    const WippModel model = make_model(cfg);
    const int level = level_arg(f);
    const LevelGrid& g = model.resources(level).fine;
    const auto z = model.realization(level, f.index);
    const FlowSystem sys = assemble(g, z.field.fine, BoundaryFunction(cfg.model.head), cfg.model.averaging);
    const HeadSolution h = solve(sys, cfg.model.solver);
    std::ostringstream out;
    out << "x,y,log10_T,head\n";
    for (int j = 0; j < g.cells(); ++j) {
        for (int i = 0; i < g.cells(); ++i) {
            const Point p = g.cell_center(i, j);
            const auto k = static_cast<std::size_t>(j) * g.cells() + i;
            out << format_double(p.x) << ',' << format_double(p.y) << ',' << format_double(z.field.fine[k]) << ','
                << format_double(h.head[k]) << '\n';
        }
    }
    std::cout << out.str();
    log("solve: " + std::to_string(h.iterations) + " PCG iterations, residual " + format_double(h.residual));
    const TravelTimeResult t = model.travel_time(g, z.field.fine);
    if (t.ok())
        log("solve: travel time " + format_double(t.exit_time) + " s, Q = " + format_double(std::log10(t.exit_time)));
    else
        log(std::string("solve: particle ") + to_string(t.termination));
    return 0;
}

int finish(const MlmcState& st, const RunConfig& cfg, const std::string& stem)
{
    const ResultPaths p = write_results(st, cfg, cfg.out_dir, stem);
    std::cout << summary_json(st, cfg).dump(2) << '\n';
    log("wrote " + p.levels_csv.string() + " and " + p.summary_json.string());
    if (!st.converged) {
        std::fprintf(stderr, "error[%s]: %s\n", std::string(to_string(ErrorKind::LevelCap)).c_str(),
                     st.failure.c_str());
        return exit_code(ErrorKind::LevelCap);
    }
    return 0;
}

int cmd_mlmc(const Flags& f)
{
    const RunConfig cfg = resolve(f);
    const WippModel model = make_model(cfg);
    log("mlmc: eps " + format_double(cfg.mlmc.eps) + ", " + model_tag(cfg.model) + ", levels " +
        std::to_string(cfg.mlmc.min_level) + ".." + std::to_string(cfg.mlmc.max_level));
    MlmcOptions o = cfg.mlmc;
    o.keep_records = false;
    const MlmcState st = run_mlmc(model, o);
    log("mlmc: estimate " + format_double(st.estimate) + ", L = " + std::to_string(st.finest_level) + ", " +
        format_double(st.wall_seconds) + " s");
    return finish(st, cfg, "mlmc");
}

int cmd_mc(const Flags& f)
{
    const RunConfig cfg = resolve(f);
    const WippModel model = make_model(cfg);
    McOptions o;
    o.eps = cfg.mlmc.eps;
    o.level = f.level.value_or(cfg.mlmc.max_level);
    o.n_init = cfg.mc_init;
    o.max_reject_rate = cfg.mlmc.max_reject_rate;
    o.workers = cfg.mlmc.workers;
    o.keep_records = false;
    log("mc: eps " + format_double(o.eps) + ", level " + std::to_string(o.level) + ", " + model_tag(cfg.model));
    const MlmcState st = run_mc(model, o);
    log("mc: estimate " + format_double(st.estimate) + ", N = " + std::to_string(st.levels[0].n()) + ", " +
        format_double(st.wall_seconds) + " s");
    return finish(st, cfg, "mc");
}

std::string study_csv(const std::vector<LevelStats>& levels, int n0)
{
    std::string out = "cells," + std::string(kLevelCsvHeader) + ",cov_Y_pair,cov_Q_pair,seconds\n";
    for (const auto& l : levels) {
        out += std::to_string(n0 << l.level) + "," + std::to_string(l.level) + "," + std::to_string(l.n()) + "," +
               format_double(l.y.mean) + "," + format_double(l.y.variance()) + "," + format_double(l.q.mean) +
               "," + format_double(l.q.variance()) + "," + format_double(l.cost()) + "," +
               std::to_string(l.rejects) + "," + format_double(l.y_pair.covariance()) + "," +
               format_double(l.q_pair.covariance()) + "," + format_double(l.seconds) + "\n";
    }
    return out;
}

// Per-level diagnostics on an n0 = 8 hierarchy for {conditional, unconditional} x {plain, AV},
// then MLMC runs per tolerance with the MC cost from V[Q_L] on the finest level reached.
int cmd_study(const Flags& f)
{
    const RunConfig cfg = resolve(f);
    const std::filesystem::path dir = cfg.out_dir;
    constexpr int kStudyN0 = 8;
    require(f.max_cells >= kStudyN0 && (f.max_cells & (f.max_cells - 1)) == 0, ErrorKind::Range,
            "--max-cells must be a power of two >= 8");
    int top = 0;
    while ((kStudyN0 << top) < f.max_cells) ++top;

    Json index;
    index["samples"] = cfg.study_samples;
    index["config"] = config_to_json(cfg);
    for (bool conditional : {true, false}) {
        for (bool av : {false, true}) {
            RunConfig c = cfg;
            c.model.n0 = kStudyN0;
            c.model.max_level = top;
            c.model.conditional = conditional;
            c.model.antithetic = av;
            c.model.snap_cells = std::max(c.model.snap_cells, kStudyN0);
            const WippModel model = make_model(c);
            std::vector<int> levels;
            for (int l = 0; l <= top; ++l) levels.push_back(l);
            log("study: " + model_tag(c.model) + ", " + std::to_string(cfg.study_samples) + " samples on " +
                std::to_string(levels.size()) + " levels");
            const auto table = level_table(model, levels, cfg.study_samples, cfg.mlmc.workers,
                                           cfg.mlmc.max_reject_rate);
            const std::string name = std::string("study_") + (conditional ? "conditional" : "unconditional") +
                                     (av ? "_av" : "_plain") + "_levels.csv";
            write_text(dir / name, study_csv(table, kStudyN0));
            index["tables"].push_back(name);
        }
    }

    if (!f.skip_cost) {
        std::string cost = "eps,antithetic,mlmc_cost,mlmc_seconds,mlmc_levels,converged,mc_cost,mc_samples,ratio\n";
        for (double eps : f.eps_list) {
            for (bool av : {false, true}) {
                RunConfig c = cfg;
                c.model.conditional = true;
                c.model.antithetic = av;
                c.mlmc.eps = eps;
                const WippModel model = make_model(c);
                MlmcOptions o = c.mlmc;
                o.keep_records = false;
                log("study: mlmc eps " + format_double(eps) + (av ? " +av" : ""));
                const MlmcState st = run_mlmc(model, o);
                const LevelStats& fine = st.levels.back();
                const std::uint64_t n_mc = mc_sample_count(fine.q.variance(), eps);
                const double mc = static_cast<double>(n_mc) * model.standard_cost(st.finest_level);
                cost += format_double(eps) + "," + (av ? "1" : "0") + "," + format_double(st.cost) + "," +
                        format_double(st.wall_seconds) + "," + std::to_string(st.levels.size()) + "," +
                        (st.converged ? "1" : "0") + "," + format_double(mc) + "," + std::to_string(n_mc) + "," +
                        format_double(mc / st.cost) + "\n";
            }
        }
        write_text(dir / "study_cost.csv", cost);
        index["tables"].push_back("study_cost.csv");
    }
    write_text(dir / "study_summary.json", index.dump(2) + "\n");
    std::cout << index.dump(2) << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Travel-time uncertainty at the WIPP site by conditional multilevel Monte Carlo"};
    app.require_subcommand(1, 1);
    app.footer("Exit codes: 0 success, 2 usage, 10+k library error of category k "
               "(printed as error[<category>] on stderr).");
    Flags f;

    auto* field = app.add_subcommand("field", "Write one log10 T realization as CSV (x,y,log10_T) to stdout");
    auto* krige = app.add_subcommand("krige", "Write the kriged mean and conditional std as CSV to stdout");
    auto* solve_cmd = app.add_subcommand("solve", "Solve flow for one realization; head CSV to stdout");
    auto* mc = app.add_subcommand("mc", "Plain Monte Carlo on one level");
    auto* mlmc = app.add_subcommand("mlmc", "Adaptive multilevel Monte Carlo");
    auto* study = app.add_subcommand("study", "Per-level variance tables and cost comparison");

    for (auto* cmd : {field, krige, solve_cmd, mc, mlmc, study}) add_common(cmd, f);
    for (auto* cmd : {field, krige, solve_cmd, mc}) cmd->add_option("--level", f.level, "Grid level (cells = n0 * 2^level)");
    for (auto* cmd : {field, solve_cmd}) cmd->add_option("--index", f.index, "Sample index within the level");
    for (auto* cmd : {mc, mlmc, study}) {
        cmd->add_option("--eps", f.eps, "Target RMSE");
        cmd->add_option("--out", f.out, "Output directory");
        cmd->add_option("--workers", f.workers, "Worker threads; results do not depend on it");
    }
    mlmc->add_option("--levels", f.levels, "Finest level allowed");
    study->add_option("--levels", f.levels, "Finest level allowed in the MLMC runs");
    study->add_option("--samples", f.samples, "Samples per level for the variance tables");
    study->add_option("--max-cells", f.max_cells, "Finest grid of the variance tables");
    study->add_option("--eps-list", f.eps_list, "Tolerances of the cost comparison");
    study->add_flag("--skip-cost", f.skip_cost, "Only write the variance tables");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kUsageExit;
    }

    try {
        if (*field) return cmd_field(f);
        if (*krige) return cmd_krige(f);
        if (*solve_cmd) return cmd_solve(f);
        if (*mc) return cmd_mc(f);
        if (*mlmc) return cmd_mlmc(f);
        if (*study) return cmd_study(f);
    } catch (const Error& e) {
        std::fprintf(stderr, "error[%s]: %s\n", std::string(to_string(e.kind())).c_str(), e.what());
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error[internal]: %s\n", e.what());
        return 1;
    }
    return kUsageExit;
}
