#include "lrw/scenario.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

int config_error(const std::string& code, const std::string& msg)
{
    std::cerr << "lrwsim: error[" << code << "]: " << msg << '\n';
    return 1;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"lrwsim: runs LRW simulation scenarios and writes CSV tables"};
    std::string scenario_path;
    std::string preset;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> trials;
    std::optional<std::size_t> threads;
    std::string out_dir;
    bool emit_trace = false;
    bool emit_histogram = false;
    bool list_presets = false;

    auto* scen = app.add_option("--scenario", scenario_path, "scenario config file");
    auto* pre = app.add_option("--preset", preset, "built-in scenario name");
    scen->excludes(pre);
    app.add_option("--seed", seed, "master seed (falls back to LRWSIM_SEED, then the config)");
    app.add_option("--trials", trials, "override the trial/series count")->check(CLI::PositiveNumber);
    app.add_option("--threads", threads, "worker threads for trials")->check(CLI::PositiveNumber);
    app.add_option("--out", out_dir, "output directory for CSVs");
    app.add_flag("--emit-trace", emit_trace, "write trace.csv per point");
    app.add_flag("--emit-histogram", emit_histogram, "write histogram.csv per point");
    app.add_flag("--list-presets", list_presets, "print built-in preset names");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "lrwsim: error[Usage]: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    if (list_presets) {
        for (const auto& [name, text] : lrw::preset_library())
            std::cout << name << '\n';
        return 0;
    }
    if (scenario_path.empty() && preset.empty()) {
        std::cerr << "lrwsim: error[Usage]: one of --scenario or --preset is required\n\n" << app.help();
        return 1;
    }

    lrw::Experiment exp;
    try {
        if (!preset.empty()) {
            exp = lrw::load_preset(preset);
        } else {
            std::ifstream in(scenario_path, std::ios::binary);
            if (!in)
                return config_error("InvalidConfig", "cannot read " + scenario_path);
            std::ostringstream text;
            text << in.rdbuf();
            exp = lrw::parse_experiment(text.str());
        }
        if (!seed)
            if (const char* env = std::getenv("LRWSIM_SEED"))
                seed = lrw::cfgval::whole(env, "LRWSIM_SEED");
        if (seed) {
            // A calibration tied to the scenario seed follows the override.
            if (exp.calibration.seed == exp.base.seed)
                exp.calibration.seed = *seed;
            exp.base.seed = *seed;
        }
        if (trials)
            exp.base.trials = *trials;
        if (threads)
            exp.base.threads = *threads;
        exp.base.validate();
    } catch (const lrw::Error& e) {
        return config_error(std::string(lrw::to_string(e.code())), e.what());
    }

    lrw::RunOptions opts;
    if (!out_dir.empty())
        opts.out_dir = out_dir;
    opts.emit_trace = emit_trace;
    opts.emit_histogram = emit_histogram;

    lrw::ExperimentResult res;
    try {
        res = lrw::run_experiment(exp, opts);
    } catch (const lrw::Error& e) {
        return config_error(std::string(lrw::to_string(e.code())), e.what());
    } catch (const std::filesystem::filesystem_error& e) {
        return config_error("Io", e.what());
    }

    if (res.calibration)
        std::cout << "calibrated loss_prob " << res.loss_prob << '\n';
    for (const auto& p : res.points)
        std::cout << p.label << ": ops " << p.ops.size() << ", op reliability " << p.op_reliability_pct
                  << "%, series reliability " << p.series_reliability_pct << "%, mean " << p.duration.mean
                  << " ms\n";
    for (const auto& c : res.costs)
        std::cout << c.operation << " n=" << c.n << " r=" << c.r << " w=" << c.w << ": (" << c.cost.messages << ", "
                  << c.cost.rounds << ")\n";
    for (const auto& c : res.consensus) {
        std::cout << c.protocol << " inputs";
        for (auto x : c.inputs)
            std::cout << ' ' << x;
        std::cout << ": " << c.exploration.schedules << " schedules, " << (c.verdict.ok() ? "ok" : "VIOLATION")
                  << '\n';
    }

    if (const auto v = res.violation_count(); v > 0) {
        std::cerr << "lrwsim: error[AuditViolation]: " << v << " audit violation(s)\n";
        for (const auto& p : res.points)
            for (const auto& a : p.violations)
                std::cerr << "lrwsim: violation: " << p.label << " op " << a.op_id << " node " << a.node.value << ": "
                          << a.what << '\n';
        return 2;
    }
    return 0;
}
