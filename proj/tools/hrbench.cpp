// hrbench: heart-rate forecasting benchmark driver.

#include "hrf/bench.hpp"
#include "hrf/errors.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>

using namespace hrf;

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    std::string out = s.substr(b, e - b + 1);
    if (out.size() >= 2 && (out.front() == '"' || out.front() == '\'') && out.back() == out.front()) {
        out = out.substr(1, out.size() - 2);
    }
    return out;
}

// Flat key=value file. A key fills its flag only when the command line left it unset.
void apply_config_file(CLI::App& sub, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
        const std::string key = trim(t.substr(0, eq)), value = trim(t.substr(eq + 1));
        CLI::Option* opt = key == "config" || key == "help" ? nullptr : sub.get_option_no_throw("--" + key);
        if (opt == nullptr) throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
        if (opt->count() > 0) continue;
        opt->add_result(value);
        opt->run_callback();
    }
}

}  // namespace

int main(int argc, char** argv) {
    bench::tune_allocator();
    CLI::App app{"Heart-rate forecasting benchmark"};
    app.require_subcommand(1);

    bench::BenchConfig cfg;
    std::size_t epochs = cfg.train.epochs;
    bool paper_protocol = false, paper_norm = false, no_plots = false, no_ckpt = false;
    auto* b = app.add_subcommand("bench", "cross-validate every selected model on every series");
    std::string config_file;
    b->add_option("--config", config_file, "flat key=value file with the same keys as the flags; flags win");
    b->add_option("--data", cfg.data, "synthetic:<profile>:seed=N[:length=N][:phi=X] or file:<path>; repeatable")
        ->capture_default_str();
    b->add_option("--models", cfg.models, "comma-separated model names, or all")->delimiter(',')->capture_default_str();
    b->add_option("--lookback", cfg.lookback, "input window length")->capture_default_str();
    b->add_option("--horizon", cfg.horizon, "forecast length")->capture_default_str();
    b->add_option("--stride", cfg.stride, "window stride")->capture_default_str();
    auto* ep = b->add_option("--epochs", epochs, "training epochs per fold")->capture_default_str();
    b->add_option("--seed", cfg.train.seed, "training seed")->capture_default_str();
    b->add_option("--batch-size", cfg.train.batch_size, "minibatch size")->capture_default_str();
    b->add_option("--interval", cfg.interval_seconds, "seconds between readings")->capture_default_str();
    b->add_option("--out", cfg.out, "output directory")->capture_default_str();
    b->add_flag("--paper-protocol", paper_protocol, "train for 300 epochs")->excludes(ep);
    b->add_flag("--paper-normalization", paper_norm, "one min-max map over the whole series instead of per fold");
    b->add_flag("--no-plots", no_plots, "skip SVG output");
    b->add_flag("--no-checkpoints", no_ckpt, "skip checkpoint files");

    std::string data_spec = "synthetic:quasi_periodic:seed=1";
    double interval = 0.5;
    std::string out_file;
    auto* ps = app.add_subcommand("plot-series", "plot one series as SVG");
    ps->add_option("--data", data_spec)->capture_default_str();
    ps->add_option("--interval", interval)->capture_default_str();
    ps->add_option("--out", out_file)->required();

    classical::ProphetConfig prophet;
    auto* pp = app.add_subcommand("plot-prophet", "fit Prophet to one series and plot the fit");
    pp->add_option("--data", data_spec)->capture_default_str();
    pp->add_option("--interval", interval)->capture_default_str();
    pp->add_option("--changepoints", prophet.n_changepoints)->capture_default_str();
    pp->add_option("--out", out_file)->required();

    std::string csv;
    auto* pc = app.add_subcommand("plot-compare", "plot truth against model predictions from a CSV");
    pc->add_option("--csv", csv, "header truth,<model>...; one row per time step")->required();
    pc->add_option("--interval", interval)->capture_default_str();
    pc->add_option("--out", out_file)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (b->parsed()) {
            if (!config_file.empty()) apply_config_file(*b, config_file);
            cfg.train.epochs = paper_protocol ? 300 : epochs;
            if (paper_norm) cfg.normalization = train::Normalization::Global;
            cfg.plots = !no_plots;
            cfg.checkpoints = !no_ckpt;
            return bench::cmd_bench(cfg, std::cout);
        }
        if (ps->parsed()) return bench::cmd_plot_series(bench::load(bench::parse_data_spec(data_spec), interval), out_file);
        if (pp->parsed()) {
            return bench::cmd_plot_prophet(bench::load(bench::parse_data_spec(data_spec), interval), prophet, out_file);
        }
        if (pc->parsed()) return bench::cmd_plot_compare(csv, out_file, interval);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const IngestionError& e) {
        std::cerr << "input error: " << e.what();
        if (e.line() > 0) std::cerr << " (line " << e.line() << ')';
        std::cerr << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
