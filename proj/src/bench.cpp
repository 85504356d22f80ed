#include "hrf/bench.hpp"

#include "hrf/checkpoint.hpp"
#include "hrf/errors.hpp"
#include "hrf/plot.hpp"

#include "json.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <fstream>
#include <ostream>
#include <sstream>

namespace hrf::bench {

namespace fs = std::filesystem;

const std::vector<std::string>& all_model_names() {
    static const std::vector<std::string> names{"sarima",   "prophet",  "lstm",     "tcn",
                                                "tsmixer",  "timesnet", "patchtst", "itransformer"};
    return names;
}

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string display_name(std::string_view id) {
    if (id == "sarima") return "SARIMA";
    if (id == "prophet") return "Prophet";
    if (id == "lstm") return "LSTM";
    if (id == "tcn") return "TCN";
    if (id == "tsmixer") return "TSMixer";
    if (id == "timesnet") return "TimesNet";
    if (id == "patchtst") return "PatchTST";
    if (id == "itransformer") return "iTransformer";
    return std::string(id);
}

template <class T>
T parse_number(std::string_view key, std::string_view v) {
    T out{};
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
        throw ConfigError("bad value '" + std::string(v) + "' for " + std::string(key));
    }
    return out;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write " + path.string());
    f << text;
    if (!f) throw InputError("failed writing " + path.string());
}

std::string fixed(double v, int digits) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

std::vector<std::string> resolve_models(const std::vector<std::string>& names) {
    std::vector<std::string> out;
    auto add = [&](const std::string& n) {
        if (std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
    };
    for (const auto& raw : names) {
        const std::string n = lower(raw);
        if (n == "all") {
            for (const auto& m : all_model_names()) add(m);
            continue;
        }
        const auto& valid = all_model_names();
        if (std::find(valid.begin(), valid.end(), n) == valid.end()) {
            std::string list;
            for (const auto& v : valid) list += (list.empty() ? "" : ", ") + v;
            throw ConfigError("unknown model '" + raw + "' (valid: all, " + list + ")");
        }
        add(n);
    }
    if (out.empty()) throw ConfigError("no models selected");
    return out;
}

DataSpec parse_data_spec(std::string_view text) {
    DataSpec spec;
    if (text.rfind("file:", 0) == 0) {
        spec.kind = DataSpec::Kind::File;
        spec.path = std::string(text.substr(5));
        if (spec.path.empty()) throw ConfigError("file: data spec needs a path");
        return spec;
    }
    if (text.rfind("synthetic:", 0) != 0) {
        throw ConfigError("data spec '" + std::string(text) + "' must start with synthetic: or file:");
    }
    std::vector<std::string> parts;
    std::string cur;
    for (char c : text.substr(10)) {
        if (c == ':') {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    parts.push_back(cur);
    spec.profile = data::parse_profile(parts[0]);
    bool have_seed = false;
    for (std::size_t i = 1; i < parts.size(); ++i) {
        const auto eq = parts[i].find('=');
        if (eq == std::string::npos) throw ConfigError("expected key=value in data spec, got '" + parts[i] + "'");
        const std::string key = parts[i].substr(0, eq), value = parts[i].substr(eq + 1);
        if (key == "seed") {
            spec.seed = parse_number<std::uint64_t>(key, value);
            have_seed = true;
        } else if (key == "length") {
            spec.length = parse_number<std::size_t>(key, value);
        } else if (key == "phi") {
            spec.phi = parse_number<double>(key, value);
        } else {
            throw ConfigError("unknown data spec key '" + key + "' (seed, length, phi)");
        }
    }
    if (!have_seed) throw ConfigError("synthetic data spec needs seed=N");
    return spec;
}

data::TimeSeries load(const DataSpec& spec, double interval_seconds) {
    if (spec.kind == DataSpec::Kind::File) {
        return data::load_series(spec.path, data::format_for_path(spec.path), interval_seconds);
    }
    data::SynthOptions opt;
    opt.ar_phi = spec.phi;
    opt.interval_seconds = interval_seconds;
    auto s = data::synth_series(spec.seed, spec.length, spec.profile, opt);
    s.id = std::string(data::profile_name(spec.profile)) + "_s" + std::to_string(spec.seed);
    return s;
}

train::TrainConfig BenchConfig::default_train() {
    train::TrainConfig c;
    c.epochs = 50;
    return c;
}

void BenchConfig::validate() const {
    if (data.empty()) throw ConfigError("at least one --data source is required");
    (void)resolve_models(models);
    for (const auto& d : data) (void)parse_data_spec(d);
    if (lookback == 0 || horizon == 0 || stride == 0) throw ConfigError("lookback, horizon and stride must be >= 1");
    if (!(interval_seconds > 0.0)) throw ConfigError("interval must be > 0");
    if (out.empty()) throw ConfigError("output directory is empty");
    train.validate();
}

namespace {

struct SeriesContext {
    data::TimeSeries series;
    data::WindowedDataset raw;
    std::vector<data::FoldSpec> folds;
    std::vector<data::NormalizationParams> norms;
};

std::vector<data::NormalizationParams> fold_norms(const BenchConfig& cfg, const data::WindowedDataset& raw,
                                                  const std::vector<data::FoldSpec>& folds) {
    std::vector<data::NormalizationParams> out;
    if (cfg.normalization == train::Normalization::Global) {
        std::vector<double> all(raw.inputs().begin(), raw.inputs().end());
        all.insert(all.end(), raw.targets().begin(), raw.targets().end());
        out.assign(folds.size(), data::fit_minmax(all));
    } else {
        for (const auto& f : folds) out.push_back(train::fold_normalization(raw, f));
    }
    return out;
}

ModelRun run_neural(const BenchConfig& cfg, const std::string& id, const SeriesContext& ctx, std::ostream& log) {
    const train::ModelFactory factory = [&] { return nn::make_model(id, cfg.lookback, cfg.horizon, cfg.neural); };
    train::TrainLog tlog;
    const auto cv = train::cross_validate(factory, ctx.raw, cfg.train, &tlog, cfg.normalization);
    {
        std::ostringstream os;
        tlog.write_csv(os);
        write_file(cfg.out / ("trainlog_" + id + "_" + ctx.series.id + ".csv"), os.str());
    }
    auto model = factory();
    if (cfg.checkpoints) {
        for (const auto& r : cv.results) {
            train::restore(*model, r.snapshot);
            nn::save_checkpoint(cfg.out / "checkpoints" /
                                    (id + "_" + ctx.series.id + "_fold" + std::to_string(r.fold_index) + ".ckpt"),
                                *model);
        }
    }
    ModelRun run;
    run.forecasts = eval::evaluate_model(*model, cv, ctx.raw);
    run.config_digest = tlog.config_digest;
    log << "  cv mean validation mse " << cv.mean_val_loss() << '\n';
    return run;
}

ModelRun run_classical(const BenchConfig& cfg, const std::string& id, const SeriesContext& ctx) {
    ModelRun run;
    nlohmann::json fits = nlohmann::json::array();
    if (id == "sarima") {
        std::vector<classical::SarimaFit> f;
        run.forecasts = eval::sarima_forecasts(ctx.series.values, ctx.raw, ctx.folds, ctx.norms, cfg.classical, &f);
        for (const auto& x : f) fits.push_back(nlohmann::json::parse(classical::to_json(x)));
    } else {
        std::vector<classical::ProphetFit> f;
        run.forecasts = eval::prophet_forecasts(ctx.series.values, ctx.raw, ctx.folds, ctx.norms, cfg.classical, &f);
        for (const auto& x : f) fits.push_back(nlohmann::json::parse(classical::to_json(x)));
    }
    if (cfg.checkpoints) {
        write_file(cfg.out / "checkpoints" / (id + "_" + ctx.series.id + ".json"), fits.dump(2) + "\n");
    }
    const auto& o = cfg.classical;
    std::ostringstream desc;
    desc << id << ";max_period=" << o.max_period << ";p=" << o.sarima.bounds.p_max << ";q=" << o.sarima.bounds.q_max
         << ";P=" << o.sarima.bounds.P_max << ";Q=" << o.sarima.bounds.Q_max << ";cp=" << o.prophet.n_changepoints
         << ";cps=" << o.prophet.changepoint_prior_scale << ";sps=" << o.prophet.seasonality_prior_scale
         << ";fourier=" << o.prophet.fourier_order << ";periods=" << o.prophet_periods;
    run.config_digest = nn::fnv1a(desc.str());
    return run;
}

// Non-overlapping forecasts over the last fold's validation block.
void write_comparison(const BenchConfig& cfg, const SeriesContext& ctx, const std::vector<ModelRun>& runs) {
    if (runs.empty()) return;
    std::vector<const ModelRun*> best;
    for (const auto& r : runs) best.push_back(&r);
    std::stable_sort(best.begin(), best.end(),
                     [](const ModelRun* a, const ModelRun* b) { return a->metrics.mae < b->metrics.mae; });
    if (best.size() > 5) best.resize(5);

    const auto& fold = ctx.folds.back();
    const std::size_t H = cfg.horizon;
    std::vector<double> truth;
    std::vector<plot::NamedSeries> preds(best.size());
    for (std::size_t m = 0; m < best.size(); ++m) preds[m].name = best[m]->model;
    for (std::size_t w = fold.val.begin; w + 1 <= fold.val.end; w += H) {
        const auto t = ctx.raw.target(w);
        truth.insert(truth.end(), t.begin(), t.end());
        for (std::size_t m = 0; m < best.size(); ++m) {
            const auto& f = best[m]->forecasts;
            const auto pos = std::find(f.windows.begin(), f.windows.end(), w) - f.windows.begin();
            const auto first = f.pred.begin() + pos * static_cast<std::ptrdiff_t>(H);
            preds[m].values.insert(preds[m].values.end(), first, first + static_cast<std::ptrdiff_t>(H));
        }
    }
    std::ostringstream csv;
    csv << "truth";
    for (const auto& p : preds) csv << ',' << p.name;
    csv << '\n';
    for (std::size_t i = 0; i < truth.size(); ++i) {
        csv << fixed(truth[i], 6);
        for (const auto& p : preds) csv << ',' << fixed(p.values[i], 6);
        csv << '\n';
    }
    write_file(cfg.out / ("predictions_" + ctx.series.id + ".csv"), csv.str());
    const double x0 = static_cast<double>(ctx.raw.start(fold.val.begin) + cfg.lookback);
    write_file(cfg.out / "plots" / ("compare_" + ctx.series.id + ".svg"),
               plot::compare_svg(truth, preds, ctx.series.interval_seconds, x0));
}

classical::ProphetConfig prophet_plot_config(const data::TimeSeries& s, const eval::ClassicalOptions& opt) {
    classical::ProphetConfig cfg = opt.prophet;
    if (cfg.seasonal_periods.empty()) cfg.seasonal_periods = eval::dominant_periods(s.values, opt.prophet_periods, opt.max_period);
    return cfg;
}

std::string metadata(const BenchConfig& cfg, const BenchResult& result) {
    std::ostringstream os;
    os << "Cross-validation validation metrics (" << cfg.train.folds
       << " blocked folds; each model's folds concatenated per series, then averaged across series)\n";
    os << "seed " << cfg.train.seed << ", epochs " << cfg.train.epochs << ", lookback " << cfg.lookback
       << ", horizon " << cfg.horizon << ", normalization "
       << (cfg.normalization == train::Normalization::Global ? "global" : "per-fold") << '\n';
    for (const auto& [model, digest] : result.report.config_digests) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(digest));
        os << "config " << model << ' ' << buf << '\n';
    }
    return os.str();
}

}  // namespace

BenchResult run_bench(const BenchConfig& cfg, std::ostream& log) {
    cfg.validate();
    const auto models = resolve_models(cfg.models);
    fs::create_directories(cfg.out);
    if (cfg.checkpoints) fs::create_directories(cfg.out / "checkpoints");
    if (cfg.plots) fs::create_directories(cfg.out / "plots");

    BenchResult result;
    result.report.seed = cfg.train.seed;
    result.report.fold_scheme = std::to_string(cfg.train.folds) + " blocked folds";

    for (const auto& spec_text : cfg.data) {
        data::TimeSeries series = load(parse_data_spec(spec_text), cfg.interval_seconds);
        data::validate(series);
        log << "series " << series.id << ": " << series.values.size() << " readings\n";
        {
            std::ostringstream os;
            data::write_outlier_csv(os, data::zscore_outlier_report(series));
            write_file(cfg.out / ("outliers_" + series.id + ".csv"), os.str());
        }
        if (cfg.plots) write_file(cfg.out / "plots" / ("series_" + series.id + ".svg"), plot::series_svg(series));

        auto windows = data::make_windows(series, cfg.lookback, cfg.horizon, cfg.stride);
        SeriesContext ctx{std::move(series), std::move(windows), {}, {}};
        ctx.folds = data::make_folds(ctx.raw.size(), cfg.train.folds, ctx.raw.span(), ctx.raw.stride());
        ctx.norms = fold_norms(cfg, ctx.raw, ctx.folds);

        std::vector<ModelRun> runs;
        for (const auto& id : models) {
            const auto t0 = std::chrono::steady_clock::now();
            log << "[" << ctx.series.id << "] " << id << '\n' << std::flush;
            try {
                ModelRun run = nn::is_neural_model(id) ? run_neural(cfg, id, ctx, log) : run_classical(cfg, id, ctx);
                run.model = display_name(id);
                run.series = ctx.series.id;
                run.metrics = run.forecasts.metrics();
                const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                log << "  mae " << run.metrics.mae << " mape " << run.metrics.mape << " rmse " << run.metrics.rmse
                    << " (" << fixed(secs, 1) << " s)\n";
                result.report.rows.push_back({run.model, run.series, run.metrics});
                result.report.config_digests[run.model] = run.config_digest;
                runs.push_back(std::move(run));
            } catch (const std::exception& e) {
                result.failures.push_back(id + "/" + ctx.series.id + ": " + e.what());
                log << "  failed: " << e.what() << '\n';
            }
        }

        if (cfg.plots) {
            write_comparison(cfg, ctx, runs);
            if (std::find(models.begin(), models.end(), "prophet") != models.end()) {
                try {
                    const auto fit = classical::prophet_fit(ctx.series.values, prophet_plot_config(ctx.series, cfg.classical));
                    write_file(cfg.out / "plots" / ("prophet_" + ctx.series.id + ".svg"),
                               plot::prophet_svg(fit, ctx.series.values, ctx.series.interval_seconds));
                } catch (const FitFailure& e) {
                    log << "  prophet plot skipped: " << e.what() << '\n';
                }
            }
        }
        for (auto& r : runs) result.runs.push_back(std::move(r));
    }

    {
        std::ostringstream os;
        result.report.write_csv(os);
        write_file(cfg.out / "report.csv", os.str());
    }
    std::string text = metadata(cfg, result);
    if (!result.report.rows.empty()) {
        const auto table = eval::render_table(result.report);
        text += '\n' + table.text;
        write_file(cfg.out / "report_table.csv", table.csv);
    }
    if (!result.failures.empty()) {
        text += "\nFailures:\n";
        for (const auto& f : result.failures) text += "  " + f + '\n';
    }
    write_file(cfg.out / "report.txt", text);
    return result;
}

void tune_allocator() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    mallopt(M_TOP_PAD, 64 << 20);
#endif
}

int cmd_bench(const BenchConfig& cfg, std::ostream& log) {
    const BenchResult r = run_bench(cfg, log);
    std::ifstream txt(cfg.out / "report.txt");
    log << '\n' << txt.rdbuf();
    if (!r.ok()) {
        log << r.failures.size() << " model run(s) failed\n";
        return 1;
    }
    return 0;
}

int cmd_plot_series(const data::TimeSeries& series, const fs::path& out) {
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_file(out, plot::series_svg(series));
    return 0;
}

int cmd_plot_prophet(const data::TimeSeries& series, const classical::ProphetConfig& cfg, const fs::path& out) {
    eval::ClassicalOptions opt;
    opt.prophet = cfg;
    classical::ProphetFit fit;
    try {
        fit = classical::prophet_fit(series.values, prophet_plot_config(series, opt));
    } catch (const classical::ProphetFitFailure& e) {
        fit = e.best();
    }
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_file(out, plot::prophet_svg(fit, series.values, series.interval_seconds));
    return 0;
}

int cmd_plot_compare(const fs::path& csv, const fs::path& out, double interval_seconds) {
    std::ifstream in(csv);
    if (!in) throw InputError("cannot read " + csv.string());
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::string> names;
    std::vector<std::vector<double>> cols;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string c;
        while (std::getline(ls, c, ',')) cells.push_back(c);
        if (names.empty()) {
            if (cells.size() < 2) throw IngestionError("need a truth column and at least one model column", lineno);
            names = cells;
            cols.resize(cells.size());
            continue;
        }
        if (cells.size() != names.size()) throw IngestionError("expected " + std::to_string(names.size()) + " fields", lineno);
        for (std::size_t i = 0; i < cells.size(); ++i) {
            double v = 0.0;
            const auto r = std::from_chars(cells[i].data(), cells[i].data() + cells[i].size(), v);
            if (r.ec != std::errc() || r.ptr != cells[i].data() + cells[i].size()) {
                throw IngestionError("bad number '" + cells[i] + "'", lineno);
            }
            cols[i].push_back(v);
        }
    }
    if (cols.empty() || cols[0].empty()) throw InputError(csv.string() + " holds no rows");
    std::vector<plot::NamedSeries> preds;
    for (std::size_t i = 1; i < names.size(); ++i) preds.push_back({names[i], cols[i]});
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_file(out, plot::compare_svg(cols[0], preds, interval_seconds));
    return 0;
}

}  // namespace hrf::bench
