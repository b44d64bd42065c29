#include "farm/commands.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "farm/error.hpp"
#include "farm/pipeline.hpp"
#include "farm/synth.hpp"

namespace farm {

namespace {

using nlohmann::json;

PipelineConfig prepare(const CommonOptions& opts) {
    PipelineConfig c = opts.config.empty() ? parse_config("{}") : load_config(opts.config);
    if (opts.seed) set_seed(c, *opts.seed);
    if (opts.threads) c.threads = *opts.threads;
    if (opts.out) c.output = *opts.out;
    return c;
}

std::filesystem::path output_dir(const PipelineConfig& c) {
    std::filesystem::create_directories(c.output);
    return c.output;
}

void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream f(path);
    if (!f) throw DataError(fmt::format("cannot write {}", path.string()));
    f << j.dump(2) << '\n';
}

std::string timestamp() {
    const auto now = std::chrono::system_clock::now();
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
    return std::to_string(secs);
}

void write_manifest(const std::filesystem::path& out, const std::string& command, const std::string& hash,
                    std::uint64_t seed, json extra = json::object()) {
    extra["command"] = command;
    extra["config_hash"] = hash;
    extra["seed"] = seed;
    extra["created_unix"] = timestamp();
    write_json(out / "manifest.json", extra);
}

const ExperimentSpec& pick_experiment(const PipelineConfig& c, const std::string& name) {
    if (c.experiments.empty()) throw ConfigError("config: missing required section 'experiments'");
    if (name.empty()) return c.experiments.front();
    for (const auto& e : c.experiments)
        if (e.name == name) return e;
    throw ConfigError(fmt::format("no experiment named '{}'", name));
}

MatrixXd scaled_features(const PipelineConfig& c, const Dataset& d) {
    MatrixXd x = d.x.values;
    if (c.top_frequency && *c.top_frequency < x.cols()) {
        const auto cols = top_frequency_columns(x, *c.top_frequency);
        MatrixXd sel(x.rows(), static_cast<Index>(cols.size()));
        for (std::size_t j = 0; j < cols.size(); ++j) sel.col(static_cast<Index>(j)) = x.col(cols[j]);
        x = std::move(sel);
    }
    if (c.scale) x = standardize(x, *c.scale).values;
    return x;
}

VectorXd labels_for(const PipelineConfig& c, const ExperimentSpec& e, const VectorXd& y) {
    if (e.augment.transform.kind != TransformKind::lr) return y;
    VectorXd out(y.size());
    const double ybar = y.mean();
    for (Index i = 0; i < y.size(); ++i)
        out(i) = c.task == Task::regression ? (y(i) > ybar ? 2.0 : 1.0) : y(i) + 1.0;
    return out;
}

std::vector<ReturnRecord> events_to_records(const std::vector<Event>& events) {
    std::vector<ReturnRecord> out;
    for (const auto& e : events) out.push_back({e.asset_id, e.date, e.sign == EventSign::positive ? 1.0 : -1.0});
    return out;
}

json performance_json(const std::vector<double>& r) {
    try {
        const Performance p = apr_sharpe(r);
        return {{"apr", p.apr}, {"sr", p.sharpe}};
    } catch (const Error& e) {
        return {{"apr", nullptr}, {"sr", nullptr}, {"status", "no positions"}, {"reason", e.what()}};
    }
}

Matrix with_names(MatrixXd values, const std::string& prefix) {
    Matrix m;
    m.values = std::move(values);
    for (Index j = 0; j < m.values.cols(); ++j)
        m.col_names.push_back(m.values.cols() == 1 && prefix == "y" ? "y" : fmt::format("{}{}", prefix, j + 1));
    return m;
}

}  // namespace

int cmd_factors(const CommonOptions& opts, const std::string& experiment) {
    PipelineConfig c = prepare(opts);
    const ExperimentSpec& e = pick_experiment(c, experiment);
    if (!c.data) throw ConfigError("config: missing required section 'data'");
    if (opts.dry_run) {
        std::cout << fmt::format("config ok {}\n", c.hash());
        return 0;
    }
    const Dataset d = load_dataset(c);
    const MatrixXd x = scaled_features(c, d);
    TransformSpec ts = e.augment.transform;
    ts.seed = derive_seed(c.seed, 0, 1);
    MatrixXd z = x;
    if (e.augment.layout != Layout::x_only && e.augment.layout != Layout::lr_x)
        z = fit_transform(x, labels_for(c, e, d.y), ts).apply(x);
    const EigenSpectrum spectrum = covariance_spectrum(z);
    FactorSpec fs = e.augment.factors;
    fs.seed = derive_seed(c.seed, 0, 2);
    const FactorModel model = fit_factors(z, fs);
    const RatioBounds bounds = fs.bounds.value_or(eigen_ratio_bounds(spectrum.n, spectrum.p));
    const Index k_ratio = eigen_ratio_k(spectrum, bounds);

    const auto out = output_dir(c);
    const std::string hash = c.hash();
    std::ofstream csv(out / "scree.csv");
    if (!csv) throw DataError(fmt::format("cannot write {}", (out / "scree.csv").string()));
    csv << fmt::format("# config_hash={} seed={}\n", hash, c.seed);
    csv << "index,eigenvalue,ratio,cum_var_explained\n";
    const VectorXd& l = spectrum.values;
    const double total = l.sum();
    double cum = 0.0;
    json ratios = json::array(), cumulative = json::array();
    for (Index j = 0; j < l.size(); ++j) {
        cum += l(j);
        const bool has_ratio = j + 1 < l.size() && l(j + 1) > 1e-12 * l(0);
        const double ratio = has_ratio ? l(j) / l(j + 1) : std::nan("");
        const double share = total > 0.0 ? cum / total : 0.0;
        csv << fmt::format("{},{:.17g},{},{:.17g}\n", j + 1, l(j), has_ratio ? fmt::format("{:.17g}", ratio) : "",
                           share);
        ratios.push_back(has_ratio ? json(ratio) : json(nullptr));
        cumulative.push_back(share);
    }
    Bundle b = model.to_bundle();
    b.texts["config_hash"] = hash;
    b.texts["seed"] = std::to_string(c.seed);
    save_bundle(b, out / "factor_model.bin");
    json report = {{"config_hash", hash},
                   {"seed", c.seed},
                   {"experiment", e.name},
                   {"transform", to_string(e.augment.transform.kind)},
                   {"mode", to_string(model.mode)},
                   {"n", spectrum.n},
                   {"p", spectrum.p},
                   {"k_min", bounds.k_min},
                   {"k_max", bounds.k_max},
                   {"k_eigen_ratio", k_ratio},
                   {"k", model.k},
                   {"eigenvalues", std::vector<double>(l.data(), l.data() + l.size())},
                   {"ratios", ratios},
                   {"cum_var_explained", cumulative}};
    write_json(out / "factors.json", report);
    write_manifest(out, "factors", hash, c.seed);
    std::cout << fmt::format("K = {} (eigen ratio {} in [{}, {}])\n", model.k, k_ratio, bounds.k_min, bounds.k_max);
    return 0;
}

int cmd_run(const CommonOptions& opts) {
    PipelineConfig c = prepare(opts);
    if (!c.data) throw ConfigError("config: missing required section 'data'");
    if (c.experiments.empty()) throw ConfigError("config: missing required section 'experiments'");
    if (opts.dry_run) {
        std::cout << fmt::format("config ok {}\n", c.hash());
        return 0;
    }
    const Dataset d = load_dataset(c);
    const int threads = resolve_threads(c.threads);
    const PipelineReport report = run_pipeline(c, d, threads);
    const auto out = output_dir(c);
    write_pipeline_outputs(c, report, d, out);
    json extra = {{"threads", threads}};
    if (!d.manifest.is_null()) extra["data"] = d.manifest;
    write_manifest(out, "run", report.config_hash, c.seed, extra);
    for (const auto& e : report.experiments)
        std::cout << fmt::format("{:<24} {} = {:.6f} (sd {:.6f}, {} repetitions)\n", e.name, report.metric, e.mean,
                                 e.sd, e.repetitions.size());
    return 0;
}

int cmd_screen(const CommonOptions& opts, const std::string& experiment) {
    PipelineConfig c = prepare(opts);
    const ExperimentSpec& e = pick_experiment(c, experiment);
    if (!c.data) throw ConfigError("config: missing required section 'data'");
    if (!c.screen.m) throw ConfigError("config: screen.m is required for the screen command");
    if (opts.dry_run) {
        std::cout << fmt::format("config ok {}\n", c.hash());
        return 0;
    }
    const Dataset d = load_dataset(c);
    const MatrixXd x = scaled_features(c, d);
    AugmentSpec spec = e.augment;
    spec.transform.seed = derive_seed(c.seed, 0, 1);
    spec.factors.seed = derive_seed(c.seed, 0, 2);
    spec.f0.seed = derive_seed(c.seed, 0, 3);
    const AugmentFit fit = fit_augmentation(x, labels_for(c, e, d.y), spec);
    const MatrixXd& cand = fit.screening_candidates();
    const Index m = std::min(*c.screen.m, cand.cols());
    const LossKind loss = c.screen.loss.value_or(c.task == Task::binary ? LossKind::logistic : LossKind::squared);
    const ScreenResult r = screen(d.y, fit.screening_factors(), cand, m, loss);
    json report = r.to_json(true);
    report["config_hash"] = c.hash();
    report["seed"] = c.seed;
    report["experiment"] = e.name;
    report["m"] = m;
    const auto out = output_dir(c);
    write_json(out / "screen.json", report);
    write_manifest(out, "screen", c.hash(), c.seed);
    std::cout << fmt::format("kept {} of {} columns\n", r.kept.size(), cand.cols());
    return 0;
}

int cmd_backtest(const CommonOptions& opts, const BacktestOptions& bt) {
    PipelineConfig c = prepare(opts);
    BacktestSpec spec = c.backtest.value_or(BacktestSpec{});
    if (c.backtest) {
        spec.scores = c.resolve(spec.scores);
        spec.returns = c.resolve(spec.returns);
        spec.caps = c.resolve(spec.caps);
    }
    if (!bt.scores.empty()) spec.scores = bt.scores;
    if (!bt.returns.empty()) spec.returns = bt.returns;
    if (!bt.caps.empty()) spec.caps = bt.caps;
    if (bt.top_n) spec.config.top_n = *bt.top_n;
    if (bt.threshold) spec.config.threshold = *bt.threshold;
    if (bt.cost_bps) spec.config.cost_bps = *bt.cost_bps;
    if (bt.weighting) {
        if (*bt.weighting != "value" && *bt.weighting != "equal")
            throw ConfigError(fmt::format("--weighting must be value or equal, got '{}'", *bt.weighting));
        spec.config.value_weighted = *bt.weighting == "value";
    }
    if (spec.scores.empty() || spec.returns.empty() || spec.caps.empty())
        throw ConfigError("backtest needs scores, returns and caps (flags or a backtest config section)");
    json effective = {{"scores", spec.scores.string()},
                      {"returns", spec.returns.string()},
                      {"caps", spec.caps.string()},
                      {"top_n", spec.config.top_n},
                      {"threshold", spec.config.threshold},
                      {"cost_bps", spec.config.cost_bps},
                      {"weighting", spec.config.value_weighted ? "value" : "equal"},
                      {"seed", c.seed}};
    const std::string hash = fnv1a_hex(effective.dump());
    if (opts.dry_run) {
        std::cout << fmt::format("config ok {}\n", hash);
        return 0;
    }
    const auto scores = to_scores(load_asset_series(spec.scores));
    const auto returns = load_asset_series(spec.returns);
    const auto caps = load_asset_series(spec.caps);
    const BacktestLedger ledger = portfolio_backtest(scores, returns, caps, spec.config);
    const auto out = output_dir(c);
    ledger.save_csv(out / "ledger.csv", out / "holdings.csv", fmt::format("# config_hash={} seed={}\n", hash, c.seed));
    std::vector<double> l, s, ls;
    for (const auto& d : ledger.days) {
        l.push_back(d.long_leg.net);
        s.push_back(d.short_leg.net);
        ls.push_back(d.net);
    }
    json summary = {{"config_hash", hash},
                    {"seed", c.seed},
                    {"days", ledger.days.size()},
                    {"cost_bps", spec.config.cost_bps},
                    {"legs", {{"long", performance_json(l)}, {"short", performance_json(s)}, {"long_short", performance_json(ls)}}}};
    summary["APR"] = summary["legs"]["long_short"]["apr"];
    summary["SR"] = summary["legs"]["long_short"]["sr"];
    if (summary["legs"]["long_short"].contains("status")) summary["status"] = "no positions";
    write_json(out / "summary.json", summary);
    write_manifest(out, "backtest", hash, c.seed, {{"parameters", effective}});
    if (summary.contains("status")) std::cout << "no positions\n";
    else
        std::cout << fmt::format("L+S APR {:.4f}% SR {:.4f} over {} days\n", summary["APR"].get<double>(),
                                 summary["SR"].get<double>(), ledger.days.size());
    return 0;
}

int cmd_event_study(const CommonOptions& opts, const EventStudyOptions& es) {
    PipelineConfig c = prepare(opts);
    EventStudySpec spec = c.event_study.value_or(EventStudySpec{});
    if (c.event_study) {
        spec.returns = c.resolve(spec.returns);
        if (!spec.scores.empty()) spec.scores = c.resolve(spec.scores);
        if (!spec.events.empty()) spec.events = c.resolve(spec.events);
    }
    if (!es.returns.empty()) spec.returns = es.returns;
    if (!es.scores.empty()) {
        spec.scores = es.scores;
        spec.events.clear();
    }
    if (!es.events.empty()) {
        spec.events = es.events;
        spec.scores.clear();
    }
    if (es.quantile) spec.quantile = *es.quantile;
    if (spec.returns.empty() || spec.scores.empty() == spec.events.empty())
        throw ConfigError("event study needs returns and exactly one of scores or events");
    json effective = {{"returns", spec.returns.string()},   {"scores", spec.scores.string()},
                      {"events", spec.events.string()},     {"quantile", spec.quantile},
                      {"first_offset", spec.first_offset},  {"last_offset", spec.last_offset},
                      {"seed", c.seed}};
    const std::string hash = fnv1a_hex(effective.dump());
    if (opts.dry_run) {
        std::cout << fmt::format("config ok {}\n", hash);
        return 0;
    }
    std::vector<ReturnRecord> signed_events;
    if (!spec.scores.empty()) signed_events = events_to_records(select_events(to_scores(load_asset_series(spec.scores)), spec.quantile));
    else signed_events = load_asset_series(spec.events);
    const auto returns = load_asset_series(spec.returns);

    json report = {{"config_hash", hash}, {"seed", c.seed}, {"first_offset", spec.first_offset},
                   {"last_offset", spec.last_offset}};
    int fitted = 0;
    for (const auto& [name, sign] : {std::pair{"positive", 1.0}, std::pair{"negative", -1.0}}) {
        EventPanel panel;
        panel.returns = returns;
        panel.first_offset = spec.first_offset;
        panel.last_offset = spec.last_offset;
        for (const auto& e : signed_events) {
            if (e.value != 1.0 && e.value != -1.0)
                throw DataError(fmt::format("event sign must be 1 or -1 for {}@{}", e.asset_id, e.date));
            if (e.value == sign) panel.events.push_back({e.asset_id, e.date});
        }
        if (panel.events.empty()) {
            report[name] = {{"events", 0}, {"fit", nullptr}};
            continue;
        }
        report[name] = {{"events", panel.events.size()}, {"fit", event_study_fit(panel).to_json()}};
        ++fitted;
    }
    if (fitted == 0) throw NumericalError("no events to fit: every Day indicator column is zero");
    const auto out = output_dir(c);
    write_json(out / "event_study.json", report);
    write_manifest(out, "event-study", hash, c.seed, {{"parameters", effective}});
    std::cout << fmt::format("event study written to {}\n", (out / "event_study.json").string());
    return 0;
}

int cmd_synth(const SynthOptions& o) {
    std::filesystem::create_directories(o.out);
    json manifest;
    auto save_factor = [&](const FactorData& d) {
        save_csv(with_names(d.x, "x"), o.out / "x.csv");
        save_csv(with_names(d.y, "y"), o.out / "y.csv");
        save_csv(with_names(d.f_true, "f"), o.out / "f_true.csv");
        manifest = d.manifest;
    };
    if (o.kind == "factor-regression") {
        save_factor(factor_regression(o.n, o.p, o.k, o.snr, o.seed));
    } else if (o.kind == "interaction-signal") {
        save_factor(interaction_signal(o.n, o.p, o.noise_sd, o.seed));
    } else if (o.kind == "screening-sparse") {
        const SparseData s = screening_sparse(o.n, o.p, o.k, o.n_active, o.min_coef, o.noise_sd, o.seed);
        save_factor(s.data);
        save_csv(with_names(s.data.u_true, "u"), o.out / "u_true.csv");
    } else if (o.kind == "event-panel") {
        const EventPanelData e = event_panel(o.assets, o.days, o.beta0, o.event_noise_sd, o.events_per_asset, o.seed);
        std::vector<ReturnRecord> ev;
        for (const auto& x : e.events) ev.push_back({x.asset_id, x.date, 1.0});
        save_asset_series(ev, "sign", o.out / "events.csv");
        save_asset_series(e.returns, "ret", o.out / "returns.csv");
        manifest = e.manifest;
    } else if (o.kind == "portfolio-fixture") {
        const PortfolioData p = portfolio_panel(o.assets, o.days, o.signal, o.seed);
        save_asset_series(p.scores, "score", o.out / "scores.csv");
        save_asset_series(p.returns, "ret", o.out / "returns.csv");
        save_asset_series(p.caps, "cap", o.out / "caps.csv");
        manifest = p.manifest;
    } else {
        throw UsageError(fmt::format(
            "unknown synth kind '{}' (factor-regression, interaction-signal, screening-sparse, event-panel, "
            "portfolio-fixture)",
            o.kind));
    }
    manifest["seed"] = o.seed;
    manifest["created_unix"] = timestamp();
    write_json(o.out / "manifest.json", manifest);
    std::cout << fmt::format("{} written to {}\n", o.kind, o.out.string());
    return 0;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"farm: factor-augmented regression and sentiment backtests"};
    app.require_subcommand(1);

    CommonOptions common;
    std::string experiment;
    BacktestOptions bt;
    EventStudyOptions es;
    SynthOptions so;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::string> out;

    auto add_common = [&](CLI::App* sub, bool config_required) {
        auto* opt = sub->add_option("--config", common.config, "JSON config file");
        if (config_required) opt->required();
        sub->add_option("--seed", seed, "override the config seed");
        sub->add_option("--threads", threads, "worker threads (default: all cores)");
        sub->add_option("--out", out, "output directory");
        sub->add_flag("--dry-run", common.dry_run, "validate the configuration and stop");
    };

    auto* factors = app.add_subcommand("factors", "covariance spectrum, eigen-ratio K and factor model");
    add_common(factors, true);
    factors->add_option("--experiment", experiment, "experiment whose transform and factor spec to use");
    auto* run = app.add_subcommand("run", "rolling or static evaluation of every experiment");
    add_common(run, true);
    auto* scr = app.add_subcommand("screen", "rank residual columns by conditional marginal contribution");
    add_common(scr, true);
    scr->add_option("--experiment", experiment, "experiment whose augmentation to screen");

    auto* backtest = app.add_subcommand("backtest", "long-short portfolio ledger with APR and Sharpe ratio");
    add_common(backtest, false);
    backtest->add_option("--scores", bt.scores, "scores CSV (asset_id,date,score)");
    backtest->add_option("--returns", bt.returns, "returns CSV (asset_id,date,ret)");
    backtest->add_option("--caps", bt.caps, "market caps CSV (asset_id,date,cap)");
    backtest->add_option("--top-n", bt.top_n, "names per leg (default 50)");
    backtest->add_option("--threshold", bt.threshold, "score threshold (default 0.5)");
    backtest->add_option("--cost-bps", bt.cost_bps, "round-trip cost in basis points (default 13)");
    backtest->add_option("--weighting", bt.weighting, "value or equal (default value)");

    auto* event = app.add_subcommand("event-study", "two-way fixed-effects event study");
    add_common(event, false);
    event->add_option("--returns", es.returns, "returns CSV (asset_id,date,ret)");
    event->add_option("--scores", es.scores, "scores CSV; events are the extreme quantile");
    event->add_option("--events", es.events, "events CSV (asset_id,date,sign)");
    event->add_option("--quantile", es.quantile, "event quantile (default 0.05)");

    auto* synth = app.add_subcommand("synth", "write a synthetic dataset");
    synth->add_option("kind", so.kind, "factor-regression | interaction-signal | screening-sparse | event-panel | "
                                       "portfolio-fixture")
        ->required();
    synth->add_option("--seed", so.seed);
    synth->add_option("--out", so.out);
    synth->add_option("--n", so.n);
    synth->add_option("--p", so.p);
    synth->add_option("--k", so.k);
    synth->add_option("--snr", so.snr);
    synth->add_option("--noise-sd", so.noise_sd);
    synth->add_option("--n-active", so.n_active);
    synth->add_option("--min-coef", so.min_coef);
    synth->add_option("--assets", so.assets);
    synth->add_option("--days", so.days);
    synth->add_option("--beta0", so.beta0);
    synth->add_option("--event-noise-sd", so.event_noise_sd);
    synth->add_option("--events-per-asset", so.events_per_asset);
    synth->add_option("--signal", so.signal);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    common.seed = seed;
    common.threads = threads;
    if (out) common.out = std::filesystem::path(*out);

    try {
        if (*factors) return cmd_factors(common, experiment);
        if (*run) return cmd_run(common);
        if (*scr) return cmd_screen(common, experiment);
        if (*backtest) return cmd_backtest(common, bt);
        if (*event) return cmd_event_study(common, es);
        if (*synth) return cmd_synth(so);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(ErrorKind::data);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(ErrorKind::numerical);
    }
    return 2;
}

}  // namespace farm
