#include "farm/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "farm/error.hpp"
#include "farm/synth.hpp"

namespace farm {

namespace {

Matrix load_matrix_file(const std::filesystem::path& path, bool header) {
    if (path.extension() == ".bin") return load_bin(path);
    return load_csv(path, header);
}

MatrixXd select_columns(const MatrixXd& m, const std::vector<Index>& cols) {
    MatrixXd out(m.rows(), static_cast<Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Index>(j)) = m.col(cols[j]);
    return out;
}

template <class F>
auto stage(const char* name, F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        throw Error(e.kind(), fmt::format("stage {}: {}", name, e.what()));
    }
}

VectorXd transform_labels(Task task, TransformKind kind, const VectorXd& y, double ybar) {
    if (kind != TransformKind::lr) return y;
    VectorXd labels(y.size());
    for (Index i = 0; i < y.size(); ++i) {
        if (task == Task::regression) labels(i) = y(i) > ybar ? 2.0 : 1.0;
        else labels(i) = y(i) + 1.0;
    }
    return labels;
}

void add_bundle(Bundle& into, const std::string& prefix, const Bundle& from) {
    for (const auto& [k, v] : from.matrices) into.matrices[prefix + k] = v;
    for (const auto& [k, v] : from.texts) into.texts[prefix + k] = v;
}

Matrix column(const std::vector<Index>& v) {
    Matrix m;
    m.values.resize(static_cast<Index>(v.size()), 1);
    for (std::size_t i = 0; i < v.size(); ++i) m.values(static_cast<Index>(i), 0) = static_cast<double>(v[i]);
    return m;
}

Matrix row_matrix(const RowVectorXd& r) {
    Matrix m;
    m.values = r;
    return m;
}

// Binary: threshold 0.5; multiclass: nearest training class.
VectorXd to_labels(Task task, const VectorXd& raw, const std::vector<double>& classes) {
    VectorXd out(raw.size());
    for (Index i = 0; i < raw.size(); ++i) {
        if (task == Task::binary) {
            out(i) = raw(i) > 0.5 ? 1.0 : 0.0;
        } else {
            double best = classes.front();
            for (double c : classes)
                if (std::abs(raw(i) - c) < std::abs(raw(i) - best)) best = c;
            out(i) = best;
        }
    }
    return out;
}

double sample_sd(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t window, std::uint64_t stage_id) {
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(seed) ^ window) ^ stage_id);
}

Dataset load_dataset(const PipelineConfig& config) {
    if (!config.data) throw ConfigError("config: missing required section 'data'");
    const DataSpec& d = *config.data;
    Dataset out;
    switch (d.kind) {
        case DataSpec::Kind::files: {
            out.x = load_matrix_file(config.resolve(d.x), d.header);
            Matrix y = load_matrix_file(config.resolve(d.y), d.header);
            if (y.cols() != 1) throw DataError(fmt::format("response file must have one column, got {}", y.cols()));
            if (y.rows() != out.x.rows())
                throw DataError(fmt::format("x has {} rows but y has {}", out.x.rows(), y.rows()));
            out.y = y.values.col(0);
            break;
        }
        case DataSpec::Kind::panel: {
            PanelData panel = load_panel_csv(config.resolve(d.panel));
            out.x = panel.features;
            out.y.resize(static_cast<Index>(panel.records.size()));
            for (std::size_t i = 0; i < panel.records.size(); ++i) {
                out.y(static_cast<Index>(i)) = panel.records[i].y;
                out.row_ids.push_back(fmt::format("{}@{}", panel.records[i].asset_id, panel.records[i].date));
            }
            break;
        }
        case DataSpec::Kind::synthetic: {
            const SyntheticSpec& s = d.synthetic;
            const std::uint64_t seed = s.seed.value_or(config.seed);
            FactorData fd;
            if (s.kind == "factor-regression") fd = factor_regression(s.n, s.p, s.k, s.snr, seed);
            else if (s.kind == "interaction-signal") fd = interaction_signal(s.n, s.p, s.noise_sd, seed);
            else fd = screening_sparse(s.n, s.p, s.k, s.n_active, s.min_coef, s.noise_sd, seed).data;
            out.x.values = std::move(fd.x);
            out.y = std::move(fd.y);
            out.manifest = std::move(fd.manifest);
            break;
        }
    }
    validate(out.x);
    for (Index i = 0; i < out.y.size(); ++i) {
        const double v = out.y(i);
        if (!std::isfinite(v)) throw DataError(fmt::format("non-finite response at row {}", i + 1));
        if (config.task == Task::binary && v != 0.0 && v != 1.0)
            throw DataError(fmt::format("binary task needs y in {{0, 1}}; row {} has {}", i + 1, v));
        if (config.task == Task::multiclass && v != std::floor(v))
            throw DataError(fmt::format("multiclass task needs integer labels; row {} has {}", i + 1, v));
    }
    return out;
}

WindowResult run_window(const PipelineConfig& config, const ExperimentSpec& experiment, const MatrixXd& x_train,
                        const VectorXd& y_train, const MatrixXd& x_test, std::uint64_t seed, bool keep_models) {
    WindowResult res;
    MatrixXd xt = x_train, xs = x_test;
    if (config.top_frequency && *config.top_frequency < xt.cols()) {
        const auto cols = top_frequency_columns(xt, *config.top_frequency);
        xt = select_columns(xt, cols);
        xs = select_columns(xs, cols);
        if (keep_models) res.models.matrices["top_frequency"] = column(cols);
    }
    if (config.scale) {
        Standardized s = stage("scale", [&] { return standardize(xt, *config.scale); });
        xt = std::move(s.values);
        xs = s.map.apply(xs);
        if (keep_models) {
            res.models.matrices["scale/centers"] = row_matrix(s.map.centers);
            res.models.matrices["scale/scales"] = row_matrix(s.map.scales);
        }
    }
    res.train_mean = y_train.mean();

    AugmentSpec spec = experiment.augment;
    spec.transform.seed = derive_seed(seed, 0, 1);
    spec.factors.seed = derive_seed(seed, 0, 2);
    spec.f0.seed = derive_seed(seed, 0, 3);
    const VectorXd labels = transform_labels(config.task, spec.transform.kind, y_train, res.train_mean);
    AugmentFit fit = stage("augment", [&] { return fit_augmentation(xt, labels, spec); });
    if (fit.factor_model) res.info["k"] = fit.factor_model->k;
    if (fit.f0_model) res.info["k0"] = fit.f0_model->k;

    if (config.screen.m && *config.screen.m < fit.screening_candidates().cols()) {
        const LossKind loss =
            config.screen.loss.value_or(config.task == Task::binary ? LossKind::logistic : LossKind::squared);
        ScreenResult r = stage("screen", [&] {
            return screen(y_train, fit.screening_factors(), fit.screening_candidates(), *config.screen.m, loss);
        });
        fit.keep_residual_columns(r.kept);
        res.info["kept"] = r.kept.size();
        if (!r.not_converged.empty()) res.info["screen_not_converged"] = r.not_converged.size();
    }

    const MatrixXd& q = fit.training.assembled;
    LearnerSpec ls = config.learner.base;
    ls.task = config.task;
    ls.fnn.task = config.task;
    ls.fnn.seed = derive_seed(seed, 0, 4);
    const auto& grid = config.learner.grid;
    auto with_penalty = [&](LearnerSpec s, double g) {
        if (s.kind == LearnerKind::lasso) s.gamma1 = g;
        else s.gamma2 = g;
        return s;
    };
    if (grid.size() == 1) {
        ls = with_penalty(ls, grid.front());
    } else if (grid.size() > 1) {
        std::vector<LearnerSpec> specs;
        for (double g : grid) specs.push_back(with_penalty(ls, g));
        CvResult cv = stage("cv", [&] {
            return cross_validate(q, y_train, specs, config.learner.folds, config.learner.time_ordered,
                                  derive_seed(seed, 0, 5));
        });
        ls = cv.best_spec;
        res.info["penalty"] = grid[static_cast<std::size_t>(cv.best)];
    }
    FittedLearner learner = stage("fit", [&] { return fit_learner(q, y_train, ls); });
    res.info["width"] = q.cols();
    res.predictions = stage("predict", [&] { return learner.predict(fit.augment_new(xs)); });

    if (keep_models) {
        if (fit.transform) add_bundle(res.models, "transform/", fit.transform->to_bundle());
        if (fit.factor_model) add_bundle(res.models, "factors/", fit.factor_model->to_bundle());
        if (fit.f0_model) add_bundle(res.models, "f0/", fit.f0_model->to_bundle());
        if (fit.residual_loadings.size()) res.models.matrices["residual_loadings"] = Matrix{fit.residual_loadings, {}};
        if (fit.f0_coef.size()) res.models.matrices["f0_coef"] = Matrix{fit.f0_coef, {}};
        if (fit.kept) res.models.matrices["kept"] = column(*fit.kept);
        if (learner.theta.size()) res.models.matrices["learner/theta"] = Matrix{learner.theta, {}};
        Matrix tags;
        tags.values = RowVectorXd::Zero(static_cast<Index>(fit.training.provenance.size()));
        tags.col_names = fit.training.provenance;
        res.models.matrices["design/provenance"] = tags;
        res.models.texts["learner/kind"] = to_string(learner.spec.kind);
        res.models.texts["layout"] = to_string(spec.layout);
    }
    return res;
}

double EvalReport::recompute() const {
    if (metric == "err") return classification_error(truths, predictions);
    if (metric == "oos_r2") return oos_r2_static(truths, predictions, baselines(0));
    return oos_r2_rolling(truths, predictions, baselines);
}

EvalReport evaluate_experiment(const PipelineConfig& config, const ExperimentSpec& experiment, const Dataset& data,
                               std::uint64_t seed, int threads) {
    const Index n = data.x.rows();
    if (data.y.size() != n) throw UsageError("dataset x and y row counts differ");
    EvalReport report;
    report.seed = seed;
    report.plan = config.evaluation.mode == EvaluationSpec::Mode::rolling
                      ? plan_windows(n, config.evaluation.m, config.evaluation.h)
                      : static_split(n, config.evaluation.n_train);
    const bool classify = config.task != Task::regression;
    report.metric = classify ? "err"
                    : config.evaluation.mode == EvaluationSpec::Mode::rolling ? "oos_r2_rolling"
                                                                                : "oos_r2";

    const auto& windows = report.plan.windows;
    std::vector<WindowResult> results(windows.size());
    std::vector<std::exception_ptr> errors(windows.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t w = next.fetch_add(1);
            if (w >= windows.size()) return;
            const Window& win = windows[w];
            try {
                const MatrixXd x_train = data.x.values.middleRows(win.train_begin, win.train_end - win.train_begin);
                const VectorXd y_train = data.y.segment(win.train_begin, win.train_end - win.train_begin);
                const MatrixXd x_test = data.x.values.middleRows(win.test_begin, win.test_end - win.test_begin);
                results[w] = run_window(config, experiment, x_train, y_train, x_test, derive_seed(seed, w, 0),
                                        config.save_models);
            } catch (const Error& e) {
                errors[w] = std::make_exception_ptr(
                    Error(e.kind(), fmt::format("experiment {}, window {}: {}", experiment.name, w, e.what())));
            } catch (...) {
                errors[w] = std::current_exception();
            }
        }
    };
    const int t = std::max(1, std::min(resolve_threads(threads), static_cast<int>(windows.size())));
    std::vector<std::thread> pool;
    for (int i = 1; i < t; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    Index total = 0;
    for (const auto& w : windows) total += w.test_end - w.test_begin;
    report.predictions.resize(total);
    report.truths.resize(total);
    report.baselines.resize(total);
    VectorXd raw(total);
    std::vector<double> classes;
    if (classify) {
        std::set<double> seen(data.y.data(), data.y.data() + data.y.size());
        classes.assign(seen.begin(), seen.end());
    }
    Index at = 0;
    for (std::size_t w = 0; w < windows.size(); ++w) {
        const Window& win = windows[w];
        const Index len = win.test_end - win.test_begin;
        const WindowResult& r = results[w];
        raw.segment(at, len) = r.predictions;
        report.truths.segment(at, len) = data.y.segment(win.test_begin, len);
        report.baselines.segment(at, len).setConstant(r.train_mean);
        for (Index i = 0; i < len; ++i) {
            report.rows.push_back(win.test_begin + i);
            report.window_of.push_back(static_cast<Index>(w));
        }
        at += len;
    }
    report.predictions = classify ? to_labels(config.task, raw, classes) : raw;
    report.scores = std::move(raw);

    at = 0;
    for (std::size_t w = 0; w < windows.size(); ++w) {
        const Window& win = windows[w];
        const Index len = win.test_end - win.test_begin;
        nlohmann::json entry = {{"window", w},
                                {"train", {win.train_begin, win.train_end}},
                                {"test", {win.test_begin, win.test_end}},
                                {"train_mean", results[w].train_mean}};
        const VectorXd y = report.truths.segment(at, len);
        const VectorXd p = report.predictions.segment(at, len);
        if (classify) {
            entry["errors"] = (y.array() != p.array()).count();
        } else {
            entry["sse"] = (y - p).squaredNorm();
            entry["sst"] = (y.array() - results[w].train_mean).matrix().squaredNorm();
        }
        entry["info"] = results[w].info;
        report.per_window.push_back(std::move(entry));
        at += len;
    }
    if (config.save_models)
        for (auto& r : results) report.models.push_back(std::move(r.models));
    report.value = report.recompute();
    return report;
}

nlohmann::json PipelineReport::metrics_json() const {
    nlohmann::json exps = nlohmann::json::array();
    for (const auto& e : experiments) {
        nlohmann::json reps = nlohmann::json::array();
        for (const auto& r : e.repetitions)
            reps.push_back({{"seed", r.seed}, {"value", r.value}, {"per_window", r.per_window}});
        exps.push_back({{"name", e.name},
                        {"metric", metric},
                        {"value", e.mean},
                        {"sd", e.sd},
                        {"per_window", e.repetitions.front().per_window},
                        {"seed", seed},
                        {"config_hash", config_hash},
                        {"repetitions", reps}});
    }
    return {{"metric", metric},
            {"value", experiments.front().mean},
            {"per_window", experiments.front().repetitions.front().per_window},
            {"seed", seed},
            {"config_hash", config_hash},
            {"experiments", exps}};
}

PipelineReport run_pipeline(const PipelineConfig& config, const Dataset& data, int threads) {
    if (config.experiments.empty()) throw ConfigError("config: missing required section 'experiments'");
    PipelineReport report;
    report.config_hash = config.hash();
    report.seed = config.seed;
    for (const auto& e : config.experiments) {
        ExperimentReport er;
        er.name = e.name;
        std::vector<double> values;
        for (int r = 0; r < config.repetitions; ++r) {
            er.repetitions.push_back(
                evaluate_experiment(config, e, data, config.seed + static_cast<std::uint64_t>(r), threads));
            values.push_back(er.repetitions.back().value);
        }
        double mean = 0.0;
        for (double v : values) mean += v;
        er.mean = mean / static_cast<double>(values.size());
        er.sd = sample_sd(values);
        report.metric = er.repetitions.front().metric;
        report.experiments.push_back(std::move(er));
    }
    return report;
}

void write_pipeline_outputs(const PipelineConfig& config, const PipelineReport& report, const Dataset& data,
                            const std::filesystem::path& out) {
    std::filesystem::create_directories(out);
    {
        std::ofstream f(out / "metrics.json");
        if (!f) throw DataError(fmt::format("cannot write {}", (out / "metrics.json").string()));
        f << report.metrics_json().dump(2) << '\n';
    }
    for (const auto& e : report.experiments) {
        const auto path = out / fmt::format("predictions_{}.csv", e.name);
        std::ofstream f(path);
        if (!f) throw DataError(fmt::format("cannot write {}", path.string()));
        f << fmt::format("# config_hash={} seed={}\n", report.config_hash, report.seed);
        f << "seed,window,row,row_id,y,y_hat,y_bar,score\n";
        for (const auto& r : e.repetitions) {
            for (std::size_t i = 0; i < r.rows.size(); ++i) {
                const auto ii = static_cast<Index>(i);
                const Index row = r.rows[i];
                const std::string id = data.row_ids.empty() ? "" : data.row_ids[static_cast<std::size_t>(row)];
                f << fmt::format("{},{},{},{},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.seed, r.window_of[i], row, id,
                                 r.truths(ii), r.predictions(ii), r.baselines(ii), r.scores(ii));
            }
        }
        if (config.save_models) {
            std::filesystem::create_directories(out / "models");
            for (const auto& r : e.repetitions) {
                for (std::size_t w = 0; w < r.models.size(); ++w) {
                    Bundle b = r.models[w];
                    b.texts["config_hash"] = report.config_hash;
                    b.texts["seed"] = std::to_string(r.seed);
                    save_bundle(b, out / "models" / fmt::format("{}_r{}_w{}.bin", e.name, r.seed, w));
                }
            }
        }
    }
}

}  // namespace farm
