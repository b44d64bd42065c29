#include "farm/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "farm/error.hpp"

namespace farm {

namespace {

using nlohmann::json;

// Line of the first `"key"` token at or after the start of the object that
// holds it; good enough to point a reader at the offending entry.
std::size_t line_of(const std::string& text, const std::string& key) {
    auto pos = text.find('"' + key + '"');
    if (pos == std::string::npos) return 0;
    std::size_t line = 1;
    for (std::size_t i = 0; i < pos; ++i)
        if (text[i] == '\n') ++line;
    return line;
}

class Section {
public:
    Section(const json& j, std::string path, const std::string& text) : j_(j), path_(std::move(path)), text_(text) {
        if (!j_.is_object()) fail(path_.empty() ? "config" : path_, "expected an object");
    }

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
        const std::size_t line = line_of(text_, key);
        const std::string where = path_.empty() ? key : path_ + "." + key;
        if (line) throw ConfigError(fmt::format("config: line {}: {}: {}", line, where, msg));
        throw ConfigError(fmt::format("config: {}: {}", where, msg));
    }

    bool has(const std::string& key) {
        used_.insert(key);
        return j_.contains(key) && !j_.at(key).is_null();
    }

    const json& at(const std::string& key) {
        used_.insert(key);
        return j_.at(key);
    }

    std::string path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    const std::string& text() const { return text_; }

    template <class T>
    void get(const std::string& key, T& out) {
        if (!has(key)) return;
        out = value<T>(key);
    }

    template <class T>
    void get(const std::string& key, std::optional<T>& out) {
        if (!has(key)) return;
        out = value<T>(key);
    }

    template <class T>
    T value(const std::string& key) {
        const json& v = at(key);
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) fail(key, "expected true or false");
            return v.get<bool>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) fail(key, "expected a string");
            return v.get<std::string>();
        } else if constexpr (std::is_same_v<T, std::filesystem::path>) {
            if (!v.is_string()) fail(key, "expected a path string");
            return std::filesystem::path(v.get<std::string>());
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) fail(key, "expected an integer");
            if constexpr (std::is_unsigned_v<T>) {
                if (v.is_number_unsigned()) return static_cast<T>(v.get<std::uint64_t>());
                fail(key, "expected a non-negative integer");
            } else {
                return static_cast<T>(v.get<std::int64_t>());
            }
        } else {
            if (!v.is_number()) fail(key, "expected a number");
            return v.get<T>();
        }
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!used_.count(it.key())) fail(it.key(), "unknown key");
    }

private:
    const json& j_;
    std::string path_;
    const std::string& text_;
    std::set<std::string> used_;
};

void require(Section& s, bool ok, const std::string& key, const std::string& msg) {
    if (!ok) s.fail(key, msg);
}

template <class F>
auto checked(Section& s, const std::string& key, F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        s.fail(key, e.what());
    }
}

TransformSpec parse_transform(Section s) {
    TransformSpec t;
    if (s.has("kind")) {
        auto name = s.value<std::string>("kind");
        t.kind = checked(s, "kind", [&] { return transform_kind_from_string(name); });
    }
    s.get("n0", t.n0);
    s.get("gamma", t.gamma);
    s.get("degree", t.degree);
    s.get("coef0", t.coef0);
    s.get("hidden_width", t.hidden_width);
    s.get("epochs", t.epochs);
    s.get("learn_rate", t.learn_rate);
    s.get("epsilon_floor", t.epsilon_floor);
    s.get("bandwidth", t.bandwidth);
    s.finish();
    checked(s, "kind", [&] {
        validate(t);
        return 0;
    });
    return t;
}

FactorSpec parse_factors(Section s) {
    FactorSpec f;
    if (s.has("mode")) {
        auto name = s.value<std::string>("mode");
        f.mode = checked(s, "mode", [&] { return factor_mode_from_string(name); });
    }
    if (s.has("k")) {
        const json& k = s.at("k");
        if (k.is_string()) {
            require(s, k.get<std::string>() == "auto", "k", "expected a positive integer or \"auto\"");
        } else {
            f.k = s.value<Index>("k");
            require(s, *f.k >= 1, "k", "must be >= 1");
        }
    }
    std::optional<Index> k_min, k_max;
    s.get("k_min", k_min);
    s.get("k_max", k_max);
    if (k_min || k_max) {
        require(s, k_min && k_max, k_min ? "k_min" : "k_max", "k_min and k_max must be given together");
        require(s, *k_min >= 1 && *k_min <= *k_max, "k_min", "need 1 <= k_min <= k_max");
        f.bounds = RatioBounds{*k_min, *k_max};
    }
    s.get("n_prime", f.n_prime);
    require(s, f.n_prime >= 2, "n_prime", "must be >= 2");
    s.get("k_prime", f.k_prime);
    if (f.k_prime) require(s, *f.k_prime >= 1, "k_prime", "must be >= 1");
    s.finish();
    return f;
}

Task parse_task(Section& s, const std::string& key) {
    auto name = s.value<std::string>(key);
    return checked(s, key, [&] { return task_from_string(name); });
}

}  // namespace

std::string to_string(Task task) {
    switch (task) {
        case Task::regression: return "regression";
        case Task::binary: return "binary";
        case Task::multiclass: return "multiclass";
    }
    return "regression";
}

Task task_from_string(const std::string& name) {
    if (name == "regression") return Task::regression;
    if (name == "binary") return Task::binary;
    if (name == "multiclass") return Task::multiclass;
    throw ConfigError(fmt::format("unknown task '{}' (regression, binary, multiclass)", name));
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return fmt::format("{:016x}", h);
}

std::string PipelineConfig::hash() const { return fnv1a_hex(raw.dump()); }

std::filesystem::path PipelineConfig::resolve(const std::filesystem::path& p) const {
    if (p.empty() || p.is_absolute()) return p;
    return base_dir / p;
}

void set_seed(PipelineConfig& config, std::uint64_t seed) {
    config.seed = seed;
    config.raw["seed"] = seed;
}

PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
    json raw;
    try {
        raw = json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1;
        for (std::size_t i = 0; i < e.byte && i < text.size(); ++i)
            if (text[i] == '\n') ++line;
        throw ConfigError(fmt::format("config: line {}: syntax error: {}", line, e.what()));
    }
    PipelineConfig c;
    c.raw = raw;
    c.base_dir = base_dir;
    c.learner.base.standardize = true;
    Section root(c.raw, "", text);

    root.get("seed", c.seed);
    root.get("threads", c.threads);
    require(root, c.threads >= 0, "threads", "must be >= 0");
    root.get("output", c.output);
    root.get("repetitions", c.repetitions);
    require(root, c.repetitions >= 1, "repetitions", "must be >= 1");
    root.get("save_models", c.save_models);
    if (root.has("task")) c.task = parse_task(root, "task");

    if (root.has("data")) {
        Section s(root.at("data"), "data", text);
        DataSpec d;
        std::string kind = "files";
        s.get("kind", kind);
        if (kind == "files") {
            d.kind = DataSpec::Kind::files;
            require(s, s.has("x") && s.has("y"), "kind", "files data needs both x and y");
            d.x = s.value<std::filesystem::path>("x");
            d.y = s.value<std::filesystem::path>("y");
            s.get("header", d.header);
        } else if (kind == "panel") {
            d.kind = DataSpec::Kind::panel;
            require(s, s.has("panel"), "kind", "panel data needs a panel path");
            d.panel = s.value<std::filesystem::path>("panel");
        } else if (kind == "synthetic") {
            d.kind = DataSpec::Kind::synthetic;
            require(s, s.has("synthetic"), "kind", "synthetic data needs a synthetic section");
            Section g(s.at("synthetic"), "data.synthetic", text);
            auto& y = d.synthetic;
            g.get("kind", y.kind);
            require(g, y.kind == "factor-regression" || y.kind == "interaction-signal" || y.kind == "screening-sparse",
                    "kind", "expected factor-regression, interaction-signal or screening-sparse");
            g.get("n", y.n);
            g.get("p", y.p);
            g.get("k", y.k);
            g.get("snr", y.snr);
            g.get("noise_sd", y.noise_sd);
            g.get("n_active", y.n_active);
            g.get("min_coef", y.min_coef);
            g.get("seed", y.seed);
            require(g, y.n >= 4 && y.p >= 2, "n", "need n >= 4 and p >= 2");
            require(g, y.k >= 1 && y.k < y.p, "k", "need 1 <= k < p");
            require(g, y.snr > 0.0, "snr", "must be positive");
            require(g, y.noise_sd >= 0.0, "noise_sd", "must be non-negative");
            require(g, y.n_active >= 0 && y.n_active <= y.p, "n_active", "need 0 <= n_active <= p");
            g.finish();
        } else {
            s.fail("kind", fmt::format("unknown data kind '{}' (files, panel, synthetic)", kind));
        }
        s.finish();
        c.data = d;
    }

    if (root.has("scale")) {
        auto name = root.value<std::string>("scale");
        if (name == "demean") c.scale = ScaleMode::demean;
        else if (name == "zscore") c.scale = ScaleMode::zscore;
        else require(root, name == "none", "scale", "expected none, demean or zscore");
    }
    root.get("top_frequency", c.top_frequency);
    if (c.top_frequency) require(root, *c.top_frequency >= 1, "top_frequency", "must be >= 1");

    if (root.has("experiments")) {
        const json& list = root.at("experiments");
        require(root, list.is_array() && !list.empty(), "experiments", "expected a nonempty array");
        std::set<std::string> names;
        for (std::size_t i = 0; i < list.size(); ++i) {
            Section s(list[i], fmt::format("experiments[{}]", i), text);
            ExperimentSpec e;
            require(s, s.has("name"), "name", "every experiment needs a name");
            e.name = s.value<std::string>("name");
            require(s, !e.name.empty() && e.name.find_first_of("/\\ ") == std::string::npos, "name",
                    "names must be nonempty without spaces or slashes");
            require(s, names.insert(e.name).second, "name", fmt::format("duplicate experiment '{}'", e.name));
            if (s.has("layout")) {
                auto name = s.value<std::string>("layout");
                e.augment.layout = checked(s, "layout", [&] { return layout_from_string(name); });
            }
            e.augment.transform.kind = TransformKind::identity;
            if (s.has("transform")) e.augment.transform = parse_transform(Section(s.at("transform"), s.path("transform"), text));
            if (s.has("factors")) e.augment.factors = parse_factors(Section(s.at("factors"), s.path("factors"), text));
            if (s.has("f0")) e.augment.f0 = parse_factors(Section(s.at("f0"), s.path("f0"), text));
            if (e.augment.transform.kind == TransformKind::lr) {
                require(s, e.augment.layout == Layout::lr_x, "layout", "the lr transform pairs with layout LR_X");
                require(s, c.task != Task::multiclass, "transform", "the lr transform needs two classes");
            }
            if (e.augment.layout == Layout::lr_x)
                require(s, e.augment.transform.kind == TransformKind::lr, "layout", "layout LR_X needs the lr transform");
            s.finish();
            c.experiments.push_back(std::move(e));
        }
    }

    if (root.has("screen")) {
        Section s(root.at("screen"), "screen", text);
        s.get("m", c.screen.m);
        if (c.screen.m) require(s, *c.screen.m >= 1, "m", "must be >= 1");
        if (s.has("loss")) {
            auto name = s.value<std::string>("loss");
            if (name == "squared") c.screen.loss = LossKind::squared;
            else if (name == "logistic") c.screen.loss = LossKind::logistic;
            else require(s, name == "auto", "loss", "expected auto, squared or logistic");
        }
        s.finish();
    }

    if (root.has("learner")) {
        Section s(root.at("learner"), "learner", text);
        auto& l = c.learner;
        if (s.has("kind")) {
            auto name = s.value<std::string>("kind");
            l.base.kind = checked(s, "kind", [&] { return learner_kind_from_string(name); });
        }
        s.get("gamma1", l.base.gamma1);
        s.get("gamma2", l.base.gamma2);
        s.get("max_iter", l.base.max_iter);
        s.get("tol", l.base.tol);
        s.get("standardize", l.base.standardize);
        s.get("folds", l.folds);
        s.get("time_ordered", l.time_ordered);
        require(s, l.folds >= 2, "folds", "must be >= 2");
        if (s.has("grid")) {
            const json& g = s.at("grid");
            if (g.is_string()) {
                require(s, g.get<std::string>() == "default", "grid", "expected an array of numbers or \"default\"");
                if (l.base.kind == LearnerKind::ridge) l.grid = default_ridge_grid();
                if (l.base.kind == LearnerKind::lasso) l.grid = default_lasso_grid();
            } else {
                require(s, g.is_array(), "grid", "expected an array of numbers or \"default\"");
                for (const auto& v : g) {
                    require(s, v.is_number() && v.get<double>() >= 0.0, "grid", "grid values must be non-negative numbers");
                    l.grid.push_back(v.get<double>());
                }
            }
            require(s, l.grid.empty() || l.base.kind == LearnerKind::ridge || l.base.kind == LearnerKind::lasso,
                    "grid", "tuning grids apply to ridge and lasso only");
        }
        if (s.has("fnn")) {
            Section f(s.at("fnn"), "learner.fnn", text);
            auto& m = l.base.fnn;
            if (f.has("hidden")) {
                const json& h = f.at("hidden");
                require(f, h.is_array() && !h.empty(), "hidden", "expected a nonempty array of widths");
                m.hidden.clear();
                for (const auto& v : h) {
                    require(f, v.is_number_integer() && v.get<std::int64_t>() >= 1, "hidden", "widths must be positive integers");
                    m.hidden.push_back(v.get<Index>());
                }
            }
            f.get("dropout", m.dropout);
            f.get("epochs", m.epochs);
            f.get("learn_rate", m.learn_rate);
            f.get("batch", m.batch);
            f.finish();
        }
        if (s.has("external")) {
            Section f(s.at("external"), "learner.external", text);
            require(f, f.has("command"), "command", "external learner needs a command");
            f.get("command", l.base.external.command);
            f.get("timeout_seconds", l.base.external.timeout_seconds);
            f.finish();
        }
        l.base.task = c.task;
        l.base.fnn.task = c.task;
        checked(s, "kind", [&] {
            validate(l.base);
            return 0;
        });
        s.finish();
    }
    c.learner.base.task = c.task;
    c.learner.base.fnn.task = c.task;

    if (root.has("evaluation")) {
        Section s(root.at("evaluation"), "evaluation", text);
        std::string mode = "rolling";
        s.get("mode", mode);
        if (mode == "rolling") {
            c.evaluation.mode = EvaluationSpec::Mode::rolling;
            require(s, s.has("m"), "mode", "rolling evaluation needs m");
            s.get("m", c.evaluation.m);
            s.get("h", c.evaluation.h);
            require(s, c.evaluation.m >= 2, "m", "must be >= 2");
            require(s, c.evaluation.h >= 1, "h", "must be >= 1");
        } else if (mode == "static") {
            c.evaluation.mode = EvaluationSpec::Mode::fixed;
            require(s, s.has("n_train"), "mode", "static evaluation needs n_train");
            s.get("n_train", c.evaluation.n_train);
            require(s, c.evaluation.n_train >= 2, "n_train", "must be >= 2");
        } else {
            s.fail("mode", fmt::format("unknown evaluation mode '{}' (rolling, static)", mode));
        }
        s.finish();
    }

    if (root.has("backtest")) {
        Section s(root.at("backtest"), "backtest", text);
        BacktestSpec b;
        require(s, s.has("scores") && s.has("returns") && s.has("caps"), "backtest",
                "backtest needs scores, returns and caps paths");
        b.scores = s.value<std::filesystem::path>("scores");
        b.returns = s.value<std::filesystem::path>("returns");
        b.caps = s.value<std::filesystem::path>("caps");
        s.get("top_n", b.config.top_n);
        s.get("threshold", b.config.threshold);
        s.get("cost_bps", b.config.cost_bps);
        if (s.has("weighting")) {
            auto w = s.value<std::string>("weighting");
            require(s, w == "value" || w == "equal", "weighting", "expected value or equal");
            b.config.value_weighted = w == "value";
        }
        require(s, b.config.top_n >= 1, "top_n", "must be >= 1");
        require(s, b.config.cost_bps >= 0.0, "cost_bps", "must be non-negative");
        s.finish();
        c.backtest = b;
    }

    if (root.has("event_study")) {
        Section s(root.at("event_study"), "event_study", text);
        EventStudySpec e;
        require(s, s.has("returns"), "event_study", "event study needs a returns path");
        e.returns = s.value<std::filesystem::path>("returns");
        s.get("scores", e.scores);
        s.get("events", e.events);
        require(s, e.scores.empty() != e.events.empty(), "event_study", "give exactly one of scores or events");
        s.get("quantile", e.quantile);
        s.get("first_offset", e.first_offset);
        s.get("last_offset", e.last_offset);
        require(s, e.quantile > 0.0 && e.quantile <= 1.0, "quantile", "must be in (0, 1]");
        require(s, e.first_offset <= e.last_offset, "first_offset", "must not exceed last_offset");
        s.finish();
        c.event_study = e;
    }

    root.finish();
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot open config {}", path.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

}  // namespace farm
