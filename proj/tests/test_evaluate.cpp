#include <doctest.h>

#include <set>

#include "farm/error.hpp"
#include "farm/evaluate.hpp"
#include "farm/pipeline.hpp"
#include "farm/synth.hpp"

using namespace farm;

namespace {

std::vector<std::pair<Index, Index>> test_blocks_one_based(const WindowPlan& plan) {
    std::vector<std::pair<Index, Index>> out;
    for (const auto& w : plan.windows) out.emplace_back(w.test_begin + 1, w.test_end);
    return out;
}

const char* rolling_config = R"({
  "seed": 3,
  "data": {"kind": "synthetic", "synthetic": {"kind": "interaction-signal", "n": 150, "p": 12, "noise_sd": 0.5}},
  "scale": "zscore",
  "experiments": [
    {"name": "X", "layout": "X"},
    {"name": "inter", "layout": "F0_F_Utilde", "transform": {"kind": "interactions"},
     "factors": {"mode": "dp", "n_prime": 40, "k_min": 1, "k_max": 4},
     "f0": {"mode": "pca", "k_min": 1, "k_max": 4}},
    {"name": "rbf", "layout": "F_U", "transform": {"kind": "rbf", "n0": 30},
     "factors": {"mode": "pca", "k_min": 1, "k_max": 4}},
    {"name": "fnn", "layout": "F_U", "transform": {"kind": "fnn", "hidden_width": 16, "epochs": 5},
     "factors": {"mode": "pca", "k_min": 1, "k_max": 4}}
  ],
  "screen": {"m": 20},
  "learner": {"kind": "ridge", "grid": [0.1, 1, 10], "folds": 3},
  "evaluation": {"mode": "rolling", "m": 70, "h": 30},
  "threads": 2
})";

Dataset make_dataset(const PipelineConfig& c) { return load_dataset(c); }

}  // namespace

TEST_SUITE("evaluate") {

TEST_CASE("rolling window plans") {
    CHECK(test_blocks_one_based(plan_windows(10, 6, 2)) == std::vector<std::pair<Index, Index>>{{7, 8}, {9, 10}});
    CHECK(test_blocks_one_based(plan_windows(10, 6, 3)) == std::vector<std::pair<Index, Index>>{{7, 9}, {10, 10}});
    const WindowPlan ones = plan_windows(10, 6, 1);
    CHECK(ones.windows.size() == 4);
    for (const auto& w : ones.windows) {
        CHECK(w.test_end - w.test_begin == 1);
        CHECK(w.train_end - w.train_begin == 6);
        CHECK(w.train_end == w.test_begin);
    }
    CHECK_THROWS(plan_windows(10, 10, 1));
    CHECK_THROWS(plan_windows(10, 1, 1));
    CHECK_THROWS(plan_windows(10, 6, 0));
}

TEST_CASE("window tiling is exact") {
    for (Index n = 5; n < 40; n += 3) {
        for (Index m = 2; m < n; m += 2) {
            for (Index h = 1; h <= 7; ++h) {
                const WindowPlan plan = plan_windows(n, m, h);
                Index next = m;
                for (const auto& w : plan.windows) {
                    CHECK(w.test_begin == next);
                    CHECK(w.test_end > w.test_begin);
                    CHECK(w.test_end - w.test_begin <= h);
                    CHECK(w.train_end - w.train_begin == m);
                    next = w.test_end;
                }
                CHECK(next == n);
            }
        }
    }
    const WindowPlan s = static_split(10, 7);
    REQUIRE(s.windows.size() == 1);
    CHECK(s.windows[0].train_end == 7);
    CHECK(s.windows[0].test_end == 10);
    CHECK_THROWS(static_split(10, 10));
}

TEST_CASE("out-of-sample metrics") {
    VectorXd y(2), p(2), b(2);
    y << 1, 2;
    p << 2, 2;
    b << 0, 0;
    CHECK(oos_r2_rolling(y, p, b) == doctest::Approx(0.8));
    CHECK(oos_r2_rolling(y, y, b) == 1.0);
    CHECK(oos_r2_rolling(y, b, b) == 0.0);
    VectorXd y2(2), p2(2);
    y2 << 0, 2;
    p2 << 1, 1;
    CHECK(oos_r2_static(y2, p2, 1.0) == 0.0);
    CHECK(oos_r2_static(y2, y2, 1.0) == 1.0);
    CHECK_THROWS_WITH(oos_r2_static(VectorXd::Ones(3), VectorXd::Zero(3), 1.0),
                      doctest::Contains("constant-baseline degenerate"));
    VectorXd worse(2);
    worse << 10, -10;
    CHECK(oos_r2_static(y2, worse, 1.0) < 0.0);

    VectorXd t(10), q(10);
    t << 0, 1, 1, 0, 1, 0, 0, 1, 1, 0;
    q = t;
    q(0) = 1;
    q(4) = 0;
    q(9) = 1;
    CHECK(classification_error(t, q) == doctest::Approx(0.3));
    CHECK(classification_error(t, t) == 0.0);
    CHECK(classification_error(t, (1.0 - t.array()).matrix()) == 1.0);
    CHECK_THROWS(classification_error(VectorXd(), VectorXd()));
}

TEST_CASE("derived seeds are distinct and stable") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t w = 0; w < 20; ++w)
        for (std::uint64_t s = 0; s < 5; ++s) seen.insert(derive_seed(1, w, s));
    CHECK(seen.size() == 100);
    CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
    CHECK(derive_seed(1, 2, 3) != derive_seed(2, 2, 3));
}

TEST_CASE("pipeline runs are deterministic and metrics recompute exactly") {
    PipelineConfig c = parse_config(rolling_config);
    const Dataset data = make_dataset(c);
    const PipelineReport a = run_pipeline(c, data, 2);
    const PipelineReport b = run_pipeline(c, data, 1);
    CHECK(a.metrics_json().dump() == b.metrics_json().dump());
    CHECK(a.metric == "oos_r2_rolling");
    for (const auto& e : a.experiments) {
        for (const auto& r : e.repetitions) {
            CHECK(r.recompute() == r.value);
            CHECK(r.plan.windows.size() == 3);
            CHECK(r.predictions.size() == 80);
        }
    }
    const auto j = a.metrics_json();
    CHECK(j.contains("per_window"));
    CHECK(j.contains("config_hash"));
    CHECK(j["seed"] == 3);
}

TEST_CASE("predictions ignore every row after the training window") {
    PipelineConfig c = parse_config(rolling_config);
    const Dataset clean = make_dataset(c);
    PipelineConfig other = c;
    set_seed(other, 999);
    const Dataset noise = make_dataset(other);
    for (const auto& experiment : c.experiments) {
        const EvalReport base = evaluate_experiment(c, experiment, clean, c.seed, 1);
        for (const auto& w : base.plan.windows) {
            Dataset dirty = clean;
            for (Index i = w.train_end; i < dirty.x.rows(); ++i) {
                dirty.y(i) = 3.0 * noise.y(i) + 1.0;
                if (i >= w.test_end) dirty.x.values.row(i) = noise.x.values.row(i);
            }
            const EvalReport other = evaluate_experiment(c, experiment, dirty, c.seed, 1);
            for (std::size_t t = 0; t < base.rows.size(); ++t) {
                if (base.rows[t] < w.test_begin || base.rows[t] >= w.test_end) continue;
                CHECK(other.predictions(static_cast<Index>(t)) == base.predictions(static_cast<Index>(t)));
            }
        }
    }
}

TEST_CASE("stage errors name the window and stage") {
    PipelineConfig c = parse_config(rolling_config);
    const Dataset data = make_dataset(c);
    c.experiments[2].augment.factors.k = 400;
    std::string what;
    try {
        evaluate_experiment(c, c.experiments[2], data, c.seed, 1);
    } catch (const Error& e) {
        what = e.what();
    }
    CHECK(what.find("window 0") != std::string::npos);
    CHECK(what.find("stage") != std::string::npos);
}

}  // TEST_SUITE
