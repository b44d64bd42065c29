#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "farm/error.hpp"
#include "farm/finance.hpp"
#include "farm/synth.hpp"
#include "oracles.hpp"

using namespace farm;

namespace {

std::vector<oracle::PanelObs> to_obs(const std::vector<ReturnRecord>& r) {
    std::vector<oracle::PanelObs> out;
    for (const auto& x : r) out.push_back({x.asset_id, x.date, x.value});
    return out;
}

EventPanel small_panel(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    EventPanel panel;
    const long event_dates[] = {14, 17, 20, 23};
    for (int a = 0; a < 4; ++a) panel.events.push_back({asset_name(a), event_dates[a]});
    for (int a = 0; a < 5; ++a) {
        const double delta = g(rng);
        for (long t = 0; t < 40; ++t) panel.returns.push_back({asset_name(a), t, delta + 0.1 * std::sin(t) + g(rng)});
    }
    return panel;
}

std::vector<ReturnRecord> series(std::initializer_list<std::tuple<const char*, long, double>> rows) {
    std::vector<ReturnRecord> out;
    for (const auto& [a, d, v] : rows) out.push_back({a, d, v});
    return out;
}

void check_identities(const BacktestLedger& ledger) {
    for (const auto& d : ledger.days) {
        for (const LegDay* leg : {&d.long_leg, &d.short_leg}) {
            double sum = 0.0;
            for (const auto& [_, w] : leg->weights) {
                CHECK(w > 0.0);
                sum += w;
            }
            CHECK(sum + leg->cash == doctest::Approx(1.0).epsilon(1e-14));
            CHECK(leg->weights.size() <= static_cast<std::size_t>(ledger.config.top_n));
            CHECK(leg->net == leg->gross - leg->cost);
            CHECK(leg->cost == ledger.config.cost_bps / 1e4 * leg->turnover);
            CHECK(leg->turnover >= 0.0);
            CHECK(leg->turnover <= 1.0 + 1e-12);
        }
        CHECK(d.net == 0.5 * (d.long_leg.net + d.short_leg.net));
    }
}

}  // namespace

TEST_SUITE("finance") {

TEST_CASE("scores from regression predictions") {
    auto s = scores_from_regression({{"A", 1, 0.02}}, 0.001);
    REQUIRE(s.size() == 1);
    CHECK(s[0].score == doctest::Approx(0.519).epsilon(1e-12));
    CHECK(scores_from_regression({{"A", 1, 0.3}}, 0.3)[0].score == 0.5);
    auto avg = average_same_day({{"B", 2, 0.4}, {"A", 2, 0.9}, {"B", 2, 0.6}, {"A", 1, 0.1}});
    REQUIRE(avg.size() == 3);
    CHECK(avg[0].asset_id == "A");
    CHECK(avg[0].date == 1);
    CHECK(avg[1].asset_id == "A");
    CHECK(avg[2].asset_id == "B");
    CHECK(avg[2].score == doctest::Approx(0.5));
}

TEST_CASE("event selection by hand") {
    // 12 scores above 0.5 and 8 below; quantile 0.25 keeps 3 and 2.
    std::vector<ScoreRecord> s{
        {"A", 1, 0.55}, {"B", 1, 0.91}, {"C", 1, 0.30}, {"D", 1, 0.62}, {"E", 1, 0.05},
        {"A", 2, 0.70}, {"B", 2, 0.52}, {"C", 2, 0.45}, {"D", 2, 0.88}, {"E", 2, 0.60},
        {"A", 3, 0.10}, {"B", 3, 0.58}, {"C", 3, 0.66}, {"D", 3, 0.49}, {"E", 3, 0.75},
        {"A", 4, 0.35}, {"B", 4, 0.95}, {"C", 4, 0.40}, {"D", 4, 0.51}, {"E", 4, 0.20}};
    auto ev = select_events(s, 0.25);
    std::set<std::tuple<std::string, long, bool>> got;
    for (const auto& e : ev) got.insert({e.asset_id, e.date, e.sign == EventSign::positive});
    const std::set<std::tuple<std::string, long, bool>> expect{
        {"B", 4, true}, {"B", 1, true}, {"D", 2, true}, {"E", 1, false}, {"A", 3, false}};
    CHECK(got == expect);
}

TEST_CASE("event selection counts and monotonicity") {
    std::vector<ScoreRecord> pos;
    for (int i = 0; i < 100; ++i) pos.push_back({asset_name(i), 1, 0.5 + 0.004 * (i + 1)});
    CHECK(select_events(pos, 0.05).size() == 5);
    std::vector<ScoreRecord> flat(30, ScoreRecord{"A", 1, 0.5});
    for (int i = 0; i < 30; ++i) flat[static_cast<std::size_t>(i)].date = i;
    CHECK(select_events(flat, 0.5).empty());

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<ScoreRecord> mixed;
    for (int i = 0; i < 300; ++i) mixed.push_back({asset_name(i % 17), i / 17, u(rng)});
    auto key = [](const Event& e) { return std::make_tuple(e.asset_id, e.date, e.sign == EventSign::positive); };
    std::set<std::tuple<std::string, long, bool>> prev;
    for (double q : {0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0}) {
        std::set<std::tuple<std::string, long, bool>> cur;
        for (const auto& e : select_events(mixed, q)) cur.insert(key(e));
        CHECK(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
        prev = cur;
    }
}

TEST_CASE("day indicators") {
    EventPanel p;
    p.first_offset = -1;
    p.last_offset = 1;
    p.events = {{"A", 3}, {"A", 4}};
    p.returns = series({{"A", 1, 0}, {"A", 2, 0}, {"A", 3, 0}, {"A", 4, 0}, {"A", 5, 0}, {"B", 3, 0}});
    MatrixXd d = day_indicators(p);
    MatrixXd expect(6, 3);
    expect << 0, 0, 0,
              1, 0, 0,
              1, 1, 0,
              0, 1, 1,
              0, 0, 1,
              0, 0, 0;
    CHECK(d == expect);
}

TEST_CASE("within estimator equals dummy-variable OLS") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        EventPanel panel = small_panel(seed);
        EventStudyFit fit = event_study_fit(panel);
        const VectorXd oracle_beta = oracle::dummy_ols(day_indicators(panel), to_obs(panel.returns));
        REQUIRE(fit.beta.size() == 28);
        CHECK((fit.beta - oracle_beta).cwiseAbs().maxCoeff() < 1e-8);
        CHECK(fit.max_day_dot < 1e-8);
        CHECK(fit.assets == 5);
        CHECK(fit.dates == 40);
        CHECK(fit.offsets.front() == -13);
        CHECK(fit.offsets.back() == 14);
        CHECK((fit.se.array() > 0.0).all());
    }
}

TEST_CASE("fixed effects absorb per-asset and per-date constants") {
    EventPanel panel = small_panel(11);
    const VectorXd base = event_study_fit(panel).beta;
    EventPanel shifted = panel;
    for (auto& r : shifted.returns) {
        if (r.asset_id == asset_name(2)) r.value += 3.7;
        if (r.date == 9) r.value -= 1.25;
        if (r.date == 30) r.value += 0.5;
    }
    CHECK((event_study_fit(shifted).beta - base).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("planted event effect is recovered with calibrated standard errors") {
    int day0_hits = 0, null_hits = 0;
    double sum_sq = 0.0, sum_se = 0.0;
    const int seeds = 20;
    for (int seed = 0; seed < seeds; ++seed) {
        EventPanelData d = event_panel(200, 300, 0.02, 0.001, 1, 900 + static_cast<std::uint64_t>(seed));
        EventPanel panel;
        panel.events = d.events;
        panel.returns = d.returns;
        EventStudyFit fit = event_study_fit(panel);
        for (std::size_t i = 0; i < fit.offsets.size(); ++i) {
            const auto k = static_cast<Index>(i);
            const double err = fit.beta(k) - (fit.offsets[i] == 0 ? 0.02 : 0.0);
            sum_sq += err * err;
            sum_se += fit.se(k);
            if (fit.offsets[i] == 0) day0_hits += std::abs(err) < 2.0 * fit.se(k);
            else null_hits += std::abs(err) < 2.0 * fit.se(k);
        }
    }
    CHECK(day0_hits >= 17);
    const double coverage = null_hits / (27.0 * seeds);
    CHECK(coverage > 0.92);
    CHECK(coverage < 0.985);
    const double rmse = std::sqrt(sum_sq / (28.0 * seeds)), mean_se = sum_se / (28.0 * seeds);
    CHECK(rmse / mean_se == doctest::Approx(1.0).epsilon(0.15));
}

TEST_CASE("degenerate event panels") {
    EventPanel panel = small_panel(3);
    panel.events.clear();
    CHECK_THROWS_WITH_AS(event_study_fit(panel), doctest::Contains("collinear"), NumericalError);
    EventPanel tiny;
    tiny.returns = series({{"A", 1, 0.1}, {"A", 2, 0.2}});
    tiny.events = {{"A", 1}};
    CHECK_THROWS(event_study_fit(tiny));
}

TEST_CASE("three-asset two-day ledger") {
    const auto scores = std::vector<ScoreRecord>{
        {"A", 1, 0.9}, {"B", 1, 0.7}, {"C", 1, 0.2}, {"A", 2, 0.4}, {"B", 2, 0.8}, {"C", 2, 0.6}};
    const auto rets = series({{"A", 1, 0.03}, {"B", 1, -0.01}, {"C", 1, 0.02},
                              {"A", 2, -0.02}, {"B", 2, 0.01}, {"C", 2, 0.04}});
    const auto caps = series({{"A", 0, 2}, {"B", 0, 1}, {"C", 0, 1}, {"A", 1, 2}, {"B", 1, 1}, {"C", 1, 1}});
    BacktestConfig cfg;
    cfg.top_n = 2;
    const BacktestLedger l = portfolio_backtest(scores, rets, caps, cfg);
    REQUIRE(l.days.size() == 2);
    const double rate = 13.0 / 1e4;
    const auto& d1 = l.days[0];
    const auto& d2 = l.days[1];

    // Day 1: long A (2/3), B (1/3); short C (1/2) with half in cash.
    const double wa = 1.0 * (2.0 / 3.0), wb = 1.0 * (1.0 / 3.0);
    CHECK(d1.long_leg.weights == std::map<std::string, double>{{"A", wa}, {"B", wb}});
    CHECK(d1.short_leg.weights == std::map<std::string, double>{{"C", 0.5 * (1.0 / 1.0)}});
    CHECK(d1.short_leg.cash == 0.5);
    const double long1 = 0.0 + wa * 0.03 + wb * -0.01;
    CHECK(d1.long_leg.gross == long1);
    CHECK(d1.long_leg.turnover == 0.5 * (std::abs(wa) + std::abs(wb)));
    CHECK(d1.long_leg.cost == rate * d1.long_leg.turnover);
    CHECK(d1.short_leg.gross == -(0.5 * 0.02));
    CHECK(d1.short_leg.turnover == 0.25);
    CHECK(d1.long_leg.net == doctest::Approx(0.016666666666666666 - 0.00065).epsilon(1e-15));
    CHECK(d1.short_leg.net == doctest::Approx(-0.010325).epsilon(1e-15));
    CHECK(d1.net == 0.5 * (d1.long_leg.net + d1.short_leg.net));

    // Day 2: long B, C equally by cap; short A at half size.
    CHECK(d2.long_leg.weights == std::map<std::string, double>{{"B", 0.5}, {"C", 0.5}});
    CHECK(d2.short_leg.weights == std::map<std::string, double>{{"A", 0.5}});
    CHECK(d2.long_leg.gross == 0.0 + 0.5 * 0.01 + 0.5 * 0.04);
    CHECK(d2.long_leg.turnover == 0.5 * (std::abs(0.0 - wa) + std::abs(0.5 - wb) + std::abs(0.5 - 0.0)));
    CHECK(d2.long_leg.turnover == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(d2.short_leg.turnover == 0.5);
    CHECK(d2.short_leg.gross == -(0.0 + 0.5 * -0.02));
    CHECK(d2.long_leg.net == doctest::Approx(0.025 - 0.0013 * 2.0 / 3.0).epsilon(1e-15));
    CHECK(d2.short_leg.net == doctest::Approx(0.01 - 0.00065).epsilon(1e-15));
    check_identities(l);
}

TEST_CASE("backtest edge cases and properties") {
    PortfolioData p = portfolio_panel(40, 30, 0.02, 9);
    auto scores = to_scores(p.scores);
    BacktestConfig cfg;
    cfg.top_n = 10;
    const BacktestLedger base = portfolio_backtest(scores, p.returns, p.caps, cfg);
    CHECK(base.days.size() == 30);
    check_identities(base);

    auto scaled = p.caps;
    for (auto& c : scaled) c.value *= 1000.0;
    const BacktestLedger s = portfolio_backtest(scores, p.returns, scaled, cfg);
    for (std::size_t i = 0; i < base.days.size(); ++i) {
        for (const auto& [a, w] : base.days[i].long_leg.weights)
            CHECK(s.days[i].long_leg.weights.at(a) == doctest::Approx(w).epsilon(1e-14));
    }

    cfg.value_weighted = false;
    check_identities(portfolio_backtest(scores, p.returns, p.caps, cfg));

    auto flat = scores;
    for (auto& x : flat) x.score = 0.5;
    const BacktestLedger none = portfolio_backtest(flat, p.returns, p.caps, BacktestConfig{});
    for (const auto& d : none.days) {
        CHECK(d.long_leg.weights.empty());
        CHECK(d.short_leg.weights.empty());
        CHECK(d.net == 0.0);
        CHECK(d.long_leg.cost == 0.0);
    }

    double log_sum = 0.0, compounded = 1.0;
    for (const auto& d : base.days) {
        log_sum += std::log1p(d.net);
        compounded *= 1.0 + d.net;
    }
    CHECK(std::log(compounded) == doctest::Approx(log_sum).epsilon(1e-12));

    auto missing = p.returns;
    missing.erase(std::remove_if(missing.begin(), missing.end(),
                                 [](const ReturnRecord& r) { return r.date == 5; }),
                  missing.end());
    CHECK_THROWS_WITH_AS(portfolio_backtest(scores, missing, p.caps, BacktestConfig{}),
                         doctest::Contains("@5"), DataError);
    auto nocap = p.caps;
    nocap.erase(std::remove_if(nocap.begin(), nocap.end(), [](const ReturnRecord& r) { return r.date == 3; }),
                nocap.end());
    CHECK_THROWS_WITH_AS(portfolio_backtest(scores, p.returns, nocap, BacktestConfig{}),
                         doctest::Contains("@3"), DataError);
}

TEST_CASE("APR and Sharpe ratio") {
    const std::vector<double> r{0.01, -0.005, 0.002, 0.0, 0.007, -0.012, 0.004, 0.003, -0.001, 0.006};
    const double mean = 0.0014;
    double ss = 0.0;
    for (double x : r) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / 9.0);
    const Performance perf = apr_sharpe(r);
    CHECK(std::abs(perf.apr - mean * 25200.0) < 1e-10);
    CHECK(std::abs(perf.sharpe - mean / sd * std::sqrt(252.0)) < 1e-10);
    CHECK(std::abs(apr_sharpe({0.01, -0.01, 0.01, -0.01}).apr) < 1e-12);
    CHECK_THROWS_AS(apr_sharpe({0.002, 0.002, 0.002}), NumericalError);
    CHECK_THROWS(apr_sharpe({0.01}));
}

TEST_CASE("asset series round trip") {
    const auto rows = series({{"A", 1, 0.25}, {"B", 2, -1e-17}});
    const auto dir = std::filesystem::temp_directory_path() / "farm_series_test.csv";
    save_asset_series(rows, "ret", dir);
    const auto back = load_asset_series(dir);
    REQUIRE(back.size() == 2);
    CHECK(back[1].asset_id == "B");
    CHECK(back[1].date == 2);
    CHECK(back[1].value == -1e-17);
    std::filesystem::remove(dir);
}

}  // TEST_SUITE
