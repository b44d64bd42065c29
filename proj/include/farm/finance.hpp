#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "farm/linalg.hpp"
#include "farm/synth.hpp"

namespace farm {

struct ScoreRecord {
    std::string asset_id;
    long date = 0;
    double score = 0.0;
};

// Averages duplicate (asset, date) scores; output sorted by (date, asset).
std::vector<ScoreRecord> average_same_day(const std::vector<ScoreRecord>& scores);

// score = prediction - train_mean + 0.5, then same-day averaging.
std::vector<ScoreRecord> scores_from_regression(const std::vector<ScoreRecord>& predictions, double train_mean);

// Generic (asset_id, date, value) CSV with a header row; the third column
// name is not checked.
std::vector<ReturnRecord> load_asset_series(const std::filesystem::path& path);
void save_asset_series(const std::vector<ReturnRecord>& rows, const std::string& value_name,
                       const std::filesystem::path& path);
std::vector<ScoreRecord> to_scores(const std::vector<ReturnRecord>& rows);

enum class EventSign { positive, negative };

struct Event {
    std::string asset_id;
    long date = 0;
    EventSign sign = EventSign::positive;
    double score = 0.0;
};

// Positive events: the top ceil(q * N+) of scores above `center` by
// distance from center; negative events mirror this below center. Ties in
// magnitude go to the earlier (date, asset).
std::vector<Event> select_events(const std::vector<ScoreRecord>& scores, double quantile = 0.05,
                                 double center = 0.5);

struct EventPanel {
    std::vector<EventRecord> events;   // one sign at a time
    std::vector<ReturnRecord> returns;
    int first_offset = -13;
    int last_offset = 14;
};

struct EventStudyFit {
    std::vector<int> offsets;
    VectorXd beta;
    VectorXd se;
    Index observations = 0;
    Index assets = 0;
    Index dates = 0;
    double sigma2 = 0.0;
    int demean_passes = 0;
    double max_day_dot = 0.0;  // max |D_p^T e| after fitting

    nlohmann::json to_json() const;
};

// Two-way fixed-effects within estimator: returns and the Day_p indicators
// (offset p = date - event date, set to 1 for any covering event) are
// demeaned alternately by asset and by date until the largest correction
// is below `tol`, then regressed by OLS. Conventional OLS standard errors
// with n - k - (assets + dates - 1) residual degrees of freedom.
EventStudyFit event_study_fit(const EventPanel& panel, double tol = 1e-10);

// Indicator matrix (observations x offsets) in the row order of
// panel.returns, shared with the dummy-variable oracle in the tests.
MatrixXd day_indicators(const EventPanel& panel);

struct BacktestConfig {
    Index top_n = 50;
    double threshold = 0.5;
    double cost_bps = 13.0;  // round trip
    bool value_weighted = true;
};

struct LegDay {
    std::map<std::string, double> weights;
    double cash = 1.0;
    double basket_return = 0.0;  // sum of w_i r_i
    double gross = 0.0;          // basket_return for long, -basket_return for short
    double turnover = 0.0;       // half the sum of |w_t - w_{t-1}|
    double cost = 0.0;           // cost_bps / 1e4 * turnover
    double net = 0.0;            // gross - cost
};

struct LedgerDay {
    long date = 0;
    LegDay long_leg;
    LegDay short_leg;
    double net = 0.0;  // (long_leg.net + short_leg.net) / 2
};

struct BacktestLedger {
    BacktestConfig config;
    std::vector<LedgerDay> days;

    void save_csv(const std::filesystem::path& ledger, const std::filesystem::path& holdings,
                  const std::string& preamble = "") const;
};

// Daily rebalance over the dates that carry scores. Long leg: up to top_n
// assets with score > threshold (highest first); short leg: up to top_n
// with score < threshold (lowest first). A leg holding k names invests
// k / top_n of its capital, split by prior-day (date - 1) market cap or
// equally; the rest is cash earning zero.
BacktestLedger portfolio_backtest(const std::vector<ScoreRecord>& scores, const std::vector<ReturnRecord>& returns,
                                  const std::vector<ReturnRecord>& caps, const BacktestConfig& config);

struct Performance {
    double apr = 0.0;  // percent
    double sharpe = 0.0;
};

// APR = 252 * 100 * mean; SR = sqrt(252) * mean / sd (n-1 divisor).
Performance apr_sharpe(const std::vector<double>& daily_returns);

}  // namespace farm
