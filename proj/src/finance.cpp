#include "farm/finance.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>

#include <Eigen/QR>
#include <fmt/format.h>

#include "farm/error.hpp"
#include "farm/matrix_io.hpp"

namespace farm {

namespace {

using AssetDate = std::pair<std::string, long>;

std::string asset_date(const std::string& asset, long date) { return fmt::format("{}@{}", asset, date); }

std::map<AssetDate, double> index_series(const std::vector<ReturnRecord>& rows, const char* what) {
    std::map<AssetDate, double> out;
    for (const auto& r : rows) {
        if (!std::isfinite(r.value))
            throw DataError(fmt::format("non-finite {} for {}", what, asset_date(r.asset_id, r.date)));
        if (!out.emplace(AssetDate{r.asset_id, r.date}, r.value).second)
            throw DataError(fmt::format("duplicate {} for {}", what, asset_date(r.asset_id, r.date)));
    }
    return out;
}

}  // namespace

std::vector<ScoreRecord> average_same_day(const std::vector<ScoreRecord>& scores) {
    std::map<std::pair<long, std::string>, std::pair<double, int>> acc;
    for (const auto& s : scores) {
        if (!std::isfinite(s.score))
            throw DataError(fmt::format("non-finite score for {}", asset_date(s.asset_id, s.date)));
        auto& slot = acc[{s.date, s.asset_id}];
        slot.first += s.score;
        slot.second += 1;
    }
    std::vector<ScoreRecord> out;
    out.reserve(acc.size());
    for (const auto& [key, sum] : acc) out.push_back({key.second, key.first, sum.first / sum.second});
    return out;
}

std::vector<ScoreRecord> scores_from_regression(const std::vector<ScoreRecord>& predictions, double train_mean) {
    std::vector<ScoreRecord> shifted = predictions;
    for (auto& s : shifted) s.score = s.score - train_mean + 0.5;
    return average_same_day(shifted);
}

std::vector<ReturnRecord> load_asset_series(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError(fmt::format("cannot open {}", path.string()));
    std::string line;
    std::vector<ReturnRecord> rows;
    std::size_t line_no = 0;
    bool header = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != 3)
            throw DataError(fmt::format("{}: line {}: expected 3 columns, got {}", path.string(), line_no,
                                        cells.size()));
        if (header) {
            header = false;
            if (cells[0] != "asset_id" || cells[1] != "date")
                throw DataError(fmt::format("{}: header must start with asset_id,date", path.string()));
            continue;
        }
        ReturnRecord r;
        r.asset_id = cells[0];
        double date = parse_real(cells[1], line_no, 2);
        if (date != std::floor(date))
            throw DataError(fmt::format("{}: line {}: date must be an integer", path.string(), line_no));
        r.date = static_cast<long>(date);
        r.value = parse_real(cells[2], line_no, 3);
        rows.push_back(std::move(r));
    }
    if (header) throw DataError(fmt::format("{}: missing header", path.string()));
    return rows;
}

void save_asset_series(const std::vector<ReturnRecord>& rows, const std::string& value_name,
                       const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
    out << "asset_id,date," << value_name << '\n';
    for (const auto& r : rows) out << fmt::format("{},{},{:.17g}\n", r.asset_id, r.date, r.value);
}

std::vector<ScoreRecord> to_scores(const std::vector<ReturnRecord>& rows) {
    std::vector<ScoreRecord> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back({r.asset_id, r.date, r.value});
    return out;
}

std::vector<Event> select_events(const std::vector<ScoreRecord>& scores, double quantile, double center) {
    if (!(quantile > 0.0 && quantile <= 1.0))
        throw ConfigError(fmt::format("event quantile must be in (0, 1], got {}", quantile));
    auto averaged = average_same_day(scores);
    std::vector<Event> pos, neg;
    for (const auto& s : averaged) {
        if (s.score > center) pos.push_back({s.asset_id, s.date, EventSign::positive, s.score});
        if (s.score < center) neg.push_back({s.asset_id, s.date, EventSign::negative, s.score});
    }
    auto cut = [&](std::vector<Event>& v) {
        // averaged is already in (date, asset) order, so stable_sort keeps that order on ties.
        std::stable_sort(v.begin(), v.end(), [&](const Event& a, const Event& b) {
            return std::abs(a.score - center) > std::abs(b.score - center);
        });
        auto k = static_cast<std::size_t>(std::ceil(quantile * static_cast<double>(v.size()) - 1e-9));
        v.resize(std::min(k, v.size()));
    };
    cut(pos);
    cut(neg);
    pos.insert(pos.end(), neg.begin(), neg.end());
    return pos;
}

MatrixXd day_indicators(const EventPanel& panel) {
    if (panel.last_offset < panel.first_offset) throw UsageError("event window is empty");
    const auto width = static_cast<Index>(panel.last_offset - panel.first_offset + 1);
    std::unordered_map<std::string, std::vector<long>> events;
    for (const auto& e : panel.events) events[e.asset_id].push_back(e.date);
    MatrixXd d = MatrixXd::Zero(static_cast<Index>(panel.returns.size()), width);
    for (std::size_t i = 0; i < panel.returns.size(); ++i) {
        auto it = events.find(panel.returns[i].asset_id);
        if (it == events.end()) continue;
        for (long date : it->second) {
            long p = panel.returns[i].date - date;
            if (p >= panel.first_offset && p <= panel.last_offset)
                d(static_cast<Index>(i), static_cast<Index>(p - panel.first_offset)) = 1.0;
        }
    }
    return d;
}

nlohmann::json EventStudyFit::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t j = 0; j < offsets.size(); ++j) {
        const auto jj = static_cast<Index>(j);
        rows.push_back({{"offset", offsets[j]}, {"beta", beta(jj)}, {"se", se(jj)}});
    }
    return {{"coefficients", rows},
            {"observations", observations},
            {"assets", assets},
            {"dates", dates},
            {"sigma2", sigma2},
            {"demean_passes", demean_passes},
            {"max_day_dot", max_day_dot}};
}

EventStudyFit event_study_fit(const EventPanel& panel, double tol) {
    const Index n = static_cast<Index>(panel.returns.size());
    std::map<std::string, Index> asset_ix;
    std::map<long, Index> date_ix;
    std::set<AssetDate> seen;
    for (const auto& r : panel.returns) {
        if (!std::isfinite(r.value))
            throw DataError(fmt::format("non-finite return for {}", asset_date(r.asset_id, r.date)));
        if (!seen.insert({r.asset_id, r.date}).second)
            throw DataError(fmt::format("duplicate return for {}", asset_date(r.asset_id, r.date)));
        asset_ix.emplace(r.asset_id, 0);
        date_ix.emplace(r.date, 0);
    }
    if (asset_ix.size() < 2 || date_ix.size() < 2)
        throw DataError(fmt::format("event panel needs at least 2 assets and 2 dates, got {} and {}",
                                    asset_ix.size(), date_ix.size()));
    Index next = 0;
    for (auto& [_, v] : asset_ix) v = next++;
    next = 0;
    for (auto& [_, v] : date_ix) v = next++;
    const Index na = static_cast<Index>(asset_ix.size());
    const Index nt = static_cast<Index>(date_ix.size());
    std::vector<Index> ai(static_cast<std::size_t>(n)), ti(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        const auto& r = panel.returns[static_cast<std::size_t>(i)];
        ai[static_cast<std::size_t>(i)] = asset_ix[r.asset_id];
        ti[static_cast<std::size_t>(i)] = date_ix[r.date];
    }

    const MatrixXd d = day_indicators(panel);
    const Index k = d.cols();
    MatrixXd z(n, k + 1);
    z.leftCols(k) = d;
    for (Index i = 0; i < n; ++i) z(i, k) = panel.returns[static_cast<std::size_t>(i)].value;

    VectorXd count_a = VectorXd::Zero(na), count_t = VectorXd::Zero(nt);
    for (Index i = 0; i < n; ++i) {
        count_a(ai[static_cast<std::size_t>(i)]) += 1.0;
        count_t(ti[static_cast<std::size_t>(i)]) += 1.0;
    }
    const double scale = std::max(1.0, z.cwiseAbs().maxCoeff());
    int passes = 0;
    const int max_passes = 100000;
    for (;;) {
        MatrixXd ma = MatrixXd::Zero(na, k + 1), mt = MatrixXd::Zero(nt, k + 1);
        for (Index i = 0; i < n; ++i) ma.row(ai[static_cast<std::size_t>(i)]) += z.row(i);
        for (Index a = 0; a < na; ++a) ma.row(a) /= count_a(a);
        for (Index i = 0; i < n; ++i) z.row(i) -= ma.row(ai[static_cast<std::size_t>(i)]);
        for (Index i = 0; i < n; ++i) mt.row(ti[static_cast<std::size_t>(i)]) += z.row(i);
        for (Index t = 0; t < nt; ++t) mt.row(t) /= count_t(t);
        for (Index i = 0; i < n; ++i) z.row(i) -= mt.row(ti[static_cast<std::size_t>(i)]);
        ++passes;
        const double change = std::max(ma.cwiseAbs().maxCoeff(), mt.cwiseAbs().maxCoeff());
        if (passes > 1 && change < tol * scale) break;
        if (passes >= max_passes)
            throw NumericalError(fmt::format("fixed-effect demeaning did not converge after {} passes", passes));
    }

    const MatrixXd dt = z.leftCols(k);
    const VectorXd yt = z.col(k);
    std::vector<int> bad;
    const double col_tol = 1e-9 * std::sqrt(static_cast<double>(n));
    for (Index j = 0; j < k; ++j)
        if (dt.col(j).norm() <= col_tol) bad.push_back(panel.first_offset + static_cast<int>(j));
    if (bad.empty()) {
        Eigen::ColPivHouseholderQR<MatrixXd> qr(dt);
        qr.setThreshold(1e-10);
        if (qr.rank() < k) {
            auto perm = qr.colsPermutation().indices();
            for (Index j = qr.rank(); j < k; ++j) bad.push_back(panel.first_offset + static_cast<int>(perm(j)));
            std::sort(bad.begin(), bad.end());
        }
    }
    if (!bad.empty()) {
        std::string list;
        for (std::size_t i = 0; i < bad.size(); ++i) list += (i ? "," : "") + std::to_string(bad[i]);
        throw NumericalError(fmt::format("collinear Day indicators at offsets [{}]", list));
    }

    const Index dof = n - k - (na + nt - 1);
    if (dof < 1) throw NumericalError(fmt::format("event panel has no residual degrees of freedom ({})", dof));
    const MatrixXd gram = dt.transpose() * dt;
    Eigen::LDLT<MatrixXd> ldlt(gram);
    const VectorXd beta = ldlt.solve(dt.transpose() * yt);
    const VectorXd resid = yt - dt * beta;

    EventStudyFit fit;
    for (int p = panel.first_offset; p <= panel.last_offset; ++p) fit.offsets.push_back(p);
    fit.beta = beta;
    fit.sigma2 = resid.squaredNorm() / static_cast<double>(dof);
    const MatrixXd inv = ldlt.solve(MatrixXd::Identity(k, k));
    fit.se = (fit.sigma2 * inv.diagonal()).cwiseMax(0.0).cwiseSqrt();
    fit.observations = n;
    fit.assets = na;
    fit.dates = nt;
    fit.demean_passes = passes;
    fit.max_day_dot = (dt.transpose() * resid).cwiseAbs().maxCoeff();
    return fit;
}

void BacktestLedger::save_csv(const std::filesystem::path& ledger, const std::filesystem::path& holdings,
                              const std::string& preamble) const {
    std::ofstream out(ledger);
    if (!out) throw DataError(fmt::format("cannot write {}", ledger.string()));
    out << preamble;
    out << "date,long_invested,long_cash,long_gross,long_turnover,long_cost,long_net,"
           "short_invested,short_cash,short_gross,short_turnover,short_cost,short_net,net\n";
    auto leg = [&](const LegDay& l) {
        return fmt::format("{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}", 1.0 - l.cash, l.cash, l.gross,
                           l.turnover, l.cost, l.net);
    };
    for (const auto& d : days)
        out << fmt::format("{},{},{},{:.17g}\n", d.date, leg(d.long_leg), leg(d.short_leg), d.net);

    std::ofstream h(holdings);
    if (!h) throw DataError(fmt::format("cannot write {}", holdings.string()));
    h << preamble << "date,leg,asset_id,weight\n";
    for (const auto& d : days) {
        for (const auto& [a, w] : d.long_leg.weights) h << fmt::format("{},long,{},{:.17g}\n", d.date, a, w);
        for (const auto& [a, w] : d.short_leg.weights) h << fmt::format("{},short,{},{:.17g}\n", d.date, a, w);
    }
}

namespace {

std::map<std::string, double> leg_weights(const std::vector<ScoreRecord>& chosen, long date,
                                          const std::map<AssetDate, double>& caps, const BacktestConfig& cfg) {
    std::map<std::string, double> w;
    if (chosen.empty()) return w;
    const double invested = static_cast<double>(chosen.size()) / static_cast<double>(cfg.top_n);
    if (!cfg.value_weighted) {
        for (const auto& s : chosen) w[s.asset_id] = invested / static_cast<double>(chosen.size());
        return w;
    }
    double total = 0.0;
    std::vector<double> cap(chosen.size());
    for (std::size_t i = 0; i < chosen.size(); ++i) {
        auto it = caps.find({chosen[i].asset_id, date - 1});
        if (it == caps.end())
            throw DataError(fmt::format("missing prior-day market cap for {}", asset_date(chosen[i].asset_id, date - 1)));
        if (!(it->second > 0.0))
            throw DataError(fmt::format("non-positive market cap for {}", asset_date(chosen[i].asset_id, date - 1)));
        cap[i] = it->second;
        total += it->second;
    }
    for (std::size_t i = 0; i < chosen.size(); ++i) w[chosen[i].asset_id] = invested * (cap[i] / total);
    return w;
}

double turnover(const std::map<std::string, double>& now, const std::map<std::string, double>& before) {
    std::set<std::string> names;
    for (const auto& [a, _] : now) names.insert(a);
    for (const auto& [a, _] : before) names.insert(a);
    double sum = 0.0;
    for (const auto& a : names) {
        auto x = now.find(a), y = before.find(a);
        sum += std::abs((x == now.end() ? 0.0 : x->second) - (y == before.end() ? 0.0 : y->second));
    }
    return 0.5 * sum;
}

}  // namespace

BacktestLedger portfolio_backtest(const std::vector<ScoreRecord>& scores, const std::vector<ReturnRecord>& returns,
                                  const std::vector<ReturnRecord>& caps, const BacktestConfig& config) {
    if (config.top_n < 1) throw ConfigError(fmt::format("top_n must be >= 1, got {}", config.top_n));
    if (!(config.cost_bps >= 0.0) || !std::isfinite(config.cost_bps))
        throw ConfigError(fmt::format("cost_bps must be a non-negative number, got {}", config.cost_bps));
    const auto ret = index_series(returns, "return");
    const auto cap = index_series(caps, "market cap");
    const double rate = config.cost_bps / 1e4;

    std::map<long, std::vector<ScoreRecord>> by_date;
    for (const auto& s : average_same_day(scores)) by_date[s.date].push_back(s);

    BacktestLedger ledger;
    ledger.config = config;
    std::map<std::string, double> prev_long, prev_short;
    for (const auto& [date, day] : by_date) {
        std::vector<ScoreRecord> up, down;
        for (const auto& s : day) {
            if (s.score > config.threshold) up.push_back(s);
            if (s.score < config.threshold) down.push_back(s);
        }
        std::stable_sort(up.begin(), up.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
        std::stable_sort(down.begin(), down.end(), [](const auto& a, const auto& b) { return a.score < b.score; });
        const auto cap_n = static_cast<std::size_t>(config.top_n);
        if (up.size() > cap_n) up.resize(cap_n);
        if (down.size() > cap_n) down.resize(cap_n);

        LedgerDay row;
        row.date = date;
        auto fill = [&](LegDay& leg, const std::vector<ScoreRecord>& chosen, std::map<std::string, double>& prev,
                        double sign) {
            leg.weights = leg_weights(chosen, date, cap, config);
            double invested = 0.0;
            for (const auto& [a, w] : leg.weights) {
                auto it = ret.find({a, date});
                if (it == ret.end()) throw DataError(fmt::format("missing return for {}", asset_date(a, date)));
                leg.basket_return += w * it->second;
                invested += w;
            }
            leg.cash = 1.0 - invested;
            leg.gross = sign * leg.basket_return;
            leg.turnover = turnover(leg.weights, prev);
            leg.cost = rate * leg.turnover;
            leg.net = leg.gross - leg.cost;
            prev = leg.weights;
        };
        fill(row.long_leg, up, prev_long, 1.0);
        fill(row.short_leg, down, prev_short, -1.0);
        row.net = 0.5 * (row.long_leg.net + row.short_leg.net);
        ledger.days.push_back(std::move(row));
    }
    return ledger;
}

Performance apr_sharpe(const std::vector<double>& daily_returns) {
    if (daily_returns.size() < 2)
        throw DataError(fmt::format("APR/SR need at least 2 daily returns, got {}", daily_returns.size()));
    double mean = 0.0;
    for (double r : daily_returns) mean += r;
    mean /= static_cast<double>(daily_returns.size());
    double ss = 0.0;
    for (double r : daily_returns) ss += (r - mean) * (r - mean);
    const double sd = std::sqrt(ss / static_cast<double>(daily_returns.size() - 1));
    if (!(sd > 0.0)) throw NumericalError("daily returns have zero standard deviation; Sharpe ratio undefined");
    return {mean * 252.0 * 100.0, mean / sd * std::sqrt(252.0)};
}

}  // namespace farm
