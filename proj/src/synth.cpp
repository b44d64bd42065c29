#include "farm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <fmt/format.h>

namespace farm {

MatrixXd standard_normal(Index rows, Index cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    MatrixXd m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
    return m;
}

std::string asset_name(Index i) { return fmt::format("A{:04d}", i); }

FactorData factor_regression(Index n, Index p, Index k, double snr, std::uint64_t seed) {
    FactorData d;
    d.f_true = standard_normal(n, k, seed);
    d.loadings = standard_normal(p, k, seed + 1);
    const double noise_sd = std::sqrt(static_cast<double>(k) / snr);
    d.u_true = noise_sd * standard_normal(n, p, seed + 2);
    d.x = d.f_true * d.loadings.transpose() + d.u_true;
    VectorXd gamma = VectorXd::LinSpaced(k, 1.0, -1.0);
    if (k == 1) gamma(0) = 1.0;
    d.y = d.f_true * gamma + 0.1 * standard_normal(n, 1, seed + 3).col(0);
    d.manifest = {{"kind", "factor-regression"}, {"n", n},   {"p", p},
                  {"k", k},                      {"snr", snr}, {"noise_sd", noise_sd},
                  {"gamma", std::vector<double>(gamma.data(), gamma.data() + k)},
                  {"y_noise_sd", 0.1},           {"seed", seed}};
    return d;
}

FactorData interaction_signal(Index n, Index p, double noise_sd, std::uint64_t seed) {
    FactorData d;
    d.f_true = standard_normal(n, 2, seed);
    d.loadings = standard_normal(p, 2, seed + 1);
    d.u_true = 0.5 * standard_normal(n, p, seed + 2);
    d.x = d.f_true * d.loadings.transpose() + d.u_true;
    const VectorXd eps = standard_normal(n, 1, seed + 3).col(0);
    d.y.resize(n);
    for (Index i = 0; i < n; ++i) {
        const double g1 = d.f_true(i, 0), g2 = d.f_true(i, 1);
        d.y(i) = g1 * g2 + 0.5 * (g1 * g1 - g2 * g2) + noise_sd * eps(i);
    }
    d.manifest = {{"kind", "interaction-signal"},
                  {"n", n},
                  {"p", p},
                  {"latent_dim", 2},
                  {"x_noise_sd", 0.5},
                  {"response", "g1*g2 + 0.5*(g1^2 - g2^2) + noise_sd*eps"},
                  {"coef_g1g2", 1.0},
                  {"coef_g1sq", 0.5},
                  {"coef_g2sq", -0.5},
                  {"noise_sd", noise_sd},
                  {"seed", seed}};
    return d;
}

SparseData screening_sparse(Index n, Index p, Index k, Index n_active, double min_coef, double noise_sd,
                            std::uint64_t seed) {
    SparseData s;
    FactorData& d = s.data;
    d.f_true = standard_normal(n, k, seed);
    d.loadings = standard_normal(p, k, seed + 1);
    d.u_true = standard_normal(n, p, seed + 2);
    d.x = d.f_true * d.loadings.transpose() + d.u_true;
    std::mt19937_64 rng(seed + 3);
    std::set<Index> chosen;
    std::uniform_int_distribution<Index> pick(0, p - 1);
    while (static_cast<Index>(chosen.size()) < n_active) chosen.insert(pick(rng));
    s.active.assign(chosen.begin(), chosen.end());
    s.beta = VectorXd::Zero(p);
    std::uniform_real_distribution<double> mag(min_coef, min_coef + 1.0);
    std::bernoulli_distribution sign(0.5);
    for (Index j : s.active) s.beta(j) = (sign(rng) ? 1.0 : -1.0) * mag(rng);
    const VectorXd gamma = VectorXd::Ones(k);
    d.y = d.f_true * gamma + d.u_true * s.beta + noise_sd * standard_normal(n, 1, seed + 4).col(0);
    d.manifest = {{"kind", "screening-sparse"}, {"n", n}, {"p", p}, {"k", k}, {"active", s.active},
                  {"noise_sd", noise_sd},       {"seed", seed}};
    return s;
}

EventPanelData event_panel(Index assets, Index days, double beta0, double noise_sd, Index events_per_asset,
                           std::uint64_t seed) {
    EventPanelData out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> delta(static_cast<std::size_t>(assets)), mu(static_cast<std::size_t>(days));
    for (auto& v : delta) v = 0.01 * normal(rng);
    for (auto& v : mu) v = 0.01 * normal(rng);
    std::uniform_int_distribution<long> when(14, static_cast<long>(days) - 15);
    for (Index i = 0; i < assets; ++i) {
        std::set<long> dates;
        while (static_cast<Index>(dates.size()) < events_per_asset) dates.insert(when(rng));
        std::set<long> event_days(dates.begin(), dates.end());
        for (long d : dates) out.events.push_back({asset_name(i), d});
        for (Index t = 0; t < days; ++t) {
            const double effect = event_days.count(static_cast<long>(t)) ? beta0 : 0.0;
            out.returns.push_back({asset_name(i), static_cast<long>(t),
                                   effect + delta[static_cast<std::size_t>(i)] + mu[static_cast<std::size_t>(t)] +
                                       noise_sd * normal(rng)});
        }
    }
    out.manifest = {{"kind", "event-panel"}, {"assets", assets},     {"days", days},  {"beta0", beta0},
                    {"noise_sd", noise_sd},  {"events_per_asset", events_per_asset}, {"seed", seed}};
    return out;
}

PortfolioData portfolio_panel(Index assets, Index days, double signal, std::uint64_t seed) {
    PortfolioData out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Index i = 0; i < assets; ++i) {
        double log_cap = 3.0 + normal(rng);
        out.caps.push_back({asset_name(i), 0, std::exp(log_cap)});
        for (Index t = 1; t <= days; ++t) {
            const double score = std::clamp(0.5 + 0.15 * normal(rng), 0.0, 1.0);
            const double ret = 0.01 * normal(rng) + signal * (score - 0.5);
            log_cap += ret;
            out.scores.push_back({asset_name(i), static_cast<long>(t), score});
            out.returns.push_back({asset_name(i), static_cast<long>(t), ret});
            out.caps.push_back({asset_name(i), static_cast<long>(t), std::exp(log_cap)});
        }
    }
    out.manifest = {{"kind", "portfolio-fixture"}, {"assets", assets}, {"days", days}, {"signal", signal}, {"seed", seed}};
    return out;
}

}  // namespace farm
