#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "farm/linalg.hpp"

namespace farm {

// Planted-model generators behind `farm synth` and the test suites. Every
// generator is a pure function of its parameters and seed.

MatrixXd standard_normal(Index rows, Index cols, std::uint64_t seed);

struct FactorData {
    MatrixXd x;
    VectorXd y;
    MatrixXd f_true;
    MatrixXd u_true;
    MatrixXd loadings;
    nlohmann::json manifest;
};

// x = B f + u, f ~ N(0, I_K), B ~ N(0, 1), u ~ N(0, K / snr) per entry;
// y = f^T gamma + 0.1 * noise.
FactorData factor_regression(Index n, Index p, Index k, double snr, std::uint64_t seed);

// Two latent drivers g; x = Lambda g + 0.5 e. The response is quadratic
// in g: y = g1 g2 + 0.5 (g1^2 - g2^2) + noise_sd * eps, so its signal
// lives in the leading factors of the pairwise interaction matrix while
// being uncorrelated with x itself.
FactorData interaction_signal(Index n, Index p, double noise_sd, std::uint64_t seed);

struct SparseData {
    FactorData data;
    std::vector<Index> active;
    VectorXd beta;
};

// x = B f + u; y = f^T gamma + sum_{j in active} beta_j u_j + noise_sd * eps.
SparseData screening_sparse(Index n, Index p, Index k, Index n_active, double min_coef, double noise_sd,
                            std::uint64_t seed);

struct EventRecord {
    std::string asset_id;
    long date = 0;
};

struct ReturnRecord {
    std::string asset_id;
    long date = 0;
    double value = 0.0;
};

struct EventPanelData {
    std::vector<EventRecord> events;
    std::vector<ReturnRecord> returns;
    nlohmann::json manifest;
};

// Balanced panel: ret_it = beta0 * Day0_it + delta_i + mu_t + N(0, noise_sd^2),
// `events_per_asset` event dates per asset drawn away from the edges.
EventPanelData event_panel(Index assets, Index days, double beta0, double noise_sd, Index events_per_asset,
                           std::uint64_t seed);

struct PortfolioData {
    std::vector<ReturnRecord> scores;   // dates 1..days
    std::vector<ReturnRecord> returns;  // dates 1..days
    std::vector<ReturnRecord> caps;     // dates 0..days
    nlohmann::json manifest;
};

// Scores 0.5 + 0.15 z clipped to [0, 1]; returns 0.01 z' + signal * (score - 0.5);
// caps follow a log random walk started at exp(N(3, 1)).
PortfolioData portfolio_panel(Index assets, Index days, double signal, std::uint64_t seed);

std::string asset_name(Index i);

}  // namespace farm
