#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "farm/config.hpp"

namespace farm {

struct CommonOptions {
    std::filesystem::path config;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::filesystem::path> out;
    bool dry_run = false;
};

struct BacktestOptions {
    std::filesystem::path scores, returns, caps;
    std::optional<Index> top_n;
    std::optional<double> threshold;
    std::optional<double> cost_bps;
    std::optional<std::string> weighting;
};

struct EventStudyOptions {
    std::filesystem::path returns, scores, events;
    std::optional<double> quantile;
};

struct SynthOptions {
    std::string kind;
    std::uint64_t seed = 0;
    std::filesystem::path out = "synth";
    Index n = 1000, p = 100, k = 3;
    double snr = 5.0;
    double noise_sd = 0.1;
    Index n_active = 5;
    double min_coef = 2.0;
    Index assets = 200, days = 300;
    double beta0 = 0.02;
    double event_noise_sd = 0.001;
    Index events_per_asset = 1;
    double signal = 0.02;
};

// Each command returns the process exit code and throws farm::Error on
// failure; run_cli maps errors to codes 2 (config/usage), 3 (data) and
// 4 (numerical).
int cmd_factors(const CommonOptions& opts, const std::string& experiment);
int cmd_run(const CommonOptions& opts);
int cmd_screen(const CommonOptions& opts, const std::string& experiment);
int cmd_backtest(const CommonOptions& opts, const BacktestOptions& bt);
int cmd_event_study(const CommonOptions& opts, const EventStudyOptions& es);
int cmd_synth(const SynthOptions& opts);

int run_cli(int argc, char** argv);

}  // namespace farm
