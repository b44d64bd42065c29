#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "farm/augment.hpp"
#include "farm/finance.hpp"
#include "farm/learners.hpp"
#include "farm/matrix_io.hpp"
#include "farm/screening.hpp"

namespace farm {

struct SyntheticSpec {
    std::string kind = "factor-regression";  // factor-regression | interaction-signal | screening-sparse
    Index n = 1000;
    Index p = 100;
    Index k = 3;
    double snr = 5.0;
    double noise_sd = 0.1;
    Index n_active = 5;
    double min_coef = 2.0;
    std::optional<std::uint64_t> seed;  // unset: the run seed
};

struct DataSpec {
    enum class Kind { files, panel, synthetic } kind = Kind::files;
    std::filesystem::path x;  // .csv or .bin
    std::filesystem::path y;
    bool header = true;
    std::filesystem::path panel;
    SyntheticSpec synthetic;
};

struct ExperimentSpec {
    std::string name;
    AugmentSpec augment;
};

struct ScreenSpec {
    std::optional<Index> m;         // unset: no screening
    std::optional<LossKind> loss;   // unset: logistic for binary tasks, squared otherwise
};

struct LearnerConfig {
    LearnerSpec base;
    std::vector<double> grid;  // gamma1 (lasso) or gamma2 (ridge); empty: no tuning
    int folds = 5;
    bool time_ordered = true;
};

struct EvaluationSpec {
    enum class Mode { rolling, fixed } mode = Mode::rolling;
    Index m = 0;
    Index h = 1;
    Index n_train = 0;
};

struct BacktestSpec {
    std::filesystem::path scores;
    std::filesystem::path returns;
    std::filesystem::path caps;
    BacktestConfig config;
};

struct EventStudySpec {
    std::filesystem::path returns;
    std::filesystem::path scores;  // either scores (events selected by quantile)
    std::filesystem::path events;  // or explicit events: asset_id,date,sign (+1/-1)
    double quantile = 0.05;
    int first_offset = -13;
    int last_offset = 14;
};

struct PipelineConfig {
    nlohmann::json raw;
    std::filesystem::path base_dir;
    std::uint64_t seed = 0;
    int threads = 0;  // 0: hardware concurrency
    std::filesystem::path output = "out";

    std::optional<DataSpec> data;
    Task task = Task::regression;
    std::optional<ScaleMode> scale;
    std::optional<Index> top_frequency;
    std::vector<ExperimentSpec> experiments;
    ScreenSpec screen;
    LearnerConfig learner;
    EvaluationSpec evaluation;
    int repetitions = 1;
    bool save_models = false;

    std::optional<BacktestSpec> backtest;
    std::optional<EventStudySpec> event_study;

    // FNV-1a 64 of the canonical JSON dump (seed override included), hex.
    std::string hash() const;
    std::filesystem::path resolve(const std::filesystem::path& p) const;
};

// Strict parse: unknown keys and ill-typed values throw ConfigError naming
// the key path and its line in `text`.
PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".");
PipelineConfig load_config(const std::filesystem::path& path);

// Overrides the seed in both the typed fields and `raw`, so the hash follows it.
void set_seed(PipelineConfig& config, std::uint64_t seed);

std::string fnv1a_hex(const std::string& bytes);

Task task_from_string(const std::string& name);
std::string to_string(Task task);

}  // namespace farm
