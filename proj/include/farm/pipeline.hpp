#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "farm/bundle.hpp"
#include "farm/config.hpp"
#include "farm/evaluate.hpp"

namespace farm {

struct Dataset {
    Matrix x;
    VectorXd y;
    std::vector<std::string> row_ids;  // "asset@date" for panel data, else empty
    nlohmann::json manifest;           // synthetic generator parameters
};

// Reads (or generates) the configured data. Binary tasks require y in
// {0, 1}; multiclass tasks require integer labels.
Dataset load_dataset(const PipelineConfig& config);

// Stage seed derived from the repetition seed, window index and stage id.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t window, std::uint64_t stage);

struct WindowResult {
    VectorXd predictions;
    double train_mean = 0.0;
    nlohmann::json info;  // chosen K, kept columns, tuned penalty
    Bundle models;        // filled when keep_models is set
};

// Fits every stage on the training slice alone and predicts the test
// slice: scaling, transform, factors, residualization, screening, tuning,
// final fit.
WindowResult run_window(const PipelineConfig& config, const ExperimentSpec& experiment, const MatrixXd& x_train,
                        const VectorXd& y_train, const MatrixXd& x_test, std::uint64_t seed, bool keep_models = false);

struct EvalReport {
    std::string metric;  // oos_r2_rolling | oos_r2 | err
    double value = 0.0;
    std::uint64_t seed = 0;
    WindowPlan plan;
    nlohmann::json per_window = nlohmann::json::array();
    VectorXd predictions;  // test rows in order; class labels for classification
    VectorXd scores;       // raw learner output (probabilities for binary fnn)
    VectorXd truths;
    VectorXd baselines;    // training mean of each test row's window
    std::vector<Index> rows;
    std::vector<Index> window_of;
    std::vector<Bundle> models;

    // Recomputes `value` from predictions, truths and baselines.
    double recompute() const;
};

EvalReport evaluate_experiment(const PipelineConfig& config, const ExperimentSpec& experiment, const Dataset& data,
                               std::uint64_t seed, int threads);

struct ExperimentReport {
    std::string name;
    std::vector<EvalReport> repetitions;
    double mean = 0.0;
    double sd = 0.0;  // n-1 divisor; 0 for a single repetition
};

struct PipelineReport {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string metric;
    std::vector<ExperimentReport> experiments;

    nlohmann::json metrics_json() const;
};

// Repetition r uses seed config.seed + r.
PipelineReport run_pipeline(const PipelineConfig& config, const Dataset& data, int threads);

// metrics.json, predictions_<experiment>.csv and, when configured,
// models/<experiment>_r<rep>_w<window>.bin under `out`.
void write_pipeline_outputs(const PipelineConfig& config, const PipelineReport& report, const Dataset& data,
                            const std::filesystem::path& out);

int resolve_threads(int requested);

}  // namespace farm
