#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "farm/linalg.hpp"
#include "farm/nn.hpp"

namespace farm {

enum class LearnerKind { ridge, lasso, fnn, external };

std::string to_string(LearnerKind kind);
LearnerKind learner_kind_from_string(const std::string& name);

// Subprocess learner. `command` is run through /bin/sh with the tokens
// {train_x} {train_y} {test_x} {out} replaced by paths of FARMAUG1 files;
// the command must write an n_test x 1 FARMAUG1 matrix to {out}.
struct ExternalSpec {
    std::string command;
    double timeout_seconds = 600.0;
};

struct LearnerSpec {
    LearnerKind kind = LearnerKind::ridge;
    double gamma1 = 0.0;  // lasso
    double gamma2 = 0.0;  // ridge
    Index max_iter = 100;
    double tol = 1e-7;
    bool standardize = false;  // scale columns to unit sd inside the fit
    MlpSpec fnn;
    ExternalSpec external;
    Task task = Task::regression;
};

void validate(const LearnerSpec& spec);

struct FittedLearner {
    LearnerSpec spec;
    Index width = 0;
    // Linear models: intercept followed by slopes (length width + 1).
    VectorXd theta;
    bool converged = true;
    double final_loss = 0.0;
    Index iterations = 0;
    std::vector<double> objective_trace;  // lasso objective after each sweep
    // fnn: one network, or one per class (one-vs-rest) for multiclass
    std::vector<Mlp> nets;
    std::vector<double> classes;
    RowVectorXd in_center, in_scale;
    // external: training data replayed at predict time
    MatrixXd train_x;
    VectorXd train_y;

    // Regression values; binary: probability of class 1; multiclass: label.
    VectorXd predict(const MatrixXd& q) const;
};

// (Qc^T Qc + gamma2 I) beta = Qc^T yc on centered data, intercept
// unpenalized. Throws NumericalError if the system is singular.
FittedLearner ridge_fit(const MatrixXd& q, const VectorXd& y, double gamma2, bool standardize = false);

// Cyclic coordinate descent on (1/n)||y - 1 b - Q theta||^2 + gamma1 ||theta||_1
// (intercept unpenalized). Stops when the largest coefficient change is
// below tol or after max_iter sweeps.
FittedLearner lasso_fit(const MatrixXd& q, const VectorXd& y, double gamma1, Index max_iter = 100,
                        bool standardize = false, double tol = 1e-7);

FittedLearner fnn_fit(const MatrixXd& q, const VectorXd& y, const MlpSpec& spec, bool standardize = false);

FittedLearner external_fit(const MatrixXd& q, const VectorXd& y, const ExternalSpec& spec);

FittedLearner fit_learner(const MatrixXd& q, const VectorXd& y, const LearnerSpec& spec);

// One fit per penalty sharing the Gram matrix (lasso: warm starts along
// the path). Results are in the order of `penalties`.
std::vector<FittedLearner> ridge_path(const MatrixXd& q, const VectorXd& y, const std::vector<double>& penalties,
                                      bool standardize);
std::vector<FittedLearner> lasso_path(const MatrixXd& q, const VectorXd& y, const std::vector<double>& penalties,
                                      Index max_iter, bool standardize, double tol);

// n log-spaced values from lo to hi inclusive.
std::vector<double> log_grid(double lo, double hi, int n);
std::vector<double> default_lasso_grid();  // 15 points, 1e-10 .. 1e-3
std::vector<double> default_ridge_grid();  // 10 points, 1e-3 .. 1e3

struct CvResult {
    Index best = 0;
    LearnerSpec best_spec;
    std::vector<double> mean_loss;               // per grid point
    std::vector<std::vector<double>> fold_loss;  // [grid][fold]
};

// Validation loss is the mean squared error of predict() against y.
// Contiguous folds when `time_ordered`, otherwise a seeded shuffle.
CvResult cross_validate(const MatrixXd& q, const VectorXd& y, const std::vector<LearnerSpec>& grid, int folds,
                        bool time_ordered, std::uint64_t seed = 0);

}  // namespace farm

namespace farm {

// Runs the external command on one train/test split and returns its
// predictions. Throws DataError on timeout, nonzero exit, or a malformed
// predictions file.
VectorXd run_external_learner(const ExternalSpec& spec, const MatrixXd& train_x, const VectorXd& train_y,
                              const MatrixXd& test_x);

}  // namespace farm
