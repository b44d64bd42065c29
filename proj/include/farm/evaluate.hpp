#pragma once

#include <vector>

#include "farm/linalg.hpp"

namespace farm {

// Zero-based half-open row ranges. Training rows [train_begin, train_end)
// immediately precede test rows [test_begin, test_end).
struct Window {
    Index train_begin = 0;
    Index train_end = 0;
    Index test_begin = 0;
    Index test_end = 0;
};

struct WindowPlan {
    Index n_total = 0;
    Index m = 0;
    Index h = 0;
    std::vector<Window> windows;
};

// Test blocks of length h tile rows m+1..n_total (one-based); the last
// block may be shorter.
WindowPlan plan_windows(Index n_total, Index m, Index h);

// Single split: the first n_train rows train, the rest test.
WindowPlan static_split(Index n_total, Index n_train);

// 1 - sum (y - yhat)^2 / sum (y - ybar_t)^2 with a per-point baseline.
double oos_r2_rolling(const VectorXd& y_true, const VectorXd& y_pred, const VectorXd& y_bar);
double oos_r2_static(const VectorXd& y_true, const VectorXd& y_pred, double train_mean);

double classification_error(const VectorXd& labels_true, const VectorXd& labels_pred);

}  // namespace farm
