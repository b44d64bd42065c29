#include "farm/evaluate.hpp"

#include <fmt/format.h>

#include "farm/error.hpp"

namespace farm {

WindowPlan plan_windows(Index n_total, Index m, Index h) {
    if (m < 2) throw UsageError("window size m must be >= 2");
    if (h < 1) throw UsageError("refit stride h must be >= 1");
    if (m >= n_total) throw UsageError(fmt::format("window size {} leaves no test points in {} rows", m, n_total));
    WindowPlan plan{n_total, m, h, {}};
    for (Index t = m; t < n_total; t += h) {
        plan.windows.push_back({t - m, t, t, std::min(t + h, n_total)});
    }
    return plan;
}

WindowPlan static_split(Index n_total, Index n_train) {
    if (n_train < 2 || n_train >= n_total) {
        throw UsageError(fmt::format("static split needs 2 <= n_train < {}, got {}", n_total, n_train));
    }
    return WindowPlan{n_total, n_train, n_total - n_train, {{0, n_train, n_train, n_total}}};
}

double oos_r2_rolling(const VectorXd& y_true, const VectorXd& y_pred, const VectorXd& y_bar) {
    if (y_true.size() != y_pred.size() || y_true.size() != y_bar.size()) {
        throw UsageError("oos_r2: lengths differ");
    }
    double num = 0.0, den = 0.0;
    for (Index t = 0; t < y_true.size(); ++t) {
        num += (y_true(t) - y_pred(t)) * (y_true(t) - y_pred(t));
        den += (y_true(t) - y_bar(t)) * (y_true(t) - y_bar(t));
    }
    if (!(den > 0.0)) throw NumericalError("constant-baseline degenerate: zero denominator in out-of-sample R^2");
    return 1.0 - num / den;
}

double oos_r2_static(const VectorXd& y_true, const VectorXd& y_pred, double train_mean) {
    return oos_r2_rolling(y_true, y_pred, VectorXd::Constant(y_true.size(), train_mean));
}

double classification_error(const VectorXd& labels_true, const VectorXd& labels_pred) {
    if (labels_true.size() != labels_pred.size()) throw UsageError("classification_error: lengths differ");
    if (labels_true.size() == 0) throw UsageError("classification_error: empty input");
    Index wrong = 0;
    for (Index i = 0; i < labels_true.size(); ++i) wrong += labels_true(i) != labels_pred(i);
    return static_cast<double>(wrong) / static_cast<double>(labels_true.size());
}

}  // namespace farm
