#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "farm/linalg.hpp"

namespace farm {

enum class LossKind { squared, logistic };

std::string to_string(LossKind kind);

struct MarginalFit {
    double theta = 0.0;
    bool converged = true;
    int iterations = 0;
};

// Coefficient of the standardized column u_j in the fit of y on
// (1, F, u_j). Squared loss solves the OLS exactly; logistic loss runs
// Newton steps until the gradient norm is below 1e-8 or 200 iterations,
// reporting the last iterate with converged = false otherwise.
MarginalFit marginal_theta(const VectorXd& y, const MatrixXd& f, const VectorXd& u_j, LossKind loss);

struct ScreenResult {
    VectorXd theta_abs;
    std::vector<Index> kept;  // ascending
    LossKind loss = LossKind::squared;
    std::vector<Index> not_converged;

    nlohmann::json to_json(bool include_theta) const;
};

// Keeps the m columns of U with the largest |theta_j|; ties go to the
// lower index.
ScreenResult screen(const VectorXd& y, const MatrixXd& f, const MatrixXd& u, Index m, LossKind loss);

}  // namespace farm
