#include "farm/screening.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "farm/error.hpp"

namespace farm {

namespace {

constexpr int kMaxNewton = 200;
constexpr double kGradTol = 1e-8;

VectorXd standardized(const VectorXd& u) {
    const Index n = u.size();
    VectorXd c = u.array() - u.mean();
    const double sd = n > 1 ? std::sqrt(c.squaredNorm() / static_cast<double>(n - 1)) : 0.0;
    if (sd > 0.0) c /= sd;
    return c;
}

// Orthonormal basis of span(1, F).
MatrixXd control_basis(const MatrixXd& f) {
    const Index n = f.rows();
    MatrixXd c(n, f.cols() + 1);
    c.col(0).setOnes();
    c.rightCols(f.cols()) = f;
    if (f.cols() > 0 && !(condition_number(f.rowwise() - column_means(f)) < 1e10)) {
        throw NumericalError("screening factors are rank deficient");
    }
    Eigen::HouseholderQR<MatrixXd> qr(c);
    return qr.householderQ() * MatrixXd::Identity(n, c.cols());
}

double squared_theta(const MatrixXd& basis, const VectorXd& y_resid, const VectorXd& u_std) {
    const VectorXd ur = u_std - basis * (basis.transpose() * u_std);
    const double ss = ur.squaredNorm();
    if (!(ss > 1e-20 * static_cast<double>(u_std.size()))) return 0.0;
    return ur.dot(y_resid) / ss;
}

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

MarginalFit logistic_theta(const VectorXd& y, const MatrixXd& f, const VectorXd& u_std) {
    const Index n = y.size();
    MatrixXd d(n, f.cols() + 2);
    d.col(0).setOnes();
    d.middleCols(1, f.cols()) = f;
    d.col(f.cols() + 1) = u_std;
    VectorXd beta = VectorXd::Zero(d.cols());
    MarginalFit out;
    out.converged = false;
    for (int it = 1; it <= kMaxNewton; ++it) {
        const VectorXd eta = d * beta;
        VectorXd mu(n), w(n);
        for (Index i = 0; i < n; ++i) {
            mu(i) = sigmoid(eta(i));
            w(i) = std::max(mu(i) * (1.0 - mu(i)), 1e-12);
        }
        const VectorXd grad = d.transpose() * (mu - y) / static_cast<double>(n);
        out.iterations = it;
        if (grad.norm() < kGradTol) {
            out.converged = true;
            break;
        }
        const MatrixXd hess = d.transpose() * w.asDiagonal() * d / static_cast<double>(n);
        const VectorXd step = hess.ldlt().solve(grad);
        if (!step.allFinite()) break;
        beta -= step;
    }
    out.theta = beta(d.cols() - 1);
    return out;
}

}  // namespace

std::string to_string(LossKind kind) { return kind == LossKind::squared ? "squared" : "logistic"; }

MarginalFit marginal_theta(const VectorXd& y, const MatrixXd& f, const VectorXd& u_j, LossKind loss) {
    if (y.size() != f.rows() || y.size() != u_j.size()) throw UsageError("marginal_theta: row counts differ");
    const VectorXd u_std = standardized(u_j);
    if (loss == LossKind::logistic) return logistic_theta(y, f, u_std);
    const MatrixXd basis = control_basis(f);
    const VectorXd y_resid = y - basis * (basis.transpose() * y);
    return MarginalFit{squared_theta(basis, y_resid, u_std), true, 1};
}

nlohmann::json ScreenResult::to_json(bool include_theta) const {
    nlohmann::json j{{"loss", to_string(loss)}, {"kept", kept}, {"not_converged", not_converged}};
    if (include_theta) j["theta_abs"] = std::vector<double>(theta_abs.data(), theta_abs.data() + theta_abs.size());
    return j;
}

ScreenResult screen(const VectorXd& y, const MatrixXd& f, const MatrixXd& u, Index m, LossKind loss) {
    const Index p = u.cols();
    if (m > p || m < 0) throw UsageError(fmt::format("cannot keep {} of {} columns", m, p));
    if (y.size() != u.rows() || f.rows() != u.rows()) throw UsageError("screen: row counts differ");
    ScreenResult res;
    res.loss = loss;
    res.theta_abs.resize(p);
    if (loss == LossKind::squared) {
        const MatrixXd basis = control_basis(f);
        const VectorXd y_resid = y - basis * (basis.transpose() * y);
        for (Index j = 0; j < p; ++j) res.theta_abs(j) = std::abs(squared_theta(basis, y_resid, standardized(u.col(j))));
    } else {
        for (Index j = 0; j < p; ++j) {
            const MarginalFit fit = logistic_theta(y, f, standardized(u.col(j)));
            res.theta_abs(j) = std::abs(fit.theta);
            if (!fit.converged) res.not_converged.push_back(j);
        }
    }
    std::vector<Index> order(static_cast<std::size_t>(p));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return res.theta_abs(a) > res.theta_abs(b); });
    order.resize(static_cast<std::size_t>(m));
    std::sort(order.begin(), order.end());
    res.kept = std::move(order);
    return res;
}

}  // namespace farm
