#include "farm/linalg.hpp"

#include <cmath>

#include <fmt/format.h>

#include "farm/error.hpp"

namespace farm {

EigenPairs symmetric_eigen(const MatrixXd& sym) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> solver(sym);
    if (solver.info() != Eigen::Success) {
        throw NumericalError("symmetric eigendecomposition did not converge");
    }
    // Eigen returns ascending order.
    EigenPairs out;
    out.values = solver.eigenvalues().reverse();
    out.vectors = solver.eigenvectors().rowwise().reverse();
    fix_signs(out.vectors);
    return out;
}

void fix_signs(MatrixXd& vectors) {
    for (Index k = 0; k < vectors.cols(); ++k) {
        Index arg = 0;
        double best = -1.0;
        for (Index i = 0; i < vectors.rows(); ++i) {
            const double a = std::abs(vectors(i, k));
            // tolerance keeps the choice stable when two entries tie up to rounding
            if (a > best * (1.0 + 1e-12)) {
                best = a;
                arg = i;
            }
        }
        if (vectors.rows() > 0 && vectors(arg, k) < 0.0) vectors.col(k) *= -1.0;
    }
}

RowVectorXd column_means(const MatrixXd& m) {
    if (m.rows() == 0) return RowVectorXd::Zero(m.cols());
    return m.colwise().mean();
}

double max_abs(const MatrixXd& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

double condition_number(const MatrixXd& f) {
    if (f.cols() == 0) return 1.0;
    Eigen::SelfAdjointEigenSolver<MatrixXd> solver(f.transpose() * f, Eigen::EigenvaluesOnly);
    const double hi = solver.eigenvalues().maxCoeff();
    const double lo = solver.eigenvalues().minCoeff();
    if (!(hi > 0.0)) return INFINITY;
    if (lo <= 0.0) return INFINITY;
    return std::sqrt(hi / lo);
}

MatrixXd least_squares(const MatrixXd& f, const MatrixXd& y, const char* what) {
    if (f.rows() != y.rows()) {
        throw UsageError(fmt::format("least_squares: {} has {} rows, target has {}", what,
                                     f.rows(), y.rows()));
    }
    if (f.cols() == 0) return MatrixXd::Zero(0, y.cols());
    const double cond = condition_number(f);
    if (!(cond < 1e10)) {
        throw NumericalError(fmt::format("rank-deficient {} (condition estimate {:.3g})", what, cond));
    }
    if (cond > 1e6) {
        Eigen::HouseholderQR<MatrixXd> qr(f);
        return qr.solve(y);
    }
    const MatrixXd gram = f.transpose() * f;
    Eigen::LLT<MatrixXd> llt(gram);
    return llt.solve(f.transpose() * y);
}

}  // namespace farm
