#pragma once

#include <Eigen/Dense>

namespace farm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::RowVectorXd;

// Eigen-pairs sorted by descending eigenvalue. Each eigenvector has its
// largest-magnitude entry positive (first such entry on ties).
struct EigenPairs {
    VectorXd values;
    MatrixXd vectors;
};

EigenPairs symmetric_eigen(const MatrixXd& sym);

void fix_signs(MatrixXd& vectors);

RowVectorXd column_means(const MatrixXd& m);

double max_abs(const MatrixXd& m);

// 2-norm condition number of a tall matrix, from the spectrum of its Gram matrix.
double condition_number(const MatrixXd& f);

// Least-squares coefficients C (k x q) minimizing ||Y - F C||_F. Normal
// equations when F is well conditioned, Householder QR otherwise; throws
// NumericalError when cond(F) >= 1e10.
MatrixXd least_squares(const MatrixXd& f, const MatrixXd& y, const char* what = "design");

}  // namespace farm
