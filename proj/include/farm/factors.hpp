#pragma once

#include <optional>
#include <string>

#include "farm/bundle.hpp"
#include "farm/linalg.hpp"

namespace farm {

enum class FactorMode { pca, dp };

std::string to_string(FactorMode mode);
FactorMode factor_mode_from_string(const std::string& name);

// Descending eigenvalues of a sample covariance, tagged with the (n, p) of
// the matrix they came from.
struct EigenSpectrum {
    VectorXd values;
    Index n = 0;
    Index p = 0;
};

struct RatioBounds {
    Index k_min = 0;
    Index k_max = 0;
};

// k_max = floor(min(n,p)/3), k_min = max(floor(min(n,p)/10), 2).
RatioBounds eigen_ratio_bounds(Index n, Index p);

// argmax over k_min <= j <= k_max of lambda_j / lambda_{j+1} (1-based),
// smallest j on ties. Ratios whose denominator is below 1e-12 * lambda_1
// are skipped; if every ratio is skipped the answer is k_min.
Index eigen_ratio_k(const EigenSpectrum& spectrum, std::optional<RatioBounds> bounds = std::nullopt);

// Spectrum of Z^T Z / n after column centering, computed from whichever
// Gram matrix is smaller.
EigenSpectrum covariance_spectrum(const MatrixXd& z);

struct FactorModel {
    FactorMode mode = FactorMode::pca;
    Index k = 0;
    RowVectorXd center;   // a_hat, removed before fitting
    MatrixXd loadings;    // p x K
    MatrixXd factors;     // n x K (training)
    VectorXd eigvals;     // pca: top K covariance eigenvalues
    MatrixXd weights;     // dp: p x K' diversified weights
    EigenSpectrum spectrum;  // full covariance spectrum (pca) or pretraining spectrum (dp)

    Index dim() const { return center.size(); }

    // pca: diag(lambda)^-1 B^T (z - a); dp: W^T (z - a) / p.
    VectorXd project(const VectorXd& z) const;
    MatrixXd project(const MatrixXd& z) const;

    Bundle to_bundle() const;
    static FactorModel from_bundle(const Bundle& b);
};

// B = (sqrt(l_1) xi_1, ...), f_i = diag(l)^-1 B^T z_i on the centered data;
// F^T F / n = I. K unset selects the count by eigen ratio.
FactorModel pca_fit(const MatrixXd& z, std::optional<Index> k = std::nullopt,
                    std::optional<RatioBounds> bounds = std::nullopt);

struct DiversifiedWeights {
    MatrixXd w;               // p x K', columns with squared norm p
    EigenSpectrum spectrum;   // of the pretraining sample
};

// W = sqrt(p) * top-K' covariance eigenvectors of a pretraining sample that
// the caller keeps disjoint from (or at least independent of) the fit data.
DiversifiedWeights dp_pretrain(const MatrixXd& z_prime, Index k_prime);

// f_i = W^T z_i / p on centered data, all K' columns kept; loadings by least
// squares. `k` only has to satisfy k <= K'.
FactorModel dp_fit(const MatrixXd& z, const MatrixXd& w, Index k);

}  // namespace farm
