#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "farm/factors.hpp"
#include "farm/transforms.hpp"

namespace farm {

struct Residualized {
    MatrixXd loadings;  // p x K, B = [(F^T F)^-1 F^T X]^T
    MatrixXd residual;  // U = X - F B^T
};

// Projects X off span(F). Throws NumericalError if F is rank deficient.
Residualized regress_out(const MatrixXd& x, const MatrixXd& f);

struct Decorrelated {
    MatrixXd coef;      // K0 x p coefficients of U on F0
    MatrixXd residual;  // U_tilde = U - F0 coef
};

Decorrelated decorrelate_residual(const MatrixXd& u, const MatrixXd& f0);

enum class BlockLabel { F0, F, U, Utilde, X, LR };

std::string to_string(BlockLabel label);

struct Block {
    BlockLabel label;
    MatrixXd values;
};

// Column concatenation in the fixed order F0 | F | residual | X | LR.
struct AugmentedDesign {
    std::vector<Block> blocks;
    MatrixXd assembled;
    std::vector<std::string> provenance;  // one tag per column, e.g. "F[2]"

    const MatrixXd* block(BlockLabel label) const;
};

// Throws on row-count mismatch or on more than one residual block.
AugmentedDesign assemble(std::vector<Block> blocks);

enum class Layout { x_only, f_u, f0_f_u, f0_f_utilde, lr_x };

std::string to_string(Layout layout);
Layout layout_from_string(const std::string& name);

struct FactorSpec {
    FactorMode mode = FactorMode::pca;
    std::optional<Index> k;        // unset: eigen ratio
    std::optional<RatioBounds> bounds;
    Index n_prime = 1000;          // dp pretraining rows, capped at the window size
    std::optional<Index> k_prime;  // unset: eigen ratio on the pretraining spectrum
    std::uint64_t seed = 0;
};

// Fits a factor model on z (pca, or dp with a pretraining subsample drawn
// from the rows of z).
FactorModel fit_factors(const MatrixXd& z, const FactorSpec& spec);

struct AugmentSpec {
    Layout layout = Layout::f_u;
    TransformSpec transform;
    FactorSpec factors;   // factors of the transformed matrix
    FactorSpec f0;        // factors of X itself
};

// Every map needed to rebuild a training row from its raw features,
// frozen at fit time.
struct AugmentFit {
    AugmentSpec spec;
    std::optional<FittedTransform> transform;
    std::optional<FactorModel> factor_model;  // on transform(X)
    std::optional<FactorModel> f0_model;      // on X
    MatrixXd residual_loadings;               // p x K from regress_out(X, F)
    MatrixXd f0_coef;                         // K0 x p, Utilde layout only
    std::optional<std::vector<Index>> kept;   // screened residual columns
    AugmentedDesign training;

    // Augmented row for a new raw feature vector; block order matches
    // `training`.
    VectorXd augment_new(const VectorXd& x) const;
    MatrixXd augment_new(const MatrixXd& x) const;

    // Restrict the residual (or X) block to `columns` and rebuild `training`.
    void keep_residual_columns(std::vector<Index> columns);

    // The factor columns used as controls when screening the residual block.
    MatrixXd screening_factors() const;
    const MatrixXd& screening_candidates() const;

private:
    std::vector<Block> full_blocks_;
    void rebuild();
    friend AugmentFit fit_augmentation(const MatrixXd&, const VectorXd&, const AugmentSpec&);
};

// `labels` feeds supervised transforms (fnn responses, lr classes {1,2}).
AugmentFit fit_augmentation(const MatrixXd& x, const VectorXd& labels, const AugmentSpec& spec);

}  // namespace farm
