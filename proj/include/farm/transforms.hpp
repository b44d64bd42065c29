#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "farm/bundle.hpp"
#include "farm/linalg.hpp"
#include "farm/nn.hpp"

namespace farm {

enum class TransformKind { identity, interactions, rbf, poly, fnn, lr };

std::string to_string(TransformKind kind);
TransformKind transform_kind_from_string(const std::string& name);

struct TransformSpec {
    TransformKind kind = TransformKind::interactions;
    Index n0 = 500;                // landmarks; capped at the training size
    std::optional<double> gamma;   // rbf; default 1 / (p * mean column variance)
    int degree = 2;                // poly
    double coef0 = 1.0;            // poly
    Index hidden_width = 128;      // fnn
    Index epochs = 20;             // fnn
    double learn_rate = 1e-3;      // fnn
    double epsilon_floor = 1e-2;   // lr
    std::optional<double> bandwidth;  // lr; Silverman per feature and class when unset
    std::uint64_t seed = 0;
};

void validate(const TransformSpec& spec);

// x_i x_j for i <= j in lexicographic order; length p(p+1)/2.
VectorXd interactions(const VectorXd& x);
MatrixXd interactions(const MatrixXd& x);

// n0 distinct row indices drawn uniformly without replacement.
std::vector<Index> select_landmarks(Index n, Index n0, std::uint64_t seed);

// One kernel evaluation per landmark row (rbf or poly per spec.kind);
// `gamma` is the resolved rbf width.
VectorXd kernel_features(const VectorXd& x, const MatrixXd& landmarks, const TransformSpec& spec, double gamma);

class FittedTransform {
public:
    const TransformSpec& spec() const { return spec_; }
    Index input_dim() const { return input_dim_; }
    Index output_dim() const { return output_dim_; }

    // Row-local: applying to a stacked matrix equals row-wise application.
    MatrixXd apply(const MatrixXd& x) const;
    VectorXd apply_row(const VectorXd& x) const;

    Bundle to_bundle() const;
    static FittedTransform from_bundle(const Bundle& b);

    // fit-time state, exposed for inspection and tests
    const MatrixXd& landmarks() const { return landmarks_; }
    double gamma() const { return gamma_; }
    const MatrixXd& hidden_weight() const { return hidden_weight_; }
    const VectorXd& hidden_bias() const { return hidden_bias_; }
    const std::vector<double>& training_loss() const { return training_loss_; }
    const MatrixXd& bandwidths() const { return bandwidths_; }

private:
    friend FittedTransform fit_transform(const MatrixXd&, const VectorXd&, const TransformSpec&);
    friend FittedTransform fnn_transform_fit(const MatrixXd&, const VectorXd&, const TransformSpec&);
    friend FittedTransform lr_features_fit(const MatrixXd&, const std::vector<int>&, const TransformSpec&);

    double density(int cls, Index feature, double s) const;

    TransformSpec spec_;
    Index input_dim_ = 0;
    Index output_dim_ = 0;
    MatrixXd landmarks_;
    double gamma_ = 0.0;
    MatrixXd hidden_weight_;
    VectorXd hidden_bias_;
    std::vector<double> training_loss_;
    // lr: sorted class samples per feature (index = cls*p + feature) and
    // bandwidths (2 x p)
    std::vector<std::vector<double>> class_samples_;
    MatrixXd bandwidths_;
};

// Dispatches on spec.kind. `y` is used by fnn (responses) and lr (labels
// in {1,2} encoded as doubles); the other kinds ignore it.
FittedTransform fit_transform(const MatrixXd& x, const VectorXd& y, const TransformSpec& spec);

// Trains x -> head(relu(W x + b)) on (x, y); logistic loss when y is 0/1,
// squared loss otherwise. apply() returns relu(W x + b).
FittedTransform fnn_transform_fit(const MatrixXd& x, const VectorXd& y, const TransformSpec& spec);

// Per-feature log density ratio log f2(s)/f1(s) with Gaussian KDEs and
// both densities floored at spec.epsilon_floor. Labels must be 1 or 2.
FittedTransform lr_features_fit(const MatrixXd& x, const std::vector<int>& labels, const TransformSpec& spec);

double silverman_bandwidth(std::vector<double> sample);

}  // namespace farm
