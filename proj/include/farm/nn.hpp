#pragma once

#include <cstdint>
#include <vector>

#include "farm/linalg.hpp"

namespace farm {

enum class Task { regression, binary, multiclass };

struct MlpSpec {
    std::vector<Index> hidden{16, 4};
    double dropout = 0.0;
    Index epochs = 20;
    double learn_rate = 1e-3;
    Index batch = 64;
    Task task = Task::regression;
    std::uint64_t seed = 0;
    bool zero_head = false;  // start the output layer at zero
};

void validate(const MlpSpec& spec);

struct DenseLayer {
    MatrixXd weight;  // out x in
    VectorXd bias;
};

// Fully connected ReLU network with a single linear output unit. Rows of
// every input matrix are samples. Binary task: the output is a logit and
// the loss is the mean logistic loss; regression: mean squared error.
class Mlp {
public:
    Mlp() = default;
    Mlp(Index inputs, const MlpSpec& spec);

    Index inputs() const { return layers_.empty() ? 0 : layers_.front().weight.cols(); }
    const std::vector<DenseLayer>& layers() const { return layers_; }
    std::vector<DenseLayer>& layers() { return layers_; }
    Task task() const { return task_; }

    // Output before the link (logit for binary).
    VectorXd raw_output(const MatrixXd& x) const;
    // Probabilities for binary, raw values for regression.
    VectorXd predict(const MatrixXd& x) const;
    // Activations of the last hidden layer (n x width).
    MatrixXd last_hidden(const MatrixXd& x) const;

    double loss(const MatrixXd& x, const VectorXd& y) const;

    struct Gradient {
        double loss = 0.0;
        std::vector<DenseLayer> layers;
    };
    // masks[l] is the (n x width_l) inverted-dropout multiplier for hidden
    // layer l; pass nullptr for no dropout.
    Gradient loss_and_gradient(const MatrixXd& x, const VectorXd& y,
                               const std::vector<MatrixXd>* masks = nullptr) const;

    VectorXd parameters() const;
    void set_parameters(const VectorXd& flat);

    // Mini-batch gradient descent; returns the full-data loss before
    // training followed by one entry per epoch. Throws NumericalError on a
    // non-finite loss.
    std::vector<double> train(const MatrixXd& x, const VectorXd& y, const MlpSpec& spec);

private:
    std::vector<DenseLayer> layers_;
    Task task_ = Task::regression;
};

}  // namespace farm
