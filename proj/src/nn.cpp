#include "farm/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "farm/error.hpp"

namespace farm {

namespace {

MatrixXd affine(const MatrixXd& in, const DenseLayer& layer) {
    MatrixXd out = in * layer.weight.transpose();
    out.rowwise() += layer.bias.transpose();
    return out;
}

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double mean_loss(Task task, const VectorXd& out, const VectorXd& y) {
    const auto n = static_cast<double>(y.size());
    double total = 0.0;
    if (task == Task::regression) {
        total = (out - y).squaredNorm();
    } else {
        for (Index i = 0; i < y.size(); ++i) total += softplus(out(i)) - y(i) * out(i);
    }
    return total / n;
}

}  // namespace

void validate(const MlpSpec& spec) {
    if (spec.hidden.empty()) throw ConfigError("fnn needs at least one hidden layer");
    for (Index w : spec.hidden) {
        if (w < 1) throw ConfigError("fnn hidden widths must be >= 1");
    }
    if (!(spec.dropout >= 0.0 && spec.dropout < 1.0)) throw ConfigError("fnn dropout must lie in [0,1)");
    if (spec.epochs < 0) throw ConfigError("fnn epochs must be >= 0");
    if (spec.batch < 1) throw ConfigError("fnn batch must be >= 1");
    if (!(spec.learn_rate > 0.0)) throw ConfigError("fnn learn_rate must be > 0");
}

Mlp::Mlp(Index inputs, const MlpSpec& spec) : task_(spec.task) {
    validate(spec);
    std::mt19937_64 rng(spec.seed);
    Index fan_in = inputs;
    std::vector<Index> widths = spec.hidden;
    widths.push_back(1);
    for (std::size_t l = 0; l < widths.size(); ++l) {
        DenseLayer layer;
        layer.weight.resize(widths[l], fan_in);
        layer.bias = VectorXd::Zero(widths[l]);
        // He initialization
        std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(std::max<Index>(fan_in, 1))));
        for (Index i = 0; i < layer.weight.rows(); ++i) {
            for (Index j = 0; j < layer.weight.cols(); ++j) layer.weight(i, j) = normal(rng);
        }
        if (l + 1 == widths.size() && spec.zero_head) layer.weight.setZero();
        layers_.push_back(std::move(layer));
        fan_in = widths[l];
    }
}

VectorXd Mlp::raw_output(const MatrixXd& x) const {
    if (x.cols() != inputs()) {
        throw UsageError(fmt::format("network expects {} inputs, got {}", inputs(), x.cols()));
    }
    MatrixXd h = x;
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) h = affine(h, layers_[l]).cwiseMax(0.0);
    return affine(h, layers_.back()).col(0);
}

VectorXd Mlp::predict(const MatrixXd& x) const {
    VectorXd out = raw_output(x);
    if (task_ != Task::regression) out = out.unaryExpr([](double z) { return sigmoid(z); });
    return out;
}

MatrixXd Mlp::last_hidden(const MatrixXd& x) const {
    if (x.cols() != inputs()) {
        throw UsageError(fmt::format("network expects {} inputs, got {}", inputs(), x.cols()));
    }
    MatrixXd h = x;
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) h = affine(h, layers_[l]).cwiseMax(0.0);
    return h;
}

double Mlp::loss(const MatrixXd& x, const VectorXd& y) const { return mean_loss(task_, raw_output(x), y); }

Mlp::Gradient Mlp::loss_and_gradient(const MatrixXd& x, const VectorXd& y,
                                     const std::vector<MatrixXd>* masks) const {
    const std::size_t hidden = layers_.size() - 1;
    std::vector<MatrixXd> pre(hidden);
    std::vector<MatrixXd> act(hidden + 1);
    act[0] = x;
    for (std::size_t l = 0; l < hidden; ++l) {
        pre[l] = affine(act[l], layers_[l]);
        act[l + 1] = pre[l].cwiseMax(0.0);
        if (masks) act[l + 1].array() *= (*masks)[l].array();
    }
    const VectorXd out = affine(act[hidden], layers_.back()).col(0);
    const auto n = static_cast<double>(y.size());

    Gradient g;
    g.loss = mean_loss(task_, out, y);
    g.layers.resize(layers_.size());
    MatrixXd delta(out.size(), 1);
    if (task_ == Task::regression) {
        delta.col(0) = 2.0 * (out - y) / n;
    } else {
        for (Index i = 0; i < out.size(); ++i) delta(i, 0) = (sigmoid(out(i)) - y(i)) / n;
    }
    for (std::size_t l = layers_.size(); l-- > 0;) {
        g.layers[l].weight = delta.transpose() * act[l];
        g.layers[l].bias = delta.colwise().sum().transpose();
        if (l == 0) break;
        MatrixXd back = delta * layers_[l].weight;
        if (masks) back.array() *= (*masks)[l - 1].array();
        delta = back.array() * (pre[l - 1].array() > 0.0).cast<double>();
    }
    return g;
}

VectorXd Mlp::parameters() const {
    Index total = 0;
    for (const auto& l : layers_) total += l.weight.size() + l.bias.size();
    VectorXd flat(total);
    Index k = 0;
    for (const auto& l : layers_) {
        for (Index i = 0; i < l.weight.rows(); ++i)
            for (Index j = 0; j < l.weight.cols(); ++j) flat(k++) = l.weight(i, j);
        for (Index i = 0; i < l.bias.size(); ++i) flat(k++) = l.bias(i);
    }
    return flat;
}

void Mlp::set_parameters(const VectorXd& flat) {
    Index k = 0;
    for (auto& l : layers_) {
        for (Index i = 0; i < l.weight.rows(); ++i)
            for (Index j = 0; j < l.weight.cols(); ++j) l.weight(i, j) = flat(k++);
        for (Index i = 0; i < l.bias.size(); ++i) l.bias(i) = flat(k++);
    }
    if (k != flat.size()) throw UsageError("parameter vector has the wrong length");
}

std::vector<double> Mlp::train(const MatrixXd& x, const VectorXd& y, const MlpSpec& spec) {
    validate(spec);
    if (x.rows() != y.size()) throw UsageError("network training: rows and responses differ");
    std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
    std::bernoulli_distribution keep(1.0 - spec.dropout);
    const double keep_scale = 1.0 / (1.0 - spec.dropout);

    std::vector<double> history{loss(x, y)};
    std::vector<Index> order(static_cast<std::size_t>(x.rows()));
    std::iota(order.begin(), order.end(), Index{0});

    for (Index epoch = 1; epoch <= spec.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(spec.batch)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(spec.batch));
            const auto m = static_cast<Index>(stop - start);
            MatrixXd xb(m, x.cols());
            VectorXd yb(m);
            for (Index i = 0; i < m; ++i) {
                xb.row(i) = x.row(order[start + static_cast<std::size_t>(i)]);
                yb(i) = y(order[start + static_cast<std::size_t>(i)]);
            }
            std::vector<MatrixXd> masks;
            if (spec.dropout > 0.0) {
                for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
                    MatrixXd mask(m, layers_[l].weight.rows());
                    for (Index i = 0; i < mask.size(); ++i) mask(i) = keep(rng) ? keep_scale : 0.0;
                    masks.push_back(std::move(mask));
                }
            }
            const Gradient g = loss_and_gradient(xb, yb, spec.dropout > 0.0 ? &masks : nullptr);
            if (!std::isfinite(g.loss)) throw NumericalError(fmt::format("non-finite loss at epoch {}", epoch));
            for (std::size_t l = 0; l < layers_.size(); ++l) {
                layers_[l].weight -= spec.learn_rate * g.layers[l].weight;
                layers_[l].bias -= spec.learn_rate * g.layers[l].bias;
            }
        }
        const double epoch_loss = loss(x, y);
        if (!std::isfinite(epoch_loss)) throw NumericalError(fmt::format("non-finite loss at epoch {}", epoch));
        history.push_back(epoch_loss);
    }
    return history;
}

}  // namespace farm
