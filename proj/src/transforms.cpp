#include "farm/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <json.hpp>

#include "farm/error.hpp"

namespace farm {

namespace {

using nlohmann::json;

constexpr double kKernelReach = 8.0;  // Gaussian tail beyond 8 bandwidths is < 1e-14

json spec_to_json(const TransformSpec& s) {
    json j{{"kind", to_string(s.kind)},    {"n0", s.n0},
           {"degree", s.degree},           {"coef0", s.coef0},
           {"hidden_width", s.hidden_width}, {"epochs", s.epochs},
           {"learn_rate", s.learn_rate},   {"epsilon_floor", s.epsilon_floor},
           {"seed", s.seed}};
    if (s.gamma) j["gamma"] = *s.gamma;
    if (s.bandwidth) j["bandwidth"] = *s.bandwidth;
    return j;
}

TransformSpec spec_from_json(const json& j) {
    TransformSpec s;
    s.kind = transform_kind_from_string(j.at("kind").get<std::string>());
    s.n0 = j.at("n0").get<Index>();
    s.degree = j.at("degree").get<int>();
    s.coef0 = j.at("coef0").get<double>();
    s.hidden_width = j.at("hidden_width").get<Index>();
    s.epochs = j.at("epochs").get<Index>();
    s.learn_rate = j.at("learn_rate").get<double>();
    s.epsilon_floor = j.at("epsilon_floor").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("gamma")) s.gamma = j["gamma"].get<double>();
    if (j.contains("bandwidth")) s.bandwidth = j["bandwidth"].get<double>();
    return s;
}

double quantile_sorted(const std::vector<double>& v, double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

Matrix as_matrix(MatrixXd m) { return Matrix{std::move(m), {}}; }

}  // namespace

std::string to_string(TransformKind kind) {
    switch (kind) {
        case TransformKind::identity: return "identity";
        case TransformKind::interactions: return "interactions";
        case TransformKind::rbf: return "rbf";
        case TransformKind::poly: return "poly";
        case TransformKind::fnn: return "fnn";
        case TransformKind::lr: return "lr";
    }
    return "?";
}

TransformKind transform_kind_from_string(const std::string& name) {
    for (auto k : {TransformKind::identity, TransformKind::interactions, TransformKind::rbf, TransformKind::poly,
                   TransformKind::fnn, TransformKind::lr}) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("unknown transform kind '" + name + "'");
}

void validate(const TransformSpec& spec) {
    if ((spec.kind == TransformKind::rbf || spec.kind == TransformKind::poly) && spec.n0 < 1) {
        throw ConfigError("kernel transforms need n0 >= 1");
    }
    if (spec.gamma && !(*spec.gamma > 0.0)) throw ConfigError("rbf gamma must be > 0");
    if (spec.kind == TransformKind::poly && spec.degree < 1) throw ConfigError("poly degree must be >= 1");
    if (spec.kind == TransformKind::fnn && spec.hidden_width < 1) throw ConfigError("fnn hidden_width must be >= 1");
    if (spec.kind == TransformKind::fnn && spec.epochs < 0) throw ConfigError("fnn epochs must be >= 0");
    if (!(spec.epsilon_floor > 0.0)) throw ConfigError("lr epsilon_floor must be > 0");
    if (spec.bandwidth && !(*spec.bandwidth > 0.0)) throw ConfigError("lr bandwidth must be > 0");
}

VectorXd interactions(const VectorXd& x) {
    const Index p = x.size();
    VectorXd out(p * (p + 1) / 2);
    Index k = 0;
    for (Index i = 0; i < p; ++i)
        for (Index j = i; j < p; ++j) out(k++) = x(i) * x(j);
    return out;
}

MatrixXd interactions(const MatrixXd& x) {
    const Index p = x.cols();
    MatrixXd out(x.rows(), p * (p + 1) / 2);
    Index k = 0;
    for (Index i = 0; i < p; ++i)
        for (Index j = i; j < p; ++j) out.col(k++) = x.col(i).cwiseProduct(x.col(j));
    return out;
}

std::vector<Index> select_landmarks(Index n, Index n0, std::uint64_t seed) {
    if (n0 > n || n0 < 0) throw UsageError(fmt::format("cannot select {} landmarks from {} rows", n0, n));
    std::vector<Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Index{0});
    std::mt19937_64 rng(seed);
    // partial Fisher-Yates
    for (Index i = 0; i < n0; ++i) {
        std::uniform_int_distribution<Index> pick(i, n - 1);
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
    }
    idx.resize(static_cast<std::size_t>(n0));
    return idx;
}

VectorXd kernel_features(const VectorXd& x, const MatrixXd& landmarks, const TransformSpec& spec, double gamma) {
    if (x.size() != landmarks.cols()) {
        throw UsageError(fmt::format("kernel input has {} entries, landmarks have {}", x.size(), landmarks.cols()));
    }
    VectorXd out(landmarks.rows());
    for (Index j = 0; j < landmarks.rows(); ++j) {
        if (spec.kind == TransformKind::rbf) {
            out(j) = std::exp(-gamma * (landmarks.row(j).transpose() - x).squaredNorm());
        } else {
            out(j) = std::pow(landmarks.row(j).dot(x) + spec.coef0, spec.degree);
        }
    }
    return out;
}

double silverman_bandwidth(std::vector<double> sample) {
    const auto n = static_cast<double>(sample.size());
    if (sample.size() < 2) return 1.0;
    std::sort(sample.begin(), sample.end());
    const double mean = std::accumulate(sample.begin(), sample.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : sample) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    const double iqr = quantile_sorted(sample, 0.75) - quantile_sorted(sample, 0.25);
    double spread = std::min(sd, iqr / 1.34);
    if (!(spread > 0.0)) spread = std::max(sd, iqr / 1.34);
    if (!(spread > 0.0)) spread = 1.0;
    return 0.9 * spread * std::pow(n, -0.2);
}

FittedTransform fit_transform(const MatrixXd& x, const VectorXd& y, const TransformSpec& spec) {
    validate(spec);
    switch (spec.kind) {
        case TransformKind::fnn: return fnn_transform_fit(x, y, spec);
        case TransformKind::lr: {
            std::vector<int> labels(static_cast<std::size_t>(y.size()));
            for (Index i = 0; i < y.size(); ++i) labels[static_cast<std::size_t>(i)] = static_cast<int>(std::lround(y(i)));
            return lr_features_fit(x, labels, spec);
        }
        default: break;
    }
    FittedTransform t;
    t.spec_ = spec;
    t.input_dim_ = x.cols();
    const Index p = x.cols();
    if (spec.kind == TransformKind::identity) {
        t.output_dim_ = p;
    } else if (spec.kind == TransformKind::interactions) {
        t.output_dim_ = p * (p + 1) / 2;
    } else {
        const Index n0 = std::min(spec.n0, x.rows());
        const auto rows = select_landmarks(x.rows(), n0, spec.seed);
        t.landmarks_.resize(n0, p);
        for (Index j = 0; j < n0; ++j) t.landmarks_.row(j) = x.row(rows[static_cast<std::size_t>(j)]);
        t.output_dim_ = n0;
        if (spec.kind == TransformKind::rbf) {
            if (spec.gamma) {
                t.gamma_ = *spec.gamma;
            } else {
                double mean_var = 0.0;
                if (x.rows() > 1) {
                    const MatrixXd c = x.rowwise() - column_means(x);
                    mean_var = c.colwise().squaredNorm().mean() / static_cast<double>(x.rows() - 1);
                }
                t.gamma_ = mean_var > 0.0 ? 1.0 / (static_cast<double>(p) * mean_var) : 1.0 / static_cast<double>(p);
            }
        }
    }
    return t;
}

FittedTransform fnn_transform_fit(const MatrixXd& x, const VectorXd& y, const TransformSpec& spec) {
    validate(spec);
    if (x.rows() != y.size()) throw UsageError("fnn transform: responses do not match rows");
    const bool binary = std::all_of(y.begin(), y.end(), [](double v) { return v == 0.0 || v == 1.0; });
    MlpSpec net_spec;
    net_spec.hidden = {spec.hidden_width};
    net_spec.epochs = spec.epochs;
    net_spec.learn_rate = spec.learn_rate;
    net_spec.task = binary ? Task::binary : Task::regression;
    net_spec.seed = spec.seed;
    net_spec.zero_head = spec.epochs == 0;
    Mlp net(x.cols(), net_spec);
    FittedTransform t;
    t.spec_ = spec;
    t.input_dim_ = x.cols();
    t.training_loss_ = net.train(x, y, net_spec);
    t.hidden_weight_ = net.layers().front().weight;
    t.hidden_bias_ = net.layers().front().bias;
    t.output_dim_ = spec.hidden_width;
    return t;
}

FittedTransform lr_features_fit(const MatrixXd& x, const std::vector<int>& labels, const TransformSpec& spec) {
    validate(spec);
    if (static_cast<Index>(labels.size()) != x.rows()) throw UsageError("lr features: labels do not match rows");
    const Index p = x.cols();
    FittedTransform t;
    t.spec_ = spec;
    t.input_dim_ = p;
    t.output_dim_ = p;
    t.class_samples_.assign(static_cast<std::size_t>(2 * p), {});
    std::size_t counts[2] = {0, 0};
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 1 && labels[i] != 2) {
            throw DataError(fmt::format("lr features need labels in {{1,2}}, row {} has {}", i + 1, labels[i]));
        }
        const int c = labels[i] - 1;
        ++counts[c];
        for (Index j = 0; j < p; ++j) {
            t.class_samples_[static_cast<std::size_t>(c * p + j)].push_back(x(static_cast<Index>(i), j));
        }
    }
    if (counts[0] == 0 || counts[1] == 0) throw DataError("lr features need both classes in the training data");
    t.bandwidths_.resize(2, p);
    for (int c = 0; c < 2; ++c) {
        for (Index j = 0; j < p; ++j) {
            auto& s = t.class_samples_[static_cast<std::size_t>(c * p + j)];
            std::sort(s.begin(), s.end());
            t.bandwidths_(c, j) = spec.bandwidth ? *spec.bandwidth : silverman_bandwidth(s);
        }
    }
    return t;
}

double FittedTransform::density(int cls, Index feature, double s) const {
    const auto& sample = class_samples_[static_cast<std::size_t>(cls * input_dim_ + feature)];
    const double h = bandwidths_(cls, feature);
    const auto lo = std::lower_bound(sample.begin(), sample.end(), s - kKernelReach * h);
    const auto hi = std::upper_bound(lo, sample.end(), s + kKernelReach * h);
    double total = 0.0;
    for (auto it = lo; it != hi; ++it) {
        const double z = (s - *it) / h;
        total += std::exp(-0.5 * z * z);
    }
    return total * std::numbers::inv_sqrtpi / std::numbers::sqrt2 / (h * static_cast<double>(sample.size()));
}

MatrixXd FittedTransform::apply(const MatrixXd& x) const {
    if (x.cols() != input_dim_) {
        throw UsageError(fmt::format("transform fitted on {} columns, got {}", input_dim_, x.cols()));
    }
    switch (spec_.kind) {
        case TransformKind::identity: return x;
        case TransformKind::interactions: return interactions(x);
        case TransformKind::fnn: {
            MatrixXd h = x * hidden_weight_.transpose();
            h.rowwise() += hidden_bias_.transpose();
            return h.cwiseMax(0.0);
        }
        case TransformKind::rbf:
        case TransformKind::poly: {
            MatrixXd out(x.rows(), output_dim_);
            for (Index i = 0; i < x.rows(); ++i) {
                out.row(i) = kernel_features(x.row(i).transpose(), landmarks_, spec_, gamma_).transpose();
            }
            return out;
        }
        case TransformKind::lr: {
            MatrixXd out(x.rows(), output_dim_);
            const double eps = spec_.epsilon_floor;
            for (Index i = 0; i < x.rows(); ++i) {
                for (Index j = 0; j < input_dim_; ++j) {
                    const double f1 = std::max(density(0, j, x(i, j)), eps);
                    const double f2 = std::max(density(1, j, x(i, j)), eps);
                    out(i, j) = std::log(f2) - std::log(f1);
                }
            }
            return out;
        }
    }
    return {};
}

VectorXd FittedTransform::apply_row(const VectorXd& x) const { return apply(x.transpose()).row(0).transpose(); }

Bundle FittedTransform::to_bundle() const {
    Bundle b;
    json meta = spec_to_json(spec_);
    meta["input_dim"] = input_dim_;
    meta["output_dim"] = output_dim_;
    meta["resolved_gamma"] = gamma_;
    b.texts["transform"] = meta.dump();
    if (landmarks_.size()) b.matrices["landmarks"] = as_matrix(landmarks_);
    if (hidden_weight_.size()) {
        b.matrices["hidden_weight"] = as_matrix(hidden_weight_);
        b.matrices["hidden_bias"] = as_matrix(hidden_bias_);
    }
    if (spec_.kind == TransformKind::lr) {
        b.matrices["bandwidths"] = as_matrix(bandwidths_);
        for (std::size_t k = 0; k < class_samples_.size(); ++k) {
            const auto& s = class_samples_[k];
            b.matrices[fmt::format("kde_{}", k)] =
                as_matrix(Eigen::Map<const VectorXd>(s.data(), static_cast<Index>(s.size())));
        }
    }
    return b;
}

FittedTransform FittedTransform::from_bundle(const Bundle& b) {
    const json meta = json::parse(b.text("transform"));
    FittedTransform t;
    t.spec_ = spec_from_json(meta);
    t.input_dim_ = meta.at("input_dim").get<Index>();
    t.output_dim_ = meta.at("output_dim").get<Index>();
    t.gamma_ = meta.at("resolved_gamma").get<double>();
    if (b.matrices.count("landmarks")) t.landmarks_ = b.matrix("landmarks").values;
    if (b.matrices.count("hidden_weight")) {
        t.hidden_weight_ = b.matrix("hidden_weight").values;
        t.hidden_bias_ = b.matrix("hidden_bias").values.col(0);
    }
    if (t.spec_.kind == TransformKind::lr) {
        t.bandwidths_ = b.matrix("bandwidths").values;
        t.class_samples_.resize(static_cast<std::size_t>(2 * t.input_dim_));
        for (std::size_t k = 0; k < t.class_samples_.size(); ++k) {
            const MatrixXd& v = b.matrix(fmt::format("kde_{}", k)).values;
            t.class_samples_[k].assign(v.data(), v.data() + v.size());
        }
    }
    return t;
}

}  // namespace farm
