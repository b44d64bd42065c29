#include "farm/factors.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <json.hpp>

#include "farm/error.hpp"

namespace farm {

namespace {

// Top eigen-pairs of the centered covariance. Eigenvectors are returned in
// feature space (p x r) even when the n x n Gram matrix is decomposed.
struct CovarianceEigen {
    EigenSpectrum spectrum;
    MatrixXd vectors;  // p x r, r = min(n, p)
};

CovarianceEigen covariance_eigen(const MatrixXd& centered, bool want_vectors) {
    const Index n = centered.rows();
    const Index p = centered.cols();
    const auto nd = static_cast<double>(n);
    CovarianceEigen out;
    out.spectrum.n = n;
    out.spectrum.p = p;
    if (n >= p) {
        EigenPairs e = symmetric_eigen(centered.transpose() * centered / nd);
        out.spectrum.values = e.values.cwiseMax(0.0);
        if (want_vectors) out.vectors = std::move(e.vectors);
        return out;
    }
    EigenPairs e = symmetric_eigen(centered * centered.transpose() / nd);
    out.spectrum.values = e.values.cwiseMax(0.0);
    if (want_vectors) {
        out.vectors.resize(p, n);
        for (Index k = 0; k < n; ++k) {
            const double lam = out.spectrum.values(k);
            if (lam > 0.0) {
                out.vectors.col(k) = centered.transpose() * e.vectors.col(k) / std::sqrt(nd * lam);
            } else {
                out.vectors.col(k).setZero();
            }
        }
        fix_signs(out.vectors);
    }
    return out;
}

Index effective_rank(const VectorXd& values) {
    if (values.size() == 0 || !(values(0) > 0.0)) return 0;
    const double tol = 1e-12 * values(0);
    Index r = 0;
    while (r < values.size() && values(r) > tol) ++r;
    return r;
}

Matrix wrap(MatrixXd m) { return Matrix{std::move(m), {}}; }

}  // namespace

std::string to_string(FactorMode mode) { return mode == FactorMode::pca ? "pca" : "dp"; }

FactorMode factor_mode_from_string(const std::string& name) {
    if (name == "pca") return FactorMode::pca;
    if (name == "dp") return FactorMode::dp;
    throw ConfigError("unknown factor mode '" + name + "'");
}

RatioBounds eigen_ratio_bounds(Index n, Index p) {
    const Index m = std::min(n, p);
    return {std::max<Index>(m / 10, 2), m / 3};
}

Index eigen_ratio_k(const EigenSpectrum& spectrum, std::optional<RatioBounds> bounds) {
    const RatioBounds b = bounds.value_or(eigen_ratio_bounds(spectrum.n, spectrum.p));
    if (b.k_min < 1 || b.k_max < b.k_min) {
        throw UsageError(fmt::format("empty eigen-ratio window [{}, {}] for n={}, p={}", b.k_min, b.k_max,
                                     spectrum.n, spectrum.p));
    }
    const VectorXd& v = spectrum.values;
    if (v.size() < b.k_max + 1) {
        throw UsageError(fmt::format("spectrum has {} values, eigen ratio needs {}", v.size(), b.k_max + 1));
    }
    const double floor = 1e-12 * v(0);
    Index best_k = b.k_min;
    double best = -1.0;
    for (Index j = b.k_min; j <= b.k_max; ++j) {
        const double denom = v(j);  // lambda_{j+1} in 1-based terms
        if (!(denom >= floor) || !(denom > 0.0)) continue;
        const double ratio = v(j - 1) / denom;
        // relative margin so rounding in equal ratios cannot move the argmax
        if (ratio > best * (1.0 + 1e-12)) {
            best = ratio;
            best_k = j;
        }
    }
    return best_k;
}

EigenSpectrum covariance_spectrum(const MatrixXd& z) {
    const MatrixXd centered = z.rowwise() - column_means(z);
    return covariance_eigen(centered, false).spectrum;
}

VectorXd FactorModel::project(const VectorXd& z) const {
    if (z.size() != dim()) throw UsageError(fmt::format("factor model expects {} inputs, got {}", dim(), z.size()));
    const VectorXd c = z - center.transpose();
    if (mode == FactorMode::pca) return (loadings.transpose() * c).cwiseQuotient(eigvals);
    return weights.transpose() * c / static_cast<double>(dim());
}

MatrixXd FactorModel::project(const MatrixXd& z) const {
    if (z.cols() != dim()) throw UsageError(fmt::format("factor model expects {} inputs, got {}", dim(), z.cols()));
    const MatrixXd c = z.rowwise() - center;
    if (mode == FactorMode::pca) return (c * loadings) * eigvals.cwiseInverse().asDiagonal();
    return c * weights / static_cast<double>(dim());
}

Bundle FactorModel::to_bundle() const {
    Bundle b;
    nlohmann::json meta{{"mode", to_string(mode)}, {"k", k}, {"spectrum_n", spectrum.n}, {"spectrum_p", spectrum.p}};
    b.texts["factor_model"] = meta.dump();
    b.matrices["a_hat"] = wrap(center);
    b.matrices["B_hat"] = wrap(loadings);
    b.matrices["F_hat"] = wrap(factors);
    b.matrices["eigvals"] = wrap(eigvals);
    b.matrices["spectrum"] = wrap(spectrum.values);
    if (mode == FactorMode::dp) b.matrices["W"] = wrap(weights);
    return b;
}

FactorModel FactorModel::from_bundle(const Bundle& b) {
    const auto meta = nlohmann::json::parse(b.text("factor_model"));
    FactorModel m;
    m.mode = factor_mode_from_string(meta.at("mode").get<std::string>());
    m.k = meta.at("k").get<Index>();
    m.center = b.matrix("a_hat").values.row(0);
    m.loadings = b.matrix("B_hat").values;
    m.factors = b.matrix("F_hat").values;
    const MatrixXd& ev = b.matrix("eigvals").values;
    m.eigvals = ev.size() ? VectorXd(ev.col(0)) : VectorXd();
    const MatrixXd& sp = b.matrix("spectrum").values;
    m.spectrum.values = sp.size() ? VectorXd(sp.col(0)) : VectorXd();
    m.spectrum.n = meta.at("spectrum_n").get<Index>();
    m.spectrum.p = meta.at("spectrum_p").get<Index>();
    if (m.mode == FactorMode::dp) m.weights = b.matrix("W").values;
    return m;
}

FactorModel pca_fit(const MatrixXd& z, std::optional<Index> k, std::optional<RatioBounds> bounds) {
    const Index n = z.rows();
    if (n < 2) throw UsageError("pca needs at least 2 rows");
    FactorModel model;
    model.mode = FactorMode::pca;
    model.center = column_means(z);
    const MatrixXd centered = z.rowwise() - model.center;
    CovarianceEigen eig = covariance_eigen(centered, true);
    model.spectrum = eig.spectrum;
    const Index rank = effective_rank(eig.spectrum.values);
    const Index kk = k ? *k : eigen_ratio_k(eig.spectrum, bounds);
    if (kk < 1 || kk > rank) {
        throw NumericalError(fmt::format("requested {} factors but the effective rank is {}", kk, rank));
    }
    model.k = kk;
    model.eigvals = eig.spectrum.values.head(kk);
    const MatrixXd xi = eig.vectors.leftCols(kk);
    model.loadings = xi * model.eigvals.cwiseSqrt().asDiagonal();
    model.factors = (centered * model.loadings) * model.eigvals.cwiseInverse().asDiagonal();
    return model;
}

DiversifiedWeights dp_pretrain(const MatrixXd& z_prime, Index k_prime) {
    if (k_prime < 1) throw UsageError("K' must be >= 1");
    if (z_prime.rows() < k_prime + 1) {
        throw UsageError(fmt::format("pretraining sample has {} rows, needs at least K'+1 = {}", z_prime.rows(),
                                     k_prime + 1));
    }
    const MatrixXd centered = z_prime.rowwise() - column_means(z_prime);
    CovarianceEigen eig = covariance_eigen(centered, true);
    const Index rank = effective_rank(eig.spectrum.values);
    if (k_prime > rank) {
        throw NumericalError(fmt::format("K' = {} exceeds the pretraining covariance rank {}", k_prime, rank));
    }
    DiversifiedWeights out;
    out.w = std::sqrt(static_cast<double>(z_prime.cols())) * eig.vectors.leftCols(k_prime);
    out.spectrum = std::move(eig.spectrum);
    return out;
}

FactorModel dp_fit(const MatrixXd& z, const MatrixXd& w, Index k) {
    if (w.rows() != z.cols()) {
        throw UsageError(fmt::format("weights have {} rows, data has {} columns", w.rows(), z.cols()));
    }
    if (k < 1 || k > w.cols()) throw UsageError(fmt::format("K = {} must lie in [1, K' = {}]", k, w.cols()));
    FactorModel model;
    model.mode = FactorMode::dp;
    model.center = column_means(z);
    const MatrixXd centered = z.rowwise() - model.center;
    model.weights = w;
    model.k = w.cols();
    model.factors = centered * w / static_cast<double>(z.cols());
    if (!(condition_number(model.factors) < 1e10)) throw NumericalError("degenerate projected factors");
    model.loadings = least_squares(model.factors, centered, "projected factors").transpose();
    return model;
}

}  // namespace farm
