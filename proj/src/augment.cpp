#include "farm/augment.hpp"

#include <algorithm>
#include <random>

#include <fmt/format.h>

#include "farm/error.hpp"

namespace farm {

namespace {

int order_rank(BlockLabel label) {
    switch (label) {
        case BlockLabel::F0: return 0;
        case BlockLabel::F: return 1;
        case BlockLabel::U:
        case BlockLabel::Utilde: return 2;
        case BlockLabel::X: return 3;
        case BlockLabel::LR: return 4;
    }
    return 5;
}

bool is_candidate_block(Layout layout, BlockLabel label) {
    if (layout == Layout::x_only || layout == Layout::lr_x) return label == BlockLabel::X;
    return label == BlockLabel::U || label == BlockLabel::Utilde;
}

MatrixXd select_columns(const MatrixXd& m, const std::vector<Index>& cols) {
    MatrixXd out(m.rows(), static_cast<Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Index>(j)) = m.col(cols[j]);
    return out;
}

}  // namespace

Residualized regress_out(const MatrixXd& x, const MatrixXd& f) {
    if (x.rows() != f.rows()) {
        throw UsageError(fmt::format("regress_out: X has {} rows, F has {}", x.rows(), f.rows()));
    }
    Residualized out;
    const MatrixXd coef = least_squares(f, x, "factor matrix");  // K x p
    out.loadings = coef.transpose();
    out.residual = x - f * coef;
    return out;
}

Decorrelated decorrelate_residual(const MatrixXd& u, const MatrixXd& f0) {
    if (u.rows() != f0.rows()) {
        throw UsageError(fmt::format("decorrelate: U has {} rows, F0 has {}", u.rows(), f0.rows()));
    }
    Decorrelated out;
    out.coef = least_squares(f0, u, "F0 factor matrix");
    out.residual = u - f0 * out.coef;
    return out;
}

std::string to_string(BlockLabel label) {
    switch (label) {
        case BlockLabel::F0: return "F0";
        case BlockLabel::F: return "F";
        case BlockLabel::U: return "U";
        case BlockLabel::Utilde: return "Utilde";
        case BlockLabel::X: return "X";
        case BlockLabel::LR: return "LR";
    }
    return "?";
}

const MatrixXd* AugmentedDesign::block(BlockLabel label) const {
    for (const auto& b : blocks) {
        if (b.label == label) return &b.values;
    }
    return nullptr;
}

AugmentedDesign assemble(std::vector<Block> blocks) {
    if (blocks.empty()) throw UsageError("assemble: no blocks");
    std::stable_sort(blocks.begin(), blocks.end(),
                     [](const Block& a, const Block& b) { return order_rank(a.label) < order_rank(b.label); });
    const Index n = blocks.front().values.rows();
    Index width = 0;
    int residuals = 0;
    for (const auto& b : blocks) {
        if (b.values.rows() != n) {
            throw UsageError(fmt::format("assemble: block {} has {} rows, expected {}", to_string(b.label),
                                         b.values.rows(), n));
        }
        if (b.label == BlockLabel::U || b.label == BlockLabel::Utilde) ++residuals;
        width += b.values.cols();
    }
    if (residuals > 1) throw UsageError("assemble: more than one residual block");
    AugmentedDesign d;
    d.assembled.resize(n, width);
    Index col = 0;
    for (const auto& b : blocks) {
        d.assembled.middleCols(col, b.values.cols()) = b.values;
        for (Index j = 0; j < b.values.cols(); ++j) d.provenance.push_back(fmt::format("{}[{}]", to_string(b.label), j));
        col += b.values.cols();
    }
    d.blocks = std::move(blocks);
    return d;
}

std::string to_string(Layout layout) {
    switch (layout) {
        case Layout::x_only: return "X";
        case Layout::f_u: return "F_U";
        case Layout::f0_f_u: return "F0_F_U";
        case Layout::f0_f_utilde: return "F0_F_Utilde";
        case Layout::lr_x: return "LR_X";
    }
    return "?";
}

Layout layout_from_string(const std::string& name) {
    for (auto l : {Layout::x_only, Layout::f_u, Layout::f0_f_u, Layout::f0_f_utilde, Layout::lr_x}) {
        if (to_string(l) == name) return l;
    }
    throw ConfigError("unknown layout '" + name + "'");
}

FactorModel fit_factors(const MatrixXd& z, const FactorSpec& spec) {
    if (spec.mode == FactorMode::pca) return pca_fit(z, spec.k, spec.bounds);
    const Index n_prime = std::min(spec.n_prime, z.rows());
    std::vector<Index> rows = select_landmarks(z.rows(), n_prime, spec.seed);
    std::sort(rows.begin(), rows.end());
    MatrixXd pre(n_prime, z.cols());
    for (Index i = 0; i < n_prime; ++i) pre.row(i) = z.row(rows[static_cast<std::size_t>(i)]);
    Index k_prime = 0;
    if (spec.k_prime) {
        k_prime = *spec.k_prime;
    } else {
        k_prime = eigen_ratio_k(covariance_spectrum(pre), spec.bounds);
    }
    if (spec.k && *spec.k > k_prime) k_prime = *spec.k;
    DiversifiedWeights w = dp_pretrain(pre, k_prime);
    FactorModel model = dp_fit(z, w.w, spec.k.value_or(k_prime));
    model.spectrum = std::move(w.spectrum);
    return model;
}

AugmentFit fit_augmentation(const MatrixXd& x, const VectorXd& labels, const AugmentSpec& spec) {
    AugmentFit fit;
    fit.spec = spec;
    std::vector<Block>& blocks = fit.full_blocks_;
    switch (spec.layout) {
        case Layout::x_only:
            blocks.push_back({BlockLabel::X, x});
            break;
        case Layout::lr_x: {
            fit.transform = fit_transform(x, labels, spec.transform);
            blocks.push_back({BlockLabel::X, x});
            blocks.push_back({BlockLabel::LR, fit.transform->apply(x)});
            break;
        }
        case Layout::f_u:
        case Layout::f0_f_u:
        case Layout::f0_f_utilde: {
            fit.transform = fit_transform(x, labels, spec.transform);
            fit.factor_model = fit_factors(fit.transform->apply(x), spec.factors);
            const MatrixXd& f = fit.factor_model->factors;
            Residualized r = regress_out(x, f);
            fit.residual_loadings = std::move(r.loadings);
            blocks.push_back({BlockLabel::F, f});
            if (spec.layout != Layout::f_u) {
                fit.f0_model = fit_factors(x, spec.f0);
                blocks.push_back({BlockLabel::F0, fit.f0_model->factors});
            }
            if (spec.layout == Layout::f0_f_utilde) {
                Decorrelated d = decorrelate_residual(r.residual, fit.f0_model->factors);
                fit.f0_coef = std::move(d.coef);
                blocks.push_back({BlockLabel::Utilde, std::move(d.residual)});
            } else {
                blocks.push_back({BlockLabel::U, std::move(r.residual)});
            }
            break;
        }
    }
    fit.rebuild();
    return fit;
}

void AugmentFit::rebuild() {
    std::vector<Block> blocks = full_blocks_;
    if (kept) {
        for (auto& b : blocks) {
            if (is_candidate_block(spec.layout, b.label)) b.values = select_columns(b.values, *kept);
        }
    }
    training = assemble(std::move(blocks));
}

void AugmentFit::keep_residual_columns(std::vector<Index> columns) {
    const MatrixXd& cand = screening_candidates();
    for (Index c : columns) {
        if (c < 0 || c >= cand.cols()) throw UsageError(fmt::format("kept column {} out of range", c));
    }
    kept = std::move(columns);
    rebuild();
}

const MatrixXd& AugmentFit::screening_candidates() const {
    for (const auto& b : full_blocks_) {
        if (is_candidate_block(spec.layout, b.label)) return b.values;
    }
    throw UsageError("layout has no screening candidates");
}

MatrixXd AugmentFit::screening_factors() const {
    Index width = 0;
    Index n = 0;
    for (const auto& b : full_blocks_) {
        n = b.values.rows();
        if (b.label == BlockLabel::F0 || b.label == BlockLabel::F) width += b.values.cols();
    }
    MatrixXd f(n, width);
    Index col = 0;
    for (const auto& b : assemble(full_blocks_).blocks) {
        if (b.label == BlockLabel::F0 || b.label == BlockLabel::F) {
            f.middleCols(col, b.values.cols()) = b.values;
            col += b.values.cols();
        }
    }
    return f;
}

MatrixXd AugmentFit::augment_new(const MatrixXd& x) const {
    std::vector<Block> blocks;
    auto keep = [&](const MatrixXd& m) { return kept ? select_columns(m, *kept) : m; };
    switch (spec.layout) {
        case Layout::x_only:
            blocks.push_back({BlockLabel::X, keep(x)});
            break;
        case Layout::lr_x:
            blocks.push_back({BlockLabel::X, keep(x)});
            blocks.push_back({BlockLabel::LR, transform->apply(x)});
            break;
        case Layout::f_u:
        case Layout::f0_f_u:
        case Layout::f0_f_utilde: {
            const MatrixXd f = factor_model->project(transform->apply(x));
            MatrixXd u = x - f * residual_loadings.transpose();
            blocks.push_back({BlockLabel::F, f});
            if (f0_model) {
                const MatrixXd f0 = f0_model->project(x);
                blocks.push_back({BlockLabel::F0, f0});
                if (spec.layout == Layout::f0_f_utilde) {
                    u -= f0 * f0_coef;
                    blocks.push_back({BlockLabel::Utilde, keep(u)});
                } else {
                    blocks.push_back({BlockLabel::U, keep(u)});
                }
            } else {
                blocks.push_back({BlockLabel::U, keep(u)});
            }
            break;
        }
    }
    return assemble(std::move(blocks)).assembled;
}

VectorXd AugmentFit::augment_new(const VectorXd& x) const {
    return augment_new(MatrixXd(x.transpose())).row(0).transpose();
}

}  // namespace farm
