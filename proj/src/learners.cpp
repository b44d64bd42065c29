#include "farm/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <fmt/format.h>

#include "farm/error.hpp"

namespace farm {

namespace {

// Centered (optionally unit-scaled) least-squares problem reduced to Gram
// form so a whole penalty path shares one pass over the data.
struct GramProblem {
    Index n = 0;
    RowVectorXd center;
    RowVectorXd scale;
    double y_mean = 0.0;
    MatrixXd gram;  // Z^T Z
    VectorXd zty;   // Z^T yc
    double yty = 0.0;
};

GramProblem prepare(const MatrixXd& q, const VectorXd& y, bool standardize) {
    if (q.rows() != y.size()) throw UsageError(fmt::format("design has {} rows, response has {}", q.rows(), y.size()));
    if (q.rows() < 1) throw UsageError("empty design");
    GramProblem g;
    g.n = q.rows();
    g.center = column_means(q);
    g.y_mean = y.mean();
    MatrixXd z = q.rowwise() - g.center;
    g.scale = RowVectorXd::Ones(q.cols());
    if (standardize && g.n > 1) {
        for (Index j = 0; j < q.cols(); ++j) {
            const double sd = std::sqrt(z.col(j).squaredNorm() / static_cast<double>(g.n - 1));
            if (sd > 0.0) g.scale(j) = sd;
        }
        z = z.array().rowwise() / g.scale.array();
    }
    const VectorXd yc = y.array() - g.y_mean;
    g.gram = z.transpose() * z;
    g.zty = z.transpose() * yc;
    g.yty = yc.squaredNorm();
    return g;
}

FittedLearner linear_result(const GramProblem& g, const VectorXd& scaled_slopes, LearnerKind kind, double penalty,
                            bool standardize) {
    FittedLearner f;
    f.spec.kind = kind;
    f.spec.standardize = standardize;
    if (kind == LearnerKind::ridge) f.spec.gamma2 = penalty;
    else f.spec.gamma1 = penalty;
    f.width = scaled_slopes.size();
    const VectorXd slopes = scaled_slopes.cwiseQuotient(g.scale.transpose());
    f.theta.resize(slopes.size() + 1);
    f.theta(0) = g.y_mean - g.center.dot(slopes);
    f.theta.tail(slopes.size()) = slopes;
    return f;
}

FittedLearner ridge_solve(const GramProblem& g, double gamma2, bool standardize) {
    if (!(gamma2 >= 0.0)) throw UsageError("ridge penalty must be >= 0");
    MatrixXd system = g.gram;
    system.diagonal().array() += gamma2;
    Eigen::LLT<MatrixXd> llt(system);
    const double scale = system.diagonal().cwiseAbs().maxCoeff();
    if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-14) || !(scale > 0.0)) {
        if (g.gram.cols() > 0) throw NumericalError(fmt::format("singular ridge system at gamma2 = {}", gamma2));
    }
    VectorXd b = g.gram.cols() > 0 ? VectorXd(llt.solve(g.zty)) : VectorXd();
    if (b.size()) b += llt.solve(g.zty - system * b);  // one refinement step
    FittedLearner f = linear_result(g, b, LearnerKind::ridge, gamma2, standardize);
    f.final_loss = (g.yty - 2.0 * b.dot(g.zty) + b.dot(g.gram * b)) / static_cast<double>(g.n);
    return f;
}

double soft_threshold(double z, double t) {
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

double lasso_objective(const GramProblem& g, const VectorXd& b, const VectorXd& gb, double gamma1) {
    const double rss = g.yty - 2.0 * b.dot(g.zty) + b.dot(gb);
    return std::max(rss, 0.0) / static_cast<double>(g.n) + gamma1 * b.lpNorm<1>();
}

struct LassoState {
    VectorXd b;
    VectorXd gb;  // gram * b
};

FittedLearner lasso_solve(const GramProblem& g, double gamma1, Index max_iter, double tol, bool standardize,
                          LassoState& st) {
    if (!(gamma1 >= 0.0)) throw UsageError("lasso penalty must be >= 0");
    const auto n = static_cast<double>(g.n);
    const Index p = g.gram.cols();
    std::vector<double> trace;
    bool converged = false;
    Index sweeps = 0;
    for (Index sweep = 1; sweep <= max_iter; ++sweep) {
        double max_change = 0.0;
        for (Index j = 0; j < p; ++j) {
            const double gjj = g.gram(j, j);
            const double old = st.b(j);
            double updated = 0.0;
            if (gjj > 0.0) {
                const double rho = g.zty(j) - st.gb(j) + gjj * old;
                updated = soft_threshold(2.0 * rho / n, gamma1) / (2.0 * gjj / n);
            }
            const double delta = updated - old;
            if (delta != 0.0) {
                st.b(j) = updated;
                st.gb += delta * g.gram.col(j);
                max_change = std::max(max_change, std::abs(delta));
            }
        }
        sweeps = sweep;
        trace.push_back(lasso_objective(g, st.b, st.gb, gamma1));
        if (max_change < tol) {
            converged = true;
            break;
        }
    }
    FittedLearner f = linear_result(g, st.b, LearnerKind::lasso, gamma1, standardize);
    f.spec.max_iter = max_iter;
    f.spec.tol = tol;
    f.converged = converged;
    f.iterations = sweeps;
    f.final_loss = trace.empty() ? lasso_objective(g, st.b, st.gb, gamma1) : trace.back();
    f.objective_trace = std::move(trace);
    return f;
}

std::vector<std::vector<Index>> make_folds(Index n, int folds, bool time_ordered, std::uint64_t seed) {
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    if (!time_ordered) {
        std::mt19937_64 rng(seed);
        std::shuffle(order.begin(), order.end(), rng);
    }
    std::vector<std::vector<Index>> out(static_cast<std::size_t>(folds));
    for (int k = 0; k < folds; ++k) {
        const Index lo = n * k / folds;
        const Index hi = n * (k + 1) / folds;
        if (hi - lo < 2) throw UsageError(fmt::format("fold {} has {} samples, need at least 2", k + 1, hi - lo));
        out[static_cast<std::size_t>(k)].assign(order.begin() + lo, order.begin() + hi);
        std::sort(out[static_cast<std::size_t>(k)].begin(), out[static_cast<std::size_t>(k)].end());
    }
    return out;
}

MatrixXd take_rows(const MatrixXd& m, const std::vector<Index>& rows) {
    MatrixXd out(static_cast<Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
    return out;
}

VectorXd take_rows(const VectorXd& v, const std::vector<Index>& rows) {
    VectorXd out(static_cast<Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Index>(i)) = v(rows[i]);
    return out;
}

bool same_family(const std::vector<LearnerSpec>& grid, LearnerKind kind) {
    return std::all_of(grid.begin(), grid.end(), [&](const LearnerSpec& s) {
        return s.kind == kind && s.standardize == grid.front().standardize && s.max_iter == grid.front().max_iter &&
               s.tol == grid.front().tol;
    });
}

}  // namespace

std::string to_string(LearnerKind kind) {
    switch (kind) {
        case LearnerKind::ridge: return "ridge";
        case LearnerKind::lasso: return "lasso";
        case LearnerKind::fnn: return "fnn";
        case LearnerKind::external: return "external";
    }
    return "?";
}

LearnerKind learner_kind_from_string(const std::string& name) {
    for (auto k : {LearnerKind::ridge, LearnerKind::lasso, LearnerKind::fnn, LearnerKind::external}) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("unknown learner kind '" + name + "'");
}

void validate(const LearnerSpec& spec) {
    if (!(spec.gamma1 >= 0.0) || !(spec.gamma2 >= 0.0)) throw ConfigError("penalties must be >= 0");
    if (spec.max_iter < 1) throw ConfigError("max_iter must be >= 1");
    if (spec.kind == LearnerKind::fnn) validate(spec.fnn);
    if (spec.kind == LearnerKind::external && spec.external.command.empty()) {
        throw ConfigError("external learner needs a command");
    }
}

FittedLearner ridge_fit(const MatrixXd& q, const VectorXd& y, double gamma2, bool standardize) {
    return ridge_solve(prepare(q, y, standardize), gamma2, standardize);
}

FittedLearner lasso_fit(const MatrixXd& q, const VectorXd& y, double gamma1, Index max_iter, bool standardize,
                        double tol) {
    const GramProblem g = prepare(q, y, standardize);
    LassoState st{VectorXd::Zero(q.cols()), VectorXd::Zero(q.cols())};
    return lasso_solve(g, gamma1, max_iter, tol, standardize, st);
}

std::vector<FittedLearner> ridge_path(const MatrixXd& q, const VectorXd& y, const std::vector<double>& penalties,
                                      bool standardize) {
    const GramProblem g = prepare(q, y, standardize);
    std::vector<FittedLearner> out;
    for (double gamma : penalties) out.push_back(ridge_solve(g, gamma, standardize));
    return out;
}

std::vector<FittedLearner> lasso_path(const MatrixXd& q, const VectorXd& y, const std::vector<double>& penalties,
                                      Index max_iter, bool standardize, double tol) {
    const GramProblem g = prepare(q, y, standardize);
    std::vector<std::size_t> order(penalties.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return penalties[a] > penalties[b]; });
    std::vector<FittedLearner> out(penalties.size());
    LassoState st{VectorXd::Zero(q.cols()), VectorXd::Zero(q.cols())};
    for (std::size_t k : order) out[k] = lasso_solve(g, penalties[k], max_iter, tol, standardize, st);
    return out;
}

FittedLearner fnn_fit(const MatrixXd& q, const VectorXd& y, const MlpSpec& spec, bool standardize) {
    validate(spec);
    if (q.rows() != y.size()) throw UsageError("fnn: design and response lengths differ");
    FittedLearner f;
    f.spec.kind = LearnerKind::fnn;
    f.spec.fnn = spec;
    f.spec.task = spec.task;
    f.spec.standardize = standardize;
    f.width = q.cols();
    f.in_center = RowVectorXd::Zero(q.cols());
    f.in_scale = RowVectorXd::Ones(q.cols());
    MatrixXd x = q;
    if (standardize && q.rows() > 1) {
        f.in_center = column_means(q);
        const MatrixXd c = q.rowwise() - f.in_center;
        for (Index j = 0; j < q.cols(); ++j) {
            const double sd = std::sqrt(c.col(j).squaredNorm() / static_cast<double>(q.rows() - 1));
            if (sd > 0.0) f.in_scale(j) = sd;
        }
        x = c.array().rowwise() / f.in_scale.array();
    }
    if (spec.task == Task::binary) {
        for (Index i = 0; i < y.size(); ++i) {
            if (y(i) != 0.0 && y(i) != 1.0) throw DataError("binary fnn needs labels in {0,1}");
        }
    }
    if (spec.task == Task::multiclass) {
        std::set<double> classes(y.begin(), y.end());
        f.classes.assign(classes.begin(), classes.end());
        for (std::size_t k = 0; k < f.classes.size(); ++k) {
            MlpSpec one = spec;
            one.task = Task::binary;
            one.seed = spec.seed + k;
            const VectorXd target = (y.array() == f.classes[k]).cast<double>();
            Mlp net(x.cols(), one);
            const auto hist = net.train(x, target, one);
            f.final_loss += hist.back();
            f.nets.push_back(std::move(net));
        }
        return f;
    }
    Mlp net(x.cols(), spec);
    const auto hist = net.train(x, y, spec);
    f.final_loss = hist.back();
    f.iterations = spec.epochs;
    f.nets.push_back(std::move(net));
    return f;
}

FittedLearner external_fit(const MatrixXd& q, const VectorXd& y, const ExternalSpec& spec) {
    if (q.rows() != y.size()) throw UsageError("external: design and response lengths differ");
    FittedLearner f;
    f.spec.kind = LearnerKind::external;
    f.spec.external = spec;
    f.width = q.cols();
    f.train_x = q;
    f.train_y = y;
    return f;
}

FittedLearner fit_learner(const MatrixXd& q, const VectorXd& y, const LearnerSpec& spec) {
    validate(spec);
    FittedLearner f;
    switch (spec.kind) {
        case LearnerKind::ridge: f = ridge_fit(q, y, spec.gamma2, spec.standardize); break;
        case LearnerKind::lasso: f = lasso_fit(q, y, spec.gamma1, spec.max_iter, spec.standardize, spec.tol); break;
        case LearnerKind::fnn: {
            MlpSpec net = spec.fnn;
            net.task = spec.task;
            f = fnn_fit(q, y, net, spec.standardize);
            break;
        }
        case LearnerKind::external: f = external_fit(q, y, spec.external); break;
    }
    const Index iterations = f.iterations;
    const bool converged = f.converged;
    const double loss = f.final_loss;
    f.spec = spec;
    f.iterations = iterations;
    f.converged = converged;
    f.final_loss = loss;
    return f;
}

VectorXd FittedLearner::predict(const MatrixXd& q) const {
    if (q.cols() != width) throw UsageError(fmt::format("model fitted on {} columns, got {}", width, q.cols()));
    switch (spec.kind) {
        case LearnerKind::ridge:
        case LearnerKind::lasso: {
            VectorXd out = q * theta.tail(width);
            out.array() += theta(0);
            return out;
        }
        case LearnerKind::fnn: {
            const MatrixXd x = (q.rowwise() - in_center).array().rowwise() / in_scale.array();
            if (classes.empty()) return nets.front().predict(x);
            MatrixXd probs(q.rows(), static_cast<Index>(nets.size()));
            for (std::size_t k = 0; k < nets.size(); ++k) probs.col(static_cast<Index>(k)) = nets[k].predict(x);
            VectorXd out(q.rows());
            for (Index i = 0; i < q.rows(); ++i) {
                Index arg = 0;
                probs.row(i).maxCoeff(&arg);
                out(i) = classes[static_cast<std::size_t>(arg)];
            }
            return out;
        }
        case LearnerKind::external: {
            VectorXd out = run_external_learner(spec.external, train_x, train_y, q);
            if (out.size() != q.rows()) {
                throw DataError(fmt::format("external learner returned {} predictions for {} rows", out.size(),
                                            q.rows()));
            }
            return out;
        }
    }
    return {};
}

std::vector<double> log_grid(double lo, double hi, int n) {
    std::vector<double> out;
    if (n == 1) return {lo};
    const double a = std::log10(lo), b = std::log10(hi);
    for (int i = 0; i < n; ++i) out.push_back(std::pow(10.0, a + (b - a) * i / (n - 1)));
    return out;
}

std::vector<double> default_lasso_grid() { return log_grid(1e-10, 1e-3, 15); }
std::vector<double> default_ridge_grid() { return log_grid(1e-3, 1e3, 10); }

CvResult cross_validate(const MatrixXd& q, const VectorXd& y, const std::vector<LearnerSpec>& grid, int folds,
                        bool time_ordered, std::uint64_t seed) {
    if (grid.empty()) throw UsageError("cross-validation grid is empty");
    if (folds < 2) throw UsageError("cross-validation needs at least 2 folds");
    for (const auto& s : grid) validate(s);
    const auto fold_rows = make_folds(q.rows(), folds, time_ordered, seed);
    CvResult res;
    res.fold_loss.assign(grid.size(), std::vector<double>(static_cast<std::size_t>(folds), 0.0));
    for (int k = 0; k < folds; ++k) {
        const auto& val = fold_rows[static_cast<std::size_t>(k)];
        std::vector<Index> train;
        for (int j = 0; j < folds; ++j) {
            if (j != k) train.insert(train.end(), fold_rows[static_cast<std::size_t>(j)].begin(),
                                     fold_rows[static_cast<std::size_t>(j)].end());
        }
        std::sort(train.begin(), train.end());
        const MatrixXd qt = take_rows(q, train), qv = take_rows(q, val);
        const VectorXd yt = take_rows(y, train), yv = take_rows(y, val);
        std::vector<FittedLearner> fits;
        if (same_family(grid, LearnerKind::ridge)) {
            std::vector<double> pens;
            for (const auto& s : grid) pens.push_back(s.gamma2);
            fits = ridge_path(qt, yt, pens, grid.front().standardize);
        } else if (same_family(grid, LearnerKind::lasso)) {
            std::vector<double> pens;
            for (const auto& s : grid) pens.push_back(s.gamma1);
            fits = lasso_path(qt, yt, pens, grid.front().max_iter, grid.front().standardize, grid.front().tol);
        } else {
            for (const auto& s : grid) fits.push_back(fit_learner(qt, yt, s));
        }
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const VectorXd pred = fits[g].predict(qv);
            res.fold_loss[g][static_cast<std::size_t>(k)] = (pred - yv).squaredNorm() / static_cast<double>(yv.size());
        }
    }
    for (const auto& losses : res.fold_loss) {
        res.mean_loss.push_back(std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(folds));
    }
    for (std::size_t g = 1; g < grid.size(); ++g) {
        if (res.mean_loss[g] < res.mean_loss[static_cast<std::size_t>(res.best)]) res.best = static_cast<Index>(g);
    }
    res.best_spec = grid[static_cast<std::size_t>(res.best)];
    return res;
}

}  // namespace farm
