#include <doctest.h>

#include <cmath>
#include <random>

#include "farm/error.hpp"
#include "farm/learners.hpp"
#include "farm/synth.hpp"
#include "oracles.hpp"

using namespace farm;

namespace {

MatrixXd center(const MatrixXd& q) { return q.rowwise() - q.colwise().mean(); }
VectorXd center(const VectorXd& y) { return y.array() - y.mean(); }

double ridge_objective(const MatrixXd& q, const VectorXd& y, const VectorXd& slopes, double g) {
    return (center(y) - center(q) * slopes).squaredNorm() + g * slopes.squaredNorm();
}

}  // namespace

TEST_SUITE("learners") {

TEST_CASE("ridge solves the penalized normal equations") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        MatrixXd q = standard_normal(60, 8, seed);
        VectorXd y = (standard_normal(60, 1, seed + 20).col(0).array() + 3.0).matrix();
        for (double g : {0.0, 0.5, 10.0}) {
            FittedLearner f = ridge_fit(q, y, g);
            REQUIRE(f.theta.size() == 9);
            const VectorXd s = f.theta.tail(8);
            const MatrixXd qc = center(q);
            const VectorXd lhs = (qc.transpose() * qc + g * MatrixXd::Identity(8, 8)) * s;
            const VectorXd rhs = qc.transpose() * center(y);
            CHECK((lhs - rhs).norm() / rhs.norm() < 1e-10);
            CHECK(f.theta(0) == doctest::Approx(y.mean() - q.colwise().mean().dot(s)).epsilon(1e-12));
        }
    }
}

TEST_CASE("ridge examples") {
    MatrixXd raw = standard_normal(40, 3, 1);
    raw = center(raw);
    MatrixXd q = oracle::orthonormal_basis(raw);  // centered columns stay centered
    VectorXd y = standard_normal(40, 1, 2).col(0);
    FittedLearner f = ridge_fit(q, y, 1.0);
    const VectorXd expect = (q.transpose() * center(y)) / 2.0;
    CHECK((f.theta.tail(3) - expect).cwiseAbs().maxCoeff() < 1e-12);

    VectorXd star(3);
    star << 1.5, -2.0, 0.25;
    MatrixXd d = standard_normal(30, 3, 4);
    VectorXd exact = d * star;
    exact.array() += 0.7;
    FittedLearner interp = ridge_fit(d, exact, 0.0);
    CHECK((interp.theta.tail(3) - star).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((interp.predict(d) - exact).cwiseAbs().maxCoeff() < 1e-8);

    double last = 1e300;
    for (double g : {1.0, 10.0, 100.0}) {
        const double norm = ridge_fit(d, y.head(30), g).theta.tail(3).norm();
        CHECK(norm < last);
        last = norm;
    }
}

TEST_CASE("ridge errors on a singular system and is the unique minimizer") {
    MatrixXd q = standard_normal(20, 3, 5);
    q.col(2) = q.col(0) + q.col(1);
    VectorXd y = standard_normal(20, 1, 6).col(0);
    CHECK_THROWS_AS(ridge_fit(q, y, 0.0), NumericalError);
    FittedLearner f = ridge_fit(q, y, 0.5);
    const VectorXd s = f.theta.tail(3);
    const double best = ridge_objective(q, y, s, 0.5);
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    for (int t = 0; t < 50; ++t) {
        VectorXd dir(3);
        for (Index j = 0; j < 3; ++j) dir(j) = g(rng);
        dir *= 1e-3 / dir.norm();
        CHECK(ridge_objective(q, y, s + dir, 0.5) >= best);
        CHECK(ridge_objective(q, y, s - dir, 0.5) >= best);
    }
}

TEST_CASE("lasso null threshold and univariate soft thresholding") {
    MatrixXd q = standard_normal(50, 4, 8);
    VectorXd y = standard_normal(50, 1, 9).col(0);
    const double lambda_max = 2.0 / 50.0 * (center(q).transpose() * center(y)).cwiseAbs().maxCoeff();
    FittedLearner null = lasso_fit(q, y, lambda_max * 1.0001);
    CHECK(null.theta.tail(4).cwiseAbs().maxCoeff() == 0.0);
    CHECK(null.theta(0) == doctest::Approx(y.mean()));
    CHECK(null.predict(q).isApprox(VectorXd::Constant(50, y.mean()), 1e-12));

    VectorXd x = standard_normal(50, 1, 10).col(0);
    for (double g : {0.0, 0.05, 0.3, 5.0}) {
        FittedLearner f = lasso_fit(MatrixXd(x), y, g);
        const VectorXd xc = center(x), yc = center(y);
        const double rho = xc.dot(yc), nrm = xc.squaredNorm();
        const double thr = g * 50.0 / 2.0;
        const double expect = (rho > thr ? rho - thr : rho < -thr ? rho + thr : 0.0) / nrm;
        CHECK(f.theta(1) == doctest::Approx(expect).epsilon(1e-10));
    }
}

TEST_CASE("lasso matches a two-dimensional grid oracle") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        MatrixXd q = standard_normal(40, 2, seed + 30);
        q.col(1) += 0.5 * q.col(0);
        VectorXd y = q * VectorXd::LinSpaced(2, 1.0, -0.5) + 0.5 * standard_normal(40, 1, seed + 40).col(0);
        const double g = 0.05 * static_cast<double>(seed + 1);
        FittedLearner f = lasso_fit(q, y, g, 1000, false, 1e-12);
        const double cd = oracle::lasso_objective(q, y, f.theta.tail(2), g);
        auto [best, arg] = oracle::lasso_grid_2d(q, y, g, 3.0);
        CHECK(std::abs(cd - best) < 1e-6);
        CHECK(cd <= best + 1e-12);
    }
}

TEST_CASE("lasso KKT conditions, monotone objective and ridge agreement at zero penalty") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        MatrixXd q = standard_normal(80, 12, seed + 50);
        VectorXd y = q.col(0) - 2.0 * q.col(3) + standard_normal(80, 1, seed + 60).col(0);
        const double g = 0.1;
        FittedLearner f = lasso_fit(q, y, g, 500, false, 1e-10);
        CHECK(f.converged);
        const VectorXd s = f.theta.tail(12);
        const VectorXd r = center(y) - center(q) * s;
        const VectorXd grad = 2.0 / 80.0 * center(q).transpose() * r;
        for (Index j = 0; j < 12; ++j) {
            if (s(j) == 0.0) CHECK(std::abs(grad(j)) <= g + 1e-6);
            else CHECK(grad(j) == doctest::Approx(g * (s(j) > 0 ? 1.0 : -1.0)).epsilon(1e-5));
        }
        REQUIRE(f.objective_trace.size() >= 2);
        for (std::size_t i = 1; i < f.objective_trace.size(); ++i)
            CHECK(f.objective_trace[i] <= f.objective_trace[i - 1] + 1e-12 * std::abs(f.objective_trace[i - 1]));

        FittedLearner l0 = lasso_fit(q, y, 0.0, 10000, false, 1e-12);
        FittedLearner r0 = ridge_fit(q, y, 0.0);
        CHECK((l0.theta - r0.theta).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("lasso stops at max_iter and flags non-convergence") {
    MatrixXd q = standard_normal(30, 10, 70);
    q.col(1) = q.col(0) + 1e-3 * q.col(1);
    VectorXd y = q.col(0);
    FittedLearner f = lasso_fit(q, y, 1e-8, 2, false, 1e-14);
    CHECK_FALSE(f.converged);
    CHECK(f.iterations == 2);
}

TEST_CASE("standardized penalized fits report coefficients on the original scale") {
    MatrixXd q = standard_normal(100, 3, 80);
    q.col(0) *= 100.0;
    q.col(2) *= 0.01;
    VectorXd y = q * VectorXd::LinSpaced(3, 0.01, 50.0);
    FittedLearner r = ridge_fit(q, y, 0.0, true);
    CHECK((r.predict(q) - y).cwiseAbs().maxCoeff() < 1e-8);
    FittedLearner l = lasso_fit(q, y, 0.0, 5000, true, 1e-13);
    CHECK((l.predict(q) - y).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("paths agree with individual fits") {
    MatrixXd q = standard_normal(60, 5, 90);
    VectorXd y = q.col(1) + standard_normal(60, 1, 91).col(0);
    std::vector<double> grid{1e-3, 1e-2, 1e-1, 1.0};
    auto rp = ridge_path(q, y, grid, true);
    auto lp = lasso_path(q, y, grid, 1000, true, 1e-12);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        CHECK((rp[i].theta - ridge_fit(q, y, grid[i], true).theta).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((lp[i].theta - lasso_fit(q, y, grid[i], 1000, true, 1e-12).theta).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("grids") {
    auto g1 = default_lasso_grid();
    REQUIRE(g1.size() == 15);
    CHECK(g1.front() == doctest::Approx(1e-10));
    CHECK(g1.back() == doctest::Approx(1e-3));
    CHECK(g1[1] / g1[0] == doctest::Approx(std::pow(10.0, 0.5)));
    auto g2 = default_ridge_grid();
    REQUIRE(g2.size() == 10);
    CHECK(g2.front() == doctest::Approx(1e-3));
    CHECK(g2.back() == doctest::Approx(1e3));
    CHECK(g2[1] / g2[0] == doctest::Approx(std::pow(10.0, 6.0 / 9.0)));
}

TEST_CASE("cross validation") {
    MatrixXd q = standard_normal(100, 4, 100);
    VectorXd y = q.col(0) + standard_normal(100, 1, 101).col(0);
    LearnerSpec one;
    one.kind = LearnerKind::ridge;
    one.gamma2 = 0.3;
    CvResult single = cross_validate(q, y, {one}, 5, true);
    CHECK(single.best == 0);
    CHECK(single.best_spec.gamma2 == 0.3);
    REQUIRE(single.fold_loss.size() == 1);
    CHECK(single.fold_loss[0].size() == 5);

    std::vector<LearnerSpec> twins(3, one);
    CvResult ties = cross_validate(q, y, twins, 4, false, 9);
    CHECK(ties.best == 0);
    CHECK_THROWS(cross_validate(q.topRows(5), y.head(5), {one}, 5, true));
    CHECK_THROWS(cross_validate(q, y, {}, 5, true));
    CHECK(cross_validate(q, y, twins, 4, false, 9).mean_loss == ties.mean_loss);
}

TEST_CASE("cross validation picks a penalty near the held-out optimum") {
    int good = 0;
    const auto grid = default_ridge_grid();
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        MatrixXd q = standard_normal(150, 30, seed + 200);
        VectorXd beta = 0.3 * standard_normal(30, 1, seed + 300).col(0);
        VectorXd y = q * beta + 2.0 * standard_normal(150, 1, seed + 400).col(0);
        MatrixXd qh = standard_normal(2000, 30, seed + 500);
        VectorXd yh = qh * beta + 2.0 * standard_normal(2000, 1, seed + 600).col(0);
        std::vector<LearnerSpec> specs;
        for (double g : grid) {
            LearnerSpec s;
            s.kind = LearnerKind::ridge;
            s.gamma2 = g;
            specs.push_back(s);
        }
        CvResult cv = cross_validate(q, y, specs, 5, false, seed);
        Index oracle_best = 0;
        double best = 1e300;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double mse = (ridge_fit(q, y, grid[i]).predict(qh) - yh).squaredNorm();
            if (mse < best) {
                best = mse;
                oracle_best = static_cast<Index>(i);
            }
        }
        good += std::abs(cv.best - oracle_best) <= 1;
    }
    CHECK(good >= 45);
}

TEST_CASE("fnn learner: probabilities, determinism, multiclass") {
    MatrixXd q = standard_normal(200, 3, 11);
    VectorXd yb = (q.col(0).array() + q.col(1).array() > 0).cast<double>();
    MlpSpec spec;
    spec.hidden = {16, 4};
    spec.dropout = 0.2;
    spec.epochs = 30;
    spec.learn_rate = 0.05;
    spec.task = Task::binary;
    spec.seed = 4;
    FittedLearner f = fnn_fit(q, yb, spec);
    const VectorXd p = f.predict(standard_normal(50, 3, 12) * 10.0);
    CHECK(p.minCoeff() >= 0.0);
    CHECK(p.maxCoeff() <= 1.0);
    CHECK(f.predict(q) == f.predict(q));
    FittedLearner g = fnn_fit(q, yb, spec);
    CHECK(g.predict(q) == f.predict(q));
    const VectorXd train_pred = f.predict(q);
    double correct = 0;
    for (Index i = 0; i < 200; ++i) correct += (train_pred(i) > 0.5) == (yb(i) == 1.0);
    CHECK(correct / 200.0 > 0.8);

    VectorXd ym(200);
    for (Index i = 0; i < 200; ++i) ym(i) = q(i, 0) < -0.5 ? 0.0 : q(i, 0) < 0.5 ? 1.0 : 2.0;
    spec.task = Task::multiclass;
    spec.dropout = 0.0;
    FittedLearner m = fnn_fit(q, ym, spec);
    const VectorXd labels = m.predict(q);
    for (Index i = 0; i < 200; ++i) CHECK((labels(i) == 0.0 || labels(i) == 1.0 || labels(i) == 2.0));
    CHECK(m.nets.size() == 3);

    spec.task = Task::binary;
    CHECK_THROWS(fnn_fit(q, ym, spec));
    spec.hidden = {0};
    CHECK_THROWS_AS(fnn_fit(q, yb, spec), ConfigError);
}

TEST_CASE("width mismatch and spec validation") {
    MatrixXd q = standard_normal(20, 3, 1);
    VectorXd y = q.col(0);
    FittedLearner f = ridge_fit(q, y, 0.1);
    CHECK_THROWS(f.predict(MatrixXd::Zero(2, 4)));
    LearnerSpec s;
    s.gamma2 = -1.0;
    CHECK_THROWS_AS(validate(s), ConfigError);
    s = LearnerSpec{};
    s.kind = LearnerKind::lasso;
    s.gamma1 = -0.5;
    CHECK_THROWS_AS(validate(s), ConfigError);
    CHECK(learner_kind_from_string("lasso") == LearnerKind::lasso);
    CHECK_THROWS(learner_kind_from_string("forest"));
}

TEST_CASE("external learner protocol") {
    MatrixXd q = standard_normal(30, 2, 3);
    VectorXd y = 2.0 * q.col(0) - q.col(1);
    y.array() += 1.0;
    LearnerSpec s;
    s.kind = LearnerKind::external;
    s.external.command = std::string(FARM_EXTERNAL_HELPER) + " {train_x} {train_y} {test_x} {out}";
    FittedLearner f = fit_learner(q, y, s);
    MatrixXd t = standard_normal(7, 2, 4);
    VectorXd expect = 2.0 * t.col(0) - t.col(1);
    expect.array() += 1.0;
    CHECK((f.predict(t) - expect).cwiseAbs().maxCoeff() < 1e-10);

    ExternalSpec bad{std::string(FARM_EXTERNAL_HELPER) + " {train_x} {train_y} {test_x} {out} 3", 60.0};
    CHECK_THROWS_WITH_AS(run_external_learner(bad, q, y, t), doctest::Contains("exit"), DataError);
    ExternalSpec missing{"true", 60.0};
    CHECK_THROWS_AS(run_external_learner(missing, q, y, t), DataError);
    ExternalSpec slow{"sleep 5", 0.3};
    CHECK_THROWS_WITH_AS(run_external_learner(slow, q, y, t), doctest::Contains("timed out"), DataError);
}

}  // TEST_SUITE
