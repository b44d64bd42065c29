#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "farm/bundle.hpp"
#include "farm/error.hpp"
#include "farm/matrix_io.hpp"
#include "support.hpp"

using namespace farm;

TEST_SUITE("matrixio") {

TEST_CASE("load_csv reads a header and values") {
    TempDir dir;
    auto path = dir.write("m.csv", "a,b\n1,2\n3,4\n");
    Matrix m = load_csv(path, true);
    CHECK(m.rows() == 2);
    CHECK(m.cols() == 2);
    CHECK(m.col_names == std::vector<std::string>{"a", "b"});
    CHECK(m.values(1, 0) == 3.0);
    CHECK(m.values(0, 1) == 2.0);
}

TEST_CASE("load_csv rejects NaN with its row and column") {
    TempDir dir;
    auto path = dir.write("m.csv", "1,NaN\n");
    CHECK_THROWS_WITH_AS(load_csv(path, false), doctest::Contains("row 1 col 2"), DataError);
}

TEST_CASE("load_csv errors on empty, ragged and unparsable input") {
    TempDir dir;
    CHECK_THROWS_WITH_AS(load_csv(dir.write("e.csv", ""), false), doctest::Contains("no rows"), DataError);
    CHECK_THROWS_WITH_AS(load_csv(dir.write("r.csv", "1,2\n3\n"), false), doctest::Contains("ragged"), DataError);
    CHECK_THROWS_AS(load_csv(dir.write("x.csv", "1,abc\n"), false), DataError);
}

TEST_CASE("load_csv handles quoted fields and CRLF") {
    TempDir dir;
    Matrix m = load_csv(dir.write("q.csv", "\"a,1\",b\r\n\"1.5\",2\r\n"), true);
    CHECK(m.col_names[0] == "a,1");
    CHECK(m.values(0, 0) == 1.5);
}

TEST_CASE("binary round trip is bit exact") {
    TempDir dir;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1e300, 1e300);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix m;
        const Index n = 1 + trial % 7, p = 1 + trial % 5;
        m.values.resize(n, p);
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < p; ++j) m.values(i, j) = trial % 3 == 0 ? u(rng) : std::ldexp(u(rng), -1100);
        m.values(0, 0) = -0.0;
        m.values(n - 1, p - 1) = std::numeric_limits<double>::denorm_min();
        if (trial % 2) {
            for (Index j = 0; j < p; ++j) m.col_names.push_back("c" + std::to_string(j));
        }
        auto path = dir.path / "m.bin";
        save_bin(m, path);
        Matrix back = load_bin(path);
        REQUIRE(back.rows() == n);
        REQUIRE(back.cols() == p);
        CHECK(back.col_names == m.col_names);
        CHECK(std::memcmp(back.values.data(), m.values.data(), sizeof(double) * static_cast<std::size_t>(n * p)) == 0);
    }
}

TEST_CASE("binary layout is the documented little-endian row-major record") {
    TempDir dir;
    Matrix m;
    m.values.resize(2, 2);
    m.values << 1.0, 2.0, 3.0, 4.0;
    auto path = dir.path / "m.bin";
    save_bin(m, path);
    std::ifstream in(path, std::ios::binary);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    REQUIRE(bytes.size() == 8 + 16 + 32);
    CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "FARMAUG1");
    CHECK(bytes[8] == 2);
    CHECK(bytes[16] == 2);
    double second = 0.0;
    std::memcpy(&second, bytes.data() + 24 + 8, 8);
    CHECK(second == 2.0);  // row-major: (0,1) follows (0,0)
}

TEST_CASE("load_bin reports truncation and bad magic") {
    TempDir dir;
    Matrix m;
    m.values = MatrixXd::Ones(3, 3);
    auto path = dir.path / "m.bin";
    save_bin(m, path);
    std::filesystem::resize_file(path, 8 + 16 + 40);
    CHECK_THROWS_WITH_AS(load_bin(path), doctest::Contains("truncated"), DataError);
    std::filesystem::resize_file(path, 4);
    CHECK_THROWS_WITH_AS(load_bin(path), doctest::Contains("truncated"), DataError);
    auto bad = dir.write("bad.bin", std::string("FARMAUGX") + std::string(16, '\0'));
    CHECK_THROWS_WITH_AS(load_bin(bad), doctest::Contains("bad magic"), DataError);
}

TEST_CASE("validate enforces finite values and unique names") {
    Matrix m;
    m.values = MatrixXd::Zero(2, 2);
    m.col_names = {"a", "a"};
    CHECK_THROWS_AS(validate(m), DataError);
    m.col_names = {"a"};
    CHECK_THROWS_AS(validate(m), DataError);
    m.col_names.clear();
    m.values(1, 1) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(validate(m), DataError);
}

TEST_CASE("standardize examples") {
    MatrixXd a(3, 1);
    a << 1, 2, 3;
    Standardized d = standardize(a, ScaleMode::demean);
    CHECK(d.values(0, 0) == -1.0);
    CHECK(d.values(1, 0) == 0.0);
    CHECK(d.values(2, 0) == 1.0);

    MatrixXd b = MatrixXd::Constant(3, 1, 5.0);
    Standardized z = standardize(b, ScaleMode::zscore);
    CHECK(z.values.cwiseAbs().maxCoeff() == 0.0);
    CHECK(z.map.scales(0) == 1.0);

    MatrixXd c(2, 1);
    c << 0, 2;
    Standardized s = standardize(c, ScaleMode::zscore);
    const double x = 1.0 / std::sqrt(2.0);
    CHECK(s.values(0, 0) == doctest::Approx(-x).epsilon(1e-15));
    CHECK(s.values(1, 0) == doctest::Approx(x).epsilon(1e-15));
}

TEST_CASE("standardize: centered columns and affine reuse on held-out rows") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        MatrixXd m(40, 6);
        for (Index i = 0; i < m.rows(); ++i)
            for (Index j = 0; j < m.cols(); ++j) m(i, j) = 1e3 * j + std::pow(10.0, j - 2) * g(rng);
        for (ScaleMode mode : {ScaleMode::demean, ScaleMode::zscore}) {
            Standardized s = standardize(m, mode);
            for (Index j = 0; j < m.cols(); ++j) {
                const double mag = m.col(j).cwiseAbs().maxCoeff();
                CHECK(std::abs(s.values.col(j).mean()) < 1e-12 * mag);
                if (mode == ScaleMode::zscore) {
                    const VectorXd c = s.values.col(j);
                    CHECK(std::sqrt(c.squaredNorm() / (c.size() - 1)) == doctest::Approx(1.0).epsilon(1e-12));
                }
            }
            MatrixXd held(3, 6);
            for (Index i = 0; i < 3; ++i)
                for (Index j = 0; j < 6; ++j) held(i, j) = g(rng);
            const MatrixXd applied = s.map.apply(held);
            for (Index i = 0; i < 3; ++i)
                for (Index j = 0; j < 6; ++j)
                    CHECK(applied(i, j) == (held(i, j) - s.map.centers(j)) / s.map.scales(j));
            CHECK(s.map.apply(m).isApprox(s.values, 1e-14));
        }
    }
}

TEST_CASE("top_frequency_columns examples and errors") {
    auto sums = [](std::vector<double> s) {
        MatrixXd m(1, static_cast<Index>(s.size()));
        for (std::size_t j = 0; j < s.size(); ++j) m(0, static_cast<Index>(j)) = s[j];
        return m;
    };
    CHECK(top_frequency_columns(sums({5, 9, 9, 1}), 2) == std::vector<Index>{1, 2});
    CHECK(top_frequency_columns(sums({5, 9, 9, 1}), 4) == std::vector<Index>{0, 1, 2, 3});
    CHECK(top_frequency_columns(sums({0, 0, 3}), 1) == std::vector<Index>{2});
    CHECK_THROWS(top_frequency_columns(sums({1, 2}), 3));
}

TEST_CASE("top_frequency_columns is permutation equivariant") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> cnt(0, 1000);
    for (int trial = 0; trial < 20; ++trial) {
        MatrixXd m(4, 12);
        for (Index i = 0; i < 4; ++i)
            for (Index j = 0; j < 12; ++j) m(i, j) = cnt(rng);  // distinct sums with high probability
        std::vector<Index> perm(12);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        MatrixXd pm(4, 12);
        for (Index j = 0; j < 12; ++j) pm.col(j) = m.col(perm[static_cast<std::size_t>(j)]);
        auto base = top_frequency_columns(m, 5);
        auto moved = top_frequency_columns(pm, 5);
        std::vector<Index> mapped;
        for (Index j : moved) mapped.push_back(perm[static_cast<std::size_t>(j)]);
        std::sort(mapped.begin(), mapped.end());
        CHECK(mapped == base);
    }
}

TEST_CASE("panel csv with optional market cap and duplicate asset-days") {
    TempDir dir;
    auto path = dir.write("p.csv", "asset_id,date,y,market_cap,f1,f2\nA,1,0.5,10,1,2\nA,1,0.1,10,3,4\nB,2,-1,,5,6\n");
    PanelData p = load_panel_csv(path);
    REQUIRE(p.records.size() == 3);
    CHECK(p.records[1].asset_id == "A");
    CHECK(p.records[1].date == 1);
    CHECK(p.records[0].market_cap.value() == 10.0);
    CHECK_FALSE(p.records[2].market_cap.has_value());
    CHECK(p.features.values(2, 1) == 6.0);
    CHECK(p.features.col_names == std::vector<std::string>{"f1", "f2"});
}

TEST_CASE("bundle round trip keeps matrices and texts") {
    TempDir dir;
    Bundle b;
    Matrix m;
    m.values = MatrixXd::Random(3, 2);
    m.col_names = {"u", "v"};
    b.matrices["a/m"] = m;
    b.texts["spec"] = "{\"k\": 3}";
    save_bundle(b, dir.path / "b.bin");
    Bundle back = load_bundle(dir.path / "b.bin");
    CHECK(back.matrix("a/m") == m);
    CHECK(back.text("spec") == "{\"k\": 3}");
    CHECK_THROWS(back.matrix("missing"));
}

}  // TEST_SUITE
