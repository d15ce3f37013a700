#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "randtrial/ols.hpp"
#include "randtrial/rng.hpp"

using namespace randtrial;

namespace {

// Normal equations with Gauss-Jordan elimination; full-rank designs only.
struct NaiveFit {
    std::vector<double> beta, se;
};

NaiveFit naive_ols(const DesignMatrix& X, const std::vector<double>& y) {
    const std::size_t n = X.rows, p = X.cols();
    std::vector<std::vector<double>> a(p, std::vector<double>(2 * p, 0.0));
    std::vector<double> xty(p, 0.0);
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j < p; ++j)
            for (std::size_t r = 0; r < n; ++r) a[i][j] += X.columns[i].values[r] * X.columns[j].values[r];
        a[i][p + i] = 1.0;
        for (std::size_t r = 0; r < n; ++r) xty[i] += X.columns[i].values[r] * y[r];
    }
    for (std::size_t c = 0; c < p; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < p; ++r)
            if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
        std::swap(a[c], a[piv]);
        const double d = a[c][c];
        for (auto& v : a[c]) v /= d;
        for (std::size_t r = 0; r < p; ++r) {
            if (r == c) continue;
            const double f = a[r][c];
            for (std::size_t k = 0; k < 2 * p; ++k) a[r][k] -= f * a[c][k];
        }
    }
    NaiveFit f;
    f.beta.assign(p, 0.0);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < p; ++j) f.beta[i] += a[i][p + j] * xty[j];
    double rss = 0;
    for (std::size_t r = 0; r < n; ++r) {
        double fitted = 0;
        for (std::size_t j = 0; j < p; ++j) fitted += X.columns[j].values[r] * f.beta[j];
        rss += (y[r] - fitted) * (y[r] - fitted);
    }
    const double s2 = rss / static_cast<double>(n - p);
    for (std::size_t i = 0; i < p; ++i) f.se.push_back(std::sqrt(s2 * a[i][p + i]));
    return f;
}

}  // namespace

TEST_CASE("intercept-only fit is the mean", "[ols]") {
    DesignMatrix X(3);
    X.add("intercept", {1, 1, 1});
    const std::vector<double> y{1, 2, 3};
    const auto fit = ols_fit(X, y);
    CHECK(fit.coefficients[0] == Catch::Approx(2.0).epsilon(1e-15));
    CHECK(fit.residual_df == 2);
    CHECK(fit.stderrs[0] == Catch::Approx(std::sqrt(1.0 / 3.0)).epsilon(1e-14));
}

TEST_CASE("treatment coefficient equals the difference in means", "[ols]") {
    const std::vector<double> y{3, 1, 2, 0, 5.5};
    DesignMatrix X(5);
    X.add("intercept", {1, 1, 1, 1, 1}).add("treatment", {1, 0, 1, 0, 0});
    const auto fit = ols_fit(X, y);
    const double dim = (3 + 2) / 2.0 - (1 + 0 + 5.5) / 3.0;
    CHECK(std::fabs(fit.coefficients[1] - dim) < 1e-13);
}

TEST_CASE("duplicated and dependent columns are dropped, later first", "[ols]") {
    RandomStream rng(3);
    const std::size_t n = 20;
    std::vector<double> x(n), w(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = standard_normal(rng);
        w[i] = standard_normal(rng);
        y[i] = 1 + 2 * x[i] - w[i] + standard_normal(rng);
    }
    DesignMatrix base(n);
    base.add("intercept", std::vector<double>(n, 1.0)).add("x", x).add("w", w);
    const auto ref = ols_fit(base, y);

    DesignMatrix dup = base;
    dup.add("x_copy", x);
    std::vector<double> combo(n);
    for (std::size_t i = 0; i < n; ++i) combo[i] = 3 - x[i] + 0.5 * w[i];
    dup.add("combo", combo);
    const auto fit = ols_fit(dup, y);
    CHECK(fit.dropped_columns == std::vector<std::string>{"x_copy", "combo"});
    CHECK(fit.names == ref.names);
    CHECK(fit.residual_df == ref.residual_df);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(std::fabs(fit.coefficients[j] - ref.coefficients[j]) < 1e-12);
        CHECK(std::fabs(fit.stderrs[j] - ref.stderrs[j]) < 1e-12);
    }
    CHECK(fit.index_of("w") == 2);
    CHECK_FALSE(fit.index_of("combo").has_value());
}

TEST_CASE("QR agrees with a normal-equations oracle", "[ols][oracle]") {
    RandomStream rng(99);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t n = 8 + static_cast<std::size_t>(uniform_below(rng, 40));
        const std::size_t p = 1 + static_cast<std::size_t>(uniform_below(rng, 5));
        DesignMatrix X(n);
        X.add("intercept", std::vector<double>(n, 1.0));
        for (std::size_t j = 0; j < p; ++j) {
            std::vector<double> c(n);
            for (auto& v : c) v = standard_normal(rng) * (1 + static_cast<double>(j));
            X.add("c" + std::to_string(j), c);
        }
        std::vector<double> y(n);
        for (auto& v : y) v = 10 + standard_normal(rng);
        const auto qr = ols_fit(X, y);
        const auto ne = naive_ols(X, y);
        REQUIRE(qr.dropped_columns.empty());
        for (std::size_t j = 0; j <= p; ++j) {
            CHECK(qr.coefficients[j] == Catch::Approx(ne.beta[j]).epsilon(1e-9).margin(1e-10));
            CHECK(qr.stderrs[j] == Catch::Approx(ne.se[j]).epsilon(1e-9));
        }
    }
}

TEST_CASE("ols errors", "[ols][errors]") {
    DesignMatrix X(2);
    X.add("intercept", {1, 1}).add("t", {1, 0});
    CHECK_THROWS_AS(ols_fit(X, std::vector<double>{1, 2}), UnidentifiableModel);
    CHECK_THROWS_AS(ols_fit(X, std::vector<double>{1, 2, 3}), InvalidInput);
    CHECK_THROWS_AS(X.add("bad", {1, 2, 3}), InvalidInput);
}
