// ols.hpp - ordinary least squares by Householder QR with in-order rank
// detection.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "randtrial/errors.hpp"

namespace randtrial {

struct Column {
    std::string name;
    std::vector<double> values;
};

struct DesignMatrix {
    std::size_t rows = 0;
    std::vector<Column> columns;

    explicit DesignMatrix(std::size_t n = 0) : rows(n) {}

    DesignMatrix& add(std::string name, std::vector<double> values) {
        if (values.size() != rows)
            throw InvalidInput("column '" + name + "' has " + std::to_string(values.size()) + " rows, expected " +
                               std::to_string(rows));
        columns.push_back({std::move(name), std::move(values)});
        return *this;
    }

    std::size_t cols() const noexcept { return columns.size(); }
};

struct OlsFit {
    std::vector<std::string> names;  // retained columns, in input order
    std::vector<double> coefficients;
    std::vector<double> stderrs;
    std::vector<std::string> dropped_columns;
    int residual_df = 0;
    double rss = 0.0;

    std::optional<std::size_t> index_of(const std::string& name) const {
        const auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end()) return std::nullopt;
        return static_cast<std::size_t>(it - names.begin());
    }
};

/// Relative tolerance (against the largest column norm) below which a
/// column's component orthogonal to the earlier retained columns counts as
/// zero.
inline constexpr double kRankTolerance = 1e-10;

/// Least squares with classical standard errors. Columns are processed in the
/// order given; a column that is numerically in the span of the columns before
/// it is dropped, so later-added columns are always the ones removed.
inline OlsFit ols_fit(const DesignMatrix& X, std::span<const double> y) {
    const std::size_t n = X.rows;
    const std::size_t p = X.cols();
    if (y.size() != n)
        throw InvalidInput("response has " + std::to_string(y.size()) + " rows, design has " + std::to_string(n));

    double max_norm = 0.0;
    for (const auto& c : X.columns) {
        double s = 0.0;
        for (double v : c.values) s += v * v;
        max_norm = std::max(max_norm, std::sqrt(s));
    }
    const double threshold = kRankTolerance * max_norm;

    std::vector<std::vector<double>> reflectors;  // Householder vectors v_k (length n, zero above k)
    std::vector<std::size_t> kept;
    std::vector<double> qty(y.begin(), y.end());
    std::vector<double> work(n);

    auto apply = [n](const std::vector<double>& v, std::size_t k, std::vector<double>& x) {
        double dot = 0.0;
        for (std::size_t i = k; i < n; ++i) dot += v[i] * x[i];
        dot *= 2.0;
        for (std::size_t i = k; i < n; ++i) x[i] -= dot * v[i];
    };

    OlsFit fit;
    std::vector<std::vector<double>> R;  // R[j] = column j of R (length = rank at insertion + 1)
    for (std::size_t j = 0; j < p; ++j) {
        std::copy(X.columns[j].values.begin(), X.columns[j].values.end(), work.begin());
        const std::size_t k = kept.size();
        for (std::size_t r = 0; r < k; ++r) apply(reflectors[r], r, work);
        double tail = 0.0;
        for (std::size_t i = k; i < n; ++i) tail += work[i] * work[i];
        tail = std::sqrt(tail);
        if (k >= n || !(tail > threshold)) {
            fit.dropped_columns.push_back(X.columns[j].name);
            continue;
        }
        // Reflector mapping work[k..n) onto -sign(work[k]) * tail * e_k.
        const double alpha = work[k] >= 0 ? -tail : tail;
        std::vector<double> v(n, 0.0);
        v[k] = work[k] - alpha;
        for (std::size_t i = k + 1; i < n; ++i) v[i] = work[i];
        double vnorm = 0.0;
        for (std::size_t i = k; i < n; ++i) vnorm += v[i] * v[i];
        vnorm = std::sqrt(vnorm);
        for (std::size_t i = k; i < n; ++i) v[i] /= vnorm;
        std::vector<double> rcol(work.begin(), work.begin() + static_cast<std::ptrdiff_t>(k));
        rcol.push_back(alpha);
        R.push_back(std::move(rcol));
        apply(v, k, qty);
        reflectors.push_back(std::move(v));
        kept.push_back(j);
    }

    const std::size_t rank = kept.size();
    const long df = static_cast<long>(n) - static_cast<long>(rank);
    if (df < 1)
        throw UnidentifiableModel("least squares needs at least one residual degree of freedom: n = " +
                                  std::to_string(n) + ", retained columns = " + std::to_string(rank));
    fit.residual_df = static_cast<int>(df);

    // Back-substitution for coefficients; R[j][i] is row i of column j.
    std::vector<double> beta(rank);
    for (std::size_t ii = rank; ii-- > 0;) {
        double s = qty[ii];
        for (std::size_t j = ii + 1; j < rank; ++j) s -= R[j][ii] * beta[j];
        beta[ii] = s / R[ii][ii];
    }
    double rss = 0.0;
    for (std::size_t i = rank; i < n; ++i) rss += qty[i] * qty[i];
    fit.rss = rss;
    const double sigma2 = rss / static_cast<double>(df);

    // Rinv (upper triangular), column by column: R * Rinv[:, c] = e_c.
    std::vector<double> rinv(rank * rank, 0.0);  // row-major
    for (std::size_t c = 0; c < rank; ++c) {
        for (std::size_t ii = c + 1; ii-- > 0;) {
            double s = (ii == c) ? 1.0 : 0.0;
            for (std::size_t j = ii + 1; j <= c; ++j) s -= R[j][ii] * rinv[j * rank + c];
            rinv[ii * rank + c] = s / R[ii][ii];
        }
    }
    fit.coefficients = beta;
    fit.stderrs.resize(rank);
    for (std::size_t ii = 0; ii < rank; ++ii) {
        double s = 0.0;
        for (std::size_t c = ii; c < rank; ++c) s += rinv[ii * rank + c] * rinv[ii * rank + c];
        fit.stderrs[ii] = std::sqrt(sigma2 * s);
    }
    for (auto j : kept) fit.names.push_back(X.columns[j].name);
    return fit;
}

}  // namespace randtrial
