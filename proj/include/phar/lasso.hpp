#pragma once

// L1-penalized least squares with an unpenalized intercept,
//   min_{b0, beta} ||y - b0 - Z beta||_2^2 + lambda ||beta||_1,
// solved by cyclic coordinate descent with soft-thresholding. Columns are used as given
// (no standardization).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace phar {

/// Dense column-major design matrix.
struct DesignMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    DesignMatrix() = default;
    DesignMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t i, std::size_t j) { return data[j * rows + i]; }
    double at(std::size_t i, std::size_t j) const { return data[j * rows + i]; }
    std::span<const double> column(std::size_t j) const { return {data.data() + j * rows, rows}; }
};

struct LassoOptions {
    double lambda = 0.0;
    double tolerance = 1e-8;  // stop once no coefficient moves more than this in a sweep
    int max_sweeps = 1000;
};

struct LassoResult {
    double intercept = 0.0;
    std::vector<double> beta;
    int sweeps = 0;
    bool converged = false;
    std::vector<double> objective_trace;  // value before the first sweep, then after each sweep
};

inline double soft_threshold(double z, double gamma) noexcept {
    if (z > gamma) return z - gamma;
    if (z < -gamma) return z + gamma;
    return 0.0;
}

inline double lasso_objective(const DesignMatrix& z, std::span<const double> y, double intercept,
                              std::span<const double> beta, double lambda) {
    double rss = 0.0;
    for (std::size_t i = 0; i < z.rows; ++i) {
        double fit = intercept;
        for (std::size_t j = 0; j < z.cols; ++j) fit += z.at(i, j) * beta[j];
        rss += (y[i] - fit) * (y[i] - fit);
    }
    double l1 = 0.0;
    for (double b : beta) l1 += std::abs(b);
    return rss + lambda * l1;
}

/// Smallest lambda for which beta = 0 is optimal: 2 max_j |(Z_j - mean(Z_j))^T (y - mean(y))|.
/// Evaluated exactly as the solver's first coordinate step so lambda = lambda_max gives zeros.
inline double lambda_max(const DesignMatrix& z, std::span<const double> y) {
    if (y.empty() || z.rows != y.size()) return 0.0;
    const double n = double(z.rows);
    double ybar = 0.0;
    for (double v : y) ybar += v;
    ybar /= n;
    double best = 0.0;
    for (std::size_t j = 0; j < z.cols; ++j) {
        auto col = z.column(j);
        double mean = 0.0;
        for (double v : col) mean += v;
        mean /= n;
        double g = 0.0;
        for (std::size_t i = 0; i < z.rows; ++i) g += (col[i] - mean) * (y[i] - ybar);
        best = std::max(best, std::abs(g));
    }
    return 2.0 * best;
}

/// The intercept is profiled out: for fixed beta its optimum is mean(y - Z beta), so the
/// solver runs on centered columns and recovers b0 at the end. Same minimizer, far fewer
/// sweeps when the binary columns correlate with the constant.
inline LassoResult solve_lasso(const DesignMatrix& z, std::span<const double> y, const LassoOptions& opt) {
    if (y.size() != z.rows) throw std::invalid_argument("lasso: target length does not match design rows");
    if (!(opt.lambda >= 0.0)) throw std::invalid_argument("lasso: lambda must be non-negative");
    LassoResult res;
    res.beta.assign(z.cols, 0.0);
    if (z.rows == 0) {
        res.converged = true;
        return res;
    }

    const double n = double(z.rows);
    double ybar = 0.0;
    for (double v : y) ybar += v;
    ybar /= n;

    DesignMatrix zc = z;
    std::vector<double> col_mean(z.cols, 0.0), col_sq(z.cols, 0.0);
    for (std::size_t j = 0; j < z.cols; ++j) {
        for (double v : z.column(j)) col_mean[j] += v;
        col_mean[j] /= n;
        for (std::size_t i = 0; i < z.rows; ++i) {
            zc.at(i, j) -= col_mean[j];
            col_sq[j] += zc.at(i, j) * zc.at(i, j);
        }
    }
    auto intercept = [&] {
        double b0 = ybar;
        for (std::size_t j = 0; j < z.cols; ++j) b0 -= col_mean[j] * res.beta[j];
        return b0;
    };

    std::vector<double> r(y.begin(), y.end());
    for (auto& v : r) v -= ybar;
    res.intercept = ybar;
    res.objective_trace.push_back(lasso_objective(z, y, res.intercept, res.beta, opt.lambda));

    const double half_lambda = 0.5 * opt.lambda;
    for (int sweep = 0; sweep < opt.max_sweeps; ++sweep) {
        double max_change = 0.0;
        for (std::size_t j = 0; j < z.cols; ++j) {
            if (col_sq[j] <= 1e-14) continue;
            auto col = zc.column(j);
            const double old = res.beta[j];
            double rho = 0.0;
            for (std::size_t i = 0; i < z.rows; ++i) rho += col[i] * r[i];
            rho += col_sq[j] * old;
            const double updated = soft_threshold(rho, half_lambda) / col_sq[j];
            const double delta = updated - old;
            if (delta != 0.0) {
                for (std::size_t i = 0; i < z.rows; ++i) r[i] -= col[i] * delta;
                res.beta[j] = updated;
                max_change = std::max(max_change, std::abs(delta));
            }
        }
        res.sweeps = sweep + 1;
        res.intercept = intercept();
        res.objective_trace.push_back(lasso_objective(z, y, res.intercept, res.beta, opt.lambda));
        if (max_change < opt.tolerance) {
            res.converged = true;
            break;
        }
    }
    return res;
}

} // namespace phar
