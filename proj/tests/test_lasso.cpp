#include <catch_amalgamated.hpp>

#include <random>

#include "phar/lasso.hpp"

using namespace phar;

namespace {

DesignMatrix matrix(std::size_t rows, std::size_t cols, const std::vector<double>& row_major) {
    DesignMatrix z(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) z.at(i, j) = row_major[i * cols + j];
    return z;
}

/// Objective with the intercept at its optimum for the given beta.
double profiled(const DesignMatrix& z, const std::vector<double>& y, const std::vector<double>& beta, double lambda) {
    double b0 = 0.0;
    for (std::size_t i = 0; i < z.rows; ++i) {
        double fit = 0.0;
        for (std::size_t j = 0; j < z.cols; ++j) fit += z.at(i, j) * beta[j];
        b0 += y[i] - fit;
    }
    b0 /= double(z.rows);
    return lasso_objective(z, y, b0, beta, lambda);
}

/// Exhaustive grid scan over two coefficients, zooming around the best cell until the grid
/// step is below 1e-9. The objective is convex, so the zoom cannot leave the minimizer.
std::vector<double> grid_minimizer(const DesignMatrix& z, const std::vector<double>& y, double lambda) {
    double c0 = 0.0, c1 = 0.0, half = 4.0;
    const int steps = 40;
    while (half > 1e-10) {
        double best = INFINITY, b0 = c0, b1 = c1;
        for (int i = -steps; i <= steps; ++i)
            for (int j = -steps; j <= steps; ++j) {
                std::vector<double> beta{c0 + half * i / steps, c1 + half * j / steps};
                double v = profiled(z, y, beta, lambda);
                if (v < best) {
                    best = v;
                    b0 = beta[0];
                    b1 = beta[1];
                }
            }
        c0 = b0;
        c1 = b1;
        half *= 4.0 / steps;
    }
    return {c0, c1};
}

} // namespace

TEST_CASE("soft threshold") {
    CHECK(soft_threshold(3.0, 1.0) == 2.0);
    CHECK(soft_threshold(-3.0, 1.0) == -2.0);
    CHECK(soft_threshold(0.5, 1.0) == 0.0);
    CHECK(soft_threshold(-1.0, 1.0) == 0.0);
}

TEST_CASE("target equal to one column keeps only that column") {
    auto z = matrix(6, 3, {1, 0, 1, 0, 1, 1, 1, 1, 0, 0, 0, 0, 1, 0, 1, 0, 1, 0});
    std::vector<double> y{1, 0, 1, 0, 1, 0};
    double lmax = lambda_max(z, y);
    auto res = solve_lasso(z, y, {1e-4 * lmax});
    CHECK(res.converged);
    CHECK(res.beta[0] > 0.99);
    CHECK(std::abs(res.beta[1]) < 1e-3);
    CHECK(std::abs(res.beta[2]) < 1e-3);
    // Closed form for a single column: beta = S(z'(y - ybar), lambda / 2) / ||z - zbar||^2.
    auto one = matrix(6, 1, {1, 0, 1, 0, 1, 0});
    auto single = solve_lasso(one, y, {0.5});
    CHECK(single.beta[0] == Catch::Approx((1.5 - 0.25) / 1.5).epsilon(1e-10));
    CHECK(single.intercept == Catch::Approx(0.5 - 0.5 * single.beta[0]).epsilon(1e-10));
}

TEST_CASE("lambda at or above lambda max gives the null solution") {
    std::mt19937_64 rng(2);
    std::bernoulli_distribution coin(0.5);
    for (int t = 0; t < 100; ++t) {
        DesignMatrix z(12, 4);
        std::vector<double> y(12);
        for (auto& v : z.data) v = coin(rng);
        for (auto& v : y) v = coin(rng);
        double lmax = lambda_max(z, y);
        for (double f : {1.0, 1.5, 10.0}) {
            auto res = solve_lasso(z, y, {f * lmax + 1e-12});
            for (double b : res.beta) CHECK(b == 0.0);
        }
    }
}

TEST_CASE("coordinate descent matches the grid minimizer on two conditions") {
    std::mt19937_64 rng(7);
    std::bernoulli_distribution coin(0.5);
    std::uniform_real_distribution<double> frac(0.01, 0.9);
    int compared = 0;
    for (int t = 0; t < 40; ++t) {
        std::size_t rows = 4 + std::size_t(t % 5);
        DesignMatrix z(rows, 2);
        std::vector<double> y(rows);
        for (auto& v : z.data) v = coin(rng);
        for (auto& v : y) v = coin(rng);
        double lambda = frac(rng) * std::max(lambda_max(z, y), 0.1);
        auto res = solve_lasso(z, y, {lambda, 1e-12, 100000});
        auto grid = grid_minimizer(z, y, lambda);
        CHECK(profiled(z, y, res.beta, lambda) <= profiled(z, y, grid, lambda) + 1e-9);
        // Coefficients are unique when the centered columns are linearly independent.
        double m0 = 0, m1 = 0;
        for (std::size_t i = 0; i < rows; ++i) {
            m0 += z.at(i, 0) / double(rows);
            m1 += z.at(i, 1) / double(rows);
        }
        double a = 0, b = 0, c = 0;
        for (std::size_t i = 0; i < rows; ++i) {
            a += (z.at(i, 0) - m0) * (z.at(i, 0) - m0);
            b += (z.at(i, 0) - m0) * (z.at(i, 1) - m1);
            c += (z.at(i, 1) - m1) * (z.at(i, 1) - m1);
        }
        if (a * c - b * b > 1e-6) {
            ++compared;
            CHECK(std::abs(res.beta[0] - grid[0]) < 1e-6);
            CHECK(std::abs(res.beta[1] - grid[1]) < 1e-6);
        }
    }
    CHECK(compared >= 10);
}

TEST_CASE("objective never increases across sweeps") {
    std::mt19937_64 rng(13);
    std::bernoulli_distribution coin(0.4);
    std::uniform_real_distribution<double> frac(0.001, 0.5);
    for (int t = 0; t < 100; ++t) {
        DesignMatrix z(30, 8);
        std::vector<double> y(30);
        for (auto& v : z.data) v = coin(rng);
        for (auto& v : y) v = coin(rng);
        auto res = solve_lasso(z, y, {frac(rng) * lambda_max(z, y)});
        REQUIRE(res.objective_trace.size() == std::size_t(res.sweeps) + 1);
        for (std::size_t k = 1; k < res.objective_trace.size(); ++k)
            CHECK(res.objective_trace[k] <= res.objective_trace[k - 1] + 1e-12);
    }
}

TEST_CASE("duplicate and constant columns") {
    auto z = matrix(5, 3, {1, 1, 1, 0, 0, 1, 1, 1, 1, 0, 0, 1, 1, 1, 1});  // columns 0 and 1 equal, column 2 constant
    std::vector<double> y{1, 0, 1, 0, 1};
    auto res = solve_lasso(z, y, {0.01});
    CHECK(res.converged);
    CHECK(res.beta[2] == 0.0);
    CHECK(res.beta[0] + res.beta[1] > 0.9);
    CHECK_THROWS_AS(solve_lasso(z, std::vector<double>{1, 0}, {0.1}), std::invalid_argument);
    CHECK_THROWS_AS(solve_lasso(z, y, {-1.0}), std::invalid_argument);
}
