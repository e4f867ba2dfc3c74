#pragma once

#include "dsgd/common.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string>

namespace dsgd {

/// Highest polynomial exactness supported by the rules below.
inline constexpr int max_quadrature_exactness = 30;

/// Points, positive weights and the polynomial degree integrated exactly.
struct QuadratureRule {
    std::vector<Vec2> points;
    Vector weights;
    int exactness = 0;

    std::size_t size() const { return points.size(); }
    double measure() const { return weights.sum(); }
    void append(const QuadratureRule& other)
    {
        points.insert(points.end(), other.points.begin(), other.points.end());
        const auto n = weights.size();
        weights.conservativeResize(n + other.weights.size());
        weights.tail(other.weights.size()) = other.weights;
    }
};

namespace detail {

    struct GaussTable {
        // nodes/weights on [0, 1] for 1..max_points points
        static constexpr int max_points = 20;
        std::array<std::vector<double>, max_points + 1> nodes, weights;

        // (P_n(x), P_{n-1}(x))
        static std::pair<double, double> legendre(int n, double x)
        {
            double p0 = 1., p1 = x;
            for (int j = 2; j <= n; ++j) {
                const double p2 = ((2. * j - 1.) * x * p1 - (j - 1.) * p0) / j;
                p0 = p1;
                p1 = p2;
            }
            return {p1, p0};
        }

        GaussTable()
        {
            for (int n = 1; n <= max_points; ++n) {
                nodes[n].resize(n);
                weights[n].resize(n);
                for (int i = 0; i < n; ++i) {
                    // Newton iteration on P_n from the Chebyshev-like initial guess
                    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
                    double dp = 1.;
                    for (int it = 0; it < 100; ++it) {
                        const auto [pn, pm] = legendre(n, x);
                        dp = n * (x * pn - pm) / (x * x - 1.);
                        const double dx = pn / dp;
                        x -= dx;
                        if (std::abs(dx) < 1e-16)
                            break;
                    }
                    const auto [pn, pm] = legendre(n, x);
                    dp = n * (x * pn - pm) / (x * x - 1.);
                    nodes[n][i] = 0.5 * (1. - x);
                    weights[n][i] = 1. / ((1. - x * x) * dp * dp);
                }
            }
        }
    };

    inline const GaussTable& gauss_table()
    {
        static const GaussTable table;
        return table;
    }

    inline void check_exactness(int exactness)
    {
        if (exactness > max_quadrature_exactness)
            throw UnsupportedDegree("quadrature exactness " + std::to_string(exactness) + " exceeds "
                                    + std::to_string(max_quadrature_exactness));
    }

} // namespace detail

/// Gauss-Legendre nodes and weights on [0, 1] with n points (exact to degree 2n-1).
inline std::pair<const std::vector<double>&, const std::vector<double>&> gauss_legendre01(int n)
{
    const auto& t = detail::gauss_table();
    n = std::clamp(n, 1, detail::GaussTable::max_points);
    return {t.nodes[n], t.weights[n]};
}

/// Gauss-Legendre rule on the segment [a, b]; weights sum to |b - a|.
inline QuadratureRule segment_rule(const Vec2& a, const Vec2& b, int exactness)
{
    detail::check_exactness(exactness);
    const int n = std::max(1, (exactness + 2) / 2);
    auto [x, w] = gauss_legendre01(n);
    const double len = (b - a).norm();
    QuadratureRule rule;
    rule.exactness = exactness;
    rule.points.reserve(n);
    rule.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        rule.points.push_back(a + x[i] * (b - a));
        rule.weights[i] = w[i] * len;
    }
    return rule;
}

/// Collapsed (Duffy) Gauss product rule on the triangle (a, b, c).
///
/// x(u, v) = (1-u) a + u ((1-v) b + v c), Jacobian 2|T| u; the extra factor u raises
/// the degree in u by one, hence the asymmetric point counts.
inline QuadratureRule triangle_rule(const Vec2& a, const Vec2& b, const Vec2& c, int exactness)
{
    detail::check_exactness(exactness);
    exactness = std::max(exactness, 0);
    const int nu = (exactness + 3) / 2;
    const int nv = (exactness + 2) / 2;
    auto [xu, wu] = gauss_legendre01(nu);
    auto [xv, wv] = gauss_legendre01(nv);
    const double area2 = std::abs(cross(b - a, c - a));
    QuadratureRule rule;
    rule.exactness = exactness;
    rule.points.reserve(nu * nv);
    rule.weights.resize(nu * nv);
    for (int i = 0; i < nu; ++i) {
        const double u = xu[i];
        for (int j = 0; j < nv; ++j) {
            const double v = xv[j];
            rule.points.push_back((1. - u) * a + u * ((1. - v) * b + v * c));
            rule.weights[i * nv + j] = area2 * wu[i] * wv[j] * u;
        }
    }
    return rule;
}

} // namespace dsgd
