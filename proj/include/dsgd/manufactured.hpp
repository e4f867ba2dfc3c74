#pragma once

#include "dsgd/common.hpp"

#include <cmath>
#include <functional>
#include <numbers>

namespace dsgd {

/// Smooth exact solution with derivatives up to order two.
struct ExactSolution {
    std::string name;
    std::function<double(const Vec2&)> u;
    std::function<Vec2(const Vec2&)> grad;
    std::function<Eigen::Matrix2d(const Vec2&)> hessian;
    bool homogeneous = false; ///< vanishes on the boundary of the unit square

    /// Source term of -div(|grad u|^{p-2} grad u).
    double source(const Vec2& x, double p) const
    {
        const Vec2 g = grad(x);
        const Eigen::Matrix2d H = hessian(x);
        const double n2 = g.squaredNorm();
        if (p == 2.)
            return -H.trace();
        if (n2 == 0.)
            return 0.;
        return -(std::pow(n2, 0.5 * (p - 2.)) * H.trace() + (p - 2.) * std::pow(n2, 0.5 * (p - 4.)) * g.dot(H * g));
    }
};

/// u = sin(pi x) sin(pi y).
inline ExactSolution trigonometric_solution()
{
    using std::numbers::pi;
    ExactSolution s;
    s.name = "trig";
    s.homogeneous = true;
    s.u = [](const Vec2& x) { return std::sin(pi * x.x()) * std::sin(pi * x.y()); };
    s.grad = [](const Vec2& x) {
        return Vec2(pi * std::cos(pi * x.x()) * std::sin(pi * x.y()), pi * std::sin(pi * x.x()) * std::cos(pi * x.y()));
    };
    s.hessian = [](const Vec2& x) {
        const double sx = std::sin(pi * x.x()), cx = std::cos(pi * x.x());
        const double sy = std::sin(pi * x.y()), cy = std::cos(pi * x.y());
        Eigen::Matrix2d H;
        H << -pi * pi * sx * sy, pi * pi * cx * cy, pi * pi * cx * cy, -pi * pi * sx * sy;
        return H;
    };
    return s;
}

/// u = exp(x + pi y).
inline ExactSolution exponential_solution()
{
    using std::numbers::pi;
    ExactSolution s;
    s.name = "exp";
    s.u = [](const Vec2& x) { return std::exp(x.x() + pi * x.y()); };
    s.grad = [](const Vec2& x) {
        const double e = std::exp(x.x() + pi * x.y());
        return Vec2(e, pi * e);
    };
    s.hessian = [](const Vec2& x) {
        const double e = std::exp(x.x() + pi * x.y());
        Eigen::Matrix2d H;
        H << e, pi * e, pi * e, pi * pi * e;
        return H;
    };
    return s;
}

/// u = 1 + x/2 - y/4 + x^2 + x y - y^2.
inline ExactSolution polynomial_solution()
{
    ExactSolution s;
    s.name = "poly";
    s.u = [](const Vec2& x) {
        return 1. + 0.5 * x.x() - 0.25 * x.y() + x.x() * x.x() + x.x() * x.y() - x.y() * x.y();
    };
    s.grad = [](const Vec2& x) { return Vec2(0.5 + 2. * x.x() + x.y(), -0.25 + x.x() - 2. * x.y()); };
    s.hessian = [](const Vec2&) {
        Eigen::Matrix2d H;
        H << 2., 1., 1., -2.;
        return H;
    };
    return s;
}

inline ExactSolution parse_case(const std::string& name)
{
    if (name == "trig")
        return trigonometric_solution();
    if (name == "exp")
        return exponential_solution();
    if (name == "poly")
        return polynomial_solution();
    throw SpecError("unknown test case '" + name + "'");
}

} // namespace dsgd
