#pragma once

#include "dsgd/schemes.hpp"

#include <random>

namespace dsgd {

/// Quadratic forms of a gradient discretisation on the unconstrained DOFs U_{h,0}:
/// A = (grad_D u, grad_D v), M = (Pi_D u, Pi_D v).
struct GdForms {
    SparseMatrix A, M;
};

namespace detail {

    inline void require_gd(const Discretisation& D)
    {
        if (D.config().stab == StabKind::hho)
            throw SpecError("GD quantities need a stabilized gradient (rtn, hmm or alt)");
    }

    /// Local DOF vector of a vector restricted to the free DOFs.
    inline Vector local_free(const Discretisation& D, std::size_t t, const Vector& x)
    {
        const auto dofs = D.dofs(t);
        Vector v = Vector::Zero(dofs.size());
        for (std::size_t a = 0; a < dofs.size(); ++a)
            if (const long i = D.free_index(dofs[a]); i >= 0)
                v[a] = x[i];
        return v;
    }

    inline Vector to_global(const Discretisation& D, const Vector& x)
    {
        Vector g = Vector::Zero(D.layout().size());
        for (std::size_t i = 0; i < g.size(); ++i)
            if (const long f = D.free_index(i); f >= 0)
                g[i] = x[f];
        return g;
    }

    /// (||Pi_D v||_{L^p}, ||grad_D v||_{L^p}) for a global vector.
    inline std::pair<double, double> lp_norms(const Discretisation& D, const Vector& v, double p)
    {
        double a = 0., b = 0.;
        for (std::size_t t = 0; t < D.tables().size(); ++t) {
            const auto& T = D.tables()[t];
            const Vector vl = D.spaces()[t].restrict(v, D.layout());
            const Vector pv = T.P * vl, gx = T.Bx * vl, gy = T.By * vl;
            for (Eigen::Index q = 0; q < T.w.size(); ++q) {
                a += T.w[q] * std::pow(std::abs(pv[q]), p);
                b += T.w[q] * std::pow(std::hypot(gx[q], gy[q]), p);
            }
        }
        return {std::pow(a, 1. / p), std::pow(b, 1. / p)};
    }

    /// Random free vectors and interpolants of sin(m pi x) sin(n pi y), as global vectors.
    inline std::vector<Vector> candidates(const Discretisation& D, int n_random, unsigned seed)
    {
        std::vector<Vector> out;
        std::mt19937 gen(seed);
        std::normal_distribution<double> N(0., 1.);
        for (int i = 0; i < n_random; ++i) {
            Vector x(D.n_free());
            for (auto& c : x)
                c = N(gen);
            out.push_back(to_global(D, x));
        }
        for (int m = 1; m <= 3; ++m)
            for (int n = 1; n <= 3; ++n) {
                const Vector v = D.interpolate([m, n](const Vec2& x) {
                    return std::sin(m * std::numbers::pi * x.x()) * std::sin(n * std::numbers::pi * x.y());
                });
                Vector w = v;
                for (std::size_t g = 0; g < w.size(); ++g)
                    if (D.free_index(g) < 0)
                        w[g] = 0.;
                out.push_back(w);
            }
        return out;
    }

} // namespace detail

inline GdForms gd_forms(const Discretisation& D)
{
    detail::require_gd(D);
    std::vector<Triplet> ta, tm;
    for (std::size_t t = 0; t < D.tables().size(); ++t) {
        const auto& T = D.tables()[t];
        const Matrix A = T.Bx.transpose() * T.w.asDiagonal() * T.Bx + T.By.transpose() * T.w.asDiagonal() * T.By;
        const Matrix M = T.P.transpose() * T.w.asDiagonal() * T.P;
        const auto dofs = D.dofs(t);
        for (std::size_t a = 0; a < dofs.size(); ++a) {
            const long i = D.free_index(dofs[a]);
            if (i < 0)
                continue;
            for (std::size_t b = 0; b < dofs.size(); ++b)
                if (const long j = D.free_index(dofs[b]); j >= 0) {
                    ta.emplace_back(i, j, A(a, b));
                    tm.emplace_back(i, j, M(a, b));
                }
        }
    }
    GdForms f;
    f.A.resize(D.n_free(), D.n_free());
    f.M.resize(D.n_free(), D.n_free());
    f.A.setFromTriplets(ta.begin(), ta.end());
    f.M.setFromTriplets(tm.begin(), tm.end());
    return f;
}

struct CoercivityEstimate {
    double value = 0.;
    bool exact = false; ///< p = 2 eigenvalue; otherwise a sampled lower bound
    int iterations = 0;
};

/// C_D = max ||Pi_D v|| / ||grad_D v|| over U_{h,0}.
inline CoercivityEstimate coercivity_constant(const Discretisation& D, double p, unsigned seed = 1,
                                              double tol = 1e-8, int max_iterations = 20000)
{
    const GdForms F = gd_forms(D);
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(F.A);
    if (ldlt.info() != Eigen::Success)
        throw EigenFailure("gradient Gram matrix is singular on U_h0");
    // power iteration on A^{-1} M started from the interpolant of the first Dirichlet mode
    Vector x = Vector::Zero(D.n_free());
    {
        const Vector g = D.interpolate([](const Vec2& y) {
            return std::sin(std::numbers::pi * y.x()) * std::sin(std::numbers::pi * y.y());
        });
        for (std::size_t i = 0; i < g.size(); ++i)
            if (const long f = D.free_index(i); f >= 0)
                x[f] = g[i];
        std::mt19937 gen(seed);
        std::normal_distribution<double> N(0., 1e-3);
        for (auto& c : x)
            c += N(gen);
    }
    CoercivityEstimate est;
    double lambda = 0.;
    bool converged = false;
    for (int it = 0; it < max_iterations; ++it) {
        x = ldlt.solve(F.M * x);
        x /= x.norm();
        const double l = x.dot(F.M * x) / x.dot(F.A * x);
        est.iterations = it + 1;
        if (it > 0 && std::abs(l - lambda) <= tol * l) {
            lambda = l;
            converged = true;
            break;
        }
        lambda = l;
    }
    if (!converged || !std::isfinite(lambda))
        throw EigenFailure("power iteration did not converge");
    if (p == 2.) {
        est.value = std::sqrt(lambda);
        est.exact = true;
        return est;
    }
    auto cands = detail::candidates(D, 200, seed);
    cands.push_back(detail::to_global(D, x));
    for (const auto& v : cands) {
        const auto [pv, gv] = detail::lp_norms(D, v, p);
        if (gv > 0.)
            est.value = std::max(est.value, pv / gv);
    }
    return est;
}

/// Interpolant defects bounding S_D(phi): ||Pi_D I_h phi - phi|| and ||grad_D I_h phi - grad phi||.
struct ConsistencyDefect {
    double potential = 0.;
    double gradient = 0.;
};

inline ConsistencyDefect consistency_defect(const Discretisation& D, const ScalarFunction& phi,
                                            const VectorFunction& grad_phi, double p)
{
    detail::require_gd(D);
    const Vector v = D.interpolate(phi);
    ConsistencyDefect d;
    for (std::size_t t = 0; t < D.tables().size(); ++t) {
        const auto& T = D.tables()[t];
        const Vector vl = D.spaces()[t].restrict(v, D.layout());
        const Vector pv = T.P * vl, gx = T.Bx * vl, gy = T.By * vl;
        for (Eigen::Index q = 0; q < T.w.size(); ++q) {
            const Vec2 g = grad_phi(T.x[q]);
            d.potential += T.w[q] * std::pow(std::abs(pv[q] - phi(T.x[q])), p);
            d.gradient += T.w[q] * std::pow(std::hypot(gx[q] - g.x(), gy[q] - g.y()), p);
        }
    }
    d.potential = std::pow(d.potential, 1. / p);
    d.gradient = std::pow(d.gradient, 1. / p);
    return d;
}

/// min over U_{h,0} of (||Pi_D v - phi||^2 + ||grad_D v - grad phi||^2)^{1/2} (p = 2).
inline double consistency_defect_min(const Discretisation& D, const ScalarFunction& phi, const VectorFunction& grad_phi)
{
    const GdForms F = gd_forms(D);
    Vector rhs = Vector::Zero(D.n_free());
    double c = 0.;
    for (std::size_t t = 0; t < D.tables().size(); ++t) {
        const auto& T = D.tables()[t];
        Vector fv(T.w.size()), gx(T.w.size()), gy(T.w.size());
        for (Eigen::Index q = 0; q < T.w.size(); ++q) {
            fv[q] = phi(T.x[q]);
            const Vec2 g = grad_phi(T.x[q]);
            gx[q] = g.x();
            gy[q] = g.y();
            c += T.w[q] * (fv[q] * fv[q] + g.squaredNorm());
        }
        const Vector loc = T.P.transpose() * T.w.cwiseProduct(fv) + T.Bx.transpose() * T.w.cwiseProduct(gx)
            + T.By.transpose() * T.w.cwiseProduct(gy);
        const auto dofs = D.dofs(t);
        for (std::size_t a = 0; a < dofs.size(); ++a)
            if (const long i = D.free_index(dofs[a]); i >= 0)
                rhs[i] += loc[a];
    }
    const SparseMatrix K = F.A + F.M;
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(K);
    if (ldlt.info() != Eigen::Success)
        throw SolverError("singular system in the consistency minimisation");
    const Vector x = ldlt.solve(rhs);
    return std::sqrt(std::max(c - x.dot(rhs), 0.));
}

struct LimitConformity {
    double value = 0.;
    bool exact = false; ///< p = 2 dual norm; otherwise a sampled lower bound
};

/// W_D(psi) = sup |int grad_D v . psi + Pi_D v div psi| / ||grad_D v||_{L^p} over U_{h,0}.
inline LimitConformity limit_conformity_defect(const Discretisation& D, const VectorFunction& psi,
                                               const ScalarFunction& div_psi, double p, unsigned seed = 1)
{
    detail::require_gd(D);
    Vector ell = Vector::Zero(D.n_free());
    for (std::size_t t = 0; t < D.tables().size(); ++t) {
        const auto& T = D.tables()[t];
        Vector px(T.w.size()), py(T.w.size()), dv(T.w.size());
        for (Eigen::Index q = 0; q < T.w.size(); ++q) {
            const Vec2 s = psi(T.x[q]);
            px[q] = T.w[q] * s.x();
            py[q] = T.w[q] * s.y();
            dv[q] = T.w[q] * div_psi(T.x[q]);
        }
        const Vector loc = T.Bx.transpose() * px + T.By.transpose() * py + T.P.transpose() * dv;
        const auto dofs = D.dofs(t);
        for (std::size_t a = 0; a < dofs.size(); ++a)
            if (const long i = D.free_index(dofs[a]); i >= 0)
                ell[i] += loc[a];
    }
    const GdForms F = gd_forms(D);
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(F.A);
    if (ldlt.info() != Eigen::Success)
        throw SolverError("gradient Gram matrix is singular on U_h0");
    const Vector z = ldlt.solve(ell);
    LimitConformity w;
    if (p == 2.) {
        w.value = std::sqrt(std::max(ell.dot(z), 0.));
        w.exact = true;
        return w;
    }
    auto cands = detail::candidates(D, 200, seed);
    cands.push_back(detail::to_global(D, z));
    for (const auto& v : cands) {
        Vector x = Vector::Zero(D.n_free());
        for (std::size_t g = 0; g < v.size(); ++g)
            if (const long f = D.free_index(g); f >= 0)
                x[f] = v[g];
        const double gv = detail::lp_norms(D, v, p).second;
        if (gv > 0.)
            w.value = std::max(w.value, std::abs(ell.dot(x)) / gv);
    }
    return w;
}

/// Least-squares slope of log(e) against log(h) over the last `last` points.
inline double fit_slope(const std::vector<double>& h, const std::vector<double>& e, std::size_t last = 3)
{
    const std::size_t n = std::min(h.size(), e.size());
    if (n < 2)
        return std::numeric_limits<double>::quiet_NaN();
    const std::size_t first = n > last ? n - last : 0;
    const std::size_t m = n - first;
    Eigen::MatrixXd X(m, 2);
    Eigen::VectorXd y(m);
    for (std::size_t i = 0; i < m; ++i) {
        X(i, 0) = 1.;
        X(i, 1) = std::log(h[first + i]);
        y[i] = std::log(e[first + i]);
    }
    return X.colPivHouseholderQr().solve(y)[1];
}

} // namespace dsgd
