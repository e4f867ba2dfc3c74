#pragma once

#include "dsgd/discretisation.hpp"
#include "dsgd/manufactured.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

namespace dsgd {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// -div sigma(grad u) = f with sigma(g) = |g|^{p-2} g and u = g on the boundary.
struct Problem {
    double p = 2.;
    ScalarFunction f;
    ScalarFunction g; ///< Dirichlet data; empty means homogeneous
};

inline Problem make_problem(const ExactSolution& s, double p)
{
    Problem pb;
    pb.p = p;
    pb.f = [s, p](const Vec2& x) { return s.source(x, p); };
    if (!s.homogeneous)
        pb.g = s.u;
    return pb;
}

/// sigma_eps(g) = (eps^2 + |g|^2)^{(p-2)/2} g and its (symmetric) Jacobian [a11 a12; a12 a22].
struct Flux {
    Vec2 s;
    double a11, a12, a22;
};

inline Flux flux(const Vec2& g, double p, double eps)
{
    if (p == 2.)
        return {g, 1., 0., 1.};
    const double n2 = eps * eps + g.squaredNorm();
    if (n2 == 0.)
        return {Vec2::Zero(), p > 2. ? 0. : 1e300, 0., p > 2. ? 0. : 1e300};
    const double c = std::pow(n2, 0.5 * (p - 2.));
    const double d = (p - 2.) * c / n2;
    return {c * g, c + d * g.x() * g.x(), d * g.x() * g.y(), c + d * g.y() * g.y()};
}

/// Same regularization for the scalar HHO penalty: (eps^2 + s^2)^{(p-2)/2} s.
inline std::pair<double, double> scalar_flux(double s, double p, double eps)
{
    if (p == 2.)
        return {s, 1.};
    const double n2 = eps * eps + s * s;
    if (n2 == 0.)
        return {0., p > 2. ? 0. : 1e300};
    const double c = std::pow(n2, 0.5 * (p - 2.));
    return {c * s, c + (p - 2.) * c / n2 * s * s};
}

struct LocalSystem {
    Matrix J;
    Vector r;
};

struct NewtonOptions {
    double tol = 1e-9; ///< relative to the load norm
    double intermediate_tol = 1e-6; ///< for regularized continuation levels
    int max_iterations = 50;
    int max_halvings = 30;
    std::vector<double> eps_schedule; ///< empty: {1e-2, 1e-4, 1e-6, 1e-10} for p < 2, {0} otherwise
    bool condensed = true;
};

struct NewtonReport {
    int iterations = 0;
    std::vector<double> residuals; ///< after each accepted step, starting with the initial residual
    std::vector<double> damping; ///< accepted step lengths
    std::vector<double> eps; ///< regularization of each accepted step
    double load_norm = 0.;
    double final_residual = 0.; ///< unregularized residual
    bool converged = false;
};

/// Gradient scheme sum_T (sigma(grad_D u), grad_D v)_T + penalty = (f, Pi_D v) on a discretisation.
class GradientScheme {
public:
    GradientScheme(Discretisation& D, Problem pb) : D_(&D), pb_(std::move(pb))
    {
        if (!(pb_.p > 1.))
            throw SpecError("p must be > 1");
        auto& tables = D.tables();
        parallel_for(
            tables.size(),
            [&](std::size_t t) {
                auto& T = tables[t];
                Vector fv(T.w.size());
                for (Eigen::Index q = 0; q < fv.size(); ++q)
                    fv[q] = pb_.f ? pb_.f(T.x[q]) : 0.;
                T.load = T.P.transpose() * T.w.cwiseProduct(fv);
            },
            D.config().threads);
        Vector b = Vector::Zero(D.n_free());
        for (std::size_t t = 0; t < tables.size(); ++t) {
            const auto dofs = D.dofs(t);
            for (std::size_t a = 0; a < dofs.size(); ++a)
                if (const long i = D.free_index(dofs[a]); i >= 0)
                    b[i] += tables[t].load[a];
        }
        load_norm_ = b.norm();
    }

    const Discretisation& discretisation() const { return *D_; }
    const Problem& problem() const { return pb_; }
    double load_norm() const { return load_norm_; }

    /// Global vector with boundary-face blocks set to pi_F^{0,k} g and zero elsewhere.
    Vector boundary_values() const
    {
        Vector u = Vector::Zero(D_->layout().size());
        if (!pb_.g)
            return u;
        const auto& mesh = D_->mesh();
        for (const auto& L : D_->spaces())
            for (std::size_t j = 0; j < L.n_faces(); ++j)
                if (mesh.face(L.face_ids[j]).is_boundary())
                    u.segment(D_->layout().face_offset(L.face_ids[j]), L.n_F)
                        = l2_project(L.face_bases[j], L.face_rules[j], pb_.g);
        return u;
    }

    /// Local residual and (optionally) Jacobian at u for exponent p and regularization eps.
    LocalSystem local(std::size_t t, const Vector& u, double p, double eps, bool jacobian = true) const
    {
        const auto& T = D_->tables()[t];
        const Vector ul = D_->spaces()[t].restrict(u, D_->layout());
        const Vector gx = T.Bx * ul, gy = T.By * ul;
        const Eigen::Index nq = T.w.size();
        Vector sx(nq), sy(nq), a11(nq), a12(nq), a22(nq);
        for (Eigen::Index q = 0; q < nq; ++q) {
            const Flux fl = flux(Vec2(gx[q], gy[q]), p, eps);
            sx[q] = T.w[q] * fl.s.x();
            sy[q] = T.w[q] * fl.s.y();
            a11[q] = T.w[q] * fl.a11;
            a12[q] = T.w[q] * fl.a12;
            a22[q] = T.w[q] * fl.a22;
        }
        LocalSystem ls;
        ls.r = T.Bx.transpose() * sx + T.By.transpose() * sy - T.load;
        if (jacobian) {
            ls.J = T.Bx.transpose() * a11.asDiagonal() * T.Bx + T.By.transpose() * a22.asDiagonal() * T.By;
            if (p != 2.) {
                const Matrix C = T.Bx.transpose() * a12.asDiagonal() * T.By;
                ls.J += C + C.transpose();
            }
        }
        for (std::size_t j = 0; j < T.jump.size(); ++j) {
            const Vector s = T.jump[j] * ul;
            const double scale = std::pow(T.face_h[j], 1. - p);
            Vector fs(s.size()), ds(s.size());
            for (Eigen::Index q = 0; q < s.size(); ++q) {
                const auto [v, d] = scalar_flux(s[q], p, eps);
                fs[q] = scale * T.jump_w[j][q] * v;
                ds[q] = scale * T.jump_w[j][q] * d;
            }
            ls.r += T.jump[j].transpose() * fs;
            if (jacobian)
                ls.J += T.jump[j].transpose() * ds.asDiagonal() * T.jump[j];
        }
        return ls;
    }

    std::vector<LocalSystem> local_systems(const Vector& u, double p, double eps, bool jacobian) const
    {
        std::vector<LocalSystem> out(D_->mesh().n_elements());
        parallel_for(
            out.size(), [&](std::size_t t) { out[t] = local(t, u, p, eps, jacobian); }, D_->config().threads);
        return out;
    }

    /// Residual restricted to the unconstrained DOFs.
    Vector residual(const Vector& u, double eps = 0.) const { return residual(u, pb_.p, eps); }
    Vector residual(const Vector& u, double p, double eps) const
    {
        const auto ls = local_systems(u, p, eps, false);
        Vector R = Vector::Zero(D_->n_free());
        for (std::size_t t = 0; t < ls.size(); ++t) {
            const auto dofs = D_->dofs(t);
            for (std::size_t a = 0; a < dofs.size(); ++a)
                if (const long i = D_->free_index(dofs[a]); i >= 0)
                    R[i] += ls[t].r[a];
        }
        return R;
    }

    /// Jacobian on the unconstrained DOFs (uncondensed).
    SparseMatrix jacobian(const Vector& u, double eps = 0.) const { return jacobian(u, pb_.p, eps); }
    SparseMatrix jacobian(const Vector& u, double p, double eps) const
    {
        const auto ls = local_systems(u, p, eps, true);
        return assemble_full(ls).first;
    }

    /// Newton correction (boundary entries zero) solving J du = -R at u.
    Vector newton_step(const Vector& u, double p, double eps, bool condensed) const
    {
        const auto ls = local_systems(u, p, eps, true);
        return condensed ? condensed_step(ls) : full_step(ls);
    }

    /// Linear scheme (p = 2 flux); returns the full global vector.
    Vector solve_linear(bool condensed = true) const
    {
        const Vector u0 = boundary_values();
        const double scale = std::max(load_norm_, residual(u0, 2., 0.).norm());
        const Vector u = u0 + newton_step(u0, 2., 0., condensed);
        const double res = residual(u, 2., 0.).norm();
        if (res > 1e-10 * scale && res > 1e-13)
            throw SolverError("linear solve residual " + std::to_string(res) + " exceeds tolerance");
        return u;
    }

    /// Damped Newton method with epsilon continuation for p < 2.
    std::pair<Vector, NewtonReport> newton_solve(const Vector& initial, const NewtonOptions& opt = {}) const
    {
        const double p = pb_.p;
        NewtonReport rep;
        rep.load_norm = load_norm_;
        const double scale = load_norm_ > 0. ? load_norm_ : 1.;
        std::vector<double> schedule = opt.eps_schedule;
        if (schedule.empty())
            schedule = p < 2. ? std::vector<double>{1e-2, 1e-4, 1e-6, 1e-10} : std::vector<double>{0.};
        Vector u = initial;
        for (std::size_t level = 0; level < schedule.size(); ++level) {
            const double eps = schedule[level];
            const double tol = (level + 1 == schedule.size() ? opt.tol : std::max(opt.tol, opt.intermediate_tol)) * scale;
            double rn = residual(u, p, eps).norm();
            if (rep.residuals.empty())
                rep.residuals.push_back(rn);
            for (int it = 0; it < opt.max_iterations && rn > tol; ++it) {
                const Vector du = newton_step(u, p, eps, opt.condensed);
                double alpha = 1.;
                bool accepted = false;
                for (int h = 0; h <= opt.max_halvings; ++h, alpha *= 0.5) {
                    const Vector trial = u + alpha * du;
                    const double rt = residual(trial, p, eps).norm();
                    if (std::isfinite(rt) && rt < rn) {
                        u = trial;
                        rn = rt;
                        accepted = true;
                        break;
                    }
                }
                if (!accepted) {
                    if (rn <= 1e3 * tol)
                        break;
                    throw LineSearchStall("no residual decrease after " + std::to_string(opt.max_halvings)
                                          + " halvings (residual " + std::to_string(rn) + ")");
                }
                ++rep.iterations;
                rep.residuals.push_back(rn);
                rep.damping.push_back(alpha);
                rep.eps.push_back(eps);
            }
        }
        rep.final_residual = residual(u, p, 0.).norm();
        rep.converged = rep.final_residual <= opt.tol * scale || rep.final_residual <= 1e-13;
        return {u, rep};
    }

    /// Newton solve started from the p = 2 solution.
    std::pair<Vector, NewtonReport> solve(const NewtonOptions& opt = {}) const
    {
        const Vector u0 = solve_linear(opt.condensed);
        if (pb_.p == 2.) {
            NewtonReport rep;
            rep.iterations = 1;
            rep.load_norm = load_norm_;
            rep.final_residual = residual(u0, 2., 0.).norm();
            rep.residuals = {rep.final_residual};
            rep.damping = {1.};
            rep.eps = {0.};
            rep.converged = true;
            return {u0, rep};
        }
        auto out = newton_solve(u0, opt);
        out.second.iterations = std::max(out.second.iterations, 1);
        return out;
    }

    /// Sparse matrix on the unconstrained DOFs together with the right-hand side -R.
    std::pair<SparseMatrix, Vector> assemble_full(const std::vector<LocalSystem>& ls) const
    {
        std::vector<Triplet> trip;
        Vector rhs = Vector::Zero(D_->n_free());
        for (std::size_t t = 0; t < ls.size(); ++t) {
            const auto dofs = D_->dofs(t);
            for (std::size_t a = 0; a < dofs.size(); ++a) {
                const long i = D_->free_index(dofs[a]);
                if (i < 0)
                    continue;
                rhs[i] -= ls[t].r[a];
                for (std::size_t b = 0; b < dofs.size(); ++b)
                    if (const long j = D_->free_index(dofs[b]); j >= 0)
                        trip.emplace_back(i, j, ls[t].J(a, b));
            }
        }
        SparseMatrix A(D_->n_free(), D_->n_free());
        A.setFromTriplets(trip.begin(), trip.end());
        return {A, rhs};
    }

private:
    static Vector sparse_solve(const SparseMatrix& A, const Vector& b)
    {
        if (A.rows() == 0)
            return Vector();
        Eigen::SimplicialLDLT<SparseMatrix> ldlt(A);
        if (ldlt.info() == Eigen::Success) {
            Vector x = ldlt.solve(b);
            if (ldlt.info() == Eigen::Success && (A * x - b).norm() <= 1e-8 * std::max(b.norm(), 1e-300))
                return x;
        }
        Eigen::SparseLU<SparseMatrix> lu;
        lu.analyzePattern(A);
        lu.factorize(A);
        if (lu.info() != Eigen::Success)
            throw SingularSystem("sparse factorization failed: " + lu.lastErrorMessage());
        Vector x = lu.solve(b);
        if (lu.info() != Eigen::Success)
            throw SolverError("sparse solve failed");
        return x;
    }

    Vector full_step(const std::vector<LocalSystem>& ls) const
    {
        const auto [A, rhs] = assemble_full(ls);
        const Vector x = sparse_solve(A, rhs);
        Vector du = Vector::Zero(D_->layout().size());
        for (std::size_t g = 0; g < du.size(); ++g)
            if (const long i = D_->free_index(g); i >= 0)
                du[g] = x[i];
        return du;
    }

    Vector condensed_step(const std::vector<LocalSystem>& ls) const
    {
        const std::size_t nE = D_->mesh().n_elements();
        struct Block {
            std::vector<std::size_t> dofs;
            std::vector<int> faces; ///< local positions of unconstrained face DOFs
            Eigen::LDLT<Matrix> Jee;
            Matrix Jef;
            Vector re;
        };
        std::vector<Block> blocks(nE);
        std::vector<std::vector<Triplet>> trips(nE);
        std::vector<Vector> rhs_loc(nE);
        parallel_for(
            nE,
            [&](std::size_t t) {
                auto& B = blocks[t];
                const auto& L = D_->spaces()[t];
                B.dofs = D_->dofs(t);
                const int nT = L.n_T;
                for (int a = nT; a < L.n_loc; ++a)
                    if (D_->face_free_index(B.dofs[a]) >= 0)
                        B.faces.push_back(a);
                const int nf = static_cast<int>(B.faces.size());
                const Matrix& J = ls[t].J;
                const Vector& r = ls[t].r;
                Matrix Jff(nf, nf), Jfe(nf, nT);
                Vector rf(nf);
                B.Jef.resize(nT, nf);
                for (int i = 0; i < nf; ++i) {
                    rf[i] = r[B.faces[i]];
                    for (int j = 0; j < nf; ++j)
                        Jff(i, j) = J(B.faces[i], B.faces[j]);
                    for (int j = 0; j < nT; ++j) {
                        Jfe(i, j) = J(B.faces[i], j);
                        B.Jef(j, i) = J(j, B.faces[i]);
                    }
                }
                Matrix S = Jff;
                Vector rhs = -rf;
                if (nT > 0) {
                    B.Jee.compute(J.topLeftCorner(nT, nT));
                    B.re = r.head(nT);
                    S -= Jfe * B.Jee.solve(B.Jef);
                    rhs += Jfe * B.Jee.solve(B.re);
                }
                for (int i = 0; i < nf; ++i)
                    for (int j = 0; j < nf; ++j)
                        trips[t].emplace_back(D_->face_free_index(B.dofs[B.faces[i]]),
                                              D_->face_free_index(B.dofs[B.faces[j]]), S(i, j));
                rhs_loc[t] = rhs;
            },
            D_->config().threads);
        std::vector<Triplet> all;
        Vector rhs = Vector::Zero(D_->n_face_free());
        for (std::size_t t = 0; t < nE; ++t) {
            all.insert(all.end(), trips[t].begin(), trips[t].end());
            for (std::size_t i = 0; i < blocks[t].faces.size(); ++i)
                rhs[D_->face_free_index(blocks[t].dofs[blocks[t].faces[i]])] += rhs_loc[t][i];
        }
        SparseMatrix A(D_->n_face_free(), D_->n_face_free());
        A.setFromTriplets(all.begin(), all.end());
        const Vector xf = sparse_solve(A, rhs);
        Vector du = Vector::Zero(D_->layout().size());
        for (std::size_t g = 0; g < du.size(); ++g)
            if (const long i = D_->face_free_index(g); i >= 0)
                du[g] = xf[i];
        parallel_for(
            nE,
            [&](std::size_t t) {
                const auto& B = blocks[t];
                const int nT = D_->spaces()[t].n_T;
                if (nT == 0)
                    return;
                Vector df(B.faces.size());
                for (std::size_t i = 0; i < B.faces.size(); ++i)
                    df[i] = du[B.dofs[B.faces[i]]];
                const Vector de = B.Jee.solve(-B.re - B.Jef * df);
                for (int a = 0; a < nT; ++a)
                    du[B.dofs[a]] = de[a];
            },
            D_->config().threads);
        return du;
    }

    Discretisation* D_;
    Problem pb_;
    double load_norm_ = 0.;
};

/// err_grad = ||G_h(I_h u - u_h)||_{L^p}, err_pot = ||Pi_D u_h - u||_{L^p}.
struct Errors {
    double grad = 0.;
    double pot = 0.;
};

inline Errors measure_errors(const Discretisation& D, const Vector& uh, const ExactSolution& exact, double p)
{
    const Vector e = D.interpolate(exact.u) - uh;
    double g = 0., v = 0.;
    for (std::size_t t = 0; t < D.tables().size(); ++t) {
        const auto& T = D.tables()[t];
        const auto& L = D.spaces()[t];
        const Vector el = L.restrict(e, D.layout());
        const Vector ul = L.restrict(uh, D.layout());
        const Vector gx = T.Gx * el, gy = T.Gy * el, pv = T.P * ul;
        for (Eigen::Index q = 0; q < T.w.size(); ++q) {
            g += T.w[q] * std::pow(std::hypot(gx[q], gy[q]), p);
            v += T.w[q] * std::pow(std::abs(pv[q] - exact.u(T.x[q])), p);
        }
    }
    return {std::pow(g, 1. / p), std::pow(v, 1. / p)};
}

} // namespace dsgd
