#include "dsgd/study.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace dsgd;

namespace {

Mesh unit_square() { return Mesh::build({{0, 0}, {1, 0}, {1, 1}, {0, 1}}, {{0, 1, 2, 3}}); }

Mesh regular_hexagon()
{
    std::vector<Vec2> x;
    for (int i = 0; i < 6; ++i)
        x.emplace_back(std::cos(i * std::numbers::pi / 3), std::sin(i * std::numbers::pi / 3));
    return Mesh::build(x, {{0, 1, 2, 3, 4, 5}});
}

DiscretisationConfig config(int k, int l, StabKind s = StabKind::rtn)
{
    DiscretisationConfig c;
    c.spec = {k, l};
    c.stab = s;
    return c;
}

Vector random_free(const Discretisation& D, std::mt19937& gen)
{
    std::normal_distribution<double> N(0., 1.);
    Vector v = Vector::Zero(D.layout().size());
    for (std::size_t i = 0; i < v.size(); ++i)
        if (D.free_index(i) >= 0)
            v[i] = N(gen);
    return v;
}

Vector to_free(const Discretisation& D, const Vector& v)
{
    Vector out(D.n_free());
    for (std::size_t i = 0; i < v.size(); ++i)
        if (const long j = D.free_index(i); j >= 0)
            out[j] = v[i];
    return out;
}

double slope(const std::vector<double>& h, const std::vector<double>& e)
{
    const std::size_t n = h.size();
    return std::log(e[n - 1] / e[n - 2]) / std::log(h[n - 1] / h[n - 2]);
}

/// Gram matrix of the stabilized gradient on a single element with an independent rule of exactness 20.
Matrix dense_gram(const Discretisation& D, std::size_t t)
{
    const auto& L = D.spaces()[t];
    const auto& S = D.stabs()[t];
    const Matrix G = L.G;
    Matrix A = Matrix::Zero(L.n_loc, L.n_loc);
    for (std::size_t j = 0; j < L.n_faces(); ++j) {
        const auto& tri = L.sub.triangles[j];
        const auto r = triangle_rule(tri[0], tri[1], tri[2], 20);
        for (std::size_t q = 0; q < r.size(); ++q) {
            const Vector phi = L.basis.values(r.points[q], L.n_k);
            Matrix B(2, L.n_loc);
            B.row(0) = phi.transpose() * G.topRows(L.n_k);
            B.row(1) = phi.transpose() * G.bottomRows(L.n_k);
            B += S.at(j, r.points[q]);
            A += r.weights[q] * B.transpose() * B;
        }
    }
    return A;
}

} // namespace

TEST(Flux, LinearAndPowerLaw)
{
    const Flux f2 = flux({0.3, -0.4}, 2., 0.);
    EXPECT_DOUBLE_EQ(f2.s.x(), 0.3);
    EXPECT_DOUBLE_EQ(f2.a11, 1.);
    EXPECT_DOUBLE_EQ(f2.a12, 0.);
    // |(0.3, -0.4)| = 0.5, so sigma = 0.5 (0.3, -0.4) for p = 3
    const Flux f3 = flux({0.3, -0.4}, 3., 0.);
    EXPECT_NEAR(f3.s.x(), 0.15, 1e-15);
    EXPECT_NEAR(f3.s.y(), -0.2, 1e-15);
    const Flux z = flux(Vec2::Zero(), 4., 0.);
    EXPECT_EQ(z.s.norm(), 0.);
}

TEST(Flux, JacobianMatchesFiniteDifferences)
{
    const Vec2 g(0.7, -1.3);
    for (double p : {1.75, 3., 4.})
        for (double eps : {0., 1e-2}) {
            const Flux f = flux(g, p, eps);
            const double h = 1e-6;
            const Vec2 dx = (flux(g + Vec2(h, 0), p, eps).s - flux(g - Vec2(h, 0), p, eps).s) / (2 * h);
            const Vec2 dy = (flux(g + Vec2(0, h), p, eps).s - flux(g - Vec2(0, h), p, eps).s) / (2 * h);
            EXPECT_NEAR(dx.x(), f.a11, 1e-8);
            EXPECT_NEAR(dx.y(), f.a12, 1e-8);
            EXPECT_NEAR(dy.y(), f.a22, 1e-8);
            const auto [s, ds] = scalar_flux(-0.6, p, eps);
            EXPECT_NEAR(s, -std::pow(eps * eps + 0.36, 0.5 * (p - 2)) * 0.6, 1e-14);
            EXPECT_NEAR(ds, (scalar_flux(-0.6 + h, p, eps).first - scalar_flux(-0.6 - h, p, eps).first) / (2 * h), 1e-8);
        }
}

TEST(Problem, SourceOfManufacturedSolutions)
{
    const auto t = trigonometric_solution();
    const Vec2 x(0.3, 0.6);
    EXPECT_NEAR(t.source(x, 2.), 2 * std::numbers::pi * std::numbers::pi * t.u(x), 1e-12);
    EXPECT_NEAR(polynomial_solution().source(x, 2.), 0., 1e-15);
    // central differences of the flux divergence
    const auto e = exponential_solution();
    const double p = 1.75, h = 1e-4;
    const auto sig = [&](const Vec2& y) { return flux(e.grad(y), p, 0.).s; };
    const double div = (sig(x + Vec2(h, 0)).x() - sig(x - Vec2(h, 0)).x()) / (2 * h)
        + (sig(x + Vec2(0, h)).y() - sig(x - Vec2(0, h)).y()) / (2 * h);
    EXPECT_NEAR(e.source(x, p), -div, 1e-5 * std::abs(div));
    EXPECT_THROW(parse_case("cosine"), SpecError);
}

TEST(Assembly, ZeroDataGivesZeroSolution)
{
    const Mesh m = generate({MeshFamily::hexagonal, 1});
    for (StabKind s : {StabKind::rtn, StabKind::hho}) {
        Discretisation D(m, config(1, 1, s));
        const GradientScheme scheme(D, Problem{2., nullptr, nullptr});
        EXPECT_EQ(scheme.load_norm(), 0.);
        EXPECT_EQ(scheme.residual(Vector::Zero(D.layout().size())).norm(), 0.);
        EXPECT_LE(scheme.solve_linear().norm(), 1e-14);
    }
}

TEST(Assembly, SingleElementStiffnessAgainstDenseQuadrature)
{
    std::mt19937 gen(1);
    for (const Mesh& m : {unit_square(), regular_hexagon()})
        for (auto [k, l, s] : {std::tuple{0, 0, StabKind::rtn}, {0, -1, StabKind::hmm}, {1, 1, StabKind::rtn},
                               {2, 3, StabKind::rtn}}) {
            Discretisation D(m, config(k, l, s));
            const GradientScheme scheme(D, Problem{2., nullptr, nullptr});
            const Matrix J = scheme.local(0, Vector::Zero(D.layout().size()), 2., 0.).J;
            const Matrix A = dense_gram(D, 0);
            EXPECT_LE((J - A).norm(), 1e-12 * A.norm()) << "k=" << k << " l=" << l;
        }
}

TEST(Assembly, StiffnessSplitsIntoConsistentAndStabilization)
{
    const Mesh m = generate({MeshFamily::locally_refined, 0});
    for (int k = 0; k <= 2; ++k) {
        Discretisation D(m, config(k, k));
        const GradientScheme scheme(D, Problem{2., nullptr, nullptr});
        for (std::size_t t = 0; t < m.n_elements(); t += 3) {
            const auto& T = D.tables()[t];
            const auto [Sx, Sy] = D.stabs()[t].tabulate(D.spaces()[t]);
            const auto gram = [&](const Matrix& X, const Matrix& Y) {
                return Matrix(X.transpose() * T.w.asDiagonal() * X + Y.transpose() * T.w.asDiagonal() * Y);
            };
            const Matrix J = scheme.local(t, Vector::Zero(D.layout().size()), 2., 0.).J;
            const Matrix split = gram(T.Gx, T.Gy) + gram(Sx, Sy);
            EXPECT_LE((J - split).norm(), 1e-12 * J.norm()) << "k=" << k;
        }
    }
}

TEST(Assembly, SymmetricJacobian)
{
    std::mt19937 gen(2);
    const Mesh m = generate({MeshFamily::hexagonal, 0});
    for (StabKind s : {StabKind::rtn, StabKind::alt, StabKind::hho})
        for (double p : {1.75, 2., 3.}) {
            Discretisation D(m, config(1, 1, s), p);
            const GradientScheme scheme(D, make_problem(trigonometric_solution(), p));
            const SparseMatrix J = scheme.jacobian(random_free(D, gen), p, 1e-3);
            const SparseMatrix Jt = J.transpose();
            EXPECT_LE((J - Jt).norm(), 1e-12 * J.norm()) << to_string(s) << " p=" << p;
        }
}

TEST(Assembly, JacobianMatchesFiniteDifferences)
{
    std::mt19937 gen(3);
    const Mesh m = generate({MeshFamily::triangular, 0});
    for (StabKind s : {StabKind::rtn, StabKind::hho})
        for (auto [p, eps] : {std::pair{3., 0.}, {4., 0.}, {1.75, 1e-2}}) {
            Discretisation D(m, config(1, 1, s), p);
            const GradientScheme scheme(D, make_problem(trigonometric_solution(), p));
            const Vector u = random_free(D, gen);
            const Matrix J = Matrix(scheme.jacobian(u, p, eps));
            const Vector dir = random_free(D, gen);
            const double h = 1e-6;
            const Vector fd = (scheme.residual(u + h * dir, p, eps) - scheme.residual(u - h * dir, p, eps)) / (2 * h);
            const Vector jd = J * to_free(D, dir);
            EXPECT_LE((fd - jd).norm(), 1e-6 * jd.norm()) << to_string(s) << " p=" << p;
        }
}

TEST(Assembly, LinearResidualIsAffine)
{
    // for p = 2 the residual is A u - b with A the Jacobian
    std::mt19937 gen(4);
    const Mesh m = generate({MeshFamily::cartesian, 1});
    Discretisation D(m, config(1, 0));
    const GradientScheme scheme(D, make_problem(trigonometric_solution(), 2.));
    const Vector u = random_free(D, gen);
    const SparseMatrix A = scheme.jacobian(u, 2., 0.);
    const Vector r0 = scheme.residual(Vector::Zero(D.layout().size()), 2., 0.);
    const Vector r = scheme.residual(u, 2., 0.);
    EXPECT_LE((r - (A * to_free(D, u) + r0)).norm(), 1e-12 * r.norm());
    EXPECT_NEAR(r0.norm(), scheme.load_norm(), 1e-12 * scheme.load_norm());
}

TEST(Solver, CondensedMatchesFullSystem)
{
    for (MeshFamily fam : {MeshFamily::triangular, MeshFamily::hexagonal})
        for (int k = 0; k <= 2; ++k)
            for (int l : admissible_l(k)) {
                const Mesh m = generate({fam, 1});
                Discretisation D(m, config(k, l));
                const GradientScheme scheme(D, make_problem(exponential_solution(), 2.));
                const Vector uc = scheme.solve_linear(true), uf = scheme.solve_linear(false);
                EXPECT_LE((uc - uf).norm(), 1e-10 * uf.norm()) << to_string(fam) << " k=" << k << " l=" << l;
            }
    const Mesh m = generate({MeshFamily::cartesian, 1});
    Discretisation D(m, config(1, 2), 3.);
    const GradientScheme scheme(D, make_problem(trigonometric_solution(), 3.));
    const Vector u0 = scheme.solve_linear();
    const Vector dc = scheme.newton_step(u0, 3., 0., true), df = scheme.newton_step(u0, 3., 0., false);
    EXPECT_LE((dc - df).norm(), 1e-10 * df.norm());
}

TEST(Solver, ReproducesQuadraticSolution)
{
    const auto exact = polynomial_solution();
    for (MeshFamily fam : all_families())
        for (int k = 1; k <= 2; ++k)
            for (int l : admissible_l(k))
                for (StabKind s : {StabKind::rtn, StabKind::alt, StabKind::hho}) {
                    const Mesh m = generate({fam, 0});
                    Discretisation D(m, config(k, l, s));
                    const GradientScheme scheme(D, make_problem(exact, 2.));
                    const Vector uh = scheme.solve_linear();
                    const Vector iu = D.interpolate(exact.u);
                    EXPECT_LE((uh - iu).cwiseAbs().maxCoeff(), 1e-9 * iu.cwiseAbs().maxCoeff())
                        << to_string(fam) << " k=" << k << " l=" << l << " " << to_string(s);
                }
}

TEST(Solver, LinearCaseTakesOneIteration)
{
    const Mesh m = generate({MeshFamily::cartesian, 1});
    Discretisation D(m, config(0, 0));
    const GradientScheme scheme(D, make_problem(trigonometric_solution(), 2.));
    const auto [u, rep] = scheme.solve();
    EXPECT_EQ(rep.iterations, 1);
    EXPECT_TRUE(rep.converged);
    EXPECT_LE(rep.final_residual, 1e-10 * scheme.load_norm());
}

TEST(Solver, NewtonConvergesForPowerLaws)
{
    const Mesh m = generate({MeshFamily::triangular, 1});
    for (auto [p, name] : {std::pair{3., "trig"}, {4., "trig"}, {1.75, "exp"}}) {
        Discretisation D(m, config(1, 1), p);
        const GradientScheme scheme(D, make_problem(parse_case(name), p));
        const auto [u, rep] = scheme.solve();
        EXPECT_TRUE(rep.converged) << "p=" << p;
        EXPECT_LE(rep.final_residual, 1e-9 * scheme.load_norm()) << "p=" << p;
        EXPECT_LE(rep.iterations, 50);
        EXPECT_EQ(rep.residuals.size(), rep.damping.size() + 1);
        for (std::size_t i = 0; i < rep.damping.size(); ++i)
            if (i == 0 || rep.eps[i] == rep.eps[i - 1])
                EXPECT_LT(rep.residuals[i + 1], rep.residuals[i]) << "p=" << p << " step " << i;
    }
}

TEST(Solver, RejectsExponentBelowOne)
{
    const Mesh m = unit_square();
    Discretisation D(m, config(0, 0));
    EXPECT_THROW(GradientScheme(D, Problem{1., nullptr, nullptr}), SpecError);
}

TEST(Solver, DirichletDataOnBoundaryFaces)
{
    const Mesh m = generate({MeshFamily::cartesian, 0});
    Discretisation D(m, config(1, 1));
    const auto exact = exponential_solution();
    const GradientScheme scheme(D, make_problem(exact, 2.));
    const Vector u = scheme.solve_linear();
    const Vector iu = D.interpolate(exact.u);
    for (std::size_t f = 0; f < m.n_faces(); ++f)
        for (int a = 0; a < D.layout().n_face_dofs; ++a) {
            const std::size_t g = D.layout().face_offset(f) + a;
            if (m.face(f).is_boundary())
                EXPECT_NEAR(u[g], iu[g], 1e-13);
        }
}

TEST(Errors, InterpolantHasZeroGradientError)
{
    const Mesh m = generate({MeshFamily::hexagonal, 1});
    const auto exact = trigonometric_solution();
    double prev = 1e300;
    for (int k = 0; k <= 2; ++k) {
        Discretisation D(m, config(k, k));
        const Errors e = measure_errors(D, D.interpolate(exact.u), exact, 2.);
        EXPECT_EQ(e.grad, 0.);
        EXPECT_GT(e.pot, 0.);
        EXPECT_LT(e.pot, 0.5 * prev);
        prev = e.pot;
    }
}

TEST(Convergence, TriangularSecondOrder)
{
    std::vector<double> hs, es;
    SolveConfig cfg;
    cfg.disc = config(1, 1);
    for (int n = 1; n <= 4; ++n) {
        const Mesh m = generate({MeshFamily::triangular, n});
        const auto r = solve_case(m, "triangular", cfg);
        EXPECT_TRUE(r.converged);
        hs.push_back(r.h);
        es.push_back(r.err_grad);
    }
    EXPECT_NEAR(slope(hs, es), 2., 0.15);
    EXPECT_NEAR(fit_slope(hs, es), 2., 0.15);
}

TEST(Study, CsvRow)
{
    ConvergenceRecord r;
    r.family = "cartesian";
    r.k = 1;
    r.l = 2;
    r.p = 1.75;
    r.stab = StabKind::alt;
    r.h = 0.25;
    r.n_dofs_total = 100;
    r.n_dofs_condensed = 40;
    r.err_grad = 1.5e-3;
    r.err_pot = 2e-4;
    r.newton_iters = 7;
    r.wall_ms = 12.34;
    EXPECT_STREQ(csv_header(), "family,k,l,p,stab,h,n_dofs_total,n_dofs_condensed,err_grad,err_pot,newton_iters,wall_ms");
    EXPECT_EQ(csv_row(r), "cartesian,1,2,1.75,alt,0.25,100,40,0.0015,0.0002,7,12.3");
    EXPECT_EQ(element_degree(2, parse_l_offset("minus")), 1);
    EXPECT_EQ(element_degree(0, parse_l_offset("plus")), 1);
    EXPECT_THROW(parse_l_offset("double"), SpecError);
}
