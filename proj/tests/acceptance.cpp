#include "dsgd/dsgd.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>

using namespace dsgd;

namespace {

constexpr double pi = std::numbers::pi;

struct Criterion {
    int id;
    std::string title;
    bool pass = true;
    std::ostringstream log;

    void check(bool ok, const std::string& what)
    {
        log << "    " << (ok ? "ok   " : "MISS ") << what << '\n';
        pass = pass && ok;
    }
};

std::string fmt(const char* f, auto... a)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a...);
    return buf;
}

DiscretisationConfig config(int k, int l, StabKind s = StabKind::rtn)
{
    DiscretisationConfig c;
    c.spec = {k, l};
    c.stab = s;
    return c;
}

struct Study {
    std::vector<double> h, e;
    double slope = 0.;
    bool converged = true;
};

/// Gradient-error slope over refinement levels n0..n1 of a family.
Study convergence(MeshFamily fam, int n0, int n1, const SolveConfig& cfg)
{
    Study s;
    for (int n = n0; n <= n1; ++n) {
        const Mesh m = generate({fam, n});
        const auto r = solve_case(m, to_string(fam), cfg);
        s.h.push_back(r.h);
        s.e.push_back(r.err_grad);
        s.converged = s.converged && r.converged;
    }
    s.slope = fit_slope(s.h, s.e);
    return s;
}

SolveConfig solve_config(int k, int l, double p, const std::string& c, StabKind s = StabKind::rtn)
{
    SolveConfig cfg;
    cfg.disc = config(k, l, s);
    cfg.p = p;
    cfg.case_name = c;
    return cfg;
}

std::string errors(const Study& s)
{
    std::ostringstream os;
    os << " errors";
    for (double e : s.e)
        os << ' ' << fmt("%.3e", e);
    return os.str();
}

double bump(const Vec2& x) { return std::sin(pi * x.x()) * std::sin(pi * x.y()); }

Vec2 grad_bump(const Vec2& x)
{
    return {pi * std::cos(pi * x.x()) * std::sin(pi * x.y()), pi * std::sin(pi * x.x()) * std::cos(pi * x.y())};
}

double lap_bump(const Vec2& x) { return -2. * pi * pi * bump(x); }

void algebraic_suite(Criterion& c)
{
    for (MeshFamily fam : all_families()) {
        const Mesh m = generate({fam, 2});
        double worst[6] = {};
        const char* names[6] = {"commutation", "potential", "kernel", "orthogonality", "difference", "constant field"};
        bool ok = true;
        int cases = 0;
        for (int k = 0; k <= 4; ++k)
            for (int l : admissible_l(k))
                for (StabKind s : {StabKind::rtn, StabKind::hmm, StabKind::alt}) {
                    if (s == StabKind::hmm && (k != 0 || l > 0))
                        continue;
                    const Discretisation D(m, config(k, l, s));
                    InvariantSuite suite(D, 1, 2);
                    const auto r = suite.core();
                    for (std::size_t i = 0; i < r.size() && i < 6; ++i) {
                        if (!r[i].logged_only)
                            worst[i] = std::max(worst[i], r[i].value);
                        if (!r[i].pass()) {
                            ok = false;
                            c.log << "    " << to_string(fam) << " k=" << k << " l=" << l << " " << to_string(s) << ' '
                                  << r[i].name << " = " << r[i].value << " (tol " << r[i].tol << ")\n";
                        }
                    }
                    ++cases;
                }
        std::ostringstream os;
        os << to_string(fam) << " n=2, " << cases << " configurations, worst:";
        for (int i = 0; i < 6; ++i)
            os << ' ' << names[i] << ' ' << fmt("%.1e", worst[i]);
        c.check(ok, os.str());
    }
}

void linear_rates(Criterion& c)
{
    for (StabKind s : {StabKind::rtn, StabKind::hho})
        for (MeshFamily fam : all_families())
            for (int k = 0; k <= 3; ++k) {
                const auto st = convergence(fam, 1, k <= 1 ? 5 : 4, solve_config(k, k, 2., "trig", s));
                c.check(st.converged && std::abs(st.slope - (k + 1)) <= 0.15,
                        fmt("%-4s %-16s k=%d slope %.3f (target %d +- 0.15)", to_string(s).c_str(), to_string(fam).c_str(),
                            k, st.slope, k + 1)
                            + errors(st));
            }
}

void plaplace_rates(Criterion& c)
{
    for (MeshFamily fam : {MeshFamily::triangular, MeshFamily::cartesian}) {
        for (int k = 0; k <= 3; ++k) {
            const auto st = convergence(fam, 1, k <= 1 ? 5 : 4, solve_config(k, k, 3., "trig"));
            const double target = (k + 1) / 2.;
            const bool ok = k <= 1 ? std::abs(st.slope - target) <= 0.2 : st.slope >= 1.5;
            c.check(st.converged && ok,
                    fmt("p=3 %-10s k=%d slope %.3f (%s)", to_string(fam).c_str(), k, st.slope,
                        k <= 1 ? fmt("target %.2f +- 0.2", target).c_str() : "at least 1.5")
                        + errors(st));
        }
        for (int k = 0; k <= 4; ++k) {
            const auto st = convergence(fam, 1, k <= 1 ? 5 : k <= 3 ? 4 : 3, solve_config(k, k, 4., "trig"));
            const double target = (k + 1) / 3.;
            const bool ok = k <= 2 ? std::abs(st.slope - target) <= 0.2 : st.slope >= 4. / 3.;
            c.check(st.converged && ok,
                    fmt("p=4 %-10s k=%d slope %.3f (%s)", to_string(fam).c_str(), k, st.slope,
                        k <= 2 ? fmt("target %.3f +- 0.2", target).c_str() : "at least 4/3")
                        + errors(st));
        }
    }
}

void singular_rates(Criterion& c)
{
    for (MeshFamily fam : {MeshFamily::triangular, MeshFamily::cartesian})
        for (int k = 0; k <= 2; ++k) {
            const auto st = convergence(fam, 1, k <= 1 ? 5 : 4, solve_config(k, k, 1.75, "exp"));
            const double target = 0.75 * (k + 1);
            c.check(st.converged && std::abs(st.slope - target) <= 0.25,
                    fmt("%-10s k=%d slope %.3f (target %.2f +- 0.25)", to_string(fam).c_str(), k, st.slope, target)
                        + errors(st));
        }
}

void gd_surrogates(Criterion& c)
{
    for (MeshFamily fam : {MeshFamily::triangular, MeshFamily::hexagonal})
        for (int k = 0; k <= 2; ++k) {
            std::vector<double> h, w;
            for (int n = 1; n <= 4; ++n) {
                const Mesh m = generate({fam, n});
                const Discretisation D(m, config(k, k));
                h.push_back(m.h());
                w.push_back(limit_conformity_defect(D, grad_bump, lap_bump, 2.).value);
            }
            const double s = fit_slope(h, w);
            c.check(std::abs(s - (k + 1)) <= 0.2,
                    fmt("W_D %-10s k=%d slope %.3f (target %d +- 0.2)", to_string(fam).c_str(), k, s, k + 1));
        }
    for (MeshFamily fam : {MeshFamily::triangular, MeshFamily::hexagonal})
        for (int k = 1; k <= 2; ++k)
            for (int l : {k - 1, k}) {
                std::vector<double> h, ep, eg;
                for (int n = 1; n <= 4; ++n) {
                    const Mesh m = generate({fam, n});
                    const Discretisation D(m, config(k, l));
                    const auto e = consistency_defect(D, bump, grad_bump, 2.);
                    h.push_back(m.h());
                    ep.push_back(e.potential);
                    eg.push_back(e.gradient);
                }
                const double sp = fit_slope(h, ep), sg = fit_slope(h, eg);
                c.check(std::abs(sp - (l + 1)) <= 0.15 && std::abs(sg - (k + 1)) <= 0.15,
                        fmt("S_D %-10s k=%d l=%d potential slope %.3f (target %d), gradient slope %.3f (target %d)",
                            to_string(fam).c_str(), k, l, sp, l + 1, sg, k + 1));
            }
    for (MeshFamily fam : all_families())
        for (int k = 0; k <= 1; ++k) {
            std::vector<double> cd;
            for (int n = 0; n <= 3; ++n) {
                const Mesh m = generate({fam, n});
                const Discretisation D(m, config(k, k));
                cd.push_back(coercivity_constant(D, 2.).value);
            }
            const double ratio = *std::max_element(cd.begin(), cd.end()) / *std::min_element(cd.begin(), cd.end());
            c.check(ratio <= 2., fmt("C_D %-16s k=%d values %.4f %.4f %.4f %.4f max/min %.3f (at most 2)",
                                     to_string(fam).c_str(), k, cd[0], cd[1], cd[2], cd[3], ratio));
        }
}

void alternative_gradient(Criterion& c)
{
    const auto psi = [](const Vec2& x) { return Vec2(std::sin(pi * x.y()), std::sin(pi * x.x())); };
    const auto div = [](const Vec2&) { return 0.; };
    for (MeshFamily fam : {MeshFamily::triangular, MeshFamily::hexagonal}) {
        std::vector<double> h, wa, wr;
        for (int n = 1; n <= 4; ++n) {
            const Mesh m = generate({fam, n});
            h.push_back(m.h());
            wa.push_back(limit_conformity_defect(Discretisation(m, config(2, 2, StabKind::alt)), psi, div, 2.).value);
            wr.push_back(limit_conformity_defect(Discretisation(m, config(2, 2)), psi, div, 2.).value);
        }
        const double sa = fit_slope(h, wa), sr = fit_slope(h, wr);
        c.check(sa <= 1.5, fmt("W_D non-gradient field %-10s k=2: alt slope %.3f (at most 1.5), rtn slope %.3f",
                               to_string(fam).c_str(), sa, sr));
    }
    for (MeshFamily fam : {MeshFamily::triangular, MeshFamily::hexagonal}) {
        const auto alt = convergence(fam, 1, 4, solve_config(2, 2, 4., "trig", StabKind::alt));
        const auto rtn = convergence(fam, 1, 4, solve_config(2, 2, 4., "trig"));
        c.check(alt.converged && rtn.converged && rtn.slope - alt.slope >= 0.5,
                fmt("p=4 %-10s k=2: alt slope %.3f, consistent gradient slope %.3f, gap %.3f (at least 0.5)",
                    to_string(fam).c_str(), alt.slope, rtn.slope, rtn.slope - alt.slope));
        const auto alt2 = convergence(fam, 1, 4, solve_config(2, 2, 2., "trig", StabKind::alt));
        const auto rtn2 = convergence(fam, 1, 4, solve_config(2, 2, 2., "trig"));
        c.log << "    info p=2 " << to_string(fam) << " k=2: alt slope " << fmt("%.3f", alt2.slope)
              << ", consistent gradient slope " << fmt("%.3f", rtn2.slope) << '\n';
    }
}

void oracles(Criterion& c)
{
    std::mt19937 gen(11);
    std::normal_distribution<double> N(0., 1.);
    const auto random_free = [&](const Discretisation& D) {
        Vector v = Vector::Zero(D.layout().size());
        for (std::size_t i = 0; i < v.size(); ++i)
            if (D.free_index(i) >= 0)
                v[i] = N(gen);
        return v;
    };
    const auto to_free = [](const Discretisation& D, const Vector& v) {
        Vector out(D.n_free());
        for (std::size_t i = 0; i < v.size(); ++i)
            if (const long j = D.free_index(i); j >= 0)
                out[j] = v[i];
        return out;
    };

    double jac = 0.;
    for (MeshFamily fam : {MeshFamily::triangular, MeshFamily::hexagonal})
        for (StabKind s : {StabKind::rtn, StabKind::alt, StabKind::hho})
            for (auto [p, eps] : {std::pair{3., 0.}, {4., 0.}, {1.75, 1e-2}}) {
                const Mesh m = generate({fam, 0});
                Discretisation D(m, config(1, 1, s), p);
                const GradientScheme scheme(D, make_problem(trigonometric_solution(), p));
                const Vector u = random_free(D), dir = random_free(D);
                const double h = 1e-6;
                const Vector fd = (scheme.residual(u + h * dir, p, eps) - scheme.residual(u - h * dir, p, eps)) / (2 * h);
                const Vector jd = scheme.jacobian(u, p, eps) * to_free(D, dir);
                jac = std::max(jac, (fd - jd).norm() / jd.norm());
            }
    c.check(jac <= 1e-6, fmt("Jacobian vs central differences: worst relative %.2e (at most 1e-6)", jac));

    double cond = 0.;
    for (MeshFamily fam : all_families())
        for (int k = 0; k <= 2; ++k)
            for (int l : admissible_l(k)) {
                const Mesh m = generate({fam, 1});
                Discretisation D(m, config(k, l));
                const GradientScheme scheme(D, make_problem(exponential_solution(), 2.));
                const Vector uc = scheme.solve_linear(true), uf = scheme.solve_linear(false);
                cond = std::max(cond, (uc - uf).norm() / uf.norm());
            }
    c.check(cond <= 1e-10, fmt("condensed vs full solve: worst relative %.2e (at most 1e-10)", cond));

    double stiff = 0.;
    std::vector<Vec2> hex;
    for (int i = 0; i < 6; ++i)
        hex.emplace_back(std::cos(i * pi / 3), std::sin(i * pi / 3));
    for (const Mesh& m : {Mesh::build({{0, 0}, {1, 0}, {1, 1}, {0, 1}}, {{0, 1, 2, 3}}), Mesh::build(hex, {{0, 1, 2, 3, 4, 5}})})
        for (auto [k, l, s] : {std::tuple{0, 0, StabKind::rtn}, {0, -1, StabKind::hmm}, {1, 1, StabKind::rtn},
                               {2, 3, StabKind::rtn}, {3, 2, StabKind::rtn}}) {
            Discretisation D(m, config(k, l, s));
            const GradientScheme scheme(D, Problem{2., nullptr, nullptr});
            const Matrix J = scheme.local(0, Vector::Zero(D.layout().size()), 2., 0.).J;
            const auto& L = D.spaces()[0];
            const auto& S = D.stabs()[0];
            Matrix A = Matrix::Zero(L.n_loc, L.n_loc);
            for (std::size_t j = 0; j < L.n_faces(); ++j) {
                const auto& tri = L.sub.triangles[j];
                const auto r = triangle_rule(tri[0], tri[1], tri[2], 20);
                for (std::size_t q = 0; q < r.size(); ++q) {
                    const Vector phi = L.basis.values(r.points[q], L.n_k);
                    Matrix B(2, L.n_loc);
                    B.row(0) = phi.transpose() * L.G.topRows(L.n_k);
                    B.row(1) = phi.transpose() * L.G.bottomRows(L.n_k);
                    B += S.at(j, r.points[q]);
                    A += r.weights[q] * B.transpose() * B;
                }
            }
            stiff = std::max(stiff, (J - A).norm() / A.norm());
        }
    c.check(stiff <= 1e-12, fmt("one-element stiffness vs dense quadrature: worst relative %.2e (at most 1e-12)", stiff));

    // moment-system oracles on the unit square and a unit segment
    double proj = 0.;
    const Mesh sq = Mesh::build({{0, 0}, {1, 0}, {1, 1}, {0, 1}}, {{0, 1, 2, 3}});
    const auto q = element_quadrature(sq, 0, 10).rule;
    const auto& e = sq.element(0);
    const ScaledBasis b0(e.centroid, e.diameter, 0), b1(e.centroid, e.diameter, 1), b2(e.centroid, e.diameter, 2);
    const auto x2 = [](const Vec2& x) { return x.x() * x.x(); };
    const auto x3 = [](const Vec2& x) { return std::pow(x.x(), 3); };
    const auto x2y = [](const Vec2& x) { return x.x() * x.x() * x.y(); };
    const Vector c0 = l2_project(b0, q, x2), c1 = l2_project(b1, q, x2), c2 = l2_project(b1, q, x2y);
    const Vector c3 = elliptic_project(b1, q, x3, [](const Vec2& x) { return Vec2(3. * x.x() * x.x(), 0.); });
    const Vector c4 = l2_project(b2, q, x3);
    const auto segq = segment_rule({0, 0}, {1, 0}, 8);
    const FaceBasis fb({0.5, 0}, {1, 0}, 1., 1);
    const Vector c5 = l2_project(fb, segq, x2);
    for (const auto& p : q.points) {
        const double x = p.x(), y = p.y();
        proj = std::max(proj, std::abs(evaluate(b0, c0, p) - 1. / 3.));
        proj = std::max(proj, std::abs(evaluate(b1, c1, p) - (x - 1. / 6.)));
        proj = std::max(proj, std::abs(evaluate(b1, c2, p) - (x / 2. + y / 3. - 0.25)));
        proj = std::max(proj, std::abs(evaluate(b1, c3, p) - (x - 0.25)));
        proj = std::max(proj, std::abs(evaluate(b2, c4, p) - (1.5 * x * x - 0.6 * x + 0.05)));
        proj = std::max(proj, std::abs(evaluate(fb, c5, {x, 0.}) - (x - 1. / 6.)));
    }
    c.check(proj <= 1e-12, fmt("projectors vs moment-system oracles: worst absolute %.2e (at most 1e-12)", proj));
}

} // namespace

int main()
{
    std::vector<std::pair<std::string, std::function<void(Criterion&)>>> list{
        {"algebraic exactness suite", algebraic_suite},
        {"linear Poisson rates (consistent gradient and HHO)", linear_rates},
        {"p-Laplace rates for p = 3 and p = 4", plaplace_rates},
        {"p = 7/4 exponential case rates", singular_rates},
        {"gradient discretisation surrogates W_D, S_D, C_D", gd_surrogates},
        {"alternative gradient degradation", alternative_gradient},
        {"oracle equivalences", oracles},
    };
    bool all = true;
    std::vector<std::string> summary;
    for (std::size_t i = 0; i < list.size(); ++i) {
        Criterion c{static_cast<int>(i + 1), list[i].first};
        const auto t0 = std::chrono::steady_clock::now();
        try {
            list[i].second(c);
        } catch (const std::exception& e) {
            c.check(false, std::string("exception: ") + e.what());
        }
        const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const std::string line = fmt("%s criterion %d: %s (%.0f s)", c.pass ? "PASS" : "FAIL", c.id, c.title.c_str(), sec);
        std::cout << line << '\n' << c.log.str() << std::flush;
        summary.push_back(line);
        all = all && c.pass;
    }
    std::cout << "\nsummary\n";
    for (const auto& s : summary)
        std::cout << s << '\n';
    return all ? 0 : 1;
}
