#pragma once

#include "dsgd/gd_metrics.hpp"

#include <chrono>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace dsgd {

/// Choice of l relative to k.
enum class LOffset { minus, same, plus };

inline LOffset parse_l_offset(const std::string& s)
{
    if (s == "minus" || s == "-1")
        return LOffset::minus;
    if (s == "same" || s == "0")
        return LOffset::same;
    if (s == "plus" || s == "+1" || s == "1")
        return LOffset::plus;
    throw SpecError("unknown l offset '" + s + "' (minus, same, plus)");
}

inline int element_degree(int k, LOffset o) { return k + (o == LOffset::minus ? -1 : o == LOffset::plus ? 1 : 0); }

/// One solve of a convergence study.
struct ConvergenceRecord {
    std::string family;
    int k = 0, l = 0;
    double p = 2.;
    StabKind stab = StabKind::rtn;
    double h = 0.;
    std::size_t n_dofs_total = 0, n_dofs_condensed = 0;
    double err_grad = 0., err_pot = 0.;
    int newton_iters = 0;
    double wall_ms = 0.;
    bool converged = true;
};

inline const char* csv_header()
{
    return "family,k,l,p,stab,h,n_dofs_total,n_dofs_condensed,err_grad,err_pot,newton_iters,wall_ms";
}

inline std::string csv_row(const ConvergenceRecord& r)
{
    std::ostringstream os;
    os << r.family << ',' << r.k << ',' << r.l << ',' << std::setprecision(6) << r.p << ',' << to_string(r.stab) << ','
       << std::setprecision(10) << r.h << ',' << r.n_dofs_total << ',' << r.n_dofs_condensed << ',' << r.err_grad << ','
       << r.err_pot << ',' << r.newton_iters << ',' << std::fixed << std::setprecision(1) << r.wall_ms;
    return os.str();
}

struct SolveConfig {
    DiscretisationConfig disc;
    double p = 2.;
    std::string case_name = "trig";
    NewtonOptions newton;
};

/// Builds the discretisation, solves the scheme and measures the errors.
inline ConvergenceRecord solve_case(const Mesh& mesh, const std::string& family, const SolveConfig& cfg)
{
    const auto t0 = std::chrono::steady_clock::now();
    const ExactSolution exact = parse_case(cfg.case_name);
    Discretisation D(mesh, cfg.disc, cfg.p);
    GradientScheme scheme(D, make_problem(exact, cfg.p));
    const auto [uh, rep] = scheme.solve(cfg.newton);
    const Errors e = measure_errors(D, uh, exact, cfg.p);
    ConvergenceRecord r;
    r.family = family;
    r.k = cfg.disc.spec.k;
    r.l = cfg.disc.spec.l;
    r.p = cfg.p;
    r.stab = cfg.disc.stab;
    r.h = mesh.h();
    r.n_dofs_total = D.layout().size();
    r.n_dofs_condensed = D.n_face_free();
    r.err_grad = e.grad;
    r.err_pot = e.pot;
    r.newton_iters = rep.iterations;
    r.converged = rep.converged;
    r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

/// Least-squares slopes of err_grad per k over the last three levels, printed as comment lines.
inline std::map<int, double> grad_slopes(const std::vector<ConvergenceRecord>& rows)
{
    std::map<int, std::pair<std::vector<double>, std::vector<double>>> by_k;
    for (const auto& r : rows) {
        by_k[r.k].first.push_back(r.h);
        by_k[r.k].second.push_back(r.err_grad);
    }
    std::map<int, double> s;
    for (const auto& [k, he] : by_k)
        s[k] = fit_slope(he.first, he.second);
    return s;
}

inline void write_slopes(std::ostream& os, const std::vector<ConvergenceRecord>& rows)
{
    for (const auto& [k, s] : grad_slopes(rows))
        os << "# slope k=" << k << ": " << std::fixed << std::setprecision(3) << s << std::defaultfloat << '\n';
}

} // namespace dsgd
