#include "dsgd/dsgd.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

using namespace dsgd;

namespace {

constexpr int exit_solver = 2;
constexpr int exit_config = 3;

/// Inclusive integer range "a..b" or a single integer.
std::pair<int, int> parse_range(const std::string& s, const char* what)
{
    try {
        const auto dots = s.find("..");
        if (dots == std::string::npos) {
            const int v = std::stoi(s);
            return {v, v};
        }
        const int a = std::stoi(s.substr(0, dots)), b = std::stoi(s.substr(dots + 2));
        if (b < a)
            throw SpecError("");
        return {a, b};
    } catch (const std::exception&) {
        throw SpecError(std::string("invalid ") + what + " range '" + s + "'");
    }
}

/// Exponent as a decimal or a fraction such as 7/4.
double parse_p(const std::string& s)
{
    try {
        double p;
        if (const auto slash = s.find('/'); slash != std::string::npos)
            p = std::stod(s.substr(0, slash)) / std::stod(s.substr(slash + 1));
        else
            p = std::stod(s);
        if (!(p > 1.) || !std::isfinite(p))
            throw SpecError("");
        return p;
    } catch (const std::exception&) {
        throw SpecError("invalid exponent p '" + s + "' (must be > 1)");
    }
}

struct Args {
    std::string mesh, family = "triangular", n = "1", k = "0", l = "same", p = "2", case_name = "trig", stab = "rtn";
    std::string output, hho_gradient = "auto";
    bool no_condense = false;
    int element_quad = -1, face_quad = -1, newton_max_iter = 50, ortho = -1, samples = 5;
    double newton_tol = 1e-9, rho = 0.1, jitter = 0.;
    unsigned seed = 1, threads = 0;
};

void add_common(CLI::App* app, Args& a)
{
    app->add_option("--mesh", a.mesh, "polymesh file (overrides --family)");
    app->add_option("--family", a.family, "triangular, cartesian, hexagonal or locally_refined");
    app->add_option("--n", a.n, "refinement index or range a..b");
    app->add_option("--k", a.k, "face degree or range a..b");
    app->add_option("--l", a.l, "element degree relative to k: minus, same or plus");
    app->add_option("--threads", a.threads, "worker threads (default DSGD_THREADS or 1)");
    app->add_option("--rho", a.rho, "star-point regularity parameter");
    app->add_option("--element-quad", a.element_quad, "element quadrature exactness (default 2k+6)");
    app->add_option("--face-quad", a.face_quad, "face quadrature exactness (default 2k+5)");
    app->add_option("--orthonormalize", a.ortho, "orthonormal bases: 1 on, 0 off, -1 automatic");
    app->add_option("--jitter", a.jitter, "mesh perturbation amplitude in [0, 0.45)");
    app->add_option("--seed", a.seed, "seed for mesh jitter and randomized checks");
}

void add_solve(CLI::App* app, Args& a)
{
    app->add_option("--p", a.p, "exponent of the p-Laplacian (e.g. 2, 3, 7/4)");
    app->add_option("--case", a.case_name, "manufactured solution: trig, exp or poly");
    app->add_option("--stab", a.stab, "rtn, hmm, alt or hho");
    app->add_flag("--no-condense", a.no_condense, "solve the full system instead of the condensed one");
    app->add_option("--hho-gradient", a.hho_gradient, "HHO consistency gradient: auto, consistent or potential");
    app->add_option("--newton-tol", a.newton_tol, "relative Newton tolerance");
    app->add_option("--newton-max-iter", a.newton_max_iter, "maximum Newton iterations per regularization level");
    app->add_option("--output,-o", a.output, "CSV output file (default standard output)");
}

struct MeshEntry {
    std::string family;
    Mesh mesh;
};

std::vector<MeshEntry> meshes(const Args& a)
{
    if (!a.mesh.empty())
        return {{std::filesystem::path(a.mesh).stem().string(), load(a.mesh)}};
    const MeshFamily f = parse_family(a.family);
    const auto [n0, n1] = parse_range(a.n, "--n");
    if (n0 < 0)
        throw SpecError("--n must be >= 0");
    std::vector<MeshEntry> out;
    for (int n = n0; n <= n1; ++n)
        out.push_back({to_string(f), generate({f, n, a.jitter, a.seed})});
    return out;
}

Options options(const Args& a)
{
    Options o;
    o.rho = a.rho;
    o.element_exactness = a.element_quad;
    o.face_exactness = a.face_quad;
    o.orthonormalize = a.ortho;
    return o;
}

SolveConfig solve_config(const Args& a, int k)
{
    SolveConfig c;
    c.disc.spec = {k, element_degree(k, parse_l_offset(a.l))};
    c.disc.spec.validate();
    c.disc.stab = parse_stab(a.stab);
    c.disc.options = options(a);
    if (a.hho_gradient == "consistent")
        c.disc.hho_gradient = HhoGradient::consistent;
    else if (a.hho_gradient == "potential")
        c.disc.hho_gradient = HhoGradient::potential;
    else if (a.hho_gradient != "auto")
        throw SpecError("unknown --hho-gradient '" + a.hho_gradient + "'");
    c.disc.threads = a.threads > 0 ? a.threads : default_threads();
    c.p = parse_p(a.p);
    c.case_name = a.case_name;
    parse_case(a.case_name);
    c.newton.tol = a.newton_tol;
    c.newton.max_iterations = a.newton_max_iter;
    c.newton.condensed = !a.no_condense;
    return c;
}

int solve_rows(const Args& a, bool slopes)
{
    const auto [k0, k1] = parse_range(a.k, "--k");
    if (k0 < 0)
        throw SpecError("--k must be >= 0");
    std::vector<SolveConfig> cfgs;
    for (int k = k0; k <= k1; ++k)
        cfgs.push_back(solve_config(a, k));
    const auto ms = meshes(a);

    std::ofstream file;
    if (!a.output.empty()) {
        file.open(a.output);
        if (!file)
            throw SpecError("cannot open output file " + a.output);
    }
    std::ostream& os = a.output.empty() ? std::cout : file;
    os << csv_header() << '\n';
    std::vector<ConvergenceRecord> rows;
    bool failed = false;
    for (const auto& cfg : cfgs)
        for (const auto& m : ms) {
            const auto r = solve_case(m.mesh, m.family, cfg);
            os << csv_row(r) << '\n' << std::flush;
            rows.push_back(r);
            if (!r.converged) {
                std::cerr << "dsgd: Newton did not converge (k=" << r.k << ", h=" << r.h << ")\n";
                failed = true;
            }
        }
    if (slopes)
        write_slopes(os, rows);
    return failed ? exit_solver : 0;
}

int verify(const Args& a, bool stab_given)
{
    const auto [k0, k1] = parse_range(a.k, "--k");
    const auto ms = meshes(a);
    bool all = true;
    for (const auto& m : ms)
        for (int k = k0; k <= k1; ++k)
            for (int l : admissible_l(k)) {
                std::vector<StabKind> stabs;
                if (stab_given)
                    stabs = {parse_stab(a.stab)};
                else
                    stabs = {StabKind::rtn, StabKind::hmm, StabKind::alt};
                for (StabKind s : stabs) {
                    if (s == StabKind::hmm && (k != 0 || l > 0))
                        continue;
                    DiscretisationConfig c;
                    c.spec = {k, l};
                    c.stab = s;
                    c.options = options(a);
                    c.threads = a.threads > 0 ? a.threads : default_threads();
                    Discretisation D(m.mesh, c);
                    InvariantSuite suite(D, a.seed, a.samples);
                    for (const auto& r : suite.all()) {
                        std::cout << (r.pass() ? "PASS" : "FAIL") << "  " << m.family << " n_elements=" << m.mesh.n_elements()
                                  << " k=" << k << " l=" << l << " stab=" << to_string(s) << "  " << r.name << ": "
                                  << std::scientific << std::setprecision(3) << r.value << std::defaultfloat;
                        if (!r.logged_only)
                            std::cout << " (tol " << r.tol << ")";
                        std::cout << '\n';
                        all = all && r.pass();
                    }
                }
            }
    std::cout << (all ? "verify: all checks passed" : "verify: some checks FAILED") << '\n';
    return all ? 0 : 1;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Discontinuous skeletal gradient discretisations on polygonal meshes"};
    app.require_subcommand(1);
    Args a;
    auto* run = app.add_subcommand("run", "solve on one mesh and print a CSV row per degree");
    add_common(run, a);
    add_solve(run, a);
    auto* converge = app.add_subcommand("converge", "convergence study over refinements and degrees");
    add_common(converge, a);
    add_solve(converge, a);
    auto* ver = app.add_subcommand("verify", "run the algebraic invariant suite");
    add_common(ver, a);
    ver->add_option("--stab", a.stab, "restrict to one stabilization (default rtn, hmm, alt)");
    ver->add_option("--samples", a.samples, "random samples per element and check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_config;
    }

    try {
        if (*run) {
            if (a.mesh.empty() && a.n.find("..") != std::string::npos)
                throw SpecError("run takes a single mesh; use converge for a range of --n");
            return solve_rows(a, false);
        }
        if (*converge)
            return solve_rows(a, true);
        return verify(a, ver->count("--stab") > 0);
    } catch (const SolverError& e) {
        std::cerr << "dsgd: solver failure: " << e.what() << '\n';
        return exit_solver;
    } catch (const SingularSystem& e) {
        std::cerr << "dsgd: solver failure: " << e.what() << '\n';
        return exit_solver;
    } catch (const LineSearchStall& e) {
        std::cerr << "dsgd: solver failure: " << e.what() << '\n';
        return exit_solver;
    } catch (const EigenFailure& e) {
        std::cerr << "dsgd: solver failure: " << e.what() << '\n';
        return exit_solver;
    } catch (const Error& e) {
        std::cerr << "dsgd: configuration error: " << e.what() << '\n';
        return exit_config;
    } catch (const std::exception& e) {
        std::cerr << "dsgd: " << e.what() << '\n';
        return exit_config;
    }
}
