#pragma once

#include "dsgd/basis.hpp"

namespace dsgd {

/// Polynomial degrees of the discrete space: k on faces, l in {k-1, k, k+1} on elements.
struct SpaceSpec {
    int k = 0;
    int l = 0;

    void validate() const
    {
        if (k < 0)
            throw SpecError("face degree k must be >= 0");
        if (l < k - 1 || l > k + 1)
            throw SpecError("element degree l must be in {k-1, k, k+1}");
        if (l < 0 && k != 0)
            throw SpecError("l = -1 is only admissible for k = 0");
    }
    int n_element_dofs() const { return dim_p2(l); }
    int n_face_dofs() const { return dim_p1(k); }
    /// Degree of the element reconstruction v_T (0 when l = -1).
    int element_degree() const { return std::max(l, 0); }
};

/// All admissible l for a given k.
inline std::vector<int> admissible_l(int k)
{
    std::vector<int> ls;
    for (int l = k - 1; l <= k + 1; ++l)
        if (l >= 0 || k == 0)
            ls.push_back(l);
    return ls;
}

/// Tunables of the local constructions.
struct Options {
    double rho = 0.1; ///< star-point regularity parameter
    int element_exactness = -1; ///< defaults to 2k+6
    int face_exactness = -1; ///< defaults to 2k+5
    int orthonormalize = -1; ///< 1 on, 0 off, -1 on for k >= 3

    int element_rule(int k) const { return element_exactness >= 0 ? element_exactness : 2 * k + 6; }
    int face_rule(int k) const { return face_exactness >= 0 ? face_exactness : 2 * k + 5; }
    bool orthonormal(int k) const { return orthonormalize < 0 ? k >= 3 : orthonormalize == 1; }
};

/// Global layout: element blocks first, then face blocks.
struct DofLayout {
    std::size_t n_elements = 0, n_faces = 0;
    int n_element_dofs = 0, n_face_dofs = 0;

    DofLayout() = default;
    DofLayout(const Mesh& mesh, const SpaceSpec& spec)
        : n_elements(mesh.n_elements()), n_faces(mesh.n_faces()), n_element_dofs(spec.n_element_dofs()),
          n_face_dofs(spec.n_face_dofs())
    {
    }
    std::size_t element_offset(std::size_t t) const { return t * n_element_dofs; }
    std::size_t n_element_block() const { return n_elements * n_element_dofs; }
    std::size_t face_offset(std::size_t f) const { return n_element_block() + f * n_face_dofs; }
    std::size_t size() const { return n_element_block() + n_faces * n_face_dofs; }
};

/// Geometry, quadrature, bases and the local operators of one element.
///
/// Local DOFs: [element block (dim P^l)][face blocks (dim P^k each) in element face order].
/// Polynomial coefficients refer to the hierarchical element basis of degree k+1, so the
/// first dim P^m coefficients describe a member of P^m.
class LocalSpace {
public:
    std::size_t t = 0;
    SpaceSpec spec;
    ElementSubmesh sub;
    ElementQuadrature quad;
    std::vector<QuadratureRule> face_rules;
    ScaledBasis basis; ///< degree k+1
    std::vector<FaceBasis> face_bases; ///< degree k
    std::vector<Vec2> normals; ///< n_TF
    std::vector<double> face_h;
    std::vector<std::size_t> face_ids;
    double h = 0., area = 0.;

    int n_T = 0, n_F = 0, n_loc = 0;
    int n_k = 0, n_r = 0, n_l = 0; ///< dim P^k, P^{k+1}, P^{max(l,0)}

    // tables at the element quadrature points (nq x n_r)
    Matrix Phi, Dx, Dy;
    // per face: element basis (nqf x n_r) and face basis (nqf x n_F) at face points
    std::vector<Matrix> PhiF, FB;

    Vector omega; ///< face weights, only for l = -1
    Matrix VT; ///< n_l x n_loc, coefficients of v_T
    Matrix G; ///< 2 n_k x n_loc, [x-components; y-components]
    Matrix R; ///< n_r x n_loc
    Matrix DT; ///< dim P^l x n_loc
    std::vector<Matrix> DTF; ///< n_F x n_loc per face
    std::vector<Matrix> jump; ///< (delta_TF - delta_T) v at face points, nqf x n_loc

    std::size_t face_offset(std::size_t j) const { return n_T + j * n_F; }
    std::size_t n_faces() const { return face_ids.size(); }

    /// Value of G_T v at the element quadrature points: (nq x n_loc) per component.
    Matrix G_x() const { return Phi.leftCols(n_k) * G.topRows(n_k); }
    Matrix G_y() const { return Phi.leftCols(n_k) * G.bottomRows(n_k); }
    Matrix grad_r_x() const { return Dx * R; }
    Matrix grad_r_y() const { return Dy * R; }
    /// v_T at the element quadrature points.
    Matrix potential() const { return Phi.leftCols(n_l) * VT; }

    /// Global DOF indices of the local DOFs.
    std::vector<std::size_t> global_dofs(const DofLayout& layout) const
    {
        std::vector<std::size_t> g(n_loc);
        for (int a = 0; a < n_T; ++a)
            g[a] = layout.element_offset(t) + a;
        for (std::size_t j = 0; j < n_faces(); ++j)
            for (int a = 0; a < n_F; ++a)
                g[face_offset(j) + a] = layout.face_offset(face_ids[j]) + a;
        return g;
    }

    /// Local restriction I_T of a global vector.
    Vector restrict(const Vector& global, const DofLayout& layout) const
    {
        const auto g = global_dofs(layout);
        Vector v(n_loc);
        for (int a = 0; a < n_loc; ++a)
            v[a] = global[g[a]];
        return v;
    }

    /// Local interpolant I_T v.
    Vector interpolate(const ScalarFunction& v) const
    {
        Vector out(n_loc);
        if (n_T > 0)
            out.head(n_T) = l2_project(basis, quad.rule, v, n_T);
        for (std::size_t j = 0; j < n_faces(); ++j)
            out.segment(face_offset(j), n_F) = l2_project(face_bases[j], face_rules[j], v);
        return out;
    }

    /// Value at x of the element polynomial with the given coefficients.
    double eval(const Vector& coef, const Vec2& x) const { return evaluate(basis, coef, x); }
};

namespace detail {

    /// Weights with sum_F w_F (q, 1)_F = (q, 1)_T for q in P^1(T), minimal Euclidean norm.
    inline Vector face_weights(const Mesh& mesh, std::size_t t)
    {
        const auto& e = mesh.element(t);
        Matrix C(3, e.faces.size());
        for (std::size_t j = 0; j < e.faces.size(); ++j) {
            const auto& f = mesh.face(e.faces[j]);
            C(0, j) = f.measure;
            C.block(1, j, 2, 1) = f.measure * (f.midpoint - e.centroid);
        }
        const Eigen::Vector3d d(e.area, 0., 0.);
        return C.completeOrthogonalDecomposition().solve(d);
    }

} // namespace detail

inline LocalSpace build_local_space(const Mesh& mesh, std::size_t t, const SpaceSpec& spec, const Options& opt = {})
{
    spec.validate();
    LocalSpace L;
    L.t = t;
    L.spec = spec;
    const auto& e = mesh.element(t);
    const int k = spec.k;
    L.sub = build_submesh(mesh, t, opt.rho);
    L.quad = element_quadrature(L.sub, opt.element_rule(k));
    L.h = e.diameter;
    L.area = e.area;
    L.basis = ScaledBasis(e.centroid, e.diameter, k + 1);
    if (opt.orthonormal(k))
        L.basis.orthonormalize(L.quad.rule);
    L.face_ids = e.faces;
    for (std::size_t j = 0; j < e.faces.size(); ++j) {
        const auto& f = mesh.face(e.faces[j]);
        L.face_rules.push_back(face_quadrature(mesh, e.faces[j], opt.face_rule(k)));
        L.face_bases.emplace_back(f, k);
        if (opt.orthonormal(k))
            L.face_bases.back().orthonormalize(L.face_rules.back());
        L.normals.push_back(mesh.normal(t, j));
        L.face_h.push_back(f.measure);
    }

    L.n_T = spec.n_element_dofs();
    L.n_F = spec.n_face_dofs();
    L.n_loc = L.n_T + static_cast<int>(e.faces.size()) * L.n_F;
    L.n_k = dim_p2(k);
    L.n_r = dim_p2(k + 1);
    L.n_l = dim_p2(spec.element_degree());
    const int nloc = L.n_loc, nk = L.n_k, nr = L.n_r, nl = L.n_l;

    const auto& rule = L.quad.rule;
    const std::size_t nq = rule.size();
    L.Phi.resize(nq, nr);
    L.Dx.resize(nq, nr);
    L.Dy.resize(nq, nr);
    for (std::size_t q = 0; q < nq; ++q) {
        L.Phi.row(q) = L.basis.values(rule.points[q]).transpose();
        const auto g = L.basis.gradients(rule.points[q]);
        L.Dx.row(q) = g.col(0).transpose();
        L.Dy.row(q) = g.col(1).transpose();
    }
    for (std::size_t j = 0; j < L.n_faces(); ++j) {
        L.PhiF.push_back(L.basis.eval(L.face_rules[j]));
        L.FB.push_back(L.face_bases[j].eval(L.face_rules[j]));
    }
    const auto& W = rule.weights;

    // v_T
    L.VT = Matrix::Zero(nl, nloc);
    if (L.n_T > 0) {
        L.VT.leftCols(L.n_T).setIdentity();
    } else {
        L.omega = detail::face_weights(mesh, t);
        const double phi0 = L.basis.values(e.centroid)[0];
        for (std::size_t j = 0; j < L.n_faces(); ++j) {
            const double fb0 = L.face_bases[j].values(mesh.face(e.faces[j]).midpoint)[0];
            L.VT(0, L.face_offset(j)) = L.omega[j] * L.face_h[j] / e.area * fb0 / phi0;
        }
    }

    // selection of face block j
    auto face_select = [&](std::size_t j) {
        Matrix S = Matrix::Zero(L.n_F, nloc);
        S.middleCols(L.face_offset(j), L.n_F).setIdentity();
        return S;
    };

    // G_T: (G v, phi) = (grad v_T, phi) + sum_F (v_F - v_T, phi . n)_F
    {
        const Matrix Pk = L.Phi.leftCols(nk);
        const Matrix Mk = Pk.transpose() * W.asDiagonal() * Pk;
        Matrix Bx = Pk.transpose() * W.asDiagonal() * L.Dx.leftCols(nl) * L.VT;
        Matrix By = Pk.transpose() * W.asDiagonal() * L.Dy.leftCols(nl) * L.VT;
        for (std::size_t j = 0; j < L.n_faces(); ++j) {
            const auto& wf = L.face_rules[j].weights;
            const Matrix PkF = L.PhiF[j].leftCols(nk);
            const Matrix diff = L.FB[j] * face_select(j) - L.PhiF[j].leftCols(nl) * L.VT;
            const Matrix trace = PkF.transpose() * wf.asDiagonal() * diff;
            Bx += L.normals[j].x() * trace;
            By += L.normals[j].y() * trace;
        }
        Eigen::LLT<Matrix> llt(Mk);
        if (llt.info() != Eigen::Success)
            throw SingularGram("element " + std::to_string(t) + ": singular Gram matrix for G_T");
        L.G.resize(2 * nk, nloc);
        L.G.topRows(nk) = llt.solve(Bx);
        L.G.bottomRows(nk) = llt.solve(By);
    }

    // r_T: (grad r, grad w) = (grad v_T, grad w) + sum_F (v_F - v_T, grad w . n)_F, (r - v_T, 1) = 0
    {
        Matrix K = Matrix::Zero(nr + 1, nr + 1);
        K.topLeftCorner(nr, nr) = L.Dx.transpose() * W.asDiagonal() * L.Dx + L.Dy.transpose() * W.asDiagonal() * L.Dy;
        const Vector mean = L.Phi.transpose() * W;
        K.block(nr, 0, 1, nr) = mean.transpose();
        K.block(0, nr, nr, 1) = mean;
        Matrix b = Matrix::Zero(nr + 1, nloc);
        b.topRows(nr) = (L.Dx.transpose() * W.asDiagonal() * L.Dx.leftCols(nl)
                         + L.Dy.transpose() * W.asDiagonal() * L.Dy.leftCols(nl))
            * L.VT;
        for (std::size_t j = 0; j < L.n_faces(); ++j) {
            const auto& fr = L.face_rules[j];
            Matrix dn(fr.size(), nr);
            for (std::size_t q = 0; q < fr.size(); ++q)
                dn.row(q) = (L.basis.gradients(fr.points[q]) * L.normals[j]).transpose();
            const Matrix diff = L.FB[j] * face_select(j) - L.PhiF[j].leftCols(nl) * L.VT;
            b.topRows(nr) += dn.transpose() * fr.weights.asDiagonal() * diff;
        }
        b.row(nr) = mean.head(nl).transpose() * L.VT;
        Eigen::FullPivLU<Matrix> lu(K);
        if (!lu.isInvertible())
            throw SingularGram("element " + std::to_string(t) + ": singular system for r_T");
        L.R = lu.solve(b).topRows(nr);
    }

    // delta_T = pi^{0,l}(r v - v_T), delta_TF = pi_F^{0,k}(r v - v_F)
    {
        const int nT = L.n_T;
        L.DT.resize(nT, nloc);
        if (nT > 0) {
            const Matrix Pl = L.Phi.leftCols(nT);
            const Matrix Ml = Pl.transpose() * W.asDiagonal() * Pl;
            L.DT = Ml.llt().solve(Pl.transpose() * W.asDiagonal() * L.Phi * L.R) - L.VT.topRows(nT);
        }
        for (std::size_t j = 0; j < L.n_faces(); ++j) {
            const auto& wf = L.face_rules[j].weights;
            const Matrix MF = L.FB[j].transpose() * wf.asDiagonal() * L.FB[j];
            Matrix D = MF.llt().solve(L.FB[j].transpose() * wf.asDiagonal() * L.PhiF[j] * L.R) - face_select(j);
            Matrix J = L.FB[j] * D;
            if (nT > 0)
                J -= L.PhiF[j].leftCols(nT) * L.DT;
            L.DTF.push_back(std::move(D));
            L.jump.push_back(std::move(J));
        }
    }
    return L;
}

/// Local spaces of all elements, built in parallel.
inline std::vector<LocalSpace> build_local_spaces(const Mesh& mesh, const SpaceSpec& spec, const Options& opt = {},
                                                  unsigned threads = default_threads())
{
    std::vector<LocalSpace> spaces(mesh.n_elements());
    parallel_for(
        mesh.n_elements(), [&](std::size_t t) { spaces[t] = build_local_space(mesh, t, spec, opt); }, threads);
    return spaces;
}

/// Global interpolant I_h v.
inline Vector interpolate(const Mesh& mesh, const std::vector<LocalSpace>& spaces, const ScalarFunction& v)
{
    const DofLayout layout(mesh, spaces.front().spec);
    Vector out = Vector::Zero(layout.size());
    for (const auto& L : spaces) {
        const Vector loc = L.interpolate(v);
        const auto g = L.global_dofs(layout);
        for (int a = 0; a < L.n_loc; ++a)
            out[g[a]] = loc[a];
    }
    return out;
}

/// Discrete W^{1,p} quantities of a global vector.
struct Seminorms {
    double consistent = 0.; ///< ||G_h v||_{L^p}
    std::vector<double> boundary; ///< |v_T|_{p,dT} per element
    double full = 0.; ///< ||v||_{1,p,h}
    double triple = 0.; ///< |||v|||_{1,p,h}
};

inline Seminorms seminorms(const std::vector<LocalSpace>& spaces, const DofLayout& layout, const Vector& v, double p)
{
    if (!(p > 1.))
        throw SpecError("p must be > 1");
    Seminorms s;
    double g = 0., full = 0., triple = 0.;
    for (const auto& L : spaces) {
        const Vector vl = L.restrict(v, layout);
        const Vector gx = L.G_x() * vl, gy = L.G_y() * vl;
        const Vector vT = L.VT * vl;
        const auto& W = L.quad.rule.weights;
        double gT = 0., grad_vT = 0.;
        for (Eigen::Index q = 0; q < W.size(); ++q) {
            gT += W[q] * std::pow(std::hypot(gx[q], gy[q]), p);
            const double dx = L.Dx.row(q).head(L.n_l).dot(vT), dy = L.Dy.row(q).head(L.n_l).dot(vT);
            grad_vT += W[q] * std::pow(std::hypot(dx, dy), p);
        }
        double bT = 0., jT = 0.;
        for (std::size_t j = 0; j < L.n_faces(); ++j) {
            const auto& wf = L.face_rules[j].weights;
            const Vector jv = L.jump[j] * vl;
            const Vector diff = L.FB[j] * vl.segment(L.face_offset(j), L.n_F) - L.PhiF[j].leftCols(L.n_l) * vT;
            const double scale = std::pow(L.face_h[j], 1. - p);
            for (Eigen::Index q = 0; q < wf.size(); ++q) {
                bT += scale * wf[q] * std::pow(std::abs(jv[q]), p);
                jT += scale * wf[q] * std::pow(std::abs(diff[q]), p);
            }
        }
        s.boundary.push_back(std::pow(bT, 1. / p));
        g += gT;
        full += gT + bT;
        triple += grad_vT + jT;
    }
    s.consistent = std::pow(g, 1. / p);
    s.full = std::pow(full, 1. / p);
    s.triple = std::pow(triple, 1. / p);
    return s;
}

} // namespace dsgd
