#pragma once

#include "dsgd/mesh.hpp"
#include "dsgd/quadrature.hpp"

#include <Eigen/Cholesky>

namespace dsgd {

/// Dimension of P^l in two variables (0 for l < 0).
inline int dim_p2(int l) { return l < 0 ? 0 : (l + 1) * (l + 2) / 2; }
/// Dimension of P^l in one variable (0 for l < 0).
inline int dim_p1(int l) { return l < 0 ? 0 : l + 1; }

/// Scaled monomials ((x - c) / h)^alpha ordered by total degree, optionally orthonormalized
/// through the inverse Cholesky factor of their Gram matrix. The ordering is hierarchical:
/// the first dim_p2(l) functions span P^l for every l <= degree.
class ScaledBasis {
public:
    ScaledBasis() = default;
    ScaledBasis(const Vec2& center, double h, int degree) : center_(center), h_(h), degree_(degree)
    {
        for (int d = 0; d <= degree; ++d)
            for (int b = 0; b <= d; ++b)
                exponents_.push_back({d - b, b});
    }

    int degree() const { return degree_; }
    int size() const { return static_cast<int>(exponents_.size()); }
    const Vec2& center() const { return center_; }
    double scale() const { return h_; }
    bool orthonormal() const { return coef_.size() > 0; }
    const std::vector<std::array<int, 2>>& exponents() const { return exponents_; }

    /// Replaces the monomials by the Gram-Schmidt orthonormalized set with respect to the rule.
    void orthonormalize(const QuadratureRule& rule)
    {
        coef_.resize(0, 0);
        const Matrix M = gram(rule);
        Eigen::LLT<Matrix> llt(M);
        if (llt.info() != Eigen::Success)
            throw SingularGram("element basis Gram matrix is not positive definite");
        const Matrix L = llt.matrixL();
        coef_ = L.triangularView<Eigen::Lower>().solve(Matrix::Identity(size(), size()));
    }

    /// Values of the first n functions (all when n < 0).
    Vector values(const Vec2& x, int n = -1) const
    {
        n = n < 0 ? size() : n;
        Vector m(size());
        monomials(x, m, nullptr);
        return finish(m, n);
    }

    /// Gradients of the first n functions, one row per function.
    Eigen::Matrix<double, Eigen::Dynamic, 2> gradients(const Vec2& x, int n = -1) const
    {
        n = n < 0 ? size() : n;
        Vector m(size());
        Eigen::Matrix<double, Eigen::Dynamic, 2> g(size(), 2);
        monomials(x, m, &g);
        if (!orthonormal())
            return g.topRows(n);
        return coef_.topLeftCorner(n, size()) * g;
    }

    /// Gram matrix (phi_i, phi_j) on the rule.
    Matrix gram(const QuadratureRule& rule, int n = -1) const
    {
        n = n < 0 ? size() : n;
        const Matrix V = eval(rule, n);
        return V.transpose() * rule.weights.asDiagonal() * V;
    }

    /// nq x n matrix of basis values at the rule points.
    Matrix eval(const QuadratureRule& rule, int n = -1) const
    {
        n = n < 0 ? size() : n;
        Matrix V(rule.size(), n);
        for (std::size_t q = 0; q < rule.size(); ++q)
            V.row(q) = values(rule.points[q], n).transpose();
        return V;
    }

private:
    void monomials(const Vec2& x, Vector& m, Eigen::Matrix<double, Eigen::Dynamic, 2>* g) const
    {
        const double xi = (x.x() - center_.x()) / h_, eta = (x.y() - center_.y()) / h_;
        std::vector<double> px(degree_ + 2, 1.), py(degree_ + 2, 1.);
        for (int i = 1; i <= degree_; ++i) {
            px[i] = px[i - 1] * xi;
            py[i] = py[i - 1] * eta;
        }
        for (int i = 0; i < size(); ++i) {
            const auto [a, b] = exponents_[i];
            m[i] = px[a] * py[b];
            if (g) {
                (*g)(i, 0) = a > 0 ? a * px[a - 1] * py[b] / h_ : 0.;
                (*g)(i, 1) = b > 0 ? b * px[a] * py[b - 1] / h_ : 0.;
            }
        }
    }

    Vector finish(const Vector& m, int n) const
    {
        if (!orthonormal())
            return m.head(n);
        return coef_.topLeftCorner(n, size()) * m;
    }

    Vec2 center_ = Vec2::Zero();
    double h_ = 1.;
    int degree_ = 0;
    std::vector<std::array<int, 2>> exponents_;
    Matrix coef_;
};

/// Scaled 1D monomials in the arclength coordinate ((x - x_F) . t_F / h_F)^i on a face.
class FaceBasis {
public:
    FaceBasis() = default;
    FaceBasis(const Vec2& center, const Vec2& tangent, double h, int degree)
        : center_(center), tangent_(tangent), h_(h), degree_(degree)
    {
    }
    explicit FaceBasis(const Face& f, int degree) : FaceBasis(f.midpoint, f.tangent, f.measure, degree) {}

    int degree() const { return degree_; }
    int size() const { return degree_ + 1; }
    bool orthonormal() const { return coef_.size() > 0; }

    void orthonormalize(const QuadratureRule& rule)
    {
        coef_.resize(0, 0);
        Eigen::LLT<Matrix> llt(gram(rule));
        if (llt.info() != Eigen::Success)
            throw SingularGram("face basis Gram matrix is not positive definite");
        const Matrix L = llt.matrixL();
        coef_ = L.triangularView<Eigen::Lower>().solve(Matrix::Identity(size(), size()));
    }

    Vector values(const Vec2& x) const
    {
        const double s = (x - center_).dot(tangent_) / h_;
        Vector m(size());
        double v = 1.;
        for (int i = 0; i <= degree_; ++i, v *= s)
            m[i] = v;
        return orthonormal() ? Vector(coef_ * m) : m;
    }

    Matrix eval(const QuadratureRule& rule) const
    {
        Matrix V(rule.size(), size());
        for (std::size_t q = 0; q < rule.size(); ++q)
            V.row(q) = values(rule.points[q]).transpose();
        return V;
    }

    Matrix gram(const QuadratureRule& rule) const
    {
        const Matrix V = eval(rule);
        return V.transpose() * rule.weights.asDiagonal() * V;
    }

private:
    Vec2 center_ = Vec2::Zero();
    Vec2 tangent_ = Vec2::UnitX();
    double h_ = 1.;
    int degree_ = 0;
    Matrix coef_;
};

/// 2-norm condition number of a symmetric positive definite matrix.
inline double condition_number(const Matrix& M)
{
    Eigen::SelfAdjointEigenSolver<Matrix> es(M, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    return ev[ev.size() - 1] / ev[0];
}

// ---------------------------------------------------------------------------------------------
// Quadrature on mesh entities
// ---------------------------------------------------------------------------------------------

/// Element rule as the union of triangle rules on the sub-triangles P_TF;
/// points of P_TF_j are rule.points[offsets[j] .. offsets[j+1]).
struct ElementQuadrature {
    QuadratureRule rule;
    std::vector<std::size_t> offsets;

    std::size_t n_sub() const { return offsets.size() - 1; }
    QuadratureRule sub_rule(std::size_t j) const
    {
        QuadratureRule r;
        r.exactness = rule.exactness;
        for (std::size_t q = offsets[j]; q < offsets[j + 1]; ++q)
            r.points.push_back(rule.points[q]);
        r.weights = rule.weights.segment(offsets[j], offsets[j + 1] - offsets[j]);
        return r;
    }
};

inline ElementQuadrature element_quadrature(const ElementSubmesh& sub, int exactness)
{
    ElementQuadrature eq;
    eq.rule.exactness = exactness;
    eq.offsets.push_back(0);
    for (const auto& tri : sub.triangles) {
        eq.rule.append(triangle_rule(tri[0], tri[1], tri[2], exactness));
        eq.offsets.push_back(eq.rule.size());
    }
    return eq;
}

inline ElementQuadrature element_quadrature(const Mesh& mesh, std::size_t t, int exactness, double rho = 0.1)
{
    return element_quadrature(build_submesh(mesh, t, rho), exactness);
}

inline QuadratureRule face_quadrature(const Mesh& mesh, std::size_t f, int exactness)
{
    const auto& face = mesh.face(f);
    return segment_rule(mesh.vertex(face.vertices[0]), mesh.vertex(face.vertices[1]), exactness);
}

// ---------------------------------------------------------------------------------------------
// Projectors
// ---------------------------------------------------------------------------------------------

using ScalarFunction = std::function<double(const Vec2&)>;
using VectorFunction = std::function<Vec2(const Vec2&)>;

/// Coefficients of pi^{0,l} v on the first dim(P^l) functions of the basis.
template <typename Basis>
Vector l2_project(const Basis& basis, const QuadratureRule& rule, const ScalarFunction& v, int n = -1)
{
    n = n < 0 ? basis.size() : n;
    if (n == 0)
        return Vector();
    Matrix V(rule.size(), n);
    Vector fv(rule.size());
    for (std::size_t q = 0; q < rule.size(); ++q) {
        V.row(q) = basis.values(rule.points[q]).head(n).transpose();
        fv[q] = v(rule.points[q]);
    }
    const Matrix M = V.transpose() * rule.weights.asDiagonal() * V;
    const Vector b = V.transpose() * rule.weights.cwiseProduct(fv);
    Eigen::LLT<Matrix> llt(M);
    if (llt.info() != Eigen::Success)
        throw SingularGram("Gram matrix factorization failed in L2 projection");
    return llt.solve(b);
}

/// Coefficients of pi^{1,l} v: gradient-orthogonal on the basis plus matching mean.
inline Vector elliptic_project(const ScaledBasis& basis, const QuadratureRule& rule, const ScalarFunction& v,
                               const VectorFunction& grad_v, int n = -1)
{
    n = n < 0 ? basis.size() : n;
    Matrix K = Matrix::Zero(n + 1, n + 1);
    Vector b = Vector::Zero(n + 1);
    for (std::size_t q = 0; q < rule.size(); ++q) {
        const double w = rule.weights[q];
        const auto G = basis.gradients(rule.points[q], n);
        const Vector phi = basis.values(rule.points[q], n);
        K.topLeftCorner(n, n) += w * G * G.transpose();
        b.head(n) += w * G * grad_v(rule.points[q]);
        K.block(n, 0, 1, n) += w * phi.transpose();
        b[n] += w * v(rule.points[q]);
    }
    K.block(0, n, n, 1) = K.block(n, 0, 1, n).transpose();
    Eigen::FullPivLU<Matrix> lu(K);
    if (!lu.isInvertible())
        throw SingularGram("singular system in elliptic projection");
    return lu.solve(b).head(n);
}

/// Evaluates the polynomial with the given coefficients on the basis.
template <typename Basis>
double evaluate(const Basis& basis, const Vector& coef, const Vec2& x)
{
    if (coef.size() == 0)
        return 0.;
    return basis.values(x).head(coef.size()).dot(coef);
}

} // namespace dsgd
