#pragma once

#include "dsgd/space.hpp"

#include <Eigen/QR>

namespace dsgd {

enum class StabKind { rtn, hmm, alt, hho };

inline std::string to_string(StabKind s)
{
    switch (s) {
    case StabKind::rtn: return "rtn";
    case StabKind::hmm: return "hmm";
    case StabKind::alt: return "alt";
    case StabKind::hho: return "hho";
    }
    return "?";
}

inline StabKind parse_stab(const std::string& s)
{
    if (s == "rtn" || s == "RTN")
        return StabKind::rtn;
    if (s == "hmm" || s == "HMM")
        return StabKind::hmm;
    if (s == "alt" || s == "ALT")
        return StabKind::alt;
    if (s == "hho" || s == "HHO")
        return StabKind::hho;
    throw SpecError("unknown stabilization '" + s + "'");
}

/// RT^m(P) = P^m(P)^2 + x P^m(P) on a triangle, spanned by scaled monomials around a center point:
/// (mu, 0), (0, mu) for mu in P^m and x~ mu for homogeneous mu of degree m.
class RTSpace {
public:
    RTSpace() = default;
    RTSpace(const Vec2& center, double h, int m) : center_(center), h_(h), m_(m) {}

    int degree() const { return m_; }
    int size() const { return 2 * dim_p2(m_) + m_ + 1; }

    /// 2 x size matrix of values at x.
    Eigen::Matrix<double, 2, Eigen::Dynamic> values(const Vec2& x) const
    {
        const Vec2 s = (x - center_) / h_;
        std::vector<double> px(m_ + 1, 1.), py(m_ + 1, 1.);
        for (int i = 1; i <= m_; ++i) {
            px[i] = px[i - 1] * s.x();
            py[i] = py[i - 1] * s.y();
        }
        Eigen::Matrix<double, 2, Eigen::Dynamic> V = Eigen::Matrix<double, 2, Eigen::Dynamic>::Zero(2, size());
        int c = 0;
        for (int d = 0; d <= m_; ++d)
            for (int b = 0; b <= d; ++b) {
                const double mu = px[d - b] * py[b];
                V(0, c++) = mu;
                V(1, c++) = mu;
            }
        for (int b = 0; b <= m_; ++b) {
            const double mu = px[m_ - b] * py[b];
            V(0, c) = s.x() * mu;
            V(1, c) = s.y() * mu;
            ++c;
        }
        return V;
    }

    Matrix gram(const QuadratureRule& rule) const
    {
        Matrix A = Matrix::Zero(size(), size());
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const auto V = values(rule.points[q]);
            A += rule.weights[q] * V.transpose() * V;
        }
        return A;
    }

private:
    Vec2 center_ = Vec2::Zero();
    double h_ = 1.;
    int m_ = 0;
};

/// Piecewise polynomial stabilization S_T on the sub-triangles P_TF: on P_TF_j the field is
/// spaces[j].values(x) * transform[j] * coef[j] * v for a local DOF vector v (no transform when empty).
struct StabOperator {
    StabKind kind = StabKind::rtn;
    int image_degree = 0; ///< k_S
    std::vector<RTSpace> spaces;
    std::vector<Matrix> transform; ///< spanning set to an L2-orthonormal basis of RT(P_TF)
    std::vector<Matrix> coef; ///< basis size x n_loc

    bool has_field() const { return kind != StabKind::hho; }

    /// 2 x n_loc matrix of S_T at x in sub-triangle j.
    Matrix at(std::size_t j, const Vec2& x) const
    {
        if (transform.empty())
            return spaces[j].values(x) * coef[j];
        return (spaces[j].values(x) * transform[j]) * coef[j];
    }

    /// Values at the element quadrature points: (nq x n_loc) per component.
    std::pair<Matrix, Matrix> tabulate(const LocalSpace& L) const
    {
        const std::size_t nq = L.quad.rule.size();
        Matrix Sx = Matrix::Zero(nq, L.n_loc), Sy = Matrix::Zero(nq, L.n_loc);
        if (!has_field())
            return {Sx, Sy};
        for (std::size_t j = 0; j < L.n_faces(); ++j)
            for (std::size_t q = L.quad.offsets[j]; q < L.quad.offsets[j + 1]; ++q) {
                const Matrix S = at(j, L.quad.rule.points[q]);
                Sx.row(q) = S.row(0);
                Sy.row(q) = S.row(1);
            }
        return {Sx, Sy};
    }
};

namespace detail {

    /// Solves the lifting problems (L v, eta)_{P_TF} = -(E v, eta)_{P_TF} + (jump v, eta . n_TF)_F
    /// in RT^m(P_TF) for every face; E is given at the element quadrature points.
    inline StabOperator rt_lifting(const LocalSpace& L, int m, const Matrix& Ex, const Matrix& Ey, StabKind kind)
    {
        StabOperator S;
        S.kind = kind;
        S.image_degree = m + 1;
        for (std::size_t j = 0; j < L.n_faces(); ++j) {
            const auto& tri = L.sub.triangles[j];
            const Vec2 c = (tri[0] + tri[1] + tri[2]) / 3.;
            const double hp = std::max({(tri[1] - tri[0]).norm(), (tri[2] - tri[1]).norm(), (tri[0] - tri[2]).norm()});
            RTSpace rt(c, hp, m);
            const QuadratureRule sub = L.quad.sub_rule(j);
            // orthonormalize the spanning set: sqrt(W) V P = Q R, new basis V P R^{-1}
            Matrix V(2 * sub.size(), rt.size());
            for (std::size_t i = 0; i < sub.size(); ++i) {
                const auto vi = rt.values(sub.points[i]);
                const double sw = std::sqrt(sub.weights[i]);
                V.row(2 * i) = sw * vi.row(0);
                V.row(2 * i + 1) = sw * vi.row(1);
            }
            Eigen::ColPivHouseholderQR<Matrix> qr(V);
            qr.setThreshold(1e-12);
            const Eigen::Index rank = qr.rank();
            if (rank == 0)
                throw SingularGram("element " + std::to_string(L.t) + ": degenerate RT space on face "
                                   + std::to_string(j));
            const Matrix Rr = qr.matrixR().topLeftCorner(rank, rank).template triangularView<Eigen::Upper>();
            Matrix Tm = Matrix::Zero(rt.size(), rank);
            Tm.topRows(rank) = Rr.template triangularView<Eigen::Upper>().solve(Matrix::Identity(rank, rank));
            Tm = qr.colsPermutation() * Tm;
            {
                // second pass restores orthonormality lost to the conditioning of the monomials
                Eigen::HouseholderQR<Matrix> qr2(V * Tm);
                const Matrix R2 = qr2.matrixQR().topLeftCorner(rank, rank).template triangularView<Eigen::Upper>();
                Tm = R2.template triangularView<Eigen::Upper>().solve<Eigen::OnTheRight>(Tm);
            }

            Matrix b = Matrix::Zero(rank, L.n_loc);
            for (std::size_t i = 0; i < sub.size(); ++i) {
                const std::size_t q = L.quad.offsets[j] + i;
                const Matrix Vt = rt.values(sub.points[i]) * Tm;
                b -= sub.weights[i] * (Vt.row(0).transpose() * Ex.row(q) + Vt.row(1).transpose() * Ey.row(q));
            }
            const auto& fr = L.face_rules[j];
            for (std::size_t i = 0; i < fr.size(); ++i) {
                const Matrix Vt = rt.values(fr.points[i]) * Tm;
                b += fr.weights[i] * (Vt.transpose() * L.normals[j]) * L.jump[j].row(i);
            }
            S.coef.push_back(std::move(b));
            S.transform.push_back(std::move(Tm));
            S.spaces.push_back(std::move(rt));
        }
        return S;
    }

} // namespace detail

/// Raviart-Thomas-Nedelec lifting of degree k+1 of the residual of G_T; S_T = sum_F L_TF.
inline StabOperator rtn_lifting(const LocalSpace& L)
{
    const int nl = L.n_T;
    Matrix Ex = L.grad_r_x() - L.G_x(), Ey = L.grad_r_y() - L.G_y();
    if (nl > 0) {
        Ex -= L.Dx.leftCols(nl) * L.DT;
        Ey -= L.Dy.leftCols(nl) * L.DT;
    }
    return detail::rt_lifting(L, L.spec.k + 1, Ex, Ey, StabKind::rtn);
}

/// Lowest-order lifting: the constant field (2 / d_TF) (delta_TF - delta_T) v n_TF on P_TF.
inline StabOperator hmm_lifting(const LocalSpace& L)
{
    if (L.spec.k != 0 || L.spec.l > 0)
        throw SpecError("the HMM stabilization requires k = 0 and l in {-1, 0}");
    StabOperator S;
    S.kind = StabKind::hmm;
    S.image_degree = 0;
    for (std::size_t j = 0; j < L.n_faces(); ++j) {
        const auto& fr = L.face_rules[j];
        const Matrix mean = fr.weights.transpose() * L.jump[j] / fr.measure();
        Matrix c = Matrix::Zero(3, L.n_loc);
        const double scale = 2. / L.sub.distances[j];
        c.row(0) = scale * L.normals[j].x() * mean;
        c.row(1) = scale * L.normals[j].y() * mean;
        S.spaces.emplace_back(L.sub.star_point, L.h, 0);
        S.coef.push_back(std::move(c));
    }
    return S;
}

/// Lifting paired with the gradient grad r_T: degree max(l, k), orthogonal to grad P^{k+1}(T) only.
inline StabOperator alt_lifting(const LocalSpace& L)
{
    const int nl = L.n_T;
    Matrix Ex = Matrix::Zero(L.quad.rule.size(), L.n_loc), Ey = Ex;
    if (nl > 0) {
        Ex = -L.Dx.leftCols(nl) * L.DT;
        Ey = -L.Dy.leftCols(nl) * L.DT;
    }
    return detail::rt_lifting(L, std::max(L.spec.l, L.spec.k), Ex, Ey, StabKind::alt);
}

inline StabOperator build_stabilization(const LocalSpace& L, StabKind kind)
{
    switch (kind) {
    case StabKind::rtn: return rtn_lifting(L);
    case StabKind::hmm: return hmm_lifting(L);
    case StabKind::alt: return alt_lifting(L);
    case StabKind::hho: {
        StabOperator S;
        S.kind = StabKind::hho;
        return S;
    }
    }
    throw SpecError("unknown stabilization");
}

/// HHO boundary penalty sum_F h_F^{1-p} int_F |(delta_TF - delta_T) v|^p.
inline double hho_penalty(const LocalSpace& L, const Vector& v, double p)
{
    double s = 0.;
    for (std::size_t j = 0; j < L.n_faces(); ++j) {
        const Vector jv = L.jump[j] * v;
        const auto& w = L.face_rules[j].weights;
        s += std::pow(L.face_h[j], 1. - p) * w.dot(jv.array().abs().pow(p).matrix());
    }
    return s;
}

/// Matrix of the quadratic form |v|_{2,dT}^2.
inline Matrix boundary_form(const LocalSpace& L)
{
    Matrix B = Matrix::Zero(L.n_loc, L.n_loc);
    for (std::size_t j = 0; j < L.n_faces(); ++j)
        B += L.jump[j].transpose() * L.face_rules[j].weights.asDiagonal() * L.jump[j] / L.face_h[j];
    return B;
}

} // namespace dsgd
