#pragma once

#include "dsgd/stabilization.hpp"

namespace dsgd {

/// Gradient used by the HHO consistency term: grad r_T (linear form), G_T (nonlinear form),
/// or automatic (grad r_T for p = 2, G_T otherwise).
enum class HhoGradient { automatic, consistent, potential };

/// Values of the reconstructions at the element quadrature points, as linear maps of the
/// local DOFs (nq x n_loc each).
struct ElementTables {
    Vector w;
    std::vector<Vec2> x;
    Matrix Bx, By; ///< gradient of the scheme
    Matrix Gx, Gy; ///< consistent gradient G_T
    Matrix P; ///< potential v_T
    Vector load; ///< (f, v_T)_T, set by the scheme
    // HHO boundary penalty
    std::vector<Matrix> jump;
    std::vector<Vector> jump_w;
    std::vector<double> face_h;

    bool has_penalty() const { return !jump.empty(); }
};

struct DiscretisationConfig {
    SpaceSpec spec;
    StabKind stab = StabKind::rtn;
    Options options;
    HhoGradient hho_gradient = HhoGradient::automatic;
    unsigned threads = default_threads();
};

/// Everything needed to assemble a gradient scheme on a mesh.
class Discretisation {
public:
    Discretisation(const Mesh& mesh, const DiscretisationConfig& cfg, double p = 2.)
        : mesh_(&mesh), cfg_(cfg), layout_(mesh, cfg.spec)
    {
        cfg.spec.validate();
        if (cfg.stab == StabKind::hmm && (cfg.spec.k != 0 || cfg.spec.l > 0))
            throw SpecError("the HMM stabilization requires k = 0 and l in {-1, 0}");
        const bool hho_grad_r = cfg.hho_gradient == HhoGradient::potential
            || (cfg.hho_gradient == HhoGradient::automatic && p == 2.);
        spaces_.resize(mesh.n_elements());
        stabs_.resize(mesh.n_elements());
        tables_.resize(mesh.n_elements());
        parallel_for(
            mesh.n_elements(),
            [&](std::size_t t) {
                spaces_[t] = build_local_space(mesh, t, cfg.spec, cfg.options);
                const auto& L = spaces_[t];
                stabs_[t] = build_stabilization(L, cfg.stab);
                auto& T = tables_[t];
                T.w = L.quad.rule.weights;
                T.x = L.quad.rule.points;
                T.Gx = L.G_x();
                T.Gy = L.G_y();
                T.P = L.potential();
                auto [Sx, Sy] = stabs_[t].tabulate(L);
                switch (cfg.stab) {
                case StabKind::rtn:
                case StabKind::hmm:
                    T.Bx = T.Gx + Sx;
                    T.By = T.Gy + Sy;
                    break;
                case StabKind::alt:
                    T.Bx = L.grad_r_x() + Sx;
                    T.By = L.grad_r_y() + Sy;
                    break;
                case StabKind::hho:
                    T.Bx = hho_grad_r ? L.grad_r_x() : T.Gx;
                    T.By = hho_grad_r ? L.grad_r_y() : T.Gy;
                    T.jump = L.jump;
                    for (std::size_t j = 0; j < L.n_faces(); ++j)
                        T.jump_w.push_back(L.face_rules[j].weights);
                    T.face_h = L.face_h;
                    break;
                }
            },
            cfg.threads);

        free_.assign(layout_.size(), 0);
        std::size_t n = 0;
        for (std::size_t i = 0; i < layout_.n_element_block(); ++i)
            free_[i] = static_cast<long>(n++);
        for (std::size_t f = 0; f < mesh.n_faces(); ++f)
            for (int a = 0; a < layout_.n_face_dofs; ++a)
                free_[layout_.face_offset(f) + a] = mesh.face(f).is_boundary() ? -1 : static_cast<long>(n++);
        n_free_ = n;
        face_free_.assign(layout_.size(), -1);
        n_face_free_ = 0;
        for (std::size_t f = 0; f < mesh.n_faces(); ++f)
            if (!mesh.face(f).is_boundary())
                for (int a = 0; a < layout_.n_face_dofs; ++a)
                    face_free_[layout_.face_offset(f) + a] = static_cast<long>(n_face_free_++);
    }

    const Mesh& mesh() const { return *mesh_; }
    const DiscretisationConfig& config() const { return cfg_; }
    const SpaceSpec& spec() const { return cfg_.spec; }
    const DofLayout& layout() const { return layout_; }
    const std::vector<LocalSpace>& spaces() const { return spaces_; }
    const std::vector<StabOperator>& stabs() const { return stabs_; }
    const std::vector<ElementTables>& tables() const { return tables_; }
    std::vector<ElementTables>& tables() { return tables_; }

    /// Index among all unconstrained DOFs (element DOFs and interior faces), -1 on boundary faces.
    long free_index(std::size_t g) const { return free_[g]; }
    std::size_t n_free() const { return n_free_; }
    /// Index among unconstrained face DOFs, -1 otherwise.
    long face_free_index(std::size_t g) const { return face_free_[g]; }
    std::size_t n_face_free() const { return n_face_free_; }

    Vector interpolate(const ScalarFunction& v) const { return dsgd::interpolate(*mesh_, spaces_, v); }

    /// Element-local DOF indices.
    std::vector<std::size_t> dofs(std::size_t t) const { return spaces_[t].global_dofs(layout_); }

private:
    const Mesh* mesh_;
    DiscretisationConfig cfg_;
    DofLayout layout_;
    std::vector<LocalSpace> spaces_;
    std::vector<StabOperator> stabs_;
    std::vector<ElementTables> tables_;
    std::vector<long> free_, face_free_;
    std::size_t n_free_ = 0, n_face_free_ = 0;
};

} // namespace dsgd
