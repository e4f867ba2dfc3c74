#pragma once

#include "dsgd/common.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>

namespace dsgd {

/// Straight mesh face with one (boundary) or two (interface) adjacent elements.
struct Face {
    std::array<std::size_t, 2> vertices{npos, npos};
    std::array<std::size_t, 2> elements{npos, npos};
    Vec2 normal = Vec2::Zero(); ///< unit normal pointing out of elements[0]
    Vec2 tangent = Vec2::Zero(); ///< (x_{v1} - x_{v0}) / |F|
    Vec2 midpoint = Vec2::Zero();
    double measure = 0.;

    bool is_boundary() const { return elements[1] == npos; }
    double diameter() const { return measure; }
};

/// Polygonal element: a counter-clockwise vertex loop plus the faces partitioning its boundary.
struct Element {
    std::vector<std::size_t> vertices;
    std::vector<std::size_t> faces; ///< ordered counter-clockwise along the boundary
    std::vector<double> orientation; ///< n_TF = orientation[j] * face.normal
    double area = 0.;
    double perimeter = 0.;
    Vec2 centroid = Vec2::Zero();
    double diameter = 0.;
};

/// Explicit face record as found in the optional face block of a mesh file.
struct FaceRecord {
    std::size_t v0, v1, t0, t1;
};

/// Worst residuals of the structural invariants of a mesh.
struct MeshReport {
    double max_perimeter_defect = 0.; ///< max_T |sum_F |F| - perimeter| / perimeter
    double max_closure_defect = 0.; ///< max_T |sum_F |F| n_TF| / perimeter
    double area_defect = 0.; ///< |sum_T |T| - |Omega|| / |Omega|
    double min_area = 0.;
    bool face_adjacency_ok = true;

    bool ok(double tol = 1e-12) const
    {
        return face_adjacency_ok && min_area > 0. && max_perimeter_defect <= tol && max_closure_defect <= tol
            && area_defect <= tol;
    }
};

/// Immutable 2D polytopal mesh. Faces are first-class: an element side may be split
/// into several faces (hanging nodes of locally refined meshes).
class Mesh {
public:
    Mesh() = default;

    /// Builds the mesh from vertex coordinates and element loops. Clockwise loops are
    /// reoriented. Without an explicit face list, faces are derived by splitting each element
    /// side at every vertex lying on it (tolerance 1e-9 h).
    static Mesh build(std::vector<Vec2> vertices, std::vector<std::vector<std::size_t>> loops,
                      std::optional<std::vector<FaceRecord>> faces = std::nullopt);

    const std::vector<Vec2>& vertices() const { return vertices_; }
    const std::vector<Element>& elements() const { return elements_; }
    const std::vector<Face>& faces() const { return faces_; }
    const Vec2& vertex(std::size_t i) const { return vertices_[i]; }
    const Element& element(std::size_t i) const { return elements_[i]; }
    const Face& face(std::size_t i) const { return faces_[i]; }
    std::size_t n_vertices() const { return vertices_.size(); }
    std::size_t n_elements() const { return elements_.size(); }
    std::size_t n_faces() const { return faces_.size(); }
    std::size_t n_boundary_faces() const
    {
        return static_cast<std::size_t>(std::count_if(faces_.begin(), faces_.end(),
                                                      [](const Face& f) { return f.is_boundary(); }));
    }

    /// Maximum element diameter.
    double h() const { return h_; }

    /// Outward unit normal of the j-th face of element t.
    Vec2 normal(std::size_t t, std::size_t j) const
    {
        const auto& e = elements_[t];
        return e.orientation[j] * faces_[e.faces[j]].normal;
    }

    /// Face count a conforming mesh with the same element loops would have:
    /// (sum of loop sides + boundary faces) / 2.
    std::size_t paired_edge_count() const
    {
        std::size_t sides = 0;
        for (const auto& e : elements_)
            sides += e.vertices.size();
        return (sides + n_boundary_faces()) / 2;
    }

    MeshReport check() const;

private:
    std::vector<Vec2> vertices_;
    std::vector<Element> elements_;
    std::vector<Face> faces_;
    double h_ = 0.;
};

namespace detail {

    inline double signed_area(const std::vector<Vec2>& x, const std::vector<std::size_t>& loop)
    {
        double a = 0.;
        for (std::size_t i = 0; i < loop.size(); ++i)
            a += cross(x[loop[i]], x[loop[(i + 1) % loop.size()]]);
        return 0.5 * a;
    }

    inline bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d, double tol)
    {
        const double d1 = cross(b - a, c - a), d2 = cross(b - a, d - a);
        const double d3 = cross(d - c, a - c), d4 = cross(d - c, b - c);
        const double sa = tol * (b - a).norm(), sc = tol * (d - c).norm();
        if (((d1 > sa && d2 < -sa) || (d1 < -sa && d2 > sa)) && ((d3 > sc && d4 < -sc) || (d3 < -sc && d4 > sc)))
            return true;
        auto on_segment = [tol](const Vec2& p, const Vec2& q, const Vec2& r) {
            // r on [p, q]
            const double len = (q - p).norm();
            if (std::abs(cross(q - p, r - p)) > tol * len)
                return false;
            const double t = (r - p).dot(q - p) / (len * len);
            return t >= -tol / len && t <= 1. + tol / len;
        };
        return on_segment(a, b, c) || on_segment(a, b, d) || on_segment(c, d, a) || on_segment(c, d, b);
    }

    /// Parameter of p along [a, b] when p lies on the segment within tol, else nullopt.
    inline std::optional<double> param_on_segment(const Vec2& a, const Vec2& b, const Vec2& p, double tol)
    {
        const Vec2 ab = b - a;
        const double len = ab.norm();
        if (std::abs(cross(ab, p - a)) > tol * len)
            return std::nullopt;
        const double t = (p - a).dot(ab) / (len * len);
        if (t < -tol / len || t > 1. + tol / len)
            return std::nullopt;
        return t;
    }

    /// Uniform bucket grid over vertices for collinear-vertex lookup.
    class VertexGrid {
    public:
        VertexGrid(const std::vector<Vec2>& x, double cell) : x_(x), cell_(cell)
        {
            lo_ = x.empty() ? Vec2::Zero() : x[0];
            for (const auto& p : x)
                lo_ = lo_.cwiseMin(p);
            for (std::size_t i = 0; i < x.size(); ++i)
                buckets_[key(cell_index(x[i].x() - lo_.x()), cell_index(x[i].y() - lo_.y()))].push_back(i);
        }

        template <typename F>
        void visit_box(const Vec2& lo, const Vec2& hi, F&& f) const
        {
            const long i0 = cell_index(lo.x() - lo_.x()) - 1, i1 = cell_index(hi.x() - lo_.x()) + 1;
            const long j0 = cell_index(lo.y() - lo_.y()) - 1, j1 = cell_index(hi.y() - lo_.y()) + 1;
            for (long i = i0; i <= i1; ++i)
                for (long j = j0; j <= j1; ++j) {
                    auto it = buckets_.find(key(i, j));
                    if (it != buckets_.end())
                        for (std::size_t v : it->second)
                            f(v);
                }
        }

    private:
        long cell_index(double d) const { return static_cast<long>(std::floor(d / cell_)); }
        static long long key(long i, long j) { return (static_cast<long long>(i) << 32) ^ static_cast<long long>(j & 0xffffffff); }

        const std::vector<Vec2>& x_;
        double cell_;
        Vec2 lo_;
        std::unordered_map<long long, std::vector<std::size_t>> buckets_;
    };

    inline std::vector<FaceRecord> derive_faces(const std::vector<Vec2>& x,
                                                const std::vector<std::vector<std::size_t>>& loops, double tol,
                                                double cell)
    {
        VertexGrid grid(x, cell);
        std::map<std::pair<std::size_t, std::size_t>, std::size_t> index;
        std::vector<FaceRecord> faces;
        for (std::size_t t = 0; t < loops.size(); ++t) {
            const auto& loop = loops[t];
            for (std::size_t s = 0; s < loop.size(); ++s) {
                const std::size_t a = loop[s], b = loop[(s + 1) % loop.size()];
                std::vector<std::pair<double, std::size_t>> chain{{0., a}, {1., b}};
                grid.visit_box(x[a].cwiseMin(x[b]), x[a].cwiseMax(x[b]), [&](std::size_t v) {
                    if (v == a || v == b)
                        return;
                    auto par = param_on_segment(x[a], x[b], x[v], tol);
                    const double len = (x[b] - x[a]).norm();
                    if (par && *par > tol / len && *par < 1. - tol / len)
                        chain.emplace_back(*par, v);
                });
                std::sort(chain.begin(), chain.end());
                for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
                    const std::size_t p = chain[i].second, q = chain[i + 1].second;
                    const auto k = std::minmax(p, q);
                    auto it = index.find(k);
                    if (it == index.end()) {
                        index.emplace(k, faces.size());
                        faces.push_back({p, q, t, npos});
                    } else {
                        auto& f = faces[it->second];
                        if (f.t1 != npos)
                            throw NonmanifoldError("face (" + std::to_string(p) + ", " + std::to_string(q)
                                                   + ") is adjacent to more than two elements");
                        if (f.t0 == t)
                            throw GeometryError("element " + std::to_string(t) + " touches itself along a face");
                        f.t1 = t;
                    }
                }
            }
        }
        return faces;
    }

} // namespace detail

inline Mesh Mesh::build(std::vector<Vec2> vertices, std::vector<std::vector<std::size_t>> loops,
                        std::optional<std::vector<FaceRecord>> face_records)
{
    Mesh m;
    m.vertices_ = std::move(vertices);
    const auto& x = m.vertices_;
    if (loops.empty())
        throw GeometryError("mesh has no elements");

    m.elements_.resize(loops.size());
    for (std::size_t t = 0; t < loops.size(); ++t) {
        auto& loop = loops[t];
        if (loop.size() < 3)
            throw GeometryError("element " + std::to_string(t) + " has fewer than 3 vertices");
        for (std::size_t v : loop)
            if (v >= x.size())
                throw GeometryError("element " + std::to_string(t) + " references missing vertex " + std::to_string(v));
        double a = detail::signed_area(x, loop);
        double diam = 0.;
        for (std::size_t i = 0; i < loop.size(); ++i)
            for (std::size_t j = i + 1; j < loop.size(); ++j)
                diam = std::max(diam, (x[loop[i]] - x[loop[j]]).norm());
        if (!(std::abs(a) > 1e-14 * diam * diam))
            throw GeometryError("element " + std::to_string(t) + " has zero area");
        if (a < 0.) {
            std::reverse(loop.begin(), loop.end());
            a = -a;
        }
        const std::size_t n = loop.size();
        for (std::size_t i = 0; i < n; ++i) {
            const Vec2 &p = x[loop[i]], &q = x[loop[(i + 1) % n]], &r = x[loop[(i + 2) % n]];
            if ((q - p).norm() <= 1e-14 * diam)
                throw GeometryError("element " + std::to_string(t) + " has a zero-length side");
            // consecutive sides folding back onto each other
            if (std::abs(cross(q - p, r - q)) <= 1e-12 * diam * diam && (q - p).dot(r - q) < 0.)
                throw GeometryError("element " + std::to_string(t) + " is self-intersecting");
            for (std::size_t j = i + 2; j < n; ++j) {
                if ((j + 1) % n == i)
                    continue;
                if (detail::segments_intersect(p, q, x[loop[j]], x[loop[(j + 1) % n]], 1e-12))
                    throw GeometryError("element " + std::to_string(t) + " is self-intersecting");
            }
        }
        auto& e = m.elements_[t];
        e.vertices = loop;
        e.area = a;
        e.diameter = diam;
        Vec2 c = Vec2::Zero();
        double perim = 0.;
        for (std::size_t i = 0; i < n; ++i) {
            const Vec2 &p = x[loop[i]], &q = x[loop[(i + 1) % n]];
            c += cross(p, q) * (p + q);
            perim += (q - p).norm();
        }
        e.centroid = c / (6. * a);
        e.perimeter = perim;
        m.h_ = std::max(m.h_, diam);
    }

    const double tol = 1e-9 * m.h_;
    if (!face_records) {
        double min_diam = m.h_;
        for (const auto& e : m.elements_)
            min_diam = std::min(min_diam, e.diameter);
        face_records = detail::derive_faces(x, loops, tol, min_diam);
    }

    // attach faces to elements, ordered along the element boundary
    std::vector<std::vector<std::tuple<std::size_t, double, std::size_t, double>>> incident(m.elements_.size());
    m.faces_.resize(face_records->size());
    for (std::size_t f = 0; f < face_records->size(); ++f) {
        const auto& r = (*face_records)[f];
        if (r.v0 >= x.size() || r.v1 >= x.size() || r.v0 == r.v1)
            throw GeometryError("face " + std::to_string(f) + " has invalid vertices");
        if (r.t0 >= m.elements_.size() || (r.t1 != npos && r.t1 >= m.elements_.size()) || r.t0 == r.t1)
            throw GeometryError("face " + std::to_string(f) + " has invalid adjacent elements");
        auto& face = m.faces_[f];
        face.vertices = {r.v0, r.v1};
        face.elements = {r.t0, r.t1};
        face.measure = (x[r.v1] - x[r.v0]).norm();
        face.midpoint = 0.5 * (x[r.v0] + x[r.v1]);
        face.tangent = (x[r.v1] - x[r.v0]) / face.measure;
        for (int side = 0; side < 2; ++side) {
            const std::size_t t = face.elements[side];
            if (t == npos)
                continue;
            const auto& loop = m.elements_[t].vertices;
            bool found = false;
            for (std::size_t s = 0; s < loop.size() && !found; ++s) {
                const Vec2 &a = x[loop[s]], &b = x[loop[(s + 1) % loop.size()]];
                auto p0 = detail::param_on_segment(a, b, x[r.v0], tol);
                auto p1 = detail::param_on_segment(a, b, x[r.v1], tol);
                if (!p0 || !p1)
                    continue;
                found = true;
                const double dir = *p1 > *p0 ? 1. : -1.;
                const Vec2 outward = right_normal(a, b);
                if (side == 0)
                    face.normal = outward;
                else if (outward.dot(face.normal) > -0.5)
                    throw GeometryError("face " + std::to_string(f) + " has overlapping adjacent elements");
                incident[t].emplace_back(s, std::min(*p0, *p1), f, side == 0 ? 1. : -1.);
                (void)dir;
            }
            if (!found)
                throw GeometryError("face " + std::to_string(f) + " does not lie on the boundary of element "
                                    + std::to_string(t));
        }
    }
    for (std::size_t t = 0; t < m.elements_.size(); ++t) {
        auto& inc = incident[t];
        std::sort(inc.begin(), inc.end());
        auto& e = m.elements_[t];
        for (const auto& [side, par, f, orient] : inc) {
            e.faces.push_back(f);
            e.orientation.push_back(orient);
        }
        if (e.faces.size() < 3)
            throw GeometryError("element " + std::to_string(t) + " has fewer than 3 faces");
    }

    const MeshReport rep = m.check();
    if (!rep.face_adjacency_ok || rep.max_perimeter_defect > 1e-9 || rep.max_closure_defect > 1e-9)
        throw GeometryError("faces do not partition the element boundaries");
    return m;
}

inline MeshReport Mesh::check() const
{
    MeshReport rep;
    rep.min_area = std::numeric_limits<double>::infinity();
    double total = 0.;
    for (std::size_t t = 0; t < elements_.size(); ++t) {
        const auto& e = elements_[t];
        double len = 0.;
        Vec2 closure = Vec2::Zero();
        for (std::size_t j = 0; j < e.faces.size(); ++j) {
            const auto& f = faces_[e.faces[j]];
            len += f.measure;
            closure += f.measure * normal(t, j);
            if (f.elements[0] != t && f.elements[1] != t)
                rep.face_adjacency_ok = false;
        }
        rep.max_perimeter_defect = std::max(rep.max_perimeter_defect, std::abs(len - e.perimeter) / e.perimeter);
        rep.max_closure_defect = std::max(rep.max_closure_defect, closure.norm() / e.perimeter);
        rep.min_area = std::min(rep.min_area, e.area);
        total += e.area;
    }
    // domain area from the boundary faces (divergence theorem with the field x / 2)
    double domain = 0.;
    for (const auto& f : faces_)
        if (f.is_boundary())
            domain += 0.5 * f.measure * f.midpoint.dot(f.normal);
    rep.area_defect = std::abs(total - domain) / domain;
    return rep;
}

// ---------------------------------------------------------------------------------------------
// Star point and face-based simplicial submesh
// ---------------------------------------------------------------------------------------------

/// Face-based simplicial partition {P_TF} of an element: triangles with base F and apex x_T.
struct ElementSubmesh {
    Vec2 star_point = Vec2::Zero();
    bool centroid_used = true;
    /// (x_T, a, b) per face, with a -> b counter-clockwise, in element face order
    std::vector<std::array<Vec2, 3>> triangles;
    std::vector<double> distances; ///< d_TF
    std::vector<double> areas; ///< |P_TF|
    bool regular = true; ///< d_TF >= rho h_T for every face

    double min_distance() const { return *std::min_element(distances.begin(), distances.end()); }
};

namespace detail {

    /// Orthogonal distances from x to the lines of the faces of element t.
    inline std::vector<double> face_distances(const Mesh& mesh, std::size_t t, const Vec2& x)
    {
        const auto& e = mesh.element(t);
        std::vector<double> d(e.faces.size());
        for (std::size_t j = 0; j < e.faces.size(); ++j)
            d[j] = mesh.normal(t, j).dot(mesh.face(e.faces[j]).midpoint - x);
        return d;
    }

    /// Interior point maximising the smallest face distance: linear program in (x, t)
    /// solved by enumerating the vertices defined by triples of face half-planes.
    inline std::pair<Vec2, double> chebyshev_point(const Mesh& mesh, std::size_t t)
    {
        const auto& e = mesh.element(t);
        const std::size_t n = e.faces.size();
        std::vector<Vec2> nrm(n);
        std::vector<double> rhs(n);
        for (std::size_t j = 0; j < n; ++j) {
            nrm[j] = mesh.normal(t, j);
            rhs[j] = nrm[j].dot(mesh.face(e.faces[j]).midpoint);
        }
        Vec2 best = e.centroid;
        double best_t = -std::numeric_limits<double>::infinity();
        const double slack = 1e-13 * e.diameter;
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = a + 1; b < n; ++b)
                for (std::size_t c = b + 1; c < n; ++c) {
                    Eigen::Matrix3d A;
                    A << nrm[a].x(), nrm[a].y(), 1., nrm[b].x(), nrm[b].y(), 1., nrm[c].x(), nrm[c].y(), 1.;
                    const double det = A.determinant();
                    if (std::abs(det) < 1e-12)
                        continue;
                    const Eigen::Vector3d sol = A.partialPivLu().solve(Eigen::Vector3d(rhs[a], rhs[b], rhs[c]));
                    const Vec2 p(sol[0], sol[1]);
                    bool feasible = true;
                    for (std::size_t j = 0; j < n && feasible; ++j)
                        feasible = rhs[j] - nrm[j].dot(p) >= sol[2] - slack;
                    if (feasible && sol[2] > best_t) {
                        best_t = sol[2];
                        best = p;
                    }
                }
        return {best, best_t};
    }

} // namespace detail

/// Builds P_T = {P_TF}. The star point is the centroid when it is at distance >= rho h_T from
/// every face line, otherwise the point maximising min_F d_TF.
inline ElementSubmesh build_submesh(const Mesh& mesh, std::size_t t, double rho = 0.1)
{
    if (t >= mesh.n_elements())
        throw GeometryError("element " + std::to_string(t) + " does not exist");
    const auto& e = mesh.element(t);
    ElementSubmesh sub;
    auto d = detail::face_distances(mesh, t, e.centroid);
    sub.star_point = e.centroid;
    if (*std::min_element(d.begin(), d.end()) < rho * e.diameter) {
        auto [p, dist] = detail::chebyshev_point(mesh, t);
        if (!(dist > 1e-12 * e.diameter))
            throw StarShapeError("element " + std::to_string(t) + " is not star-shaped with respect to any point");
        if (dist > *std::min_element(d.begin(), d.end())) {
            sub.star_point = p;
            sub.centroid_used = false;
            d = detail::face_distances(mesh, t, p);
        }
    }
    sub.distances = d;
    sub.regular = *std::min_element(d.begin(), d.end()) >= rho * e.diameter;
    for (std::size_t j = 0; j < e.faces.size(); ++j) {
        const auto& f = mesh.face(e.faces[j]);
        Vec2 a = mesh.vertex(f.vertices[0]), b = mesh.vertex(f.vertices[1]);
        if (e.orientation[j] < 0.)
            std::swap(a, b);
        sub.triangles.push_back({sub.star_point, a, b});
        sub.areas.push_back(0.5 * cross(a - sub.star_point, b - sub.star_point));
    }
    return sub;
}

// ---------------------------------------------------------------------------------------------
// Mesh families on the unit square
// ---------------------------------------------------------------------------------------------

enum class MeshFamily { triangular, cartesian, hexagonal, locally_refined };

inline std::string to_string(MeshFamily f)
{
    switch (f) {
    case MeshFamily::triangular: return "triangular";
    case MeshFamily::cartesian: return "cartesian";
    case MeshFamily::hexagonal: return "hexagonal";
    case MeshFamily::locally_refined: return "locally_refined";
    }
    return "?";
}

inline MeshFamily parse_family(const std::string& s)
{
    if (s == "triangular" || s == "tri")
        return MeshFamily::triangular;
    if (s == "cartesian" || s == "cart")
        return MeshFamily::cartesian;
    if (s == "hexagonal" || s == "hex")
        return MeshFamily::hexagonal;
    if (s == "locally_refined" || s == "locally-refined" || s == "refined")
        return MeshFamily::locally_refined;
    throw SpecError("unknown mesh family '" + s + "'");
}

inline const std::array<MeshFamily, 4>& all_families()
{
    static const std::array<MeshFamily, 4> f{MeshFamily::triangular, MeshFamily::cartesian, MeshFamily::hexagonal,
                                             MeshFamily::locally_refined};
    return f;
}

struct MeshFamilySpec {
    MeshFamily family = MeshFamily::cartesian;
    int n = 0; ///< refinement index; level n has 2^(n+1) coarse cells per direction
    /// Random perturbation as a fraction of the local spacing: interior grid lines for the
    /// triangular, cartesian and locally refined families, vertices for the hexagonal family.
    /// 0 gives the uniform families.
    double jitter = 0.;
    unsigned seed = 0;

};

namespace detail {

    /// n + 1 increasing coordinates from 0 to 1, interior ones shifted by up to jitter / n.
    inline std::vector<double> grid_lines(int n, double jitter, std::mt19937& gen)
    {
        std::uniform_real_distribution<double> U(-jitter, jitter);
        std::vector<double> x(n + 1);
        for (int i = 0; i <= n; ++i)
            x[i] = (i + ((i > 0 && i < n && jitter > 0.) ? U(gen) : 0.)) / n;
        return x;
    }

    inline Mesh cartesian_mesh(int N, bool split, double jitter, std::mt19937& gen)
    {
        const auto xs = grid_lines(N, jitter, gen), ys = grid_lines(N, jitter, gen);
        std::vector<Vec2> x;
        for (int j = 0; j <= N; ++j)
            for (int i = 0; i <= N; ++i)
                x.emplace_back(xs[i], ys[j]);
        auto id = [N](int i, int j) { return std::size_t(j * (N + 1) + i); };
        std::vector<std::vector<std::size_t>> loops;
        for (int j = 0; j < N; ++j)
            for (int i = 0; i < N; ++i) {
                if (split) {
                    loops.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
                    loops.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
                } else {
                    loops.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)});
                }
            }
        return Mesh::build(std::move(x), std::move(loops));
    }

    /// Rows of pointy-top hexagons separated by zigzag lines; rows alternate a half-cell shift
    /// so that the ends of odd rows are quadrilaterals.
    inline Mesh hexagonal_mesh(int M, double jitter, std::mt19937& gen)
    {
        const int K = M;
        const double H = 1. / M, delta = H / 6.;
        const auto xs = grid_lines(2 * K, 0., gen), ys = grid_lines(M, 0., gen);
        std::map<std::pair<int, int>, std::size_t> ids;
        std::vector<Vec2> x;
        auto vertex = [&](int j, int i) {
            auto [it, inserted] = ids.emplace(std::make_pair(j, i), x.size());
            if (inserted) {
                double y = ys[j];
                if (j > 0 && j < M)
                    y += ((i + j) % 2 == 0 ? 1. : -1.) * delta;
                x.emplace_back(xs[i], y);
            }
            return it->second;
        };
        std::vector<std::vector<std::size_t>> loops;
        for (int j = 0; j < M; ++j) {
            std::vector<std::pair<int, int>> spans;
            if (j % 2 == 0) {
                for (int m = 0; m < K; ++m)
                    spans.emplace_back(2 * m, 2 * m + 2);
            } else {
                spans.emplace_back(0, 1);
                for (int m = 1; m < K; ++m)
                    spans.emplace_back(2 * m - 1, 2 * m + 1);
                spans.emplace_back(2 * K - 1, 2 * K);
            }
            for (auto [ia, ib] : spans) {
                std::vector<std::size_t> loop;
                for (int i = ia; i <= ib; ++i)
                    if (j > 0 || i == ia || i == ib)
                        loop.push_back(vertex(j, i));
                for (int i = ib; i >= ia; --i)
                    if (j + 1 < M || i == ia || i == ib)
                        loop.push_back(vertex(j + 1, i));
                loops.push_back(std::move(loop));
            }
        }
        // independent vertex perturbations, tangential on the boundary
        std::uniform_real_distribution<double> U(-jitter, jitter);
        for (auto& v : x) {
            const double dx = U(gen) * 0.5 / K, dy = U(gen) * H / 3.;
            if (v.x() > 0. && v.x() < 1.)
                v.x() += dx;
            if (v.y() > 0. && v.y() < 1.)
                v.y() += dy;
        }
        return Mesh::build(std::move(x), std::move(loops));
    }

    /// Cartesian N x N grid whose cells in the lower-left quadrant are split in 2 x 2;
    /// coarse neighbours keep 4 vertices and get hanging nodes on their sides.
    inline Mesh locally_refined_mesh(int N, double jitter, std::mt19937& gen)
    {
        const auto xs = grid_lines(N, jitter, gen), ys = grid_lines(N, jitter, gen);
        // fine lines halve the coarse ones
        auto fine = [](const std::vector<double>& c, int I) { return I % 2 == 0 ? c[I / 2] : 0.5 * (c[I / 2] + c[I / 2 + 1]); };
        std::map<std::pair<int, int>, std::size_t> ids;
        std::vector<Vec2> x;
        auto vertex = [&](int I, int J) {
            auto [it, inserted] = ids.emplace(std::make_pair(I, J), x.size());
            if (inserted)
                x.emplace_back(fine(xs, I), fine(ys, J));
            return it->second;
        };
        std::vector<std::vector<std::size_t>> loops;
        for (int j = 0; j < N; ++j)
            for (int i = 0; i < N; ++i) {
                const bool refine = (i + 0.5) / N < 0.5 && (j + 0.5) / N < 0.5;
                if (refine) {
                    for (int b = 0; b < 2; ++b)
                        for (int a = 0; a < 2; ++a) {
                            const int I = 2 * i + a, J = 2 * j + b;
                            loops.push_back({vertex(I, J), vertex(I + 1, J), vertex(I + 1, J + 1), vertex(I, J + 1)});
                        }
                } else {
                    const int I = 2 * i, J = 2 * j;
                    loops.push_back({vertex(I, J), vertex(I + 2, J), vertex(I + 2, J + 2), vertex(I, J + 2)});
                }
            }
        // hanging nodes must exist before faces are derived
        return Mesh::build(std::move(x), std::move(loops));
    }

} // namespace detail

/// Mesh of (0,1)^2 from one of the four families at refinement level n.
inline Mesh generate(const MeshFamilySpec& spec)
{
    if (spec.n < 0)
        throw SpecError("refinement index must be >= 0");
    const int N = 1 << (spec.n + 1);
    const double jitter = spec.jitter;
    if (jitter < 0. || jitter >= 0.45)
        throw SpecError("mesh jitter must be in [0, 0.45)");
    std::mt19937 gen(1009u * static_cast<unsigned>(spec.family) + 7919u * static_cast<unsigned>(spec.n) + spec.seed);
    switch (spec.family) {
    case MeshFamily::triangular: return detail::cartesian_mesh(N, true, jitter, gen);
    case MeshFamily::cartesian: return detail::cartesian_mesh(N, false, jitter, gen);
    case MeshFamily::hexagonal: return detail::hexagonal_mesh(N, jitter, gen);
    case MeshFamily::locally_refined: return detail::locally_refined_mesh(N, jitter, gen);
    }
    throw SpecError("unknown mesh family");
}

// ---------------------------------------------------------------------------------------------
// "polymesh v1" text format
// ---------------------------------------------------------------------------------------------

/// Writes the mesh with an explicit face block; coordinates are printed with 17 digits.
inline void save(const Mesh& mesh, std::ostream& os)
{
    os << "polymesh 1 2\n";
    os << "vertices " << mesh.n_vertices() << "\n" << std::setprecision(17);
    for (const auto& v : mesh.vertices())
        os << v.x() << " " << v.y() << "\n";
    os << "elements " << mesh.n_elements() << "\n";
    for (const auto& e : mesh.elements()) {
        os << e.vertices.size();
        for (auto v : e.vertices)
            os << " " << v;
        os << "\n";
    }
    os << "faces " << mesh.n_faces() << "\n";
    for (const auto& f : mesh.faces()) {
        os << f.vertices[0] << " " << f.vertices[1] << " " << f.elements[0] << " ";
        if (f.is_boundary())
            os << -1;
        else
            os << f.elements[1];
        os << "\n";
    }
}

inline void save(const Mesh& mesh, const std::string& path)
{
    std::ofstream os(path);
    if (!os)
        throw ParseError("cannot open '" + path + "' for writing");
    save(mesh, os);
}

namespace detail {

    class TokenStream {
    public:
        explicit TokenStream(std::istream& is)
        {
            std::string line;
            std::size_t lineno = 0;
            while (std::getline(is, line)) {
                ++lineno;
                if (auto c = line.find('#'); c != std::string::npos)
                    line.erase(c);
                std::istringstream ls(line);
                std::string tok;
                while (ls >> tok)
                    tokens_.emplace_back(tok, lineno);
            }
        }
        bool done() const { return pos_ >= tokens_.size(); }
        const std::string& peek() const
        {
            if (done())
                throw ParseError("unexpected end of file");
            return tokens_[pos_].first;
        }
        std::string word()
        {
            const auto& s = peek();
            ++pos_;
            return s;
        }
        void expect(const std::string& w)
        {
            const auto line = current_line();
            if (word() != w)
                throw ParseError("line " + std::to_string(line) + ": expected '" + w + "'");
        }
        long long integer()
        {
            const auto line = current_line();
            const std::string s = word();
            std::size_t used = 0;
            long long v = 0;
            try {
                v = std::stoll(s, &used);
            } catch (...) {
                used = 0;
            }
            if (used != s.size() || s.empty())
                throw ParseError("line " + std::to_string(line) + ": expected an integer, got '" + s + "'");
            return v;
        }
        double real()
        {
            const auto line = current_line();
            const std::string s = word();
            std::size_t used = 0;
            double v = 0;
            try {
                v = std::stod(s, &used);
            } catch (...) {
                used = 0;
            }
            if (used != s.size() || !std::isfinite(v))
                throw ParseError("line " + std::to_string(line) + ": expected a number, got '" + s + "'");
            return v;
        }
        std::size_t current_line() const { return done() ? (tokens_.empty() ? 0 : tokens_.back().second) : tokens_[pos_].second; }

    private:
        std::vector<std::pair<std::string, std::size_t>> tokens_;
        std::size_t pos_ = 0;
    };

    inline std::size_t count(TokenStream& ts, const char* what)
    {
        const auto line = ts.current_line();
        const long long n = ts.integer();
        if (n < 0)
            throw ParseError("line " + std::to_string(line) + ": negative " + what + " count");
        return static_cast<std::size_t>(n);
    }

} // namespace detail

/// Reads a "polymesh v1" mesh. Throws ParseError, GeometryError or NonmanifoldError.
inline Mesh load(std::istream& is)
{
    detail::TokenStream ts(is);
    ts.expect("polymesh");
    if (ts.integer() != 1)
        throw ParseError("unsupported polymesh version");
    if (ts.integer() != 2)
        throw ParseError("only dimension 2 is supported");
    ts.expect("vertices");
    const std::size_t nv = detail::count(ts, "vertex");
    std::vector<Vec2> x(nv);
    for (auto& v : x) {
        v.x() = ts.real();
        v.y() = ts.real();
    }
    ts.expect("elements");
    const std::size_t ne = detail::count(ts, "element");
    std::vector<std::vector<std::size_t>> loops(ne);
    for (auto& loop : loops) {
        const std::size_t c = detail::count(ts, "vertex");
        loop.resize(c);
        for (auto& i : loop) {
            const long long v = ts.integer();
            if (v < 0 || static_cast<std::size_t>(v) >= nv)
                throw ParseError("line " + std::to_string(ts.current_line()) + ": vertex index out of range");
            i = static_cast<std::size_t>(v);
        }
    }
    std::optional<std::vector<FaceRecord>> faces;
    if (!ts.done()) {
        ts.expect("faces");
        const std::size_t nf = detail::count(ts, "face");
        faces.emplace(nf);
        for (auto& f : *faces) {
            const long long v0 = ts.integer(), v1 = ts.integer(), t0 = ts.integer(), t1 = ts.integer();
            if (v0 < 0 || v1 < 0 || std::size_t(v0) >= nv || std::size_t(v1) >= nv || t0 < 0 || std::size_t(t0) >= ne
                || t1 < -1 || (t1 >= 0 && std::size_t(t1) >= ne))
                throw ParseError("line " + std::to_string(ts.current_line()) + ": face index out of range");
            f = {std::size_t(v0), std::size_t(v1), std::size_t(t0), t1 < 0 ? npos : std::size_t(t1)};
        }
        if (!ts.done())
            throw ParseError("line " + std::to_string(ts.current_line()) + ": trailing data");
    }
    return Mesh::build(std::move(x), std::move(loops), std::move(faces));
}

inline Mesh load(const std::string& path)
{
    std::ifstream is(path);
    if (!is)
        throw ParseError("cannot open '" + path + "'");
    return load(is);
}

} // namespace dsgd
