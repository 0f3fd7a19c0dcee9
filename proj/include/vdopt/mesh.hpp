#pragma once

// Conforming P1 triangulations of the unit square: coarse grid generator,
// regular (red) refinement, mesh quality statistics and legacy VTK export.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace vdopt {

// All numerics run in 80-bit extended precision. The a posteriori stopping
// certificate divides adjoint-state residuals by alpha; for the smallest
// regularization weights in the experiment suite (alpha = 1e-7, tolerance
// 1e-11) that quotient sits below what 53-bit arithmetic can resolve.
using Real = long double;

struct Vec2 {
    Real x = 0.0;
    Real y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(Real s, Vec2 a) { return {s * a.x, s * a.y}; }
inline Real dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline Real cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline Real norm(Vec2 a) { return std::sqrt(dot(a, a)); }

struct TriMesh {
    std::vector<Vec2> vertices;
    std::vector<std::array<int, 3>> triangles;  // counterclockwise
    std::vector<std::uint8_t> boundary_vertex;  // 1 if on the domain boundary
    int level = 0;                              // refinement generation count

    int num_vertices() const { return static_cast<int>(vertices.size()); }
    int num_triangles() const { return static_cast<int>(triangles.size()); }

    std::array<Vec2, 3> corners(int t) const {
        const auto& tri = triangles[t];
        return {vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]};
    }

    Real signed_area2(int t) const {  // twice the signed area
        auto c = corners(t);
        return cross(c[1] - c[0], c[2] - c[0]);
    }

    Real area(int t) const { return 0.5 * signed_area2(t); }

    Real total_area() const {
        Real s = 0.0;
        for (int t = 0; t < num_triangles(); ++t) s += area(t);
        return s;
    }

    Real diameter(int t) const {  // longest edge
        auto c = corners(t);
        return std::max({norm(c[1] - c[0]), norm(c[2] - c[1]), norm(c[0] - c[2])});
    }
};

// Barycentric coordinate evaluation on a fixed triangle.
struct TriFrame {
    Vec2 p0;
    Real inv00, inv01, inv10, inv11;  // inverse of [p1-p0 | p2-p0]

    explicit TriFrame(const std::array<Vec2, 3>& c) : p0(c[0]) {
        const Vec2 e1 = c[1] - c[0];
        const Vec2 e2 = c[2] - c[0];
        const Real det = cross(e1, e2);
        inv00 = e2.y / det;
        inv01 = -e2.x / det;
        inv10 = -e1.y / det;
        inv11 = e1.x / det;
    }

    std::array<Real, 3> bary(Vec2 q) const {
        const Vec2 d = q - p0;
        const Real l1 = inv00 * d.x + inv01 * d.y;
        const Real l2 = inv10 * d.x + inv11 * d.y;
        return {1.0 - l1 - l2, l1, l2};
    }
};

// 2x2 grid of squares, each split along the diagonal through the domain
// center (union-jack pattern): 9 vertices, 8 triangles, h_max = sqrt(2)/2.
// The center-symmetric orientation keeps the triangulation invariant under
// the symmetries of the square, which the refined family inherits.
inline TriMesh unit_square_coarse() {
    TriMesh m;
    m.level = 0;
    for (int j = 0; j <= 2; ++j)
        for (int i = 0; i <= 2; ++i) {
            m.vertices.push_back({0.5 * i, 0.5 * j});
            m.boundary_vertex.push_back(i == 0 || i == 2 || j == 0 || j == 2);
        }
    auto vid = [](int i, int j) { return 3 * j + i; };
    for (int j = 0; j < 2; ++j)
        for (int i = 0; i < 2; ++i) {
            const int ll = vid(i, j), lr = vid(i + 1, j);
            const int ul = vid(i, j + 1), ur = vid(i + 1, j + 1);
            if (i == j) {  // diagonal from lower-left to upper-right
                m.triangles.push_back({ll, lr, ur});
                m.triangles.push_back({ll, ur, ul});
            } else {  // diagonal from lower-right to upper-left
                m.triangles.push_back({ll, lr, ul});
                m.triangles.push_back({lr, ur, ul});
            }
        }
    return m;
}

namespace detail {
struct EdgeKeyHash {
    std::size_t operator()(std::uint64_t k) const { return std::hash<std::uint64_t>()(k); }
};
inline std::uint64_t edge_key(int a, int b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}
}  // namespace detail

// Regular refinement: every triangle is split into 4 congruent children via
// edge midpoints; h_max halves, conformity and boundary flags are preserved.
inline TriMesh refine(const TriMesh& mesh) {
    TriMesh fine;
    fine.level = mesh.level + 1;
    fine.vertices = mesh.vertices;
    fine.boundary_vertex = mesh.boundary_vertex;

    // Edge adjacency count identifies boundary edges (exactly one triangle).
    std::unordered_map<std::uint64_t, int, detail::EdgeKeyHash> edge_count;
    for (const auto& tri : mesh.triangles)
        for (int e = 0; e < 3; ++e)
            ++edge_count[detail::edge_key(tri[e], tri[(e + 1) % 3])];

    std::unordered_map<std::uint64_t, int, detail::EdgeKeyHash> midpoint;
    midpoint.reserve(edge_count.size());
    auto mid_of = [&](int a, int b) {
        const auto key = detail::edge_key(a, b);
        auto it = midpoint.find(key);
        if (it != midpoint.end()) return it->second;
        const int idx = fine.num_vertices();
        fine.vertices.push_back(0.5 * (mesh.vertices[a] + mesh.vertices[b]));
        fine.boundary_vertex.push_back(edge_count.at(key) == 1 ? 1 : 0);
        midpoint.emplace(key, idx);
        return idx;
    };

    fine.triangles.reserve(4 * mesh.triangles.size());
    for (const auto& tri : mesh.triangles) {
        const int v0 = tri[0], v1 = tri[1], v2 = tri[2];
        const int m01 = mid_of(v0, v1), m12 = mid_of(v1, v2), m02 = mid_of(v0, v2);
        fine.triangles.push_back({v0, m01, m02});
        fine.triangles.push_back({m01, v1, m12});
        fine.triangles.push_back({m02, m12, v2});
        fine.triangles.push_back({m01, m12, m02});
    }
    return fine;
}

inline TriMesh refine(TriMesh mesh, int times) {
    for (int k = 0; k < times; ++k) mesh = refine(mesh);
    return mesh;
}

struct MeshStats {
    Real h_max = 0.0;  // max element diameter
    Real ratio = 0.0;  // h_max / min inscribed-circle diameter
};

inline MeshStats mesh_stats(const TriMesh& mesh) {
    MeshStats s;
    Real min_incircle = std::numeric_limits<Real>::max();
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        auto c = mesh.corners(t);
        const Real a = norm(c[1] - c[0]);
        const Real b = norm(c[2] - c[1]);
        const Real cc = norm(c[0] - c[2]);
        s.h_max = std::max(s.h_max, std::max({a, b, cc}));
        const Real perim = a + b + cc;
        min_incircle = std::min(min_incircle, 2.0 * mesh.signed_area2(t) / perim);  // = 2r
    }
    s.ratio = s.h_max / min_incircle;
    return s;
}

// Structural conformity: positive areas, every interior edge shared by exactly
// two triangles with opposite orientation, boundary flags consistent with the
// edge adjacency.
inline bool is_conforming(const TriMesh& mesh) {
    for (int t = 0; t < mesh.num_triangles(); ++t)
        if (!(mesh.signed_area2(t) > 0.0)) return false;

    std::map<std::pair<int, int>, int> directed;  // directed edge -> count
    for (const auto& tri : mesh.triangles)
        for (int e = 0; e < 3; ++e)
            if (++directed[{tri[e], tri[(e + 1) % 3]}] > 1) return false;

    std::vector<std::uint8_t> on_bdry_edge(mesh.num_vertices(), 0);
    for (const auto& [edge, cnt] : directed) {
        (void)cnt;
        auto rev = directed.find({edge.second, edge.first});
        if (rev == directed.end()) {  // boundary edge
            on_bdry_edge[edge.first] = 1;
            on_bdry_edge[edge.second] = 1;
        }
    }
    for (int v = 0; v < mesh.num_vertices(); ++v)
        if (on_bdry_edge[v] != (mesh.boundary_vertex[v] ? 1 : 0)) return false;
    return true;
}

// Legacy VTK ASCII export (POINTS / CELLS / CELL_TYPES).
inline void write_vtk(const TriMesh& mesh, std::ostream& os) {
    os << "# vtk DataFile Version 3.0\n"
       << "vdopt mesh level " << mesh.level << "\n"
       << "ASCII\nDATASET UNSTRUCTURED_GRID\n";
    os << "POINTS " << mesh.num_vertices() << " double\n";
    for (const auto& v : mesh.vertices)
        os << static_cast<double>(v.x) << " " << static_cast<double>(v.y) << " 0\n";
    os << "CELLS " << mesh.num_triangles() << " " << 4 * mesh.num_triangles() << "\n";
    for (const auto& tri : mesh.triangles)
        os << "3 " << tri[0] << " " << tri[1] << " " << tri[2] << "\n";
    os << "CELL_TYPES " << mesh.num_triangles() << "\n";
    for (int t = 0; t < mesh.num_triangles(); ++t) os << "5\n";
}

}  // namespace vdopt
