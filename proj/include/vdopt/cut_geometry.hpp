#pragma once

// Active/inactive partition induced by an adjoint state: per-element
// classification, exact clipping of elements along the piecewise-linear
// active-set boundary, and exact integration of P1 products over the
// resulting regions.
//
// All sub-polygon vertices carry their barycentric coordinates w.r.t. the
// parent element, so every P1 quantity (p, a, b, basis functions) is a dot
// product with nodal values; integrals of P1 x P1 products use the degree-2
// midpoint rule per fan sub-triangle and are exact.

#include <array>
#include <cstdint>
#include <ostream>

#include "vdopt/fem_core.hpp"

namespace vdopt {

enum class Region : std::uint8_t { Inactive = 0, ActiveLower = 1, ActiveUpper = 2 };
enum class ElemClass : std::uint8_t { Inactive = 0, ActiveLower = 1, ActiveUpper = 2, Cut = 3 };

enum class RegionSelect { Inactive, ActiveLower, ActiveUpper, Active, All };

inline bool selects(RegionSelect sel, Region r) {
    switch (sel) {
        case RegionSelect::Inactive: return r == Region::Inactive;
        case RegionSelect::ActiveLower: return r == Region::ActiveLower;
        case RegionSelect::ActiveUpper: return r == Region::ActiveUpper;
        case RegionSelect::Active: return r != Region::Inactive;
        case RegionSelect::All: return true;
    }
    return false;
}

struct CutVertex {
    Vec2 p;
    std::array<Real, 3> bary;  // w.r.t. the parent element's corners
};

/// Convex sub-polygon of one element (at most 5 vertices after two linear
/// cuts of a triangle; capacity 8 for headroom).
struct CutPoly {
    Region label = Region::Inactive;
    int n = 0;
    std::array<CutVertex, 8> v;

    void push(const CutVertex& cv) { v[n++] = cv; }

    Real area() const {  // shoelace
        Real a2 = 0.0;
        for (int i = 0; i < n; ++i) {
            const Vec2& p = v[i].p;
            const Vec2& q = v[(i + 1) % n].p;
            a2 += cross(p, q);
        }
        return 0.5 * a2;
    }
};

namespace detail {

inline Real field_at(const CutVertex& cv, const std::array<Real, 3>& nodal) {
    return cv.bary[0] * nodal[0] + cv.bary[1] * nodal[1] + cv.bary[2] * nodal[2];
}

inline CutVertex lerp(const CutVertex& a, const CutVertex& b, Real t) {
    CutVertex out;
    out.p = a.p + t * (b.p - a.p);
    for (int k = 0; k < 3; ++k) out.bary[k] = a.bary[k] + t * (b.bary[k] - a.bary[k]);
    return out;
}

/// Keeps the part of a convex polygon where the linear field (given by nodal
/// values) is <= 0 or >= 0. Vertices on the zero line belong to both sides.
inline CutPoly clip(const CutPoly& in, const std::array<Real, 3>& nodal, bool keep_negative) {
    CutPoly out;
    out.label = in.label;
    for (int i = 0; i < in.n; ++i) {
        const int j = (i + 1) % in.n;
        const Real vi = field_at(in.v[i], nodal);
        const Real vj = field_at(in.v[j], nodal);
        const bool in_i = keep_negative ? (vi <= 0.0) : (vi >= 0.0);
        if (in_i) out.push(in.v[i]);
        if ((vi < 0.0 && vj > 0.0) || (vi > 0.0 && vj < 0.0))
            out.push(lerp(in.v[i], in.v[j], vi / (vi - vj)));
    }
    return out;
}

inline CutPoly whole_element(const std::array<Vec2, 3>& c, Region label) {
    CutPoly poly;
    poly.label = label;
    poly.push({c[0], {1.0, 0.0, 0.0}});
    poly.push({c[1], {0.0, 1.0, 0.0}});
    poly.push({c[2], {0.0, 0.0, 1.0}});
    return poly;
}

}  // namespace detail

/// Per-element classification w.r.t. an adjoint snapshot, with clipped
/// sub-polygons on cut elements. See classify().
struct ActivePartition {
    MeshPtr mesh;
    Real alpha = 1.0;
    FeFunction adjoint;  // generating snapshot p
    FeFunction lower;    // bound a
    FeFunction upper;    // bound b

    std::vector<ElemClass> elem_class;
    std::vector<int> poly_begin;  // size nt+1; nonempty range only for Cut elements
    std::vector<CutPoly> polys;

    Vector inactive_support;  // per dof: area of union(support(phi_i)) cap I
    Real area_inactive = 0.0;
    Real area_lower = 0.0;
    Real area_upper = 0.0;
    Real h_max = 0.0;
    Real snap_tol = 0.0;

    int num_cut() const {
        int n = 0;
        for (auto c : elem_class) n += (c == ElemClass::Cut);
        return n;
    }

    Real area(RegionSelect sel) const {
        Real s = 0.0;
        if (selects(sel, Region::Inactive)) s += area_inactive;
        if (selects(sel, Region::ActiveLower)) s += area_lower;
        if (selects(sel, Region::ActiveUpper)) s += area_upper;
        return s;
    }

    /// Nodal values of g_a = -p/alpha - a on element t.
    std::array<Real, 3> ga_nodal(int t) const { return gap_nodal(t, true); }
    /// Nodal values of g_b = b + p/alpha on element t.
    std::array<Real, 3> gb_nodal(int t) const { return gap_nodal(t, false); }

    std::array<Real, 3> gap_nodal(int t, bool lower_gap) const {
        const auto& tri = mesh->triangles[t];
        std::array<Real, 3> g;
        for (int k = 0; k < 3; ++k) {
            const Real pv = adjoint.coeffs[tri[k]];
            const Real v = lower_gap ? (-pv / alpha - lower.coeffs[tri[k]])
                                       : (upper.coeffs[tri[k]] + pv / alpha);
            g[k] = std::abs(v) <= snap_tol ? 0.0 : v;  // same snapping as classify
        }
        return g;
    }

    /// Applies fn(elem, poly) to every sub-polygon of the selected regions;
    /// non-cut elements are passed as a single whole-element polygon.
    template <typename Fn>
    void for_each_piece(RegionSelect sel, Fn&& fn) const {
        for (int t = 0; t < mesh->num_triangles(); ++t) {
            const ElemClass ec = elem_class[t];
            if (ec == ElemClass::Cut) {
                for (int k = poly_begin[t]; k < poly_begin[t + 1]; ++k)
                    if (selects(sel, polys[k].label)) fn(t, polys[k]);
            } else {
                const Region r = static_cast<Region>(ec);
                if (selects(sel, r)) fn(t, detail::whole_element(mesh->corners(t), r));
            }
        }
    }
};

/// Classify all elements by the signs of g_a = -p/alpha - a and
/// g_b = b + p/alpha at the vertices (both linear per element), clipping
/// mixed-sign elements along the zero level sets. Vertex values within the
/// snapping tolerance are snapped to zero and attributed to the inactive
/// side. Double cuts are handled by sequential clipping (first g_a, then
/// g_b), which is exact for linear level sets.
inline ActivePartition classify(const FeFunction& p, const FeFunction& a, const FeFunction& b,
                                Real alpha) {
    if (p.mesh.get() != a.mesh.get() || p.mesh.get() != b.mesh.get())
        throw std::invalid_argument("classify: p, a, b must live on the same mesh");
    if (!(alpha > 0.0)) throw std::invalid_argument("classify: alpha must be positive");
    const Real sigma = (b.coeffs - a.coeffs).minCoeff();
    if (!(sigma > 0.0))
        throw std::runtime_error("classify: bounds violate b - a > 0 at some node");

    const TriMesh& mesh = *p.mesh;
    ActivePartition part;
    part.mesh = p.mesh;
    part.alpha = alpha;
    part.adjoint = p;
    part.lower = a;
    part.upper = b;
    part.h_max = mesh_stats(mesh).h_max;
    part.elem_class.resize(mesh.num_triangles());
    part.poly_begin.assign(mesh.num_triangles() + 1, 0);
    part.inactive_support = Vector::Zero(mesh.num_vertices());

    part.snap_tol = 1e-12 * (1.0 + p.max_abs() / alpha + a.max_abs() + b.max_abs());
    const Real snap_tol = part.snap_tol;
    auto snap = [snap_tol](Real v) { return std::abs(v) <= snap_tol ? 0.0 : v; };

    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const auto& tri = mesh.triangles[t];
        std::array<Real, 3> ga, gb;
        for (int k = 0; k < 3; ++k) {
            const Real pv = p.coeffs[tri[k]];
            ga[k] = snap(-pv / alpha - a.coeffs[tri[k]]);
            gb[k] = snap(b.coeffs[tri[k]] + pv / alpha);
        }
        const bool all_lower = ga[0] < 0 && ga[1] < 0 && ga[2] < 0;
        const bool all_upper = gb[0] < 0 && gb[1] < 0 && gb[2] < 0;
        const bool all_inactive =
            ga[0] >= 0 && ga[1] >= 0 && ga[2] >= 0 && gb[0] >= 0 && gb[1] >= 0 && gb[2] >= 0;

        const Real elem_area = mesh.area(t);
        part.poly_begin[t] = static_cast<int>(part.polys.size());
        if (all_lower) {
            part.elem_class[t] = ElemClass::ActiveLower;
            part.area_lower += elem_area;
        } else if (all_upper) {
            part.elem_class[t] = ElemClass::ActiveUpper;
            part.area_upper += elem_area;
        } else if (all_inactive) {
            part.elem_class[t] = ElemClass::Inactive;
            part.area_inactive += elem_area;
            for (int k = 0; k < 3; ++k) part.inactive_support[tri[k]] += elem_area;
        } else {
            part.elem_class[t] = ElemClass::Cut;
            const CutPoly whole = detail::whole_element(mesh.corners(t), Region::Inactive);
            const Real drop_tol = 1e-14 * elem_area;
            auto keep = [&](CutPoly poly, Region label) {
                poly.label = label;
                const Real pa = poly.area();
                if (poly.n < 3 || pa <= drop_tol) return;
                part.polys.push_back(poly);
                if (label == Region::Inactive) {
                    part.area_inactive += pa;
                    for (int k = 0; k < 3; ++k) part.inactive_support[tri[k]] += pa;
                } else if (label == Region::ActiveLower) {
                    part.area_lower += pa;
                } else {
                    part.area_upper += pa;
                }
            };
            keep(detail::clip(whole, ga, true), Region::ActiveLower);
            const CutPoly not_lower = detail::clip(whole, ga, false);
            keep(detail::clip(not_lower, gb, true), Region::ActiveUpper);
            keep(detail::clip(not_lower, gb, false), Region::Inactive);
        }
    }
    part.poly_begin[mesh.num_triangles()] = static_cast<int>(part.polys.size());
    return part;
}

namespace detail {

/// Integral of the product of two linear fields over a polygon, via fan
/// triangulation and the degree-2 midpoint rule (exact).
template <typename FieldF, typename FieldG>
inline Real integrate_product(const CutPoly& poly, FieldF&& f, FieldG&& g) {
    Real sum = 0.0;
    for (int i = 1; i + 1 < poly.n; ++i) {
        const CutVertex& v0 = poly.v[0];
        const CutVertex& v1 = poly.v[i];
        const CutVertex& v2 = poly.v[i + 1];
        const Real a2 = cross(v1.p - v0.p, v2.p - v0.p);
        Real acc = 0.0;
        for (int e = 0; e < 3; ++e) {
            const CutVertex& a = (e == 0) ? v0 : (e == 1) ? v1 : v2;
            const CutVertex& b = (e == 0) ? v1 : (e == 1) ? v2 : v0;
            const CutVertex m = lerp(a, b, 0.5);
            acc += f(m) * g(m);
        }
        sum += a2 * acc / 6.0;
    }
    return sum;
}

}  // namespace detail

/// Exact integral of f*g over the selected region.
inline Real integrate_chi_pair(const ActivePartition& part, const FeFunction& f,
                                 const FeFunction& g, RegionSelect sel) {
    if (f.mesh.get() != part.mesh.get() || g.mesh.get() != part.mesh.get())
        throw std::invalid_argument("integrate_chi_pair: mesh mismatch");
    Real sum = 0.0;
    part.for_each_piece(sel, [&](int t, const CutPoly& poly) {
        const auto& tri = part.mesh->triangles[t];
        const std::array<Real, 3> fv = {f.coeffs[tri[0]], f.coeffs[tri[1]], f.coeffs[tri[2]]};
        const std::array<Real, 3> gv = {g.coeffs[tri[0]], g.coeffs[tri[1]], g.coeffs[tri[2]]};
        sum += detail::integrate_product(
            poly, [&](const CutVertex& m) { return detail::field_at(m, fv); },
            [&](const CutVertex& m) { return detail::field_at(m, gv); });
    });
    return sum;
}

/// Gram matrix of the cut basis: (M_chi)_ij = int_I phi_i phi_j.
/// Symmetric positive semidefinite; equals the mass matrix when everything
/// is inactive and vanishes when everything is active.
inline SparseMat cut_mass_matrix(const ActivePartition& part) {
    const TriMesh& mesh = *part.mesh;
    std::vector<Eigen::Triplet<Real>> trip;
    trip.reserve(9 * mesh.num_triangles());
    part.for_each_piece(RegionSelect::Inactive, [&](int t, const CutPoly& poly) {
        const auto& tri = mesh.triangles[t];
        if (part.elem_class[t] == ElemClass::Inactive) {
            const auto m = element_mass(mesh, t);
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) trip.emplace_back(tri[i], tri[j], m[i][j]);
        } else {
            Real local[3][3] = {};
            for (int i = 1; i + 1 < poly.n; ++i) {
                const CutVertex& v0 = poly.v[0];
                const CutVertex& v1 = poly.v[i];
                const CutVertex& v2 = poly.v[i + 1];
                const Real a2 = cross(v1.p - v0.p, v2.p - v0.p);
                for (int e = 0; e < 3; ++e) {
                    const CutVertex& a = (e == 0) ? v0 : (e == 1) ? v1 : v2;
                    const CutVertex& b = (e == 0) ? v1 : (e == 1) ? v2 : v0;
                    const CutVertex m = detail::lerp(a, b, 0.5);
                    for (int r = 0; r < 3; ++r)
                        for (int c = 0; c < 3; ++c)
                            local[r][c] += a2 / 6.0 * m.bary[r] * m.bary[c];
                }
            }
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) trip.emplace_back(tri[r], tri[c], local[r][c]);
        }
    });
    SparseMat M(mesh.num_vertices(), mesh.num_vertices());
    M.setFromTriplets(trip.begin(), trip.end());
    return M;
}

/// Load vector with entries int_{sel} f phi_i, computed directly from the
/// cut decomposition (same quadrature as cut_mass_matrix).
inline Vector region_load(const ActivePartition& part, const FeFunction& f, RegionSelect sel) {
    if (f.mesh.get() != part.mesh.get())
        throw std::invalid_argument("region_load: mesh mismatch");
    const TriMesh& mesh = *part.mesh;
    Vector load = Vector::Zero(mesh.num_vertices());
    part.for_each_piece(sel, [&](int t, const CutPoly& poly) {
        const auto& tri = mesh.triangles[t];
        const std::array<Real, 3> fv = {f.coeffs[tri[0]], f.coeffs[tri[1]], f.coeffs[tri[2]]};
        for (int i = 1; i + 1 < poly.n; ++i) {
            const CutVertex& v0 = poly.v[0];
            const CutVertex& v1 = poly.v[i];
            const CutVertex& v2 = poly.v[i + 1];
            const Real a2 = cross(v1.p - v0.p, v2.p - v0.p);
            for (int e = 0; e < 3; ++e) {
                const CutVertex& a = (e == 0) ? v0 : (e == 1) ? v1 : v2;
                const CutVertex& b = (e == 0) ? v1 : (e == 1) ? v2 : v0;
                const CutVertex m = detail::lerp(a, b, 0.5);
                const Real fm = detail::field_at(m, fv) * a2 / 6.0;
                for (int k = 0; k < 3; ++k) load[tri[k]] += fm * m.bary[k];
            }
        }
    });
    return load;
}

/// Load of the cut-off function chi*w: int_I w phi_i.
inline Vector chi_load(const ActivePartition& part, const FeFunction& w) {
    return region_load(part, w, RegionSelect::Inactive);
}

/// Hash of the element classification, for detecting stabilized active sets.
inline std::uint64_t classification_hash(const ActivePartition& part) {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (auto c : part.elem_class) {
        h ^= static_cast<std::uint64_t>(c);
        h *= 1099511628211ull;
    }
    return h;
}

/// Cut segments as CSV lines "x1,y1,x2,y2": sub-polygon edges lying on the
/// zero level set of g_a or g_b, for plotting active-set boundaries.
inline void dump_cut_segments(const ActivePartition& part, std::ostream& os) {
    os << "x1,y1,x2,y2\n";
    const Real tol = 1e-10 * (1.0 + part.adjoint.max_abs() / part.alpha +
                                part.lower.max_abs() + part.upper.max_abs());
    for (int t = 0; t < part.mesh->num_triangles(); ++t) {
        if (part.elem_class[t] != ElemClass::Cut) continue;
        const auto ga = part.ga_nodal(t);
        const auto gb = part.gb_nodal(t);
        for (int k = part.poly_begin[t]; k < part.poly_begin[t + 1]; ++k) {
            const CutPoly& poly = part.polys[k];
            for (int i = 0; i < poly.n; ++i) {
                const CutVertex& a = poly.v[i];
                const CutVertex& b = poly.v[(i + 1) % poly.n];
                const bool on_ga = std::abs(detail::field_at(a, ga)) <= tol &&
                                   std::abs(detail::field_at(b, ga)) <= tol;
                const bool on_gb = std::abs(detail::field_at(a, gb)) <= tol &&
                                   std::abs(detail::field_at(b, gb)) <= tol;
                if ((on_ga || on_gb) && poly.label == Region::Inactive)
                    os << a.p.x << "," << a.p.y << "," << b.p.x << "," << b.p.y << "\n";
            }
        }
    }
}

}  // namespace vdopt
