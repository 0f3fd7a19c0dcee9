#pragma once

// Exact representation of variationally discretized controls: piecewise
// linear on the cut decomposition, equal to the bounds on the active regions
// and to an FE function on the inactive set. Pointwise projection, loads,
// norms and errors against closed-form functions.

#include <algorithm>
#include <cmath>
#include <memory>
#include <ostream>

#include "vdopt/cut_geometry.hpp"

namespace vdopt {

struct BoundsPair {
    FeFunction a;
    FeFunction b;

    Real sigma() const { return (b.coeffs - a.coeffs).minCoeff(); }
};

/// Nodal Lagrange interpolants of the bound callables; hard error if the
/// interpolated admissible set is empty.
inline BoundsPair interpolate_bounds(const ScalarField& a, const ScalarField& b,
                                     const MeshPtr& mesh) {
    BoundsPair bounds{interpolate(mesh, a), interpolate(mesh, b)};
    if (!(bounds.sigma() > 0.0))
        throw std::runtime_error("interpolate_bounds: interpolated gap b - a is not positive");
    return bounds;
}

inline BoundsPair constant_bounds(const MeshPtr& mesh, Real a, Real b) {
    if (!(b - a > 0.0)) throw std::invalid_argument("constant_bounds: need b > a");
    return {FeFunction::constant(mesh, a), FeFunction::constant(mesh, b)};
}

/// u = chi*w + (1-chi)*(a on the lower active set, b on the upper one),
/// where the partition is generated by an adjoint snapshot. The inactive
/// part w is meaningful only on the inactive set.
struct VariationalControl {
    std::shared_ptr<const ActivePartition> partition;
    FeFunction inactive_part;  // w

    Real alpha() const { return partition->alpha; }
    const MeshPtr& mesh() const { return partition->mesh; }

    /// Nodal values of the control's representative on the given region of
    /// element t.
    std::array<Real, 3> region_nodal(int t, Region r) const {
        const FeFunction& f = (r == Region::Inactive) ? inactive_part
                              : (r == Region::ActiveLower) ? partition->lower
                                                           : partition->upper;
        const auto& tri = mesh()->triangles[t];
        return {f.coeffs[tri[0]], f.coeffs[tri[1]], f.coeffs[tri[2]]};
    }

    /// Load vector int u phi_i, exact via the cut decomposition.
    Vector load_vector() const {
        Vector load = chi_load(*partition, inactive_part);
        load += region_load(*partition, partition->lower, RegionSelect::ActiveLower);
        load += region_load(*partition, partition->upper, RegionSelect::ActiveUpper);
        return load;
    }

    Real l2_norm_sq() const {
        Real s = 0.0;
        partition->for_each_piece(RegionSelect::All, [&](int t, const CutPoly& poly) {
            const auto nv = region_nodal(t, poly.label);
            auto f = [&](const CutVertex& m) { return detail::field_at(m, nv); };
            s += detail::integrate_product(poly, f, f);
        });
        return s;
    }
};

/// The exact function P_[a,b](-p/alpha) as a VariationalControl.
inline VariationalControl project_control(const FeFunction& p, const BoundsPair& bounds,
                                          Real alpha) {
    auto part = std::make_shared<ActivePartition>(classify(p, bounds.a, bounds.b, alpha));
    FeFunction w{p.mesh, (-1.0 / alpha) * p.coeffs};
    return {std::move(part), std::move(w)};
}

namespace detail {

/// Overlays the decomposition of v onto each piece of u and applies
/// fn(elem, poly, u_nodal, v_nodal) on pieces where both are linear.
template <typename Fn>
inline void overlay_pieces(const VariationalControl& u, const VariationalControl& v, Fn&& fn) {
    if (u.mesh().get() != v.mesh().get())
        throw std::invalid_argument("overlay_pieces: controls live on different meshes");
    const ActivePartition& pv = *v.partition;
    u.partition->for_each_piece(RegionSelect::All, [&](int t, const CutPoly& upoly) {
        const auto u_nodal = u.region_nodal(t, upoly.label);
        auto emit = [&](const CutPoly& piece, Region v_region) {
            if (piece.n < 3 || piece.area() <= 0.0) return;
            fn(t, piece, u_nodal, v.region_nodal(t, v_region));
        };
        switch (pv.elem_class[t]) {
            case ElemClass::Inactive: emit(upoly, Region::Inactive); return;
            case ElemClass::ActiveLower: emit(upoly, Region::ActiveLower); return;
            case ElemClass::ActiveUpper: emit(upoly, Region::ActiveUpper); return;
            case ElemClass::Cut: break;
        }
        const auto ga = pv.ga_nodal(t);
        const auto gb = pv.gb_nodal(t);
        emit(clip(upoly, ga, true), Region::ActiveLower);
        const CutPoly rest = clip(upoly, ga, false);
        emit(clip(rest, gb, true), Region::ActiveUpper);
        emit(clip(rest, gb, false), Region::Inactive);
    });
}

}  // namespace detail

/// Exact L2 distance between two variational controls on the same mesh
/// (both are P1 on the common overlay decomposition).
inline Real distance_l2(const VariationalControl& u, const VariationalControl& v) {
    Real s = 0.0;
    detail::overlay_pieces(u, v, [&](int, const CutPoly& poly, const std::array<Real, 3>& un,
                                     const std::array<Real, 3>& vn) {
        const std::array<Real, 3> d = {un[0] - vn[0], un[1] - vn[1], un[2] - vn[2]};
        auto f = [&](const CutVertex& m) { return detail::field_at(m, d); };
        s += detail::integrate_product(poly, f, f);
    });
    return std::sqrt(std::max(Real(0), s));
}

/// sqrt(int (u - exact)^2) with the degree-7 rule per cut sub-triangle.
inline Real l2_error(const VariationalControl& u, const ScalarField& exact) {
    Real s = 0.0;
    const auto& rule = degree7_rule();
    u.partition->for_each_piece(RegionSelect::All, [&](int t, const CutPoly& poly) {
        const auto nv = u.region_nodal(t, poly.label);
        for (int i = 1; i + 1 < poly.n; ++i) {
            const CutVertex& v0 = poly.v[0];
            const CutVertex& v1 = poly.v[i];
            const CutVertex& v2 = poly.v[i + 1];
            const Real a2 = cross(v1.p - v0.p, v2.p - v0.p);
            for (const auto& q : rule) {
                const Vec2 x = v0.p + q.r * (v1.p - v0.p) + q.s * (v2.p - v0.p);
                Real uval = 0.0;
                for (int k = 0; k < 3; ++k) {
                    const Real bk = v0.bary[k] + q.r * (v1.bary[k] - v0.bary[k]) +
                                      q.s * (v2.bary[k] - v0.bary[k]);
                    uval += bk * nv[k];
                }
                const Real d = uval - exact(x.x, x.y);
                s += q.w * a2 * d * d;
            }
        }
    });
    return std::sqrt(std::max(Real(0), s));
}

/// max |u - exact| sampled at all degree-7 quadrature nodes of all cut
/// sub-triangles plus the sub-polygon vertices (dense deterministic
/// approximation of the essential supremum).
inline Real linf_error(const VariationalControl& u, const ScalarField& exact) {
    Real m = 0.0;
    const auto& rule = degree7_rule();
    u.partition->for_each_piece(RegionSelect::All, [&](int t, const CutPoly& poly) {
        const auto nv = u.region_nodal(t, poly.label);
        for (int k = 0; k < poly.n; ++k) {
            const CutVertex& v = poly.v[k];
            m = std::max(m, std::abs(detail::field_at(v, nv) - exact(v.p.x, v.p.y)));
        }
        for (int i = 1; i + 1 < poly.n; ++i) {
            const CutVertex& v0 = poly.v[0];
            const CutVertex& v1 = poly.v[i];
            const CutVertex& v2 = poly.v[i + 1];
            for (const auto& q : rule) {
                const Vec2 x = v0.p + q.r * (v1.p - v0.p) + q.s * (v2.p - v0.p);
                Real uval = 0.0;
                for (int k = 0; k < 3; ++k) {
                    const Real bk = v0.bary[k] + q.r * (v1.bary[k] - v0.bary[k]) +
                                      q.s * (v2.bary[k] - v0.bary[k]);
                    uval += bk * nv[k];
                }
                m = std::max(m, std::abs(uval - exact(x.x, x.y)));
            }
        }
    });
    return m;
}

/// Checks a <= u <= b on the sampled decomposition (piece vertices).
inline bool is_admissible(const VariationalControl& u, Real tol = 1e-10) {
    bool ok = true;
    u.partition->for_each_piece(RegionSelect::Inactive, [&](int t, const CutPoly& poly) {
        const auto w = u.region_nodal(t, Region::Inactive);
        const auto a = u.region_nodal(t, Region::ActiveLower);
        const auto b = u.region_nodal(t, Region::ActiveUpper);
        for (int k = 0; k < poly.n; ++k) {
            const Real wv = detail::field_at(poly.v[k], w);
            if (wv < detail::field_at(poly.v[k], a) - tol ||
                wv > detail::field_at(poly.v[k], b) + tol)
                ok = false;
        }
    });
    return ok;
}

/// Bin-grid point location over the mesh, for sampling exports.
class CellLocator {
public:
    explicit CellLocator(MeshPtr mesh, int bins = 64)
        : mesh_(std::move(mesh)), bins_(bins), cells_(bins * bins) {
        lo_ = {1e300, 1e300};
        hi_ = {-1e300, -1e300};
        for (const auto& v : mesh_->vertices) {
            lo_.x = std::min(lo_.x, v.x);
            lo_.y = std::min(lo_.y, v.y);
            hi_.x = std::max(hi_.x, v.x);
            hi_.y = std::max(hi_.y, v.y);
        }
        for (int t = 0; t < mesh_->num_triangles(); ++t) {
            auto c = mesh_->corners(t);
            const Real xmin = std::min({c[0].x, c[1].x, c[2].x});
            const Real xmax = std::max({c[0].x, c[1].x, c[2].x});
            const Real ymin = std::min({c[0].y, c[1].y, c[2].y});
            const Real ymax = std::max({c[0].y, c[1].y, c[2].y});
            for (int bi = bin_of(xmin, lo_.x, hi_.x); bi <= bin_of(xmax, lo_.x, hi_.x); ++bi)
                for (int bj = bin_of(ymin, lo_.y, hi_.y); bj <= bin_of(ymax, lo_.y, hi_.y); ++bj)
                    cells_[bj * bins_ + bi].push_back(t);
        }
    }

    /// Element containing the point (-1 if outside), with barycentric coords.
    int locate(Vec2 q, std::array<Real, 3>& bary) const {
        const int bi = bin_of(q.x, lo_.x, hi_.x);
        const int bj = bin_of(q.y, lo_.y, hi_.y);
        if (bi < 0 || bi >= bins_ || bj < 0 || bj >= bins_) return -1;
        for (int t : cells_[bj * bins_ + bi]) {
            const TriFrame frame(mesh_->corners(t));
            const auto l = frame.bary(q);
            const Real eps = -1e-12;
            if (l[0] >= eps && l[1] >= eps && l[2] >= eps) {
                bary = l;
                return t;
            }
        }
        return -1;
    }

private:
    int bin_of(Real v, Real lo, Real hi) const {
        const int b = static_cast<int>((v - lo) / (hi - lo) * bins_);
        return std::clamp(b, 0, bins_ - 1);
    }

    MeshPtr mesh_;
    int bins_;
    Vec2 lo_, hi_;
    std::vector<std::vector<int>> cells_;
};

/// Pointwise value of the control at a located point.
inline Real eval_control(const VariationalControl& u, int elem,
                           const std::array<Real, 3>& bary) {
    const ActivePartition& part = *u.partition;
    const auto ga = part.ga_nodal(elem);
    const auto gb = part.gb_nodal(elem);
    const CutVertex cv{{0, 0}, bary};
    Region r = Region::Inactive;
    if (detail::field_at(cv, ga) < 0.0)
        r = Region::ActiveLower;
    else if (detail::field_at(cv, gb) < 0.0)
        r = Region::ActiveUpper;
    return detail::field_at(cv, u.region_nodal(elem, r));
}

/// CSV sample "x,y,u" of the control over a uniform (n+1)x(n+1) grid.
inline void dump_control_samples(const VariationalControl& u, int n, std::ostream& os) {
    os << "x,y,u\n";
    const CellLocator locator(u.mesh());
    for (int j = 0; j <= n; ++j)
        for (int i = 0; i <= n; ++i) {
            const Vec2 q{static_cast<Real>(i) / n, static_cast<Real>(j) / n};
            std::array<Real, 3> bary;
            const int t = locator.locate(q, bary);
            if (t < 0) continue;
            os << q.x << "," << q.y << "," << eval_control(u, t, bary) << "\n";
        }
}

}  // namespace vdopt
