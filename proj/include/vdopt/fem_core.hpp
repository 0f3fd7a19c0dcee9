#pragma once

// P1 finite element core: nodal functions, stiffness/mass assembly for the
// Dirichlet-Laplace and Neumann -Laplace+I operators, factorized solves and
// the discrete solution operators S_h, S_h^* they realize.

#include <Eigen/Dense>
#include <cstdio>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>

#include "vdopt/mesh.hpp"
#include "vdopt/quadrature.hpp"

namespace vdopt {

using SparseMat = Eigen::SparseMatrix<Real>;
using Vector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
using MeshPtr = std::shared_ptr<const TriMesh>;
using ScalarField = std::function<Real(Real, Real)>;

enum class OperatorKind { DirichletLaplace, NeumannHelmholtz };

/// Coefficient vector over the P1 nodal basis of a mesh.
struct FeFunction {
    MeshPtr mesh;
    Vector coeffs;

    FeFunction() = default;
    FeFunction(MeshPtr m, Vector c) : mesh(std::move(m)), coeffs(std::move(c)) {
        if (coeffs.size() != mesh->num_vertices())
            throw std::invalid_argument("FeFunction: coefficient count != vertex count");
    }

    static FeFunction constant(const MeshPtr& m, Real value) {
        return {m, Vector::Constant(m->num_vertices(), value)};
    }

    Real max_abs() const { return coeffs.size() ? coeffs.cwiseAbs().maxCoeff() : 0.0; }
};

/// Nodal Lagrange interpolant of a callable.
inline FeFunction interpolate(const MeshPtr& mesh, const ScalarField& f) {
    Vector c(mesh->num_vertices());
    for (int v = 0; v < mesh->num_vertices(); ++v)
        c[v] = f(mesh->vertices[v].x, mesh->vertices[v].y);
    return {mesh, std::move(c)};
}

namespace detail {

inline void check_not_degenerate(const TriMesh& mesh, int t) {
    const Real a2 = mesh.signed_area2(t);
    if (!(a2 > 1e-300))
        throw std::runtime_error("assembly: degenerate triangle " + std::to_string(t));
}

// Gradient coefficients of the three barycentric functions:
// grad(lambda_i) = (b_i, c_i), already divided by 2*area.
struct P1Gradients {
    Real b[3], c[3];
    Real area;
};

inline P1Gradients p1_gradients(const TriMesh& mesh, int t) {
    auto p = mesh.corners(t);
    const Real d = mesh.signed_area2(t);
    P1Gradients g;
    g.area = 0.5 * d;
    g.b[0] = (p[1].y - p[2].y) / d;
    g.b[1] = (p[2].y - p[0].y) / d;
    g.b[2] = (p[0].y - p[1].y) / d;
    g.c[0] = (p[2].x - p[1].x) / d;
    g.c[1] = (p[0].x - p[2].x) / d;
    g.c[2] = (p[1].x - p[0].x) / d;
    return g;
}

}  // namespace detail

/// Element stiffness of -Laplace on triangle t.
inline std::array<std::array<Real, 3>, 3> element_stiffness(const TriMesh& mesh, int t) {
    detail::check_not_degenerate(mesh, t);
    const auto g = detail::p1_gradients(mesh, t);
    std::array<std::array<Real, 3>, 3> k{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            k[i][j] = g.area * (g.b[i] * g.b[j] + g.c[i] * g.c[j]);
    return k;
}

/// Element mass matrix: (area/12) * [[2,1,1],[1,2,1],[1,1,2]].
inline std::array<std::array<Real, 3>, 3> element_mass(const TriMesh& mesh, int t) {
    detail::check_not_degenerate(mesh, t);
    const Real a = mesh.area(t);
    std::array<std::array<Real, 3>, 3> m{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            m[i][j] = (i == j ? 2.0 : 1.0) * a / 12.0;
    return m;
}

/// Full mass matrix M_ij = int phi_i phi_j (no boundary treatment).
inline SparseMat assemble_mass(const TriMesh& mesh) {
    std::vector<Eigen::Triplet<Real>> trip;
    trip.reserve(9 * mesh.num_triangles());
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const auto m = element_mass(mesh, t);
        const auto& tri = mesh.triangles[t];
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                trip.emplace_back(tri[i], tri[j], m[i][j]);
    }
    SparseMat M(mesh.num_vertices(), mesh.num_vertices());
    M.setFromTriplets(trip.begin(), trip.end());
    return M;
}

/// Stiffness matrix of the chosen operator. DirichletLaplace eliminates
/// boundary rows/columns (identity diagonal, zero coupling), which keeps the
/// matrix SPD; NeumannHelmholtz adds the mass matrix and keeps all dofs.
inline SparseMat assemble_stiffness(const TriMesh& mesh, OperatorKind kind) {
    const bool dirichlet = (kind == OperatorKind::DirichletLaplace);
    std::vector<Eigen::Triplet<Real>> trip;
    trip.reserve(9 * mesh.num_triangles() + mesh.num_vertices());
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const auto k = element_stiffness(mesh, t);
        const auto m = element_mass(mesh, t);
        const auto& tri = mesh.triangles[t];
        for (int i = 0; i < 3; ++i) {
            if (dirichlet && mesh.boundary_vertex[tri[i]]) continue;
            for (int j = 0; j < 3; ++j) {
                if (dirichlet && mesh.boundary_vertex[tri[j]]) continue;
                const Real v = dirichlet ? k[i][j] : (k[i][j] + m[i][j]);
                trip.emplace_back(tri[i], tri[j], v);
            }
        }
    }
    if (dirichlet)
        for (int v = 0; v < mesh.num_vertices(); ++v)
            if (mesh.boundary_vertex[v]) trip.emplace_back(v, v, 1.0);
    SparseMat A(mesh.num_vertices(), mesh.num_vertices());
    A.setFromTriplets(trip.begin(), trip.end());
    return A;
}

/// Load vector of a callable source, int f phi_i with a fixed degree-7 rule.
inline Vector assemble_load(const TriMesh& mesh, const ScalarField& f) {
    Vector load = Vector::Zero(mesh.num_vertices());
    const auto& rule = degree7_rule();
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const auto c = mesh.corners(t);
        const Real a2 = mesh.signed_area2(t);
        const auto& tri = mesh.triangles[t];
        for (const auto& q : rule) {
            const Vec2 p = c[0] + q.r * (c[1] - c[0]) + q.s * (c[2] - c[0]);
            const Real fv = f(p.x, p.y) * q.w * a2;
            load[tri[0]] += fv * (1.0 - q.r - q.s);
            load[tri[1]] += fv * q.r;
            load[tri[2]] += fv * q.s;
        }
    }
    return load;
}

/// Sparse Cholesky with a residual guard: one step of iterative refinement if
/// the relative residual exceeds 1e-14, hard error above 1e-12.
class SparseChol {
public:
    SparseChol() = default;

    explicit SparseChol(const SparseMat& A) { factorize(A); }

    void factorize(const SparseMat& A) {
        matrix_ = A;
        matrix_norm_ = 0.0;
        Vector rowsum = Vector::Zero(A.rows());
        for (int k = 0; k < A.outerSize(); ++k)
            for (SparseMat::InnerIterator it(A, k); it; ++it)
                rowsum[it.row()] += std::abs(it.value());
        if (rowsum.size()) matrix_norm_ = rowsum.maxCoeff();
        llt_.compute(A);
        if (llt_.info() != Eigen::Success)
            throw std::runtime_error("SparseChol: factorization failed (matrix not SPD?)");
    }

    Vector solve(const Vector& rhs) const {
        Vector x = llt_.solve(rhs);
        const Real bn = rhs.cwiseAbs().maxCoeff();
        if (bn == 0.0) return x;
        Vector r = rhs - matrix_ * x;
        Real rn = r.cwiseAbs().maxCoeff();
        // Scale the guard by the solution size: for nearly-cancelling loads
        // the residual floor is eps * ||A|| * ||x||, not eps * ||b||.
        const Real scale = bn + matrix_norm_ * x.cwiseAbs().maxCoeff();
        for (int pass = 0; pass < 2 && rn > 1e-17 * scale; ++pass) {
            x += llt_.solve(r);
            r = rhs - matrix_ * x;
            rn = r.cwiseAbs().maxCoeff();
        }
        if (rn > 1e-13 * scale) {
            char msg[128];
            std::snprintf(msg, sizeof(msg), "SparseChol: relative residual %.3e after refinement",
                          static_cast<double>(rn / scale));
            throw std::runtime_error(msg);
        }
        return x;
    }

    const SparseMat& matrix() const { return matrix_; }

private:
    SparseMat matrix_;
    Real matrix_norm_ = 0.0;  // infinity norm
    Eigen::SimplicialLLT<SparseMat> llt_;
};

/// Assembled and factorized realization of S_h and S_h^* on one mesh.
///
/// S_h maps a right-hand side functional to the FE solution of
/// a(y_h, v_h) = <u, v_h>; with the symmetric bilinear forms used here the
/// adjoint S_h^* is the same solve with a mass-matrix load.
class DiscreteElliptic {
public:
    DiscreteElliptic(MeshPtr mesh, OperatorKind kind)
        : mesh_(std::move(mesh)),
          kind_(kind),
          mass_(assemble_mass(*mesh_)),
          stiffness_(assemble_stiffness(*mesh_, kind)),
          chol_(stiffness_) {}

    const MeshPtr& mesh() const { return mesh_; }
    OperatorKind kind() const { return kind_; }
    const SparseMat& mass() const { return mass_; }
    const SparseMat& stiffness() const { return stiffness_; }

    bool is_constrained(int vertex) const {
        return kind_ == OperatorKind::DirichletLaplace && mesh_->boundary_vertex[vertex];
    }

    /// Zero the load entries of eliminated boundary dofs.
    Vector constrain(Vector load) const {
        if (kind_ == OperatorKind::DirichletLaplace)
            for (int v = 0; v < mesh_->num_vertices(); ++v)
                if (mesh_->boundary_vertex[v]) load[v] = 0.0;
        return load;
    }

    /// Solve A y = load after boundary elimination of the load.
    FeFunction solve(const Vector& load) const {
        return {mesh_, chol_.solve(constrain(load))};
    }

    /// y_h = S_h u for an FE control: load is exactly M u.
    FeFunction apply_Sh(const FeFunction& u) const {
        require_same_mesh(u);
        return solve(mass_ * u.coeffs);
    }

    /// y_h = S_h u for a callable control (fixed degree-7 quadrature load).
    FeFunction apply_Sh(const ScalarField& u) const {
        return solve(assemble_load(*mesh_, u));
    }

    /// p_h with a(v_h, p_h) = <w, v_h>; equals S_h (M w) by symmetry of a.
    FeFunction apply_Sh_star(const FeFunction& w) const {
        require_same_mesh(w);
        return solve(mass_ * w.coeffs);
    }

    /// M y - load; the adjoint load near an optimum with small alpha cancels
    /// almost completely, so it is formed in one expression.
    Vector adjoint_load(const Vector& y, const Vector& load) const {
        return mass_ * y - load;
    }

    Real l2_inner(const FeFunction& f, const FeFunction& g) const {
        return f.coeffs.dot(mass_ * g.coeffs);
    }

    Real l2_norm(const FeFunction& f) const {
        return std::sqrt(std::max(Real(0), l2_inner(f, f)));
    }

    /// Largest eigenvalue of S_h^* S_h in L2, i.e. ||S_h||^2, by power
    /// iteration in the M-inner product from the deterministic all-ones start.
    Real operator_norm_sq(Real rel_tol = 1e-10, int max_iter = 10000) const {
        Vector w = Vector::Ones(mesh_->num_vertices());
        Real lambda = 0.0;
        for (int it = 0; it < max_iter; ++it) {
            const Vector y = chol_.solve(constrain(mass_ * w));
            const Vector q = chol_.solve(constrain(mass_ * y));
            const Real num = q.dot(mass_ * w);
            const Real den = w.dot(mass_ * w);
            const Real lambda_new = num / den;
            const Real qn = std::sqrt(std::max(q.dot(mass_ * q), Real(1e-300)));
            w = q / qn;
            if (it > 0 && std::abs(lambda_new - lambda) <= rel_tol * std::abs(lambda_new)) {
                return lambda_new;
            }
            lambda = lambda_new;
        }
        throw std::runtime_error("operator_norm_sq: power iteration did not converge");
    }

    void require_same_mesh(const FeFunction& f) const {
        if (f.mesh.get() != mesh_.get())
            throw std::invalid_argument("DiscreteElliptic: function lives on a different mesh");
    }

private:
    MeshPtr mesh_;
    OperatorKind kind_;
    SparseMat mass_;
    SparseMat stiffness_;
    SparseChol chol_;
};

}  // namespace vdopt
