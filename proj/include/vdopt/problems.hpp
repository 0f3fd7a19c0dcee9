#pragma once

// Manufactured-solution problem definitions on the unit square: a Dirichlet
// -Laplace example and a Neumann -Laplace+I example, both with box control
// bounds and a known optimal control r. The target z is the closed-form
// trigonometric term (loaded with the degree-7 rule, then represented by its
// L2 projection onto the P1 space) plus the same-mesh FE solve S_h r.

#include <functional>
#include <numbers>
#include <string>

#include "vdopt/control_space.hpp"

namespace vdopt {

struct ProblemSpec {
    std::string name;
    Real alpha = 1.0;
    std::shared_ptr<const DiscreteElliptic> fem;
    BoundsPair bounds;
    FeFunction target_z;    // discrete representation of z (L2 projection)
    Vector load_z;          // <z, phi_i> = M * target_z
    FeFunction adjoint_source;  // S_h^* z, used in every Newton right-hand side
    ScalarField exact_control;  // optional
    ScalarField exact_adjoint;  // optional
    std::function<ProblemSpec(MeshPtr)> rebuild;  // same data on another mesh

    const MeshPtr& mesh() const { return fem->mesh(); }
    OperatorKind kind() const { return fem->kind(); }

    /// Same problem with a replaced target (caches recomputed).
    ProblemSpec with_target(FeFunction z) const {
        ProblemSpec out = *this;
        out.target_z = std::move(z);
        out.load_z = fem->mass() * out.target_z.coeffs;
        out.adjoint_source = fem->solve(out.load_z);
        return out;
    }
};

inline FeFunction state_of(const ProblemSpec& pb, const VariationalControl& u) {
    if (u.mesh().get() != pb.mesh().get())
        throw std::invalid_argument("state_of: control mesh differs from state mesh");
    return pb.fem->solve(u.load_vector());
}

/// p_h = S_h^*(y_h - z).
inline FeFunction adjoint_of_state(const ProblemSpec& pb, const FeFunction& y) {
    return pb.fem->solve(pb.fem->adjoint_load(y.coeffs, pb.load_z));
}

inline FeFunction adjoint_of(const ProblemSpec& pb, const VariationalControl& u) {
    return adjoint_of_state(pb, state_of(pb, u));
}

inline FeFunction adjoint_of(const ProblemSpec& pb, const FeFunction& u) {
    return adjoint_of_state(pb, pb.fem->apply_Sh(u));
}

/// Reduced cost J_h(u) = 1/2 ||S_h u - z||^2 + alpha/2 ||u||^2 for FE controls.
inline Real reduced_cost(const ProblemSpec& pb, const FeFunction& u) {
    const FeFunction y = pb.fem->apply_Sh(u);
    const Vector d = y.coeffs - pb.target_z.coeffs;
    return 0.5 * d.dot(pb.fem->mass() * d) + 0.5 * pb.alpha * u.coeffs.dot(pb.fem->mass() * u.coeffs);
}

/// L2 gradient of the reduced cost at an FE control: alpha*u + p_h(u).
inline FeFunction cost_gradient(const ProblemSpec& pb, const FeFunction& u) {
    const FeFunction p = adjoint_of(pb, u);
    return {pb.mesh(), pb.alpha * u.coeffs + p.coeffs};
}

namespace detail {

inline void require_unit_square(const TriMesh& mesh) {
    Real xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& v : mesh.vertices) {
        xmin = std::min(xmin, v.x);
        xmax = std::max(xmax, v.x);
        ymin = std::min(ymin, v.y);
        ymax = std::max(ymax, v.y);
    }
    const bool box = std::abs(xmin) < 1e-12 && std::abs(ymin) < 1e-12 &&
                     std::abs(xmax - 1.0) < 1e-12 && std::abs(ymax - 1.0) < 1e-12;
    if (!box || std::abs(mesh.total_area() - 1.0) > 1e-10)
        throw std::invalid_argument("manufactured examples require a unit-square mesh");
}

/// Assembles z = trig + S_h r and the derived caches.
inline ProblemSpec make_example(const std::string& name, OperatorKind kind, Real alpha,
                                const MeshPtr& mesh, const ScalarField& trig,
                                const ScalarField& r, const ScalarField& exact_adjoint,
                                Real bound_lo, Real bound_hi,
                                std::function<ProblemSpec(MeshPtr)> rebuild) {
    require_unit_square(*mesh);
    ProblemSpec pb;
    pb.name = name;
    pb.alpha = alpha;
    pb.fem = std::make_shared<DiscreteElliptic>(mesh, kind);
    pb.bounds = constant_bounds(mesh, bound_lo, bound_hi);
    pb.exact_control = r;
    pb.exact_adjoint = exact_adjoint;
    pb.rebuild = std::move(rebuild);

    const FeFunction y_r = pb.fem->apply_Sh(r);
    pb.load_z = assemble_load(*mesh, trig) + pb.fem->mass() * y_r.coeffs;
    const SparseChol mass_chol(pb.fem->mass());
    pb.target_z = FeFunction{mesh, mass_chol.solve(pb.load_z)};
    pb.adjoint_source = pb.fem->solve(pb.load_z);
    return pb;
}

}  // namespace detail

/// Dirichlet example: -Laplace y = u, y|bdry = 0, bounds [0.3, 1],
/// z = 4 pi^2 alpha sin(pi x) sin(pi y) + S r with
/// r = min(1, max(0.3, 2 sin(pi x) sin(pi y))); the optimal control is r and
/// the optimal adjoint is -2 alpha sin(pi x) sin(pi y). The sign of the
/// trigonometric term is the one validated by verify_manufactured.
inline ProblemSpec make_dirichlet_example(Real alpha, const MeshPtr& mesh) {
    constexpr Real pi = std::numbers::pi_v<Real>;
    auto r = [](Real x, Real y) {
        return std::clamp(2.0 * std::sin(pi * x) * std::sin(pi * y), Real(0.3), Real(1));
    };
    auto trig = [alpha](Real x, Real y) {
        return 4.0 * pi * pi * alpha * std::sin(pi * x) * std::sin(pi * y);
    };
    auto padj = [alpha](Real x, Real y) {
        return -2.0 * alpha * std::sin(pi * x) * std::sin(pi * y);
    };
    auto rebuild = [alpha](MeshPtr m) { return make_dirichlet_example(alpha, m); };
    return detail::make_example("dirichlet", OperatorKind::DirichletLaplace, alpha, mesh, trig,
                                r, padj, 0.3, 1.0, rebuild);
}

/// Neumann example: (-Laplace + I) y = u, dy/dn = 0, bounds [-1, 1],
/// z = 2 (2 pi^2 + 1) alpha cos(pi x) cos(pi y) + S r with
/// r = min(1, max(-1, 2 cos(pi x) cos(pi y))); optimal control r, optimal
/// adjoint -2 alpha cos(pi x) cos(pi y).
inline ProblemSpec make_neumann_example(Real alpha, const MeshPtr& mesh) {
    constexpr Real pi = std::numbers::pi_v<Real>;
    auto r = [](Real x, Real y) {
        return std::clamp(2.0 * std::cos(pi * x) * std::cos(pi * y), Real(-1), Real(1));
    };
    auto trig = [alpha](Real x, Real y) {
        return 2.0 * (2.0 * pi * pi + 1.0) * alpha * std::cos(pi * x) * std::cos(pi * y);
    };
    auto padj = [alpha](Real x, Real y) {
        return -2.0 * alpha * std::cos(pi * x) * std::cos(pi * y);
    };
    auto rebuild = [alpha](MeshPtr m) { return make_neumann_example(alpha, m); };
    return detail::make_example("neumann", OperatorKind::NeumannHelmholtz, alpha, mesh, trig, r,
                                padj, -1.0, 1.0, rebuild);
}

inline ProblemSpec make_example_by_name(const std::string& name, Real alpha,
                                        const MeshPtr& mesh) {
    if (name == "dirichlet") return make_dirichlet_example(alpha, mesh);
    if (name == "neumann") return make_neumann_example(alpha, mesh);
    throw std::invalid_argument("unknown example name: " + name);
}

}  // namespace vdopt
