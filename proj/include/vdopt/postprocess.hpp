#pragma once

// Post-processing globalization: solve a fully discretized (element-wise
// constant) version of the problem to O(h) accuracy with a projected
// gradient method, then run exactly two variational Newton steps to recover
// O(h^2).

#include "vdopt/ssn_solver.hpp"

namespace vdopt {

/// Element-wise constant control; each value lies in the element-wise
/// admissible interval [max_T a_h, min_T b_h].
struct PiecewiseConstantControl {
    MeshPtr mesh;
    Vector values;  // one per element
};

/// Load vector of an element-wise constant control: <u, phi_i> =
/// sum_{T owning i} u_T |T| / 3.
inline Vector pwc_load(const TriMesh& mesh, const Vector& values) {
    Vector load = Vector::Zero(mesh.num_vertices());
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const Real w = values[t] * mesh.area(t) / 3.0;
        for (int k = 0; k < 3; ++k) load[mesh.triangles[t][k]] += w;
    }
    return load;
}

namespace detail {

struct PwcBox {
    Vector lo, hi;  // element-wise admissible interval
};

inline PwcBox pwc_box(const ProblemSpec& pb) {
    const TriMesh& mesh = *pb.mesh();
    PwcBox box{Vector(mesh.num_triangles()), Vector(mesh.num_triangles())};
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const auto& tri = mesh.triangles[t];
        Real lo = -1e300, hi = 1e300;
        for (int k = 0; k < 3; ++k) {
            lo = std::max(lo, pb.bounds.a.coeffs[tri[k]]);
            hi = std::min(hi, pb.bounds.b.coeffs[tri[k]]);
        }
        if (!(lo <= hi))
            throw std::runtime_error("pwc_box: empty element-wise admissible interval");
        box.lo[t] = lo;
        box.hi[t] = hi;
    }
    return box;
}

}  // namespace detail

/// L2 gradient of the fully discrete cost, projected onto element-wise
/// constants: g_T = alpha u_T + mean_T(p_h(u)).
inline Vector pwc_gradient(const ProblemSpec& pb, const Vector& u) {
    const TriMesh& mesh = *pb.mesh();
    const FeFunction y = pb.fem->solve(pwc_load(mesh, u));
    const FeFunction p = adjoint_of_state(pb, y);
    Vector g(mesh.num_triangles());
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const auto& tri = mesh.triangles[t];
        const Real mean_p =
            (p.coeffs[tri[0]] + p.coeffs[tri[1]] + p.coeffs[tri[2]]) / 3.0;
        g[t] = pb.alpha * u[t] + mean_p;
    }
    return g;
}

/// Minimizes the fully discrete cost over admissible element-wise constant
/// controls by projected gradient with Barzilai-Borwein steps, to a
/// projected-gradient L2 norm below tol.
inline PiecewiseConstantControl solve_fully_discrete(const ProblemSpec& pb, Real tol = 1e-8,
                                                     int max_iter = 50000) {
    const TriMesh& mesh = *pb.mesh();
    const auto box = detail::pwc_box(pb);
    Vector areas(mesh.num_triangles());
    for (int t = 0; t < mesh.num_triangles(); ++t) areas[t] = mesh.area(t);

    auto clamp_box = [&](Vector v) {
        return v.cwiseMax(box.lo).cwiseMin(box.hi);
    };
    auto weighted_norm = [&](const Vector& v) { return std::sqrt(v.cwiseAbs2().dot(areas)); };

    // Safe step for the quadratic with Hessian alpha*I + S*S.
    const Real safe_step = 1.0 / (pb.alpha + pb.fem->operator_norm_sq());

    Vector u = clamp_box(0.5 * (box.lo + box.hi));
    Vector g = pwc_gradient(pb, u);
    Real step = safe_step;
    for (int it = 0; it < max_iter; ++it) {
        if (weighted_norm(u - clamp_box(u - g)) <= tol)
            return {pb.mesh(), u};
        const Vector u_new = clamp_box(u - step * g);
        const Vector g_new = pwc_gradient(pb, u_new);
        const Vector du = u_new - u;
        const Vector dg = g_new - g;
        const Real num = du.cwiseProduct(du).dot(areas);
        const Real den = du.cwiseProduct(dg).dot(areas);
        step = (den > 1e-300) ? std::clamp(num / den, 1e-3 * safe_step, 1e6 * safe_step)
                              : safe_step;
        u = u_new;
        g = g_new;
    }
    throw std::runtime_error("solve_fully_discrete: projected gradient iteration cap exceeded");
}

/// Two variational Newton steps seeded by the fully discrete solution; the
/// returned control is the second Newton iterate.
inline std::pair<VariationalControl, SolverReport> postprocess_solve(const ProblemSpec& pb,
                                                                     Real fd_tol = 1e-8,
                                                                     const SsnConfig& cfg = {}) {
    const PiecewiseConstantControl v_h = solve_fully_discrete(pb, fd_tol);
    const FeFunction y0 = pb.fem->solve(pwc_load(*pb.mesh(), v_h.values));
    const FeFunction p0 = adjoint_of_state(pb, y0);

    SolverReport rep;
    NewtonStepResult first = newton_step(p0, pb, cfg);
    const Vector warm = first.v_plus.inactive_part.coeffs;
    NewtonStepResult step = newton_step(first.p_plus, pb, cfg, &warm);
    const auto log = detail::inspect_adjoint(step.p_plus, pb);
    rep.iterations = 2;
    rep.converged = true;
    rep.residuals = {distance_l2(step.v_plus, log.candidate)};
    rep.certificates = {log.certificate};
    rep.certificate = log.certificate;
    rep.merit_values = {log.merit};
    rep.lambdas = {1.0, 1.0};
    rep.inactive_areas = {step.v_plus.partition->area_inactive};
    rep.partition_hashes = {classification_hash(*step.v_plus.partition)};
    return {step.v_plus, std::move(rep)};
}

}  // namespace vdopt
