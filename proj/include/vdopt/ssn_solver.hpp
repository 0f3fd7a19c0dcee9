#pragma once

// Semismooth Newton solver for the projection equation
//   G_h(v) = v - P_[a,b](-(1/alpha) p_h(y_h(v))) = 0:
// undamped iteration, reduced inactive-set CG solve, adjoint-space damped
// globalization with Armijo line search, fixed-point baseline, and the
// a posteriori certificate ||v - u_h|| <= ||zeta||/alpha.

#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>

#include "vdopt/problems.hpp"

namespace vdopt {

struct SsnConfig {
    Real stop_tol = 1e-11;     // on zeta/alpha at the projected candidate
    int max_newton = 50;
    Real cg_rel_tol = 1e-12;
    int cg_max = 0;              // 0 means 10 * n
    Real armijo_sigma = 1e-4;
    Real armijo_beta = 0.5;
    Real lambda_min = 9.5367431640625e-07;  // 2^-20
    int fixed_point_max = 100000;
};

struct SolverReport {
    bool converged = false;
    int iterations = 0;
    Real certificate = std::numeric_limits<Real>::quiet_NaN();  // final zeta/alpha
    std::vector<Real> residuals;     // ||G_h|| (undamped/fixed-point) or sqrt(MF) (damped)
    std::vector<Real> certificates;  // zeta/alpha per iteration
    std::vector<Real> merit_values;  // MF at the accepted iterate
    std::vector<Real> lambdas;       // damping factors used
    std::vector<int> cg_iterations;
    std::vector<Real> inactive_areas;
    std::vector<std::uint64_t> partition_hashes;
    bool contraction_warning = false;  // fixed point run with alpha <= ||S_h||^2
    std::string failure;
};

struct NewtonStepResult {
    VariationalControl v_plus;
    FeFunction p_plus;
    int cg_iters = 0;
};

namespace detail {

/// Preconditioned CG; inv_diag is the inverse of a diagonal preconditioner
/// (zero entries on pinned dofs keep all iterates in the pinned subspace).
/// Stops at ||b - K x|| <= rel_tol * ||b - K x0||: with warm starts across
/// Newton steps this acts as iterated defect correction and drives the inner
/// residual towards the floating-point floor. A stagnation exit fires once
/// the residual stops improving while already below rel_tol * ||b||.
template <typename Apply>
inline int conjugate_gradient(Apply&& apply, const Vector& b, Vector& x, const Vector& inv_diag,
                              Real rel_tol, int max_iter) {
    const Real bnorm = b.norm();
    if (bnorm == 0.0) {
        x.setZero();
        return 0;
    }
    Vector r = b - apply(x);
    Vector z = inv_diag.cwiseProduct(r);
    Vector p = z;
    Real rz = r.dot(z);
    Real rnorm = r.norm();
    const Real target = rel_tol * std::min(rnorm, bnorm);
    if (rnorm <= target) return 0;
    Real best = rnorm;
    int since_best = 0;
    for (int it = 1; it <= max_iter; ++it) {
        const Vector Ap = apply(p);
        const Real pAp = p.dot(Ap);
        if (!(pAp > 0.0)) throw std::runtime_error("cg: operator not positive definite");
        const Real step = rz / pAp;
        x += step * p;
        r -= step * Ap;
        if (it % 100 == 0) r = b - apply(x);  // residual replacement: the
        // recurrence drifts from the true residual at the eps*cond floor
        rnorm = r.norm();
        if (rnorm <= target) return it;
        if (rnorm < 0.999 * best) {
            best = rnorm;
            since_best = 0;
        } else if (++since_best >= 60 && rnorm <= rel_tol * bnorm) {
            return it;  // floating-point floor, nominal tolerance already met
        }
        z = inv_diag.cwiseProduct(r);
        const Real rz_new = r.dot(z);
        p = z + (rz_new / rz) * p;
        rz = rz_new;
    }
    std::ostringstream msg;
    msg << "cg: no convergence within " << max_iter << " iterations, residual "
        << rnorm / bnorm;
    throw std::runtime_error(msg.str());
}

}  // namespace detail

/// One full (undamped) Newton step computed exactly in Y_h^+: on the active
/// sets v+ equals the clamped -p/alpha (i.e. the bounds), on the inactive set
/// the coefficient vector of the inactive part solves the reduced system
///   (M_chi + (1/alpha) M_chi A^-1 M A^-1 M_chi) c = rhs,
///   rhs = (1/alpha) M_chi (S*z - S*S[(1-chi) v+])
/// by CG on the pinned coefficient space. Also returns p+ = p_h(y_h(v+)).
inline NewtonStepResult newton_step(const FeFunction& p, const ProblemSpec& pb,
                                    const SsnConfig& cfg,
                                    const Vector* warm_start = nullptr) {
    const DiscreteElliptic& fem = *pb.fem;
    const int n = pb.mesh()->num_vertices();
    auto part = std::make_shared<ActivePartition>(
        classify(p, pb.bounds.a, pb.bounds.b, pb.alpha));

    const SparseMat M_chi = cut_mass_matrix(*part);
    Vector ell_act = region_load(*part, pb.bounds.a, RegionSelect::ActiveLower);
    ell_act += region_load(*part, pb.bounds.b, RegionSelect::ActiveUpper);

    // S_h^* S_h applied to the (known) active part of v+.
    const FeFunction y_act = fem.solve(ell_act);
    const FeFunction g_act = fem.solve(fem.mass() * y_act.coeffs);

    // Dofs with (numerically) no inactive support are pinned to zero, as are
    // eliminated boundary dofs: the inactive part lives in Y_h.
    const Real pin_tol = 1e-14 * part->h_max * part->h_max;
    std::vector<char> pinned(n, 0);
    for (int i = 0; i < n; ++i)
        pinned[i] = part->inactive_support[i] < pin_tol || fem.is_constrained(i);
    auto project_free = [&](Vector& v) {
        for (int i = 0; i < n; ++i)
            if (pinned[i]) v[i] = 0.0;
    };

    Vector rhs = (1.0 / pb.alpha) * (M_chi * (pb.adjoint_source.coeffs - g_act.coeffs));
    project_free(rhs);

    auto apply_K = [&](const Vector& c) {
        Vector mc = M_chi * c;
        const FeFunction y1 = fem.solve(mc);
        const FeFunction y2 = fem.solve(fem.mass() * y1.coeffs);
        Vector out = mc + (1.0 / pb.alpha) * (M_chi * y2.coeffs);
        project_free(out);
        return out;
    };

    // Jacobi preconditioner from diag(M_chi): removes the mass scaling of the
    // coefficient representation; the remaining spectrum is the function-space
    // one, [1, 1 + ||S_h||^2/alpha] up to a modest constant.
    Vector inv_diag = Vector::Zero(n);
    for (int i = 0; i < n; ++i)
        if (!pinned[i]) {
            const Real d = M_chi.coeff(i, i);
            inv_diag[i] = d > 0.0 ? 1.0 / d : 0.0;
        }

    Vector c = Vector::Zero(n);
    if (warm_start && warm_start->size() == n) {
        c = *warm_start;
        project_free(c);
    }
    const int cg_max = cfg.cg_max > 0 ? cfg.cg_max : 10 * n;
    const int cg_iters =
        detail::conjugate_gradient(apply_K, rhs, c, inv_diag, cfg.cg_rel_tol, cg_max);

    NewtonStepResult out{VariationalControl{part, FeFunction{pb.mesh(), c}}, FeFunction{}, cg_iters};
    const Vector load_v = M_chi * c + ell_act;
    const FeFunction y_plus = fem.solve(load_v);
    out.p_plus = fem.solve(fem.adjoint_load(y_plus.coeffs, pb.load_z));
    return out;
}

/// G_h residual at the control slaved to p: recomputes the adjoint of
/// v = P(-p/alpha) and returns ||v - P(-(1/alpha) p_h(v))|| together with v.
inline std::pair<Real, VariationalControl> residual(const FeFunction& p,
                                                      const ProblemSpec& pb) {
    VariationalControl v = project_control(p, pb.bounds, pb.alpha);
    const FeFunction p_tilde = adjoint_of(pb, v);
    const VariationalControl v_next = project_control(p_tilde, pb.bounds, pb.alpha);
    return {distance_l2(v, v_next), std::move(v)};
}

/// MF(p) = ||p - S*S P(-p/alpha) + S*z||^2, evaluated exactly as
/// ||p - p_h(P(-p/alpha))||^2 with a cut-exact load of the projection.
inline Real merit_function(const FeFunction& p, const ProblemSpec& pb) {
    const VariationalControl cand = project_control(p, pb.bounds, pb.alpha);
    const FeFunction p_cand = adjoint_of(pb, cand);
    const Vector d = p.coeffs - p_cand.coeffs;
    return d.dot(pb.fem->mass() * d);
}

namespace detail {

/// zeta/alpha with the adjoint p_v = p_h(v) already computed. The negative
/// and positive parts on the active regions are handled by one more exact
/// linear clip of each sub-polygon.
inline Real certificate_from(const VariationalControl& v, const FeFunction& p_v,
                               const ProblemSpec& pb) {
    const Real alpha = v.alpha();
    Real zeta_sq = 0.0;
    const auto& mesh = *v.mesh();
    v.partition->for_each_piece(RegionSelect::All, [&](int t, const CutPoly& poly) {
        const auto& tri = mesh.triangles[t];
        const auto uval = v.region_nodal(t, poly.label);
        std::array<Real, 3> s;
        for (int k = 0; k < 3; ++k) s[k] = alpha * uval[k] + p_v.coeffs[tri[k]];
        auto add = [&](const CutPoly& piece) {
            auto f = [&](const CutVertex& m) { return field_at(m, s); };
            zeta_sq += integrate_product(piece, f, f);
        };
        if (poly.label == Region::Inactive)
            add(poly);  // full value alpha*v + p on {a < v < b}
        else if (poly.label == Region::ActiveLower)
            add(clip(poly, s, true));  // negative part on {v = a}
        else
            add(clip(poly, s, false));  // positive part on {v = b}
    });
    return std::sqrt(std::max(Real(0), zeta_sq)) / alpha;
}

}  // namespace detail

/// A posteriori bound ||v - u_h|| <= zeta(v)/alpha for admissible v.
inline Real aposteriori_bound(const VariationalControl& v, const ProblemSpec& pb) {
    if (!is_admissible(v))
        throw std::invalid_argument("aposteriori_bound: control is not admissible");
    const FeFunction p_v = adjoint_of(pb, v);
    return detail::certificate_from(v, p_v, pb);
}

namespace detail {

struct IterationLog {
    VariationalControl candidate;
    FeFunction p_candidate;
    Real certificate;
    Real merit;
};

/// Candidate P(-p/alpha) with its adjoint, certificate and merit value.
inline IterationLog inspect_adjoint(const FeFunction& p, const ProblemSpec& pb) {
    IterationLog log{project_control(p, pb.bounds, pb.alpha), FeFunction{}, 0.0, 0.0};
    log.p_candidate = adjoint_of(pb, log.candidate);
    log.certificate = certificate_from(log.candidate, log.p_candidate, pb);
    const Vector d = p.coeffs - log.p_candidate.coeffs;
    log.merit = d.dot(pb.fem->mass() * d);
    return log;
}

/// Certificate at the full Newton step itself, usable once v+ is admissible
/// as a function (its nodal values may exceed the bounds on the active side
/// of a cut without the represented function doing so). The recomputed
/// adjoint of v+ cancels p+ down to the inner-solve residual, so this
/// certificate avoids the -p/alpha division noise of the projected
/// candidate, which dominates for small alpha.
inline std::optional<IterationLog> inspect_full_step(const NewtonStepResult& step,
                                                     const ProblemSpec& pb) {
    if (!is_admissible(step.v_plus)) return std::nullopt;
    IterationLog log{step.v_plus, FeFunction{}, 0.0, 0.0};
    log.p_candidate = adjoint_of(pb, log.candidate);
    log.certificate = certificate_from(log.candidate, log.p_candidate, pb);
    const Vector d = step.p_plus.coeffs - log.p_candidate.coeffs;
    log.merit = d.dot(pb.fem->mass() * d);
    return log;
}

/// Inspection of the accepted iterate: the projected candidate P(-p/alpha),
/// improved by the full-step certificate when that one is admissible and
/// certifies tighter.
inline IterationLog inspect_accepted(const FeFunction& p, const NewtonStepResult& step,
                                     bool full_step_valid, const ProblemSpec& pb,
                                     const SsnConfig& cfg) {
    IterationLog log = inspect_adjoint(p, pb);
    if (full_step_valid && log.certificate > cfg.stop_tol &&
        log.certificate <= 1e4 * cfg.stop_tol) {
        if (auto full = inspect_full_step(step, pb); full && full->certificate < log.certificate)
            return *full;
    }
    return log;
}

}  // namespace detail

/// Undamped semismooth Newton iteration (equivalent to the primal-dual
/// active set strategy). The iterate is the adjoint p; controls are
/// reconstructed from it on demand. Stops when zeta/alpha at the projected
/// candidate drops below cfg.stop_tol.
inline std::pair<VariationalControl, SolverReport> solve_undamped(const ProblemSpec& pb,
                                                                  const FeFunction& v0,
                                                                  const SsnConfig& cfg = {}) {
    SolverReport rep;
    FeFunction p = adjoint_of(pb, v0);
    std::optional<Vector> warm;
    VariationalControl result = project_control(p, pb.bounds, pb.alpha);
    for (int it = 1; it <= cfg.max_newton; ++it) {
        NewtonStepResult step = newton_step(p, pb, cfg, warm ? &*warm : nullptr);
        p = step.p_plus;
        warm = step.v_plus.inactive_part.coeffs;

        const auto log = detail::inspect_accepted(p, step, true, pb, cfg);
        rep.iterations = it;
        rep.residuals.push_back(
            distance_l2(step.v_plus, project_control(p, pb.bounds, pb.alpha)));
        rep.certificates.push_back(log.certificate);
        rep.merit_values.push_back(log.merit);
        rep.lambdas.push_back(1.0);
        rep.cg_iterations.push_back(step.cg_iters);
        rep.inactive_areas.push_back(step.v_plus.partition->area_inactive);
        rep.partition_hashes.push_back(classification_hash(*step.v_plus.partition));
        result = log.candidate;
        rep.certificate = log.certificate;
        if (log.certificate <= cfg.stop_tol) {
            rep.converged = true;
            break;
        }
    }
    if (!rep.converged) rep.failure = "max_newton reached";
    return {std::move(result), std::move(rep)};
}

/// Damped Newton in adjoint space: the full step v+, p+ is computed as in the
/// undamped method, then the new iterate is the convex combination
/// p := lambda p+ + (1-lambda) p, with lambda chosen by Armijo backtracking
/// on the merit function MF.
inline std::pair<VariationalControl, SolverReport> solve_damped(const ProblemSpec& pb,
                                                                const FeFunction& v0,
                                                                const SsnConfig& cfg = {}) {
    SolverReport rep;
    FeFunction p = adjoint_of(pb, v0);
    Real mf = detail::inspect_adjoint(p, pb).merit;
    std::optional<Vector> warm;
    VariationalControl result = project_control(p, pb.bounds, pb.alpha);
    for (int it = 1; it <= cfg.max_newton; ++it) {
        NewtonStepResult step = newton_step(p, pb, cfg, warm ? &*warm : nullptr);
        warm = step.v_plus.inactive_part.coeffs;

        Real lambda = 1.0;
        bool accepted = false;
        FeFunction p_trial;
        detail::IterationLog log;
        while (lambda >= cfg.lambda_min) {
            p_trial = FeFunction{pb.mesh(), lambda * step.p_plus.coeffs + (1.0 - lambda) * p.coeffs};
            log = detail::inspect_adjoint(p_trial, pb);
            if (log.merit <= (1.0 - cfg.armijo_sigma * lambda) * mf) {
                accepted = true;
                break;
            }
            lambda *= cfg.armijo_beta;
        }
        if (!accepted) {
            rep.failure = "armijo: lambda underflow below lambda_min";
            rep.iterations = it;
            return {std::move(result), std::move(rep)};
        }
        p = p_trial;
        mf = log.merit;

        // Near convergence the projection -p/alpha floors the certificate at
        // the absolute adjoint noise over alpha; the full-step iterate (an
        // equally admissible control once it satisfies the bounds) evaluates
        // at the inner-solve residual. Take the better rigorous bound.
        Real cert = log.certificate;
        VariationalControl cand = log.candidate;
        if (lambda == 1.0 && cert > cfg.stop_tol && cert <= 1e4 * cfg.stop_tol) {
            if (auto full = detail::inspect_full_step(step, pb);
                full && full->certificate < cert) {
                cert = full->certificate;
                cand = full->candidate;
            }
        }

        rep.iterations = it;
        rep.residuals.push_back(std::sqrt(log.merit));
        rep.certificates.push_back(cert);
        rep.merit_values.push_back(log.merit);
        rep.lambdas.push_back(lambda);
        rep.cg_iterations.push_back(step.cg_iters);
        rep.inactive_areas.push_back(step.v_plus.partition->area_inactive);
        rep.partition_hashes.push_back(classification_hash(*step.v_plus.partition));
        result = cand;
        rep.certificate = cert;
        if (cert <= cfg.stop_tol) {
            rep.converged = true;
            break;
        }
    }
    if (!rep.converged && rep.failure.empty()) rep.failure = "max_newton reached";
    return {std::move(result), std::move(rep)};
}

/// Fixed-point iteration u <- P(-(1/alpha) S*(S u - z)); converges globally
/// for alpha > ||S_h||^2.
inline std::pair<VariationalControl, SolverReport> fixed_point_solve(const ProblemSpec& pb,
                                                                     const FeFunction& v0,
                                                                     const SsnConfig& cfg = {}) {
    SolverReport rep;
    if (pb.alpha <= pb.fem->operator_norm_sq()) rep.contraction_warning = true;

    FeFunction p = adjoint_of(pb, v0);
    VariationalControl u = project_control(p, pb.bounds, pb.alpha);
    for (int it = 1; it <= cfg.fixed_point_max; ++it) {
        const FeFunction p_next = adjoint_of(pb, u);
        VariationalControl u_next = project_control(p_next, pb.bounds, pb.alpha);
        const Real res = distance_l2(u, u_next);
        u = std::move(u_next);
        rep.iterations = it;
        rep.residuals.push_back(res);
        rep.lambdas.push_back(1.0);
        rep.cg_iterations.push_back(0);
        rep.inactive_areas.push_back(u.partition->area_inactive);
        rep.partition_hashes.push_back(classification_hash(*u.partition));
        if (res < cfg.stop_tol) {
            rep.converged = true;
            break;
        }
    }
    rep.certificate = aposteriori_bound(u, pb);
    rep.certificates.assign(rep.residuals.size(), std::numeric_limits<Real>::quiet_NaN());
    rep.certificates.back() = rep.certificate;
    rep.merit_values.assign(rep.residuals.size(), std::numeric_limits<Real>::quiet_NaN());
    if (!rep.converged) rep.failure = "fixed point: iteration cap exceeded";
    return {std::move(u), std::move(rep)};
}

struct ManufacturedReport {
    std::vector<Real> h;
    std::vector<Real> err;
};

/// Consistency oracle for the manufactured data: solves the problem family
/// on successively refined meshes and requires ||u_h - r|| to drop by at
/// least a factor 2 per refinement (the consistent construction gives ~4).
/// An inconsistent target (e.g. wrong trigonometric sign) makes the error
/// stagnate at an O(1) offset and raises a hard error.
inline ManufacturedReport verify_manufactured(const ProblemSpec& pb, int fine_levels) {
    if (!pb.exact_control)
        throw std::invalid_argument("verify_manufactured: problem has no exact control");
    if (!pb.rebuild) throw std::invalid_argument("verify_manufactured: problem has no rebuild");
    ManufacturedReport report;
    MeshPtr mesh = pb.mesh();
    for (int lvl = 0; lvl <= fine_levels; ++lvl) {
        const ProblemSpec pbl = (lvl == 0) ? pb : pb.rebuild(mesh);
        auto [u, rep] = solve_damped(pbl, pbl.bounds.a, SsnConfig{});
        if (!rep.converged)
            throw std::runtime_error("verify_manufactured: solver failed at level " +
                                     std::to_string(lvl));
        report.h.push_back(mesh_stats(*mesh).h_max);
        report.err.push_back(l2_error(u, pbl.exact_control));
        if (lvl > 0 && !(report.err[lvl] < 0.5 * report.err[lvl - 1]))
            throw std::runtime_error(
                "verify_manufactured: error does not decay under refinement; "
                "target z is inconsistent with the stated exact control");
        if (lvl < fine_levels) mesh = std::make_shared<TriMesh>(refine(*mesh));
    }
    return report;
}

}  // namespace vdopt
