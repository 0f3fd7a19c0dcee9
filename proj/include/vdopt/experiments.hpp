#pragma once

// Convergence studies and globalization comparisons: runs a solver over a
// mesh ladder, computes experimental orders of convergence against the exact
// control, and emits the resulting tables as CSV or pretty text.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "vdopt/postprocess.hpp"

namespace vdopt {

enum class SolverKind { Undamped, Damped, FixedPoint, Postprocess };

inline const char* to_string(SolverKind s) {
    switch (s) {
        case SolverKind::Undamped: return "undamped";
        case SolverKind::Damped: return "damped";
        case SolverKind::FixedPoint: return "fixedpoint";
        case SolverKind::Postprocess: return "postprocess";
    }
    return "?";
}

inline SolverKind solver_from_string(const std::string& s) {
    if (s == "undamped") return SolverKind::Undamped;
    if (s == "damped") return SolverKind::Damped;
    if (s == "fixedpoint") return SolverKind::FixedPoint;
    if (s == "postprocess") return SolverKind::Postprocess;
    throw std::invalid_argument("unknown solver: " + s);
}

struct ExperimentConfig {
    std::string example = "dirichlet";
    std::vector<Real> alphas = {1e-3};
    int level_min = 3;  // level k has h = sqrt(2)/2^(k+1)
    int level_max = 7;
    SolverKind solver = SolverKind::Undamped;
    Real v0 = std::numeric_limits<Real>::quiet_NaN();  // NaN: example default
    SsnConfig ssn;
    Real fd_tol = 1e-8;  // fully discrete stage of postprocess
    std::string out_dir = ".";
    std::string format = "csv";
    int dump_control = 0;  // sample grid resolution, 0 = off
    bool dump_cuts = false;

    Real initial_guess(const std::string& name) const {
        if (!std::isnan(v0)) return v0;
        return name == "neumann" ? -1.0 : 0.3;
    }
};

/// EOC_i = (ln ERR(h_{i-1}) - ln ERR(h_i)) / (ln h_{i-1} - ln h_i).
inline Real eoc(Real err_prev, Real err_cur, Real h_prev, Real h_cur) {
    if (!(err_prev > 0.0) || !(err_cur > 0.0))
        return std::numeric_limits<Real>::quiet_NaN();
    return (std::log(err_prev) - std::log(err_cur)) / (std::log(h_prev) - std::log(h_cur));
}

struct EocRow {
    Real h = 0.0;
    Real err_l2 = 0.0;
    Real err_linf = 0.0;
    Real eoc_l2 = std::numeric_limits<Real>::quiet_NaN();
    Real eoc_linf = std::numeric_limits<Real>::quiet_NaN();
    int iterations = 0;
    Real quality = std::numeric_limits<Real>::quiet_NaN();
    bool ok = true;
};

struct EocTable {
    std::vector<EocRow> rows;
};

struct ConvergenceStudy {
    Real alpha = 0.0;
    EocTable table;
    std::vector<SolverReport> reports;  // one per level
};

/// Mesh ladder by repeated regular refinement of the coarse unit square.
inline std::vector<MeshPtr> mesh_ladder(int level_max) {
    std::vector<MeshPtr> meshes;
    meshes.push_back(std::make_shared<TriMesh>(unit_square_coarse()));
    for (int l = 1; l <= level_max; ++l)
        meshes.push_back(std::make_shared<TriMesh>(refine(*meshes.back())));
    return meshes;
}

/// Runs the configured solver over the mesh ladder for one alpha and
/// assembles the EOC table. A solver failure flags the row and the run
/// continues.
inline ConvergenceStudy run_convergence_study(const ExperimentConfig& cfg, Real alpha) {
    ConvergenceStudy study;
    study.alpha = alpha;
    const auto meshes = mesh_ladder(cfg.level_max);
    for (int lvl = cfg.level_min; lvl <= cfg.level_max; ++lvl) {
        EocRow row;
        row.h = mesh_stats(*meshes[lvl]).h_max;
        SolverReport rep;
        try {
            const ProblemSpec pb = make_example_by_name(cfg.example, alpha, meshes[lvl]);
            const FeFunction v0 =
                FeFunction::constant(pb.mesh(), cfg.initial_guess(cfg.example));
            VariationalControl u;
            switch (cfg.solver) {
                case SolverKind::Undamped:
                    std::tie(u, rep) = solve_undamped(pb, v0, cfg.ssn);
                    break;
                case SolverKind::Damped:
                    std::tie(u, rep) = solve_damped(pb, v0, cfg.ssn);
                    break;
                case SolverKind::FixedPoint:
                    std::tie(u, rep) = fixed_point_solve(pb, v0, cfg.ssn);
                    break;
                case SolverKind::Postprocess:
                    std::tie(u, rep) = postprocess_solve(pb, cfg.fd_tol, cfg.ssn);
                    break;
            }
            row.ok = rep.converged;
            row.iterations = rep.iterations;
            row.quality = rep.certificate;
            row.err_l2 = l2_error(u, pb.exact_control);
            row.err_linf = linf_error(u, pb.exact_control);
        } catch (const std::exception& e) {
            row.ok = false;
            rep.failure = e.what();
        }
        if (!study.table.rows.empty()) {
            const EocRow& prev = study.table.rows.back();
            row.eoc_l2 = eoc(prev.err_l2, row.err_l2, prev.h, row.h);
            row.eoc_linf = eoc(prev.err_linf, row.err_linf, prev.h, row.h);
        }
        study.table.rows.push_back(row);
        study.reports.push_back(std::move(rep));
    }
    return study;
}

struct PostprocMatrix {
    std::vector<Real> alphas;
    std::vector<Real> h;                     // one per EOC row
    std::vector<std::vector<Real>> eoc_l2;   // [row][alpha]
};

/// Table of L2 EOC values of the two-step post-processing scheme, rows over
/// the mesh ladder and columns over alphas. Diverged cells are NaN.
inline PostprocMatrix run_postproc_matrix(const ExperimentConfig& cfg) {
    PostprocMatrix out;
    out.alphas = cfg.alphas;
    const auto meshes = mesh_ladder(cfg.level_max);
    const Real nan = std::numeric_limits<Real>::quiet_NaN();
    std::vector<std::vector<Real>> errs;  // [level][alpha]
    for (int lvl = cfg.level_min; lvl <= cfg.level_max; ++lvl) {
        std::vector<Real> row;
        for (Real alpha : cfg.alphas) {
            try {
                const ProblemSpec pb = make_example_by_name(cfg.example, alpha, meshes[lvl]);
                auto [u, rep] = postprocess_solve(pb, cfg.fd_tol, cfg.ssn);
                row.push_back(l2_error(u, pb.exact_control));
            } catch (const std::exception&) {
                row.push_back(nan);
            }
        }
        errs.push_back(std::move(row));
    }
    for (int i = 1; i < static_cast<int>(errs.size()); ++i) {
        const Real h_prev = mesh_stats(*meshes[cfg.level_min + i - 1]).h_max;
        const Real h_cur = mesh_stats(*meshes[cfg.level_min + i]).h_max;
        out.h.push_back(h_cur);
        std::vector<Real> row;
        for (std::size_t j = 0; j < cfg.alphas.size(); ++j)
            row.push_back(eoc(errs[i - 1][j], errs[i][j], h_prev, h_cur));
        out.eoc_l2.push_back(std::move(row));
    }
    return out;
}

namespace detail {

inline std::string fmt_e(Real v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4e", static_cast<double>(v));
    return buf;
}

}  // namespace detail

/// CSV with columns exactly: h,err_l2,err_linf,eoc_l2,eoc_linf,iterations,quality.
inline void emit_csv(const EocTable& table, std::ostream& os) {
    os << "h,err_l2,err_linf,eoc_l2,eoc_linf,iterations,quality\n";
    for (const auto& r : table.rows)
        os << detail::fmt_e(r.h) << ',' << detail::fmt_e(r.err_l2) << ','
           << detail::fmt_e(r.err_linf) << ',' << detail::fmt_e(r.eoc_l2) << ','
           << detail::fmt_e(r.eoc_linf) << ',' << r.iterations << ','
           << detail::fmt_e(r.quality) << '\n';
}

/// Text table mirroring the usual convergence-table layout.
inline void emit_text(const EocTable& table, std::ostream& os) {
    os << "        h |       ERR |      ERR8 |  EOC | EOC8 | Its |   Quality\n";
    for (const auto& r : table.rows) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%9.6f | %9.4e | %9.4e | %4.2f | %4.2f | %3d | %9.2e%s\n",
                      (double)r.h, (double)r.err_l2, (double)r.err_linf, (double)r.eoc_l2,
                      (double)r.eoc_linf, r.iterations, (double)r.quality,
                      r.ok ? "" : "  [failed]");
        os << buf;
    }
}

inline void emit(const EocTable& table, const std::string& format, std::ostream& os) {
    if (format == "csv")
        emit_csv(table, os);
    else if (format == "text")
        emit_text(table, os);
    else
        throw std::invalid_argument("unknown format: " + format);
}

inline void emit_csv(const PostprocMatrix& m, std::ostream& os) {
    os << "h";
    for (Real a : m.alphas) os << ',' << detail::fmt_e(a);
    os << '\n';
    for (std::size_t i = 0; i < m.h.size(); ++i) {
        os << detail::fmt_e(m.h[i]);
        for (Real v : m.eoc_l2[i]) os << ',' << detail::fmt_e(v);
        os << '\n';
    }
}

inline void emit_text(const PostprocMatrix& m, std::ostream& os) {
    os << "        h";
    for (Real a : m.alphas) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), " | a=%-8.1e", (double)a);
        os << buf;
    }
    os << '\n';
    for (std::size_t i = 0; i < m.h.size(); ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%9.6f", (double)m.h[i]);
        os << buf;
        for (Real v : m.eoc_l2[i]) {
            std::snprintf(buf, sizeof(buf), " | %10.2f", (double)v);
            os << buf;
        }
        os << '\n';
    }
}

/// Parses a CSV produced by emit_csv (round-trip of the serialization).
inline EocTable parse_csv(std::istream& is) {
    EocTable table;
    std::string line;
    if (!std::getline(is, line)) return table;
    if (line != "h,err_l2,err_linf,eoc_l2,eoc_linf,iterations,quality")
        throw std::runtime_error("parse_csv: unexpected header: " + line);
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::istringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) fields.push_back(tok);
        if (fields.size() != 7) throw std::runtime_error("parse_csv: malformed row: " + line);
        EocRow r;
        r.h = std::strtold(fields[0].c_str(), nullptr);  // strtold accepts "nan"
        r.err_l2 = std::strtold(fields[1].c_str(), nullptr);
        r.err_linf = std::strtold(fields[2].c_str(), nullptr);
        r.eoc_l2 = std::strtold(fields[3].c_str(), nullptr);
        r.eoc_linf = std::strtold(fields[4].c_str(), nullptr);
        r.iterations = std::atoi(fields[5].c_str());
        r.quality = std::strtold(fields[6].c_str(), nullptr);
        table.rows.push_back(r);
    }
    return table;
}

/// Structured run log, one line per Newton step.
inline void write_run_log(const SolverReport& rep, std::ostream& os) {
    os << "iteration,residual,mf,lambda,cg_iterations,inactive_area\n";
    for (std::size_t k = 0; k < rep.residuals.size(); ++k)
        os << (k + 1) << ',' << detail::fmt_e(rep.residuals[k]) << ','
           << detail::fmt_e(k < rep.merit_values.size() ? rep.merit_values[k]
                                                        : std::numeric_limits<Real>::quiet_NaN())
           << ',' << detail::fmt_e(k < rep.lambdas.size() ? rep.lambdas[k] : 1.0) << ','
           << (k < rep.cg_iterations.size() ? rep.cg_iterations[k] : 0) << ','
           << detail::fmt_e(k < rep.inactive_areas.size() ? rep.inactive_areas[k] : 0.0) << '\n';
}

}  // namespace vdopt
