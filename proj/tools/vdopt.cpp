// Experiment driver: runs convergence studies and globalization comparisons
// over a ladder of uniformly refined unit-square meshes and emits EOC tables
// as CSV or text, plus per-run solver logs and optional plotting data.
//
// Usage:
//   vdopt [config.ini] [--example=dirichlet|neumann] [--alpha=1e-3[,1e-4,...]]
//         [--levels=3:7] [--solver=undamped|damped|fixedpoint|postprocess]
//         [--v0=<const>] [--tol=1e-11] [--out=DIR] [--format=csv|text]
//         [--dump-control=N] [--dump-cuts] [--dump-mesh]
//
// A config file holds the same keys as flat `key = value` lines; flags
// override it. With solver=postprocess and several alphas, a matrix of L2
// EOC values (rows h, columns alpha) is emitted instead of one table per
// alpha. Exit codes: 0 all runs converged, 2 solver failure, 3 config error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "vdopt/experiments.hpp"

namespace {

using namespace vdopt;

struct CliOptions {
    ExperimentConfig cfg;
    bool dump_mesh = false;
};

std::vector<Real> parse_alpha_list(const std::string& s) {
    std::vector<Real> out;
    std::istringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::strtold(tok.c_str(), nullptr));
    if (out.empty()) throw std::invalid_argument("empty alpha list");
    for (Real a : out)
        if (!(a > 0)) throw std::invalid_argument("alphas must be positive");
    return out;
}

void parse_levels(const std::string& s, ExperimentConfig& cfg) {
    const auto colon = s.find(':');
    if (colon == std::string::npos) {
        cfg.level_min = cfg.level_max = std::stoi(s);
    } else {
        cfg.level_min = std::stoi(s.substr(0, colon));
        cfg.level_max = std::stoi(s.substr(colon + 1));
    }
    if (cfg.level_min < 0 || cfg.level_max < cfg.level_min)
        throw std::invalid_argument("bad level range: " + s);
}

void apply_key(CliOptions& opt, const std::string& key, const std::string& value) {
    ExperimentConfig& cfg = opt.cfg;
    if (key == "example") {
        if (value != "dirichlet" && value != "neumann")
            throw std::invalid_argument("unknown example: " + value);
        cfg.example = value;
    } else if (key == "alpha") {
        cfg.alphas = parse_alpha_list(value);
    } else if (key == "levels") {
        parse_levels(value, cfg);
    } else if (key == "solver") {
        cfg.solver = solver_from_string(value);
    } else if (key == "v0") {
        cfg.v0 = std::strtold(value.c_str(), nullptr);
    } else if (key == "tol") {
        cfg.ssn.stop_tol = std::strtold(value.c_str(), nullptr);
    } else if (key == "max_newton") {
        cfg.ssn.max_newton = std::stoi(value);
    } else if (key == "cg_tol") {
        cfg.ssn.cg_rel_tol = std::strtold(value.c_str(), nullptr);
    } else if (key == "fd_tol") {
        cfg.fd_tol = std::strtold(value.c_str(), nullptr);
    } else if (key == "out") {
        cfg.out_dir = value;
    } else if (key == "format") {
        if (value != "csv" && value != "text")
            throw std::invalid_argument("format must be csv or text");
        cfg.format = value;
    } else if (key == "dump-control" || key == "dump_control") {
        cfg.dump_control = std::stoi(value);
    } else if (key == "dump-cuts" || key == "dump_cuts") {
        cfg.dump_cuts = (value == "" || value == "1" || value == "true");
    } else if (key == "dump-mesh" || key == "dump_mesh") {
        opt.dump_mesh = (value == "" || value == "1" || value == "true");
    } else {
        throw std::invalid_argument("unknown option: " + key);
    }
}

void load_config_file(CliOptions& opt, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        apply_key(opt, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

std::string alpha_tag(Real a) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", static_cast<double>(a));
    std::string s = buf;
    for (char& c : s)
        if (c == '-' || c == '+') c = 'm';
    return s;
}

int run(const CliOptions& opt) {
    const ExperimentConfig& cfg = opt.cfg;
    std::filesystem::create_directories(cfg.out_dir);
    const std::string stem =
        cfg.out_dir + "/" + cfg.example + "_" + to_string(cfg.solver);
    bool all_converged = true;

    if (opt.dump_mesh) {
        const auto meshes = mesh_ladder(cfg.level_max);
        std::ofstream vtk(stem + "_mesh.vtk");
        write_vtk(*meshes[cfg.level_max], vtk);
    }

    if (cfg.solver == SolverKind::Postprocess && cfg.alphas.size() > 1) {
        const PostprocMatrix m = run_postproc_matrix(cfg);
        const std::string path = stem + "_eoc_matrix." + (cfg.format == "csv" ? "csv" : "txt");
        std::ofstream out(path);
        if (cfg.format == "csv")
            emit_csv(m, out);
        else
            emit_text(m, out);
        std::cout << "wrote " << path << "\n";
        for (const auto& row : m.eoc_l2)
            for (Real v : row)
                if (std::isnan(static_cast<double>(v))) all_converged = false;
        return all_converged ? 0 : 2;
    }

    for (Real alpha : cfg.alphas) {
        const ConvergenceStudy study = run_convergence_study(cfg, alpha);
        const std::string tag = stem + "_alpha" + alpha_tag(alpha);
        {
            const std::string path = tag + (cfg.format == "csv" ? ".csv" : ".txt");
            std::ofstream out(path);
            emit(study.table, cfg.format, out);
            std::cout << "wrote " << path << "\n";
        }
        for (std::size_t k = 0; k < study.reports.size(); ++k) {
            std::ofstream log(tag + "_level" + std::to_string(cfg.level_min + (int)k) +
                              "_runlog.csv");
            write_run_log(study.reports[k], log);
        }
        for (const auto& row : study.table.rows) all_converged &= row.ok;

        if (cfg.dump_control > 0 || cfg.dump_cuts) {
            // re-solve on the finest level to export plotting data
            const auto meshes = mesh_ladder(cfg.level_max);
            const ProblemSpec pb = make_example_by_name(cfg.example, alpha, meshes[cfg.level_max]);
            const FeFunction v0 = FeFunction::constant(pb.mesh(), cfg.initial_guess(cfg.example));
            auto [u, rep] = (cfg.solver == SolverKind::Damped) ? solve_damped(pb, v0, cfg.ssn)
                                                               : solve_undamped(pb, v0, cfg.ssn);
            if (cfg.dump_control > 0) {
                std::ofstream out(tag + "_control.csv");
                dump_control_samples(u, cfg.dump_control, out);
            }
            if (cfg.dump_cuts) {
                std::ofstream out(tag + "_cuts.csv");
                dump_cut_segments(*u.partition, out);
            }
        }
    }
    return all_converged ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CliOptions opt;
    try {
        for (int i = 1; i < argc; ++i) {
            std::string arg = argv[i];
            if (arg.rfind("--", 0) == 0) {
                const auto eq = arg.find('=');
                const std::string key = arg.substr(2, eq == std::string::npos ? arg.npos : eq - 2);
                const std::string value = eq == std::string::npos ? "" : arg.substr(eq + 1);
                apply_key(opt, key, value);
            } else {
                load_config_file(opt, arg);
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 3;
    }
    try {
        return run(opt);
    } catch (const std::exception& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return 2;
    }
}
