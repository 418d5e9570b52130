// blowup-lab <command> --config <path> [overrides]
//
// Exit status: 0 success, 1 invariant violation (a check or solve failed),
// 2 configuration error.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "blowup/kahler.hpp"
#include "blowup/solver.hpp"

using namespace blowup;
using nlohmann::json;

namespace {

constexpr const char* kSchema = "blowup-lab/csv/v1";
constexpr const char* kConventions =
    "h_jk = d_j d_kbar Phi; Delta = 4 h^jk d_j d_kbar; L = -1/4 Delta^2 - 4 <Ric, ddbar phi>; S(Fubini-Study, CP^2) = 24";

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::string command;
    GluingConfig gluing;
    std::vector<double> eps_list = {0.1, 0.07, 0.05, 0.035};
    int grid_nodes = 2048;
    int kernel_nodes = 1024;
    std::uint64_t seed = 1;
    std::string out_path;  // empty: stdout
    std::string format = "csv";

    void validate() const {
        if (eps_list.empty()) throw ConfigError("eps_list is empty");
        for (std::size_t i = 0; i < eps_list.size(); ++i) {
            if (!(eps_list[i] > 0.0 && eps_list[i] <= 0.2)) throw ConfigError("eps_list entries must lie in (0, 0.2]");
            if (i > 0 && !(eps_list[i] < eps_list[i - 1])) throw ConfigError("eps_list must be strictly decreasing");
        }
        if (grid_nodes < 512) throw ConfigError("grid_nodes must be >= 512");
        if (kernel_nodes < 512) throw ConfigError("kernel_nodes must be >= 512");
        if (format != "csv" && format != "json") throw ConfigError("format must be csv or json");
        for (double e : eps_list) {
            try {
                at(e).validate();
            } catch (const std::invalid_argument& ex) {
                throw ConfigError(ex.what());
            }
        }
    }

    GluingConfig at(double eps) const {
        GluingConfig g = gluing;
        g.eps = eps;
        g.grid.nodes = grid_nodes;
        return g;
    }

    json to_json() const {
        return {{"command", command},
                {"gluing",
                 {{"beta", gluing.beta},
                  {"delta", gluing.delta},
                  {"n", gluing.n},
                  {"cutoff",
                   {{"kind", gluing.cutoff.kind == CutoffKind::smooth_reference ? "smooth_reference" : "polynomial_spline"},
                    {"smoothness_order", gluing.cutoff.smoothness_order}}}}},
                {"eps_list", eps_list},
                {"grid_nodes", grid_nodes},
                {"kernel_nodes", kernel_nodes},
                {"seed", seed},
                {"format", format}};
    }
};

void read_config(const std::string& path, RunConfig& rc) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    json j;
    try {
        j = json::parse(in);
        if (j.contains("gluing")) {
            const json& g = j["gluing"];
            rc.gluing.eps = g.value("eps", rc.gluing.eps);
            rc.gluing.beta = g.value("beta", rc.gluing.beta);
            rc.gluing.delta = g.value("delta", rc.gluing.delta);
            rc.gluing.n = g.value("n", rc.gluing.n);
            if (g.contains("cutoff")) {
                const json& c = g["cutoff"];
                const std::string kind = c.value("kind", std::string("polynomial_spline"));
                if (kind == "smooth_reference")
                    rc.gluing.cutoff.kind = CutoffKind::smooth_reference;
                else if (kind == "polynomial_spline")
                    rc.gluing.cutoff.kind = CutoffKind::polynomial_spline;
                else
                    throw ConfigError("unknown cutoff kind " + kind);
                rc.gluing.cutoff.smoothness_order = c.value("smoothness_order", rc.gluing.cutoff.smoothness_order);
            }
        }
        if (j.contains("eps_list")) rc.eps_list = j["eps_list"].get<std::vector<double>>();
        rc.grid_nodes = j.value("grid_nodes", rc.grid_nodes);
        rc.kernel_nodes = j.value("kernel_nodes", rc.kernel_nodes);
        rc.seed = j.value("seed", rc.seed);
        rc.out_path = j.value("out_path", rc.out_path);
        rc.format = j.value("format", rc.format);
        if (j.contains("command") && j["command"].get<std::string>() != rc.command)
            throw ConfigError("config command '" + j["command"].get<std::string>() + "' does not match '" + rc.command + "'");
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
}

// ---------------------------------------------------------------------------

struct Base {
    RadialProfile profile = profile_library("fubini_study", 2);
    KernelBasis kernel;
    std::shared_ptr<const GammaData> gamma;

    explicit Base(const RunConfig& rc) {
        auto g = std::make_shared<Grid>(GridSpec{rc.kernel_nodes, 0.0}, 0.0, 1.0);
        kernel = kernel_basis(g, fubini_study_moment, 2);
        select_points(kernel, candidate_points(*g));
        gamma = std::make_shared<GammaData>(build_gamma(profile, kernel, 0.6, rc.gluing.cutoff));
    }
};

struct Problem {
    GluedFamily fam;
    FamilyFields ff;
    DiscreteOperator op;
};

Problem problem(const Base& b, const GluedFamily& fam) {
    Problem p{fam, FamilyFields::build(fam), {}};
    p.op = discretize_Ltilde(p.fam, p.ff, b.kernel, fam.config.delta);
    p.op.factor();
    return p;
}

// Per-eps work in a thread pool of one task per eps, results in input order.
template <class F>
auto per_eps(const RunConfig& rc, F&& f) {
    using R = decltype(f(0.0));
    std::vector<std::future<R>> jobs;
    for (double e : rc.eps_list) jobs.push_back(std::async(std::launch::async, f, e));
    std::vector<R> out;
    for (auto& j : jobs) out.push_back(j.get());
    return out;
}

std::string num(double v) {
    if (std::isnan(v)) return "nan";
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
    json extra;  // JSON-only payload

    std::string render(const RunConfig& rc) const {
        if (rc.format == "json") {
            json j = {{"schema", "blowup-lab/json/v1"}, {"conventions", kConventions}, {"config", rc.to_json()}};
            json rs = json::array();
            for (const auto& r : rows) {
                json o = json::object();
                for (std::size_t k = 0; k < columns.size(); ++k) o[columns[k]] = r[k];
                rs.push_back(o);
            }
            j["rows"] = rs;
            if (!extra.is_null()) j["details"] = extra;
            return j.dump(2) + "\n";
        }
        std::ostringstream os;
        os << "# schema: " << kSchema << "\n# conventions: " << kConventions << "\n# config: " << rc.to_json().dump()
           << "\n";
        for (std::size_t k = 0; k < columns.size(); ++k) os << (k ? "," : "") << columns[k];
        os << "\n";
        for (const auto& r : rows) {
            for (std::size_t k = 0; k < r.size(); ++k) os << (k ? "," : "") << r[k];
            os << "\n";
        }
        return os.str();
    }
};

struct Outcome {
    Table table;
    bool ok = true;
    std::vector<std::pair<std::string, std::string>> side_files;  // suffix, content
};

// ---------------------------------------------------------------------------

Outcome cmd_verify(const RunConfig&) {
    Outcome o;
    o.table.columns = {"check", "value", "tolerance", "pass"};
    auto row = [&](const std::string& name, double v, double tol) {
        const bool pass = v <= tol;
        o.ok = o.ok && pass;
        o.table.rows.push_back({name, num(v), num(tol), pass ? "true" : "false"});
    };
    const RadialProfile bs = profile_library("burns_simanca", 2);
    double flat = 0.0, lo = 1e300, hi = -1e300;
    for (double t = -12.0; t <= 12.0; t += 0.01) {
        flat = std::max(flat, std::abs(radial_scalar_jet(bs.jet(t), 2)[0]));
        const double s = radial_scalar_jet(fubini_study_jet(t), 2)[0];
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    row("burns_simanca_max_abs_S", flat, 1e-9);
    row("fubini_study_S_rel_spread", (hi - lo) / std::abs(hi), 1e-9);

    // L* = L on the cscK base, radial probes u = cos(k t) e^{-t^2/8}
    const RadialProfile fs = profile_library("fubini_study", 2);
    double adj = 0.0;
    for (int k = 1; k <= 10; ++k)
        for (double t = -6.0; t <= 6.0; t += 0.5) {
            const RadialField u = [k](double s) {
                const Jet x = Jet::variable(s);
                return cos(0.3 * k * x) * exp(-0.125 * x * x);
            };
            adj = std::max(adj, std::abs(radial_operator(fs, u, t, RadialOp::Lstar) - radial_operator(fs, u, t, RadialOp::L)));
        }
    row("fubini_study_max_abs_Lstar_minus_L", adj, 1e-9);

    IndicialModel m;
    double ind = 0.0;
    for (double v : m.solve(std::vector<double>(m.nodes + 2, 1.0))) ind = std::max(ind, std::abs(v + 4.0 / 3.0));
    row("indicial_solve_delta_-0.5", ind, 1e-8);
    return o;
}

Outcome cmd_cross_check(const RunConfig& rc) {
    Outcome o;
    o.table.columns = {"profile", "count", "max_rel_dev_S", "max_rel_dev_L", "max_rel_dev_Lstar", "max_rel_dev_Q",
                       "max_rel_dev", "passed"};
    for (const char* name : {"flat", "fubini_study", "burns_simanca"}) {
        const CrossCheckReport r = cross_check(profile_library(name, rc.gluing.n), 20, rc.seed);
        o.ok = o.ok && r.passed;
        o.table.rows.push_back({r.label, std::to_string(r.count), num(r.max_rel_dev_S), num(r.max_rel_dev_L),
                                num(r.max_rel_dev_Lstar), num(r.max_rel_dev_Q), num(r.max_rel_dev),
                                r.passed ? "true" : "false"});
    }
    return o;
}

Outcome cmd_gamma(const RunConfig& rc) {
    Outcome o;
    const Base b(rc);
    const GammaData& g = *b.gamma;
    o.table.columns = {"kernel_dim", "residual", "rel_residual", "theta_at_p", "g_coeffs"};
    std::string coeffs;
    for (std::size_t k = 0; k < g.g_coeffs.size(); ++k) coeffs += (k ? " " : "") + num(g.g_coeffs[k]);
    o.table.rows.push_back({std::to_string(g.kernel.dim()), num(g.residual), num(g.rel_residual), num(g.theta_at_p), coeffs});
    json samples = json::array();
    for (double tau : {0.02, 0.1, 0.3, 0.5, 0.7, 0.9, 0.98}) {
        const TauPoint p{tau, tau, 1.0 - tau};
        samples.push_back({{"tau", tau}, {"g", g.g_value(p)}, {"psi", g.psi_jet(p)[0]}});
    }
    o.table.extra = {{"samples", samples}};
    o.ok = g.residual <= 1e-6;
    return o;
}

Outcome cmd_sweep(const RunConfig& rc) {
    Outcome o;
    const Base b(rc);
    struct Row {
        double r_eps, wse, inv;
    };
    const auto rows = per_eps(rc, [&](double eps) {
        const GluingConfig cfg = rc.at(eps);
        const Problem p = problem(b, make_improved_profile(b.profile, cfg, b.gamma));
        return Row{cfg.r_eps(), weighted_scalar_error(p.ff, b.gamma.get(), cfg.delta),
                   estimate_inverse_norm(p.op, p.ff, 3, 20, rc.seed).value};
    });
    double fit_w = std::nan(""), fit_i = std::nan("");
    if (rows.size() >= 2) {
        std::vector<double> w, v;
        for (const auto& r : rows) {
            w.push_back(r.wse);
            v.push_back(r.inv);
        }
        fit_w = fit_decay(rc.eps_list, w).exponent;
        fit_i = fit_decay(rc.eps_list, v).exponent;
    }
    o.table.columns = {"eps", "r_eps", "weighted_scal_err", "fitted_exp", "inv_norm_est", "inv_norm_fit_slope"};
    for (std::size_t k = 0; k < rows.size(); ++k)
        o.table.rows.push_back({num(rc.eps_list[k]), num(rows[k].r_eps), num(rows[k].wse), num(fit_w), num(rows[k].inv),
                                num(fit_i)});
    return o;
}

Outcome cmd_solve(const RunConfig& rc) {
    Outcome o;
    const Base b(rc);
    const auto reps = per_eps(rc, [&](double eps) {
        const Problem p = problem(b, make_improved_profile(b.profile, rc.at(eps), b.gamma));
        PicardOptions opt;
        opt.throw_on_failure = false;
        return picard_solve(p.op, p.ff, p.fam, b.gamma.get(), opt);
    });
    o.table.columns = {"eps", "r_eps", "converged", "iterations", "phi_norm", "residual_sup", "residual_floor", "min_S",
                       "failure"};
    json details = json::array();
    for (std::size_t k = 0; k < reps.size(); ++k) {
        const SolveReport& r = reps[k];
        o.ok = o.ok && r.converged;
        std::string why = r.failure;
        for (char& c : why)
            if (c == ',') c = ';';
        o.table.rows.push_back({num(r.eps), num(r.r_eps), r.converged ? "true" : "false", std::to_string(r.iterations),
                                num(r.phi_norm), num(r.residual), num(r.residual_floor), num(r.min_S), why});
        details.push_back(r.to_json());
        std::ostringstream h;
        h << "# schema: " << kSchema << "\n# conventions: " << kConventions << "\n# eps: " << num(r.eps) << "\n"
          << r.history_csv();
        o.side_files.push_back({".history." + std::to_string(k) + ".csv", h.str()});
    }
    o.table.extra = details;
    return o;
}

void emit(const RunConfig& rc, const Outcome& o) {
    const std::string body = o.table.render(rc);
    if (rc.out_path.empty()) {
        std::cout << body;
        return;
    }
    auto write = [](const std::string& path, const std::string& s) {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + path);
        f << s;
    };
    write(rc.out_path, body);
    for (const auto& [suffix, s] : o.side_files) write(rc.out_path + suffix, s);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Numerical experiments for constant scalar curvature metrics on blowups"};
    app.require_subcommand(1);
    std::string config_path;
    std::vector<double> eps;
    double beta = std::nan(""), delta = std::nan("");
    int nodes = 0;
    long long seed = -1;
    std::string out, format;
    for (const char* name : {"verify", "sweep", "solve", "cross-check", "gamma"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "JSON run configuration");
        sub->add_option("--eps", eps, "replaces eps_list");
        sub->add_option("--beta", beta);
        sub->add_option("--delta", delta);
        sub->add_option("--nodes", nodes, "family grid nodes");
        sub->add_option("--seed", seed);
        sub->add_option("--out", out, "output path (stdout when empty)");
        sub->add_option("--format", format, "csv or json");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    RunConfig rc;
    rc.command = app.get_subcommands().front()->get_name();
    try {
        if (!config_path.empty()) read_config(config_path, rc);
        if (!eps.empty()) rc.eps_list = eps;
        if (!std::isnan(beta)) rc.gluing.beta = beta;
        if (!std::isnan(delta)) rc.gluing.delta = delta;
        if (nodes > 0) rc.grid_nodes = nodes;
        if (seed >= 0) rc.seed = static_cast<std::uint64_t>(seed);
        if (!out.empty()) rc.out_path = out;
        if (!format.empty()) rc.format = format;
        rc.validate();
    } catch (const ConfigError& e) {
        std::cerr << "blowup-lab: configuration error: " << e.what() << "\n";
        return 2;
    }

    try {
        Outcome o;
        if (rc.command == "verify")
            o = cmd_verify(rc);
        else if (rc.command == "cross-check")
            o = cmd_cross_check(rc);
        else if (rc.command == "gamma")
            o = cmd_gamma(rc);
        else if (rc.command == "sweep")
            o = cmd_sweep(rc);
        else
            o = cmd_solve(rc);
        emit(rc, o);
        if (!o.ok) std::cerr << "blowup-lab: " << rc.command << ": a check or solve did not pass\n";
        return o.ok ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "blowup-lab: " << rc.command << ": " << e.what() << "\n";
        return 1;
    }
}
