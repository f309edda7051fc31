// Command-line front end for the BSVIE laboratory.
//
// Exit codes: 0 success, 2 usage error, 3 certificate rejected, 4 non-convergence.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bsvie/catalog.hpp"
#include "bsvie/constants.hpp"
#include "bsvie/convergence.hpp"
#include "bsvie/io.hpp"

namespace fs = std::filesystem;
using namespace bsvie;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 2;
constexpr int kRejected = 3;
constexpr int kNonConvergence = 4;

struct Common {
    int paths = 20000;
    int steps = 50;
    std::uint64_t seed = 20240607;
    int threads = 1;
    int export_paths = 10;
    std::string out;
};

struct SolveOpts {
    std::string type;
    std::string generator;
    double beta = 0.0;
    double tol = 1e-4;
    int max_picard = 50;
    int degree = 3;
    double ridge = 1e-8;
    int delta_steps = 0;
    bool warn_only = false;
    bool one_step = false;
    std::string spec;
    std::string config;
    std::vector<std::string> set;
};

class Clock {
public:
    void mark(const std::string& phase) {
        const auto now = std::chrono::steady_clock::now();
        phases_.emplace_back(phase, std::chrono::duration<double>(now - last_).count());
        last_ = now;
    }
    std::vector<std::pair<std::string, std::string>> info(int threads) const {
        std::vector<std::pair<std::string, std::string>> out;
        out.emplace_back("threads", std::to_string(threads));
        const auto wall = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        out.emplace_back("wall_clock_epoch", std::to_string(static_cast<long long>(wall)));
        for (const auto& [k, v] : phases_) out.emplace_back("seconds." + k, io::fmt(v));
        return out;
    }

private:
    std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
    std::vector<std::pair<std::string, double>> phases_;
};

// "<dir>/<stem>.csv" -> "<dir>/<stem><suffix>"
std::string sidecar(const std::string& out, const std::string& suffix) {
    fs::path p(out);
    return (p.parent_path() / (p.stem().string() + suffix)).string();
}

void ensure_parent(const std::string& out) {
    const fs::path parent = fs::path(out).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

io::Manifest base_manifest(const std::string& command, const Common& c) {
    io::Manifest m;
    m.set("command", command);
    m.set("version", BSVIE_VERSION);
    m.set("paths", c.paths);
    m.set("steps", c.steps);
    m.set("seed", static_cast<long long>(c.seed));
    m.set("export_paths", c.export_paths);
    return m;
}

void add_common(CLI::App* app, Common& c, const std::string& default_out) {
    c.out = default_out;
    app->add_option("--paths", c.paths, "Number of Monte-Carlo paths")->check(CLI::PositiveNumber);
    app->add_option("--steps", c.steps, "Number of time steps")->check(CLI::Range(2, 1 << 20));
    app->add_option("--seed", c.seed, "Random seed");
    app->add_option("--threads", c.threads, "Worker threads (results do not depend on it)")->check(CLI::Range(1, 256));
    app->add_option("--export-paths", c.export_paths, "Paths written to pathwise CSVs")->check(CLI::NonNegativeNumber);
    app->add_option("--out", c.out, "Output CSV path");
}

void add_solver(CLI::App* app, SolveOpts& s) {
    app->add_option("--beta", s.beta, "Initial weighted-norm parameter")->check(CLI::NonNegativeNumber);
    app->add_option("--tol", s.tol, "Relative Picard tolerance")->check(CLI::PositiveNumber);
    app->add_option("--max-picard", s.max_picard, "Maximum Picard sweeps")->check(CLI::PositiveNumber);
    app->add_option("--degree", s.degree, "Regression basis degree")->check(CLI::NonNegativeNumber);
    app->add_option("--ridge", s.ridge, "Ridge added to the normal equations")->check(CLI::NonNegativeNumber);
    app->add_option("--delta-steps", s.delta_steps, "Window length in steps (0 = automatic)")->check(CLI::NonNegativeNumber);
    app->add_flag("--warn-only", s.warn_only, "Continue when the certificate is rejected");
    app->add_flag("--one-step", s.one_step, "Chain generator contributions through one-step projections");
    app->add_option("--config", s.config, "Flat key = value file with scenario overrides");
    app->add_option("--set", s.set, "Inline scenario override key=value (repeatable)");
}

io::KeyValueConfig overrides_of(const SolveOpts& s) {
    io::KeyValueConfig kv;
    if (!s.config.empty()) kv.merge(io::KeyValueConfig::load(s.config));
    if (!s.spec.empty()) kv.merge(io::KeyValueConfig::load(s.spec));
    for (const auto& item : s.set) kv.merge(io::KeyValueConfig::from_inline(item));
    return kv;
}

SolverConfig solver_config(const SolveOpts& s, const Common& c) {
    SolverConfig cfg;
    cfg.beta = s.beta;
    cfg.tol = s.tol;
    cfg.max_picard = s.max_picard;
    cfg.basis.degree = s.degree;
    cfg.basis.ridge = s.ridge;
    cfg.delta_steps = s.delta_steps;
    cfg.strict = !s.warn_only;
    cfg.multi_step = !s.one_step;
    cfg.workers = c.threads;
    return cfg;
}

void echo_solver(io::Manifest& m, const SolverConfig& cfg, const io::KeyValueConfig& kv) {
    m.set("p", cfg.p);
    m.set("beta", cfg.beta);
    m.set("tol", cfg.tol);
    m.set("max_picard", cfg.max_picard);
    m.set("basis.degree", cfg.basis.degree);
    m.set("basis.ridge", cfg.basis.ridge);
    m.set("delta_steps", cfg.delta_steps);
    m.set("strict", cfg.strict ? "true" : "false");
    m.set("scheme", cfg.multi_step ? "multi-step" : "one-step");
    for (const auto& [k, v] : kv.values()) m.set("override." + k, v);
}

void write_solution_csv(const std::string& path, const std::string& hash, const BsvieSolution& sol, int export_paths) {
    io::CsvWriter csv(path, hash, {"field", "path", "i", "j", "component", "value"});
    const int P = std::min(export_paths, sol.Y.n_paths());
    const int n = sol.Y.grid().n_steps;
    for (int p = 0; p < P; ++p)
        for (int i = 0; i <= n; ++i) csv.row("Y", p, i, i, 0, sol.Y.at(p, i));
    if (!sol.has_field) return;
    for (int p = 0; p < P; ++p)
        for (int i = 0; i <= n; ++i)
            for (int j = 0; j < sol.Z.n_cols(); ++j)
                if (sol.Z.valid(i, j)) csv.row("Z", p, i, j, 0, sol.Z.at(p, i, j));
}

void write_residual_csv(const std::string& path, const std::string& hash, const BsvieSolution& sol) {
    io::CsvWriter csv(path, hash, {"node", "t", "residual_rms", "reconstruction_error"});
    for (const auto& r : sol.residual)
        csv.row(r.node, sol.Y.grid().node(r.node), r.rms,
                sol.reconstruction.empty() ? 0.0 : sol.reconstruction[r.node]);
}

void write_picard_csv(const std::string& path, const std::string& hash, const BsvieSolution& sol) {
    std::vector<std::string> cols{"iteration"};
    const std::size_t nb = sol.picard_deltas.empty() ? 0 : sol.picard_deltas.front().size();
    for (std::size_t b = 0; b < nb; ++b)
        cols.push_back("delta_beta_" + io::fmt(b < sol.beta_ladder.size() ? sol.beta_ladder[b] : 0.0));
    io::CsvWriter csv(path, hash, cols);
    for (std::size_t it = 0; it < sol.picard_deltas.size(); ++it) {
        std::string line = std::to_string(it + 1);
        for (double d : sol.picard_deltas[it]) line += "," + io::fmt(d);
        csv.row(line);
    }
}

void write_family_csv(const std::string& path, const std::string& hash, const FbsdeSolution& fam, int export_paths) {
    io::CsvWriter csv(path, hash, {"field", "path", "i", "j", "component", "value"});
    const int P = std::min(export_paths, fam.X.n_paths());
    const int n = fam.X.grid().n_steps;
    for (int p = 0; p < P; ++p)
        for (int i = 0; i <= n; ++i)
            for (int j = i; j <= n; ++j) {
                csv.row("X", p, i, j, 0, fam.X.at(p, i, j));
                csv.row("Y", p, i, j, 0, fam.Y.at(p, i, j));
                if (j < n) csv.row("Z", p, i, j, 0, fam.Z.at(p, i, j));
            }
}

std::vector<std::pair<std::string, std::string>> certificate_items(const WellPosednessCertificate& c) {
    return {{"certified", c.certified ? "true" : "false"},
            {"hypothesis", c.hypothesis},
            {"p", io::fmt(c.p)},
            {"K_p", io::fmt(c.K_p)},
            {"K_tilde", io::fmt(c.K_tilde)},
            {"bar_K", io::fmt(c.bar_K)},
            {"N_p", io::fmt(c.N_p)},
            {"alpha", io::fmt(c.alpha)},
            {"K_hat", io::fmt(c.K_hat)},
            {"K_p0", io::fmt(c.K_p0)},
            {"sup_int_Lz0_sq", io::fmt(c.sup_int_Lz0_sq)},
            {"sup_int_Lz1_sq", io::fmt(c.sup_int_Lz1_sq)},
            {"integral_3_3", io::fmt(c.integral_3_3)},
            {"integral_3_3_star", io::fmt(c.integral_3_3_star)},
            {"finite_3_3", c.finite_3_3 ? "true" : "false"},
            {"finite_3_3_star", c.finite_3_3_star ? "true" : "false"},
            {"k_condition", c.k_condition ? "true" : "false"},
            {"margin", io::fmt(c.margin)},
            {"reason", c.reason.empty() ? "-" : c.reason}};
}

// ---------------------------------------------------------------------------

int run_simulate(const Common& c, double T) {
    Clock clock;
    io::Manifest m = base_manifest("simulate", c);
    m.set("T", T);
    const auto ens = simulate_brownian(make_grid(T, c.steps), c.paths, c.seed, c.threads);
    clock.mark("simulate");
    ensure_parent(c.out);
    io::CsvWriter csv(c.out, m.hash(), {"path", "node", "t", "W"});
    for (int p = 0; p < std::min(c.export_paths, c.paths); ++p)
        for (int j = 0; j <= c.steps; ++j) csv.row(p, j, ens.grid().node(j), ens.W(p, j));
    double mean = 0.0, var = 0.0;
    const double* w = ens.W_node(c.steps);
    for (int p = 0; p < c.paths; ++p) mean += w[p] / c.paths;
    for (int p = 0; p < c.paths; ++p) var += (w[p] - mean) * (w[p] - mean) / c.paths;
    io::write_report(sidecar(c.out, "_report.txt"), m.hash(),
                     {{"mean_W_T", io::fmt(mean)}, {"var_W_T", io::fmt(var)}, {"T", io::fmt(T)}});
    clock.mark("write");
    io::write_manifest(sidecar(c.out, ".manifest"), m, clock.info(c.threads));
    std::cout << "W(T): mean " << mean << ", variance " << var << " (T = " << T << ")\n";
    return kOk;
}

int run_solve(const Common& c, const SolveOpts& s) {
    Clock clock;
    const io::KeyValueConfig kv = overrides_of(s);
    std::string gen = s.generator;
    if (gen.empty()) gen = kv.get("generator", "");
    if (gen.empty()) throw InvalidArgument("solve: --generator is required");
    const Scenario sc = make_scenario(gen, kv);
    const SolveType type = s.type.empty() ? default_solve_type(sc) : parse_solve_type(s.type);
    const SolverConfig cfg = solver_config(s, c);

    io::Manifest m = base_manifest("solve", c);
    m.set("generator", gen);
    m.set("type", s.type.empty() ? std::string("default") : s.type);
    m.set("T", sc.T);
    echo_solver(m, cfg, kv);
    const std::string hash = m.hash();

    const auto ens = simulate_brownian(make_grid(sc.T, c.steps), c.paths, c.seed, c.threads);
    clock.mark("simulate");
    const ScenarioRun run = solve_scenario(sc, type, ens, cfg);
    clock.mark("solve");
    const BsvieSolution& sol = run.solution;

    ensure_parent(c.out);
    write_solution_csv(c.out, hash, sol, c.export_paths);
    if (!sol.residual.empty()) write_residual_csv(sidecar(c.out, "_residual.csv"), hash, sol);
    write_picard_csv(sidecar(c.out, "_picard.csv"), hash, sol);
    if (run.fbsde) write_family_csv(sidecar(c.out, "_family.csv"), hash, run.fbsde->family, c.export_paths);

    std::vector<std::pair<std::string, std::string>> rep{
        {"generator", gen},
        {"converged", sol.converged ? "true" : "false"},
        {"iterations", std::to_string(sol.iterations)},
        {"beta_used", io::fmt(sol.beta_used())},
        {"residual_rms", io::fmt(sol.residual_rms())},
        {"tolerance", io::fmt(sol.tolerance)}};
    if (!sol.reconstruction.empty()) rep.emplace_back("reconstruction_error", io::fmt(sol.reconstruction_error));
    if (sol.certificate) rep.emplace_back("certificate_margin", io::fmt(sol.certificate->margin));
    if (sc.exact_Y) {
        const ExactErrors e = exact_errors(sc, sol, ens);
        rep.emplace_back("rmse_Y_exact", io::fmt(e.rmse_Y));
        rep.emplace_back("rmse_Z_exact", io::fmt(e.rmse_Z));
    }
    if (run.fbsde) {
        rep.emplace_back("terminal_gap", io::fmt(run.fbsde->terminal_gap));
        rep.emplace_back("certificate_margin", io::fmt(run.fbsde->margin));
        rep.emplace_back("xi_bz_T", io::fmt(run.fbsde->induced.xi_bz_T));
    }
    for (std::size_t k = 0; k < sol.log.size(); ++k) rep.emplace_back("log." + std::to_string(k), sol.log[k]);
    io::write_report(sidecar(c.out, "_report.txt"), hash, rep);
    clock.mark("write");
    io::write_manifest(sidecar(c.out, ".manifest"), m, clock.info(c.threads));

    std::cout << gen << ": " << (sol.converged ? "converged" : "NOT converged") << " after " << sol.iterations
              << " sweeps, residual RMS " << sol.residual_rms() << "\n";
    return sol.converged ? kOk : kNonConvergence;
}

LipschitzProfile profile_from(const io::KeyValueConfig& kv) {
    static const std::vector<std::string> known{"T", "p", "K_p", "eps", "l0", "ly0", "lz0", "lzh0", "ly1", "lz1", "lzh1"};
    for (const auto& [k, v] : kv.values())
        if (std::find(known.begin(), known.end(), k) == known.end())
            throw InvalidArgument("certify: unknown profile key '" + k + "'");
    LipschitzProfile pr = LipschitzProfile::constants(kv.number("T", 1.0), kv.number("ly0", 0.0), kv.number("lz0", 0.0),
                                                      kv.number("lzh0", 0.0), kv.number("ly1", 0.0),
                                                      kv.number("lz1", 0.0), kv.number("lzh1", 0.0), kv.number("p", 2.0));
    pr.K_p = kv.number("K_p", 1.0);
    pr.eps = kv.number("eps", 0.1);
    const double l0 = kv.number("l0", 0.0);
    pr.L0[0] = ProfileFunction::constant(l0);
    pr.L0[1] = ProfileFunction::constant(l0);
    return pr;
}

int run_certify(const std::string& config, const std::vector<std::string>& inline_profile, const std::string& out) {
    io::KeyValueConfig kv;
    if (!config.empty()) kv.merge(io::KeyValueConfig::load(config));
    for (const auto& item : inline_profile) kv.merge(io::KeyValueConfig::from_inline(item));
    const LipschitzProfile pr = profile_from(kv);
    io::Manifest m;
    m.set("command", "certify");
    m.set("version", BSVIE_VERSION);
    for (const auto& [k, v] : kv.values()) m.set("profile." + k, v);
    const auto cert = certify(pr);
    ensure_parent(out);
    io::write_report(out, m.hash(), certificate_items(cert));
    std::cout << (cert.certified ? "certified" : "rejected") << " (" << cert.hypothesis << "), margin " << cert.margin
              << "\n";
    return cert.certified ? kOk : kRejected;
}

int run_demo(const Common& c, const SolveOpts& s, const std::string& case_id) {
    Clock clock;
    const io::KeyValueConfig kv = overrides_of(s);
    std::string id = case_id == "1.1" ? "example-1.1" : case_id == "4.2" ? "example-4.2" : case_id;
    const Scenario sc = make_scenario(id, kv);
    const SolverConfig cfg = solver_config(s, c);
    io::Manifest m = base_manifest("demo-counterexample", c);
    m.set("case", id);
    m.set("T", sc.T);
    echo_solver(m, cfg, kv);
    const std::string hash = m.hash();
    const auto ens = simulate_brownian(make_grid(sc.T, c.steps), c.paths, c.seed, c.threads);
    clock.mark("simulate");
    const DemoResult d = demo_no_adapted_solution(id, ens, cfg, kv);
    clock.mark("solve");
    ensure_parent(c.out);
    {
        io::CsvWriter csv(c.out, hash, {"k", "s", "zstar_mean", "row_residual_rms"});
        for (int k = 0; k < c.steps; ++k)
            csv.row(k, ens.grid().node(k), d.report.zstar_mean[k], d.report.row_residual[k]);
    }
    io::write_report(sidecar(c.out, "_verdict.txt"), hash,
                     {{"case", id},
                      {"fitted_intercept", io::fmt(d.report.intercept)},
                      {"fitted_dZ_dt", io::fmt(d.report.slope_t)},
                      {"fitted_dZ_ds", io::fmt(d.report.slope_s)},
                      {"best_fit_residual", io::fmt(d.report.best_fit_residual)},
                      {"bsvie_residual", io::fmt(d.report.bsvie_residual)},
                      {"ladder_estimate", io::fmt(d.ladder_estimate)},
                      {"t_dependent", d.t_dependent ? "true" : "false"},
                      {"residual_gap", d.residual_gap ? "true" : "false"},
                      {"verdict", d.report.verdict}});
    clock.mark("write");
    io::write_manifest(sidecar(c.out, ".manifest"), m, clock.info(c.threads));
    std::cout << d.report.verdict << "\n";
    return kOk;
}

std::vector<Rung> parse_ladder(const std::string& text, int default_degree) {
    std::vector<Rung> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        Rung r;
        r.degree = default_degree;
        int a = 0, b = 0, d = default_degree;
        const int got = std::sscanf(item.c_str(), "%dx%dx%d", &a, &b, &d);
        if (got < 2) throw InvalidArgument("--ladder entries look like STEPSxPATHS[xDEGREE], got '" + item + "'");
        r.steps = a;
        r.paths = b;
        r.degree = got == 3 ? d : default_degree;
        out.push_back(r);
    }
    return out;
}

int run_convergence(const Common& c, const SolveOpts& s, const std::string& ladder_text, int replications) {
    Clock clock;
    const io::KeyValueConfig kv = overrides_of(s);
    if (s.generator.empty()) throw InvalidArgument("convergence: --generator is required");
    const auto ladder = parse_ladder(ladder_text, s.degree);
    const SolverConfig cfg = solver_config(s, c);
    io::Manifest m = base_manifest("convergence", c);
    m.set("generator", s.generator);
    m.set("ladder", ladder_text);
    m.set("replications", replications);
    echo_solver(m, cfg, kv);
    const std::string hash = m.hash();
    const ConvergenceTable t = convergence_study(s.generator, ladder, c.seed, cfg, kv, replications);
    clock.mark("study");
    ensure_parent(c.out);
    {
        io::CsvWriter csv(c.out, hash, {"steps", "paths", "degree", "error_Y", "error_Z", "iterations"});
        for (const auto& r : t.rows)
            csv.row(r.rung.steps, r.rung.paths, r.rung.degree, r.error_Y, r.error_Z, r.iterations);
    }
    io::write_report(sidecar(c.out, "_report.txt"), hash,
                     {{"scenario", t.scenario},
                      {"oracle", t.oracle},
                      {"axis", t.axis},
                      {"fitted", t.fitted ? "true" : "false"},
                      {"order", io::fmt(t.order)},
                      {"r_squared", io::fmt(t.r_squared)}});
    // Rung timings vary between runs, so they stay out of the CSV.
    auto info = clock.info(c.threads);
    for (std::size_t k = 0; k < t.rows.size(); ++k)
        info.emplace_back("rung" + std::to_string(k) + "_seconds", io::fmt(t.rows[k].seconds));
    io::write_manifest(sidecar(c.out, ".manifest"), m, info);
    std::cout << t.scenario << ": fitted order " << t.order << " against " << t.axis << " (" << t.oracle << ")\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Monte-Carlo laboratory for backward stochastic Volterra integral equations"};
    app.require_subcommand(1);
    app.set_version_flag("--version", BSVIE_VERSION);

    Common sim_c, solve_c, demo_c, conv_c;
    SolveOpts solve_s, demo_s, conv_s;
    double sim_T = 1.0;

    auto* sim = app.add_subcommand("simulate", "Simulate Brownian paths and export them");
    add_common(sim, sim_c, "out/ensemble.csv");
    sim->add_option("--T", sim_T, "Horizon")->check(CLI::PositiveNumber);

    auto* solve = app.add_subcommand("solve", "Solve a catalogued BSVIE");
    add_common(solve, solve_c, "out/solution.csv");
    add_solver(solve, solve_s);
    solve->add_option("--type", solve_s.type, "1 | 2 | pathdep | fbsde | stepping (default: the scenario's own)");
    solve->add_option("--generator", solve_s.generator, "Catalog id");
    solve->add_option("--spec", solve_s.spec, "Key = value file for FBSDE families (kappa, T, x0, xi)");

    std::string cert_config, cert_out = "out/certificate.txt";
    std::vector<std::string> cert_profile;
    auto* cert = app.add_subcommand("certify", "Evaluate the well-posedness constants of a Lipschitz profile");
    cert->add_option("--config", cert_config, "Profile file (keys T, p, K_p, eps, l0, ly0, lz0, lzh0, ly1, lz1, lzh1)");
    cert->add_option("--profile", cert_profile, "Inline profile entries key=value");
    cert->add_option("--out", cert_out, "Report path");

    std::string demo_case;
    auto* demo = app.add_subcommand("demo", "Demonstrations");
    demo->require_subcommand(1);
    auto* counter = demo->add_subcommand("counterexample", "Show that no t-independent Z solves the equation");
    add_common(counter, demo_c, "out/counterexample.csv");
    add_solver(counter, demo_s);
    counter->add_option("--case", demo_case, "1.1 or 4.2")->required()->check(CLI::IsMember({"1.1", "4.2"}));

    std::string ladder = "25x12500,50x25000,100x50000,200x100000";
    auto* conv = app.add_subcommand("convergence", "Resolution ladder against an oracle");
    add_common(conv, conv_c, "out/convergence.csv");
    add_solver(conv, conv_s);
    conv->add_option("--generator", conv_s.generator, "Catalog id");
    conv->add_option("--ladder", ladder, "Comma-separated STEPSxPATHS[xDEGREE] rungs");
    int replications = 1;
    conv->add_option("--replications", replications, "Independent repetitions averaged in mean square")
        ->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (*sim) return run_simulate(sim_c, sim_T);
        if (*solve) return run_solve(solve_c, solve_s);
        if (*cert) return run_certify(cert_config, cert_profile, cert_out);
        if (*counter) return run_demo(demo_c, demo_s, demo_case);
        if (*conv) return run_convergence(conv_c, conv_s, ladder, replications);
    } catch (const CertificateRejected& e) {
        std::cerr << "certificate rejected: " << e.what() << "\n";
        return kRejected;
    } catch (const InvalidArgument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const Refused& e) {
        std::cerr << "refused: " << e.what() << "\n";
        return kUsage;
    } catch (const NonConvergence& e) {
        std::cerr << "non-convergence: " << e.what() << "\n";
        return kNonConvergence;
    } catch (const SolverDivergence& e) {
        std::cerr << "non-convergence: " << e.what() << "\n";
        return kNonConvergence;
    } catch (const CertificationFailure& e) {
        std::cerr << "certification failure: " << e.what() << "\n";
        return kRejected;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kUsage;
}
