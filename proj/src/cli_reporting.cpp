#include "bpre/cli_reporting.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "bpre/branching_engine.hpp"
#include "bpre/errors.hpp"
#include "bpre/oracle.hpp"

namespace bpre {

namespace {
constexpr const char* kVersion = "bpre 0.1.0";
} // namespace

std::string num17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

LogLevel log_threshold() {
    const char* e = std::getenv("BPRE_LOG");
    if (!e) return LogLevel::Warn;
    const std::string s(e);
    if (s == "error") return LogLevel::Error;
    if (s == "info") return LogLevel::Info;
    if (s == "debug") return LogLevel::Debug;
    return LogLevel::Warn;
}

void log_msg(LogLevel level, const std::string& msg) {
    static const LogLevel threshold = log_threshold();
    if (level > threshold) return;
    static const char* names[] = {"error", "warn", "info", "debug"};
    std::cerr << "[bpre:" << names[int(level)] << "] " << msg << "\n";
}

std::uint64_t parse_reps(const std::string& text) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(text, &pos);
        if (pos != text.size() || !(v >= 1.0) || v > 9.2e18 ||
            std::abs(v - std::round(v)) > 1e-6)
            throw UsageError("--reps: expected a positive integer, got '" + text + "'");
        return static_cast<std::uint64_t>(std::llround(v));
    } catch (const UsageError&) {
        throw;
    } catch (...) {
        throw UsageError("--reps: expected a positive integer, got '" + text + "'");
    }
}

nlohmann::ordered_json RunConfig::to_json() const {
    nlohmann::ordered_json j;
    j["subcommand"] = subcommand;
    j["env"] = env_path;
    j["seed"] = seed;
    j["workers"] = workers;
    j["out"] = out;
    j["format"] = format;
    j["reps"] = reps;
    j["n"] = n;
    j["n_list"] = n_list;
    j["method"] = method;
    j["theta"] = theta;
    j["theta_explicit"] = theta_explicit;
    j["x_grid"] = x_grid;
    j["K"] = K;
    j["xmax"] = xmax;
    j["side"] = side;
    j["tol"] = tol;
    j["r_exponent"] = r_exponent;
    j["suite"] = suite;
    j["quantity"] = quantity;
    j["stab_theorem1"] = stab_theorem1;
    j["stab_corollary"] = stab_corollary;
    j["stab_prop21"] = stab_prop21;
    return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig c;
    c.subcommand = j.at("subcommand").get<std::string>();
    c.env_path = j.at("env").get<std::string>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.seed_explicit = true;
    c.workers = j.at("workers").get<int>();
    c.out = j.at("out").get<std::string>();
    c.format = j.at("format").get<std::string>();
    c.reps = j.at("reps").get<std::uint64_t>();
    c.n = j.at("n").get<std::uint64_t>();
    c.n_list = j.at("n_list").get<std::vector<std::uint64_t>>();
    c.method = j.at("method").get<std::string>();
    c.theta = j.at("theta").get<double>();
    c.theta_explicit = j.value("theta_explicit", true);
    c.x_grid = j.at("x_grid").get<std::vector<double>>();
    c.K = j.at("K").get<unsigned>();
    c.xmax = j.at("xmax").get<double>();
    c.side = j.at("side").get<std::string>();
    c.tol = j.at("tol").get<double>();
    c.r_exponent = j.at("r_exponent").get<double>();
    c.suite = j.at("suite").get<std::string>();
    c.quantity = j.at("quantity").get<std::string>();
    c.stab_theorem1 = j.at("stab_theorem1").get<double>();
    c.stab_corollary = j.at("stab_corollary").get<double>();
    c.stab_prop21 = j.at("stab_prop21").get<double>();
    return c;
}

RunConfig parse_config(const std::vector<std::string>& args) {
    RunConfig cfg;
    std::string reps_text;
    std::string from_manifest;
    std::vector<std::string> n_list_text;

    CLI::App app{kVersion};
    app.require_subcommand(0, 1);
    app.add_option("--from-manifest", from_manifest,
                   "rerun the exact configuration recorded in a manifest");

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--env", cfg.env_path, "environment JSON file");
        sub->add_option("--seed", cfg.seed, "root seed")->each([&](const std::string&) {
            cfg.seed_explicit = true;
        });
        sub->add_option("--workers", cfg.workers, "worker threads");
        sub->add_option("--out", cfg.out, "output path or - for stdout");
        sub->add_option("--format", cfg.format, "json or csv")
            ->check(CLI::IsMember({"json", "csv"}));
        sub->add_option("--reps", reps_text, "Monte Carlo replicas (accepts 1e6)");
    };

    CLI::App* solve = app.add_subcommand("solve-beta", "solve the tilt parameter");
    add_common(solve);
    solve->add_option("--tol", cfg.tol, "residual tolerance");

    CLI::App* renew = app.add_subcommand("renewal", "estimate a renewal function table");
    add_common(renew);
    renew->add_option("--side", cfg.side, "u or v")->check(CLI::IsMember({"u", "v"}));
    renew->add_option("--xmax", cfg.xmax, "grid extent (absolute value)");
    renew->add_option("--K", cfg.K, "series truncation depth");

    CLI::App* surv = app.add_subcommand("estimate-survival", "annealed survival estimate");
    add_common(surv);
    surv->add_option("--n", cfg.n, "generation");
    surv->add_option("--method", cfg.method, "naive | quenched-cond | tilted-is")
        ->check(CLI::IsMember({"naive", "quenched-cond", "tilted-is"}));

    CLI::App* orac = app.add_subcommand("oracle", "exact small-instance value");
    add_common(orac);
    orac->add_option("--n", cfg.n, "generation");
    orac->add_option("--quantity", cfg.quantity, "survival | min-nonneg | tau-end")
        ->check(CLI::IsMember({"survival", "min-nonneg", "tau-end"}));

    CLI::App* verify = app.add_subcommand("verify", "run limit-theorem suites");
    add_common(verify);
    verify->add_option("--suite", cfg.suite,
                       "theorem1 | corollary | theorem2 | theorem3 | prop21 | all")
        ->check(CLI::IsMember({"theorem1", "corollary", "theorem2", "theorem3", "prop21",
                               "all"}));
    verify->add_option("--n-list", n_list_text, "n values (strictly increasing)");
    verify->add_option("--theta", cfg.theta, "exponent for prop21");
    verify->add_option("--K", cfg.K, "renewal truncation depth");
    verify->add_option("--r-exponent", cfg.r_exponent, "r_n = ceil(n^e) for theorem3");
    verify->add_option("--stab-theorem1", cfg.stab_theorem1, "stabilization threshold");
    verify->add_option("--stab-corollary", cfg.stab_corollary, "stabilization threshold");
    verify->add_option("--stab-prop21", cfg.stab_prop21, "stabilization threshold");

    CLI::App* clw = app.add_subcommand("conditional-law", "theorem 2 conditional tables");
    add_common(clw);
    clw->add_option("--n-list", n_list_text, "n values");
    clw->add_option("--theta", cfg.theta, "moment exponent (default beta/2)")
        ->each([&](const std::string&) { cfg.theta_explicit = true; });

    CLI::App* flat = app.add_subcommand("flatness", "theorem 3 flatness tables");
    add_common(flat);
    flat->add_option("--n-list", n_list_text, "n values");
    flat->add_option("--r-exponent", cfg.r_exponent, "r_n = ceil(n^e)");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        throw UsageError(e.what());
    }

    if (!from_manifest.empty()) {
        std::ifstream in(from_manifest);
        if (!in) throw UsageError("--from-manifest: cannot open " + from_manifest);
        nlohmann::json j;
        in >> j;
        return RunConfig::from_json(j.at("config"));
    }

    if (app.get_subcommands().empty()) throw UsageError("a subcommand is required");
    cfg.subcommand = app.get_subcommands().front()->get_name();

    if (!reps_text.empty()) cfg.reps = parse_reps(reps_text);
    if (cfg.env_path.empty()) throw UsageError("--env is required");
    if (cfg.reps < 1) throw UsageError("--reps must be >= 1");
    if (cfg.workers < 1) throw UsageError("--workers must be >= 1");

    if (!n_list_text.empty()) {
        cfg.n_list.clear();
        for (const auto& t : n_list_text) cfg.n_list.push_back(parse_reps(t));
        for (std::size_t i = 1; i < cfg.n_list.size(); ++i)
            if (cfg.n_list[i] <= cfg.n_list[i - 1])
                throw UsageError("--n-list must be strictly increasing");
    }
    if (cfg.n_list.empty()) cfg.n_list = {20, 40, 80, 160};
    if (cfg.x_grid.empty()) cfg.x_grid = {0.0, 2.0};

    if (!cfg.seed_explicit) {
        cfg.seed = static_cast<std::uint64_t>(
            std::chrono::steady_clock::now().time_since_epoch().count());
        cfg.seed_explicit = true; // recorded below either way
        log_msg(LogLevel::Info, "auto-generated seed " + std::to_string(cfg.seed));
    }

    const bool multi_table = cfg.subcommand == "verify" ||
                             cfg.subcommand == "conditional-law" ||
                             cfg.subcommand == "flatness";
    if (multi_table && cfg.out == "-" && cfg.format == "csv")
        throw UsageError(
            "--format csv with a multi-table suite requires a file --out, not '-'");
    return cfg;
}

nlohmann::ordered_json check_to_json(const Check& c) {
    nlohmann::ordered_json j;
    j["name"] = c.name;
    j["statistic"] = c.statistic;
    j["threshold"] = c.threshold;
    j["verdict"] = c.pass ? "pass" : "fail";
    j["details"] = c.details;
    return j;
}

nlohmann::ordered_json table_to_json(const ConvergenceTable& t) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& r : t.rows)
        rows.push_back({{"n", r.n}, {"statistic", r.stat}, {"stderr", r.se}});
    return {{"name", t.name}, {"rows", rows}};
}

std::string table_to_csv(const ConvergenceTable& t) {
    std::ostringstream os;
    os << "n,statistic,stderr\n";
    for (const auto& r : t.rows)
        os << num17(r.n) << ',' << num17(r.stat) << ',' << num17(r.se) << '\n';
    return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

std::string manifest_path_for(const std::string& out_path) {
    return out_path == "-" ? "manifest.json" : out_path + ".manifest.json";
}

nlohmann::ordered_json RunManifest::to_json() const {
    nlohmann::ordered_json j;
    j["version"] = version;
    j["config"] = config.to_json();
    j["rng"] = {{"algorithm", "mt19937_64; child seed = splitmix64(splitmix64(root ^ "
                              "fnv1a(tag)) ^ block)"},
                {"root_seed", config.seed},
                {"block_size", kBlockSize}};
    j["wall_ms"] = wall_ms; // volatile field
    nlohmann::ordered_json cs = nlohmann::ordered_json::array();
    for (const auto& c : checks) cs.push_back(check_to_json(c));
    j["checks"] = cs;
    return j;
}

namespace {

void emit_output(const RunConfig& cfg, const std::string& payload) {
    if (cfg.out == "-")
        std::cout << payload << std::endl;
    else
        write_text_file(cfg.out, payload + "\n");
}

std::string csv_companion_path(const std::string& out, const std::string& table) {
    std::string base = out;
    const auto dot = base.rfind(".json");
    if (dot != std::string::npos) base = base.substr(0, dot);
    return base + "_" + table + ".csv";
}

void emit_tables_csv(const RunConfig& cfg, const std::vector<const ConvergenceTable*>& tables) {
    if (cfg.out == "-") return;
    for (const auto* t : tables)
        write_text_file(csv_companion_path(cfg.out, t->name), table_to_csv(*t));
}

SurvivalMethod method_from_name(const std::string& m) {
    if (m == "naive") return SurvivalMethod::Naive;
    if (m == "quenched-cond") return SurvivalMethod::QuenchedCond;
    return SurvivalMethod::TiltedIS;
}

struct VerifyContext {
    EnvironmentLaw env;
    TiltSolution sol;
    EnvironmentLaw tilted;
    StableNorm stable;
};

VerifyContext make_context(const RunConfig& cfg) {
    EnvironmentLaw env = EnvironmentLaw::load(cfg.env_path);
    TiltSolution sol = solve_beta(env, cfg.tol);
    EnvironmentLaw tilted = tilted_env(env, sol);
    StableNorm stable = StableNorm::gaussian(tilted);
    return VerifyContext{std::move(env), std::move(sol), std::move(tilted), stable};
}

int run_verify(const RunConfig& cfg, std::vector<Check>& all_checks) {
    VerifyContext ctx = make_context(cfg);
    nlohmann::ordered_json report;
    report["version"] = kVersion;
    report["suite"] = cfg.suite;
    report["seed"] = cfg.seed;
    nlohmann::ordered_json checks_json = nlohmann::ordered_json::array();
    nlohmann::ordered_json tables_json = nlohmann::ordered_json::array();
    std::vector<ConvergenceTable> tables;

    auto want = [&](const char* s) { return cfg.suite == "all" || cfg.suite == s; };
    LimitConstants kappa1;
    bool have_kappa1 = false;

    if (want("theorem1")) {
        log_msg(LogLevel::Info, "verify: theorem1");
        Theorem1Result r = theorem1_ratio(ctx.env, ctx.sol, cfg.n_list, cfg.reps,
                                          cfg.seed, cfg.workers, cfg.stab_theorem1);
        kappa1 = r.constants;
        have_kappa1 = true;
        tables.push_back(r.table);
        for (auto& c : r.checks) all_checks.push_back(c);
        report["kappa"] = r.constants.kappa;
        report["kappa_se"] = r.constants.kappa_se;
    }
    if (want("corollary")) {
        log_msg(LogLevel::Info, "verify: corollary");
        CorollaryResult r = corollary_scaling(ctx.env, ctx.sol, ctx.stable, cfg.n_list,
                                              cfg.reps, cfg.seed, cfg.workers,
                                              cfg.stab_corollary,
                                              have_kappa1 ? &kappa1 : nullptr);
        tables.push_back(r.table);
        tables.push_back(r.min_table);
        for (auto& c : r.checks) all_checks.push_back(c);
        report["kappa_prime"] = r.constants.kappa;
        report["kappa_prime_se"] = r.constants.kappa_se;
        if (r.lattice_warning) {
            log_msg(LogLevel::Warn, "lattice environment: density-level checks skipped");
            report["lattice_warning"] = true;
        }
    }
    if (want("theorem2")) {
        log_msg(LogLevel::Info, "verify: theorem2");
        const double theta = ctx.sol.beta / 2.0;
        Theorem2Result r = theorem2_conditional(ctx.env, ctx.sol, cfg.n_list,
                                                std::min<std::uint64_t>(cfg.reps, 200'000),
                                                theta, cfg.seed, cfg.workers);
        tables.push_back(r.tv_table);
        tables.push_back(r.moment_table);
        for (auto& c : r.checks) all_checks.push_back(c);
        report["theorem2_ess"] = r.ess;
        report["theorem2_dropped_weight_bound"] = r.dropped_weight_bound;
    }
    if (want("theorem3")) {
        log_msg(LogLevel::Info, "verify: theorem3");
        Theorem3Result r = theorem3_flatness(ctx.env, ctx.sol, cfg.n_list,
                                             std::min<std::uint64_t>(cfg.reps, 200'000),
                                             cfg.seed, cfg.workers, cfg.r_exponent);
        tables.push_back(r.median_table);
        tables.push_back(r.q90_table);
        tables.push_back(r.w_low_table);
        tables.push_back(r.w_high_table);
        for (auto& c : r.checks) all_checks.push_back(c);
        report["theorem3_ess"] = r.ess;
    }
    if (want("prop21")) {
        log_msg(LogLevel::Info, "verify: prop21");
        const std::uint64_t table_reps = std::min<std::uint64_t>(cfg.reps, 1'000'000);
        const double umax = *std::max_element(cfg.x_grid.begin(), cfg.x_grid.end()) + 1.0;
        RenewalTable ut = build_renewal_table(ctx.tilted, 'u', umax, 0.25, cfg.K,
                                              table_reps, cfg.seed, cfg.workers);
        const double vmax = std::max(30.0 / cfg.theta, 10.0);
        RenewalTable vt = build_renewal_table(ctx.tilted, 'v', vmax, 0.25, cfg.K,
                                              table_reps, cfg.seed + 1, cfg.workers);
        if (ut.truncation_warning || vt.truncation_warning)
            log_msg(LogLevel::Warn, "renewal truncation term above 10x stderr");
        Prop21Result r = prop21_table(ctx.tilted, cfg.theta, cfg.x_grid, cfg.n_list,
                                      cfg.reps, ut, vt, ctx.stable, cfg.seed,
                                      cfg.workers, cfg.stab_prop21);
        for (auto& t : r.tables) tables.push_back(t);
        for (auto& c : r.checks) all_checks.push_back(c);
        report["prop21_rhs"] = r.rhs;
        report["prop21_rhs_se"] = r.rhs_se;
        report["prop21_rhs_bar"] = r.rhs_bar;
    }

    for (const auto& c : all_checks) checks_json.push_back(check_to_json(c));
    for (const auto& t : tables) tables_json.push_back(table_to_json(t));
    report["checks"] = checks_json;
    report["tables"] = tables_json;

    emit_output(cfg, report.dump(2));
    std::vector<const ConvergenceTable*> tps;
    for (const auto& t : tables) tps.push_back(&t);
    emit_tables_csv(cfg, tps);

    for (const auto& c : all_checks)
        if (!c.pass) return 1;
    return 0;
}

} // namespace

int run_config(const RunConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    RunManifest manifest;
    manifest.version = kVersion;
    manifest.config = cfg;
    int code = 0;

    try {
        if (cfg.subcommand == "solve-beta") {
            EnvironmentLaw env = EnvironmentLaw::load(cfg.env_path);
            TiltSolution sol = solve_beta(env, cfg.tol);
            nlohmann::ordered_json j;
            j["beta"] = sol.beta;
            j["gamma"] = sol.gamma;
            j["tilted_weights"] = sol.tilted_weights;
            j["residual"] = sol.residual;
            emit_output(cfg, j.dump(2));
        } else if (cfg.subcommand == "renewal") {
            EnvironmentLaw env = EnvironmentLaw::load(cfg.env_path);
            RenewalTable t = build_renewal_table(env, cfg.side[0], cfg.xmax, 0.25, cfg.K,
                                                 cfg.reps, cfg.seed, cfg.workers);
            std::ostringstream os;
            os << "x,estimate,stderr,K_term\n";
            for (std::size_t i = 0; i < t.points(); ++i)
                os << num17(t.x_at(i)) << ',' << num17(t.est[i]) << ',' << num17(t.se[i])
                   << ',' << num17(t.k_term[i]) << '\n';
            if (t.truncation_warning)
                log_msg(LogLevel::Warn, "renewal: K-term above 10x pooled stderr");
            if (cfg.out == "-")
                std::cout << os.str();
            else
                write_text_file(cfg.out, os.str());
        } else if (cfg.subcommand == "estimate-survival") {
            EnvironmentLaw env = EnvironmentLaw::load(cfg.env_path);
            TiltSolution sol = solve_beta(env, cfg.tol);
            Estimate e = estimate_survival(env, sol, cfg.n, cfg.reps,
                                           method_from_name(cfg.method), cfg.seed,
                                           cfg.workers);
            nlohmann::ordered_json j;
            j["value"] = e.value;
            j["stderr"] = e.se;
            j["reps"] = e.reps;
            j["method"] = e.method;
            j["elapsed_ms"] = e.elapsed_ms;
            emit_output(cfg, j.dump(2));
        } else if (cfg.subcommand == "oracle") {
            EnvironmentLaw env = EnvironmentLaw::load(cfg.env_path);
            ExactResult r;
            if (cfg.quantity == "survival") {
                r = exact_survival(env, cfg.n, cfg.workers);
            } else if (cfg.quantity == "min-nonneg") {
                r = exact_walk_functional(env, cfg.n, [](const WalkPath& p) {
                    return p.min_after_start() >= 0.0 ? 1.0 : 0.0;
                }, cfg.workers);
            } else {
                r = exact_walk_functional(env, cfg.n, [](const WalkPath& p) {
                    return p.first_min_index() == p.steps() ? 1.0 : 0.0;
                }, cfg.workers);
            }
            nlohmann::ordered_json j;
            j["quantity"] = cfg.quantity;
            j["n"] = cfg.n;
            j["value"] = r.value;
            j["sequences"] = r.sequences;
            emit_output(cfg, j.dump(2));
        } else if (cfg.subcommand == "verify") {
            code = run_verify(cfg, manifest.checks);
        } else if (cfg.subcommand == "conditional-law") {
            VerifyContext ctx = make_context(cfg);
            const double theta = cfg.theta_explicit ? cfg.theta : ctx.sol.beta / 2.0;
            Theorem2Result r = theorem2_conditional(ctx.env, ctx.sol, cfg.n_list,
                                                    cfg.reps, theta, cfg.seed,
                                                    cfg.workers);
            for (auto& c : r.checks) manifest.checks.push_back(c);
            nlohmann::ordered_json j;
            j["theta"] = theta;
            j["ess"] = r.ess;
            j["dropped_weight_bound"] = r.dropped_weight_bound;
            j["tables"] = {table_to_json(r.tv_table), table_to_json(r.moment_table)};
            nlohmann::ordered_json cs = nlohmann::ordered_json::array();
            for (const auto& c : r.checks) cs.push_back(check_to_json(c));
            j["checks"] = cs;
            emit_output(cfg, j.dump(2));
            emit_tables_csv(cfg, {&r.tv_table, &r.moment_table});
            for (const auto& c : r.checks)
                if (!c.pass) code = 1;
        } else if (cfg.subcommand == "flatness") {
            VerifyContext ctx = make_context(cfg);
            Theorem3Result r = theorem3_flatness(ctx.env, ctx.sol, cfg.n_list, cfg.reps,
                                                 cfg.seed, cfg.workers, cfg.r_exponent);
            for (auto& c : r.checks) manifest.checks.push_back(c);
            nlohmann::ordered_json j;
            j["ess"] = r.ess;
            j["tables"] = {table_to_json(r.median_table), table_to_json(r.q90_table),
                           table_to_json(r.w_low_table), table_to_json(r.w_high_table)};
            nlohmann::ordered_json cs = nlohmann::ordered_json::array();
            for (const auto& c : r.checks) cs.push_back(check_to_json(c));
            j["checks"] = cs;
            emit_output(cfg, j.dump(2));
            emit_tables_csv(cfg, {&r.median_table, &r.q90_table, &r.w_low_table,
                                  &r.w_high_table});
            for (const auto& c : r.checks)
                if (!c.pass) code = 1;
        } else {
            throw UsageError("unknown subcommand: " + cfg.subcommand);
        }
    } catch (const UsageError&) {
        throw;
    } catch (const std::exception& e) {
        log_msg(LogLevel::Error, e.what());
        code = 3;
    }

    manifest.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    try {
        write_text_file(manifest_path_for(cfg.out), manifest.to_json().dump(2) + "\n");
    } catch (const std::exception& e) {
        log_msg(LogLevel::Error, std::string("manifest write failed: ") + e.what());
    }
    return code;
}

} // namespace bpre
