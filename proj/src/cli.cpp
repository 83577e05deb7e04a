#include "slfv/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "slfv/chain.hpp"
#include "slfv/diagnostics.hpp"
#include "slfv/io.hpp"
#include "slfv/oracle.hpp"

namespace slfv {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailure = 1;
constexpr int kExitConfigError = 2;
constexpr int kExitIoError = 3;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct HorizonPolicy {
    bool doubling = false;
    long max_steps = 0;
};

struct RunConfig {
    Params params;
    long n_steps = 1000;
    HorizonPolicy horizon;
    long mc_samples = kDefaultMcSamples;
    std::optional<double> alpha; // empty: default U V(R)/4
    std::uint64_t seed_lo = 1;
    std::uint64_t seed_hi = 1;
    fs::path out_dir = "out";
    double z0 = 0.5; // nonspatial chain start
};

AlphaConfig resolve_alpha(const RunConfig& cfg, const Params& p)
{
    const AlphaConfig a =
        cfg.alpha ? AlphaConfig{*cfg.alpha} : AlphaConfig::defaulted(p);
    a.validate(p);
    return a;
}

void apply_config_file(RunConfig& cfg, const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open config: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("malformed config " + path.string() + ": " + e.what());
    }
    try {
        if (j.contains("params")) {
            // Partial override: absent fields keep their defaults.
            const auto& p = j.at("params");
            if (p.contains("d"))
                cfg.params.d = p.at("d").get<int>();
            if (p.contains("R"))
                cfg.params.R = p.at("R").get<double>();
            if (p.contains("U"))
                cfg.params.U = p.at("U").get<double>();
            if (p.contains("a"))
                cfg.params.a = p.at("a").get<double>();
            if (p.contains("r0"))
                cfg.params.r0 = p.at("r0").get<double>();
            if (p.contains("seed"))
                cfg.seed_lo = cfg.seed_hi = p.at("seed").get<std::uint64_t>();
            if (p.contains("C0")) {
                const auto& c = p.at("C0");
                cfg.params.C0.resize(static_cast<Eigen::Index>(c.size()));
                for (std::size_t i = 0; i < c.size(); ++i)
                    cfg.params.C0[static_cast<Eigen::Index>(i)] = c.at(i).get<double>();
            }
        }
        if (j.contains("n_steps"))
            cfg.n_steps = j.at("n_steps").get<long>();
        if (j.contains("mc_samples"))
            cfg.mc_samples = j.at("mc_samples").get<long>();
        if (j.contains("alpha") && !j.at("alpha").is_null())
            cfg.alpha = j.at("alpha").get<double>();
        if (j.contains("z0"))
            cfg.z0 = j.at("z0").get<double>();
        if (j.contains("out"))
            cfg.out_dir = j.at("out").get<std::string>();
        if (j.contains("seeds")) {
            cfg.seed_lo = j.at("seeds").at("lo").get<std::uint64_t>();
            cfg.seed_hi = j.at("seeds").at("hi").get<std::uint64_t>();
        } else if (j.contains("seed")) {
            cfg.seed_lo = cfg.seed_hi = j.at("seed").get<std::uint64_t>();
        }
        if (j.contains("horizon")) {
            const auto& h = j.at("horizon");
            const std::string policy = h.at("policy").get<std::string>();
            if (policy == "fixed") {
                cfg.horizon = {};
            } else if (policy == "double-until-stable") {
                cfg.horizon.doubling = true;
                cfg.horizon.max_steps = h.at("max").get<long>();
            } else {
                throw ConfigError("unknown horizon policy: " + policy);
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError("bad config field in " + path.string() + ": " + e.what());
    }
}

// One flag set shared by all subcommands; option presence decides overrides.
struct FlagValues {
    std::string config;
    std::uint64_t seed = 0;
    std::string seeds;
    long steps = 0;
    std::string out;
    int dim = 0;
    double radius = 0.0;
    double impact = 0.0;
    double alpha = 0.0;
    long mc_samples = 0;
    double z0 = 0.5;
};

struct FlagOptions {
    CLI::Option* config = nullptr;
    CLI::Option* seed = nullptr;
    CLI::Option* seeds = nullptr;
    CLI::Option* steps = nullptr;
    CLI::Option* out = nullptr;
    CLI::Option* dim = nullptr;
    CLI::Option* radius = nullptr;
    CLI::Option* impact = nullptr;
    CLI::Option* alpha = nullptr;
    CLI::Option* mc_samples = nullptr;
    CLI::Option* z0 = nullptr;
};

FlagOptions add_common_flags(CLI::App* cmd, FlagValues& v)
{
    FlagOptions o;
    o.config = cmd->add_option("--config", v.config, "JSON config file");
    o.seed = cmd->add_option("--seed", v.seed, "root seed");
    o.seeds = cmd->add_option("--seeds", v.seeds, "inclusive seed range A..B");
    o.steps = cmd->add_option("--steps", v.steps, "number of chain steps");
    o.out = cmd->add_option("--out", v.out, "output directory");
    o.dim = cmd->add_option("--dim", v.dim, "spatial dimension d");
    o.radius = cmd->add_option("--radius", v.radius, "event radius R");
    o.impact = cmd->add_option("--impact", v.impact, "impact fraction U");
    o.alpha = cmd->add_option("--alpha", v.alpha, "mass-increment threshold");
    o.mc_samples = cmd->add_option("--mc-samples", v.mc_samples,
                                   "Monte Carlo sample count");
    o.z0 = cmd->add_option("--z0", v.z0, "nonspatial start frequency");
    return o;
}

std::pair<std::uint64_t, std::uint64_t> parse_seed_range(const std::string& spec)
{
    const auto pos = spec.find("..");
    if (pos == std::string::npos)
        throw ConfigError("seed range must look like A..B: " + spec);
    try {
        const std::uint64_t lo = std::stoull(spec.substr(0, pos));
        const std::uint64_t hi = std::stoull(spec.substr(pos + 2));
        if (hi < lo)
            throw ConfigError("empty seed range: " + spec);
        return {lo, hi};
    } catch (const std::logic_error&) {
        throw ConfigError("cannot parse seed range: " + spec);
    }
}

RunConfig build_config(const FlagValues& v, const FlagOptions& o)
{
    RunConfig cfg;
    if (o.config->count())
        apply_config_file(cfg, v.config);
    if (o.dim->count()) {
        cfg.params.d = v.dim;
        cfg.params.C0.resize(0); // origin of the new dimension
    }
    if (o.radius->count())
        cfg.params.R = v.radius;
    if (o.impact->count())
        cfg.params.U = v.impact;
    if (o.alpha->count())
        cfg.alpha = v.alpha;
    if (o.steps->count())
        cfg.n_steps = v.steps;
    if (o.mc_samples->count())
        cfg.mc_samples = v.mc_samples;
    if (o.out->count())
        cfg.out_dir = v.out;
    if (o.z0->count())
        cfg.z0 = v.z0;
    if (o.seed->count())
        cfg.seed_lo = cfg.seed_hi = v.seed;
    if (o.seeds->count()) {
        auto [lo, hi] = parse_seed_range(v.seeds);
        cfg.seed_lo = lo;
        cfg.seed_hi = hi;
    }
    cfg.params.seed = cfg.seed_lo;

    try {
        cfg.params.validate();
        resolve_alpha(cfg, cfg.params);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (cfg.n_steps < 0)
        throw ConfigError("n_steps must be nonnegative");
    if (cfg.mc_samples < 2)
        throw ConfigError("mc_samples must be at least 2");
    if (!(cfg.z0 >= 0.0) || !(cfg.z0 <= 1.0))
        throw ConfigError("z0 must lie in [0, 1]");
    if (cfg.horizon.doubling && cfg.horizon.max_steps < cfg.n_steps)
        throw ConfigError("horizon max must be at least n_steps");
    return cfg;
}

void make_dirs(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

// Advances until the fixed horizon, then keeps doubling while the last
// positive index still moves (stopping at the policy maximum).
ChainState run_with_policy(const RunConfig& cfg, const Params& p)
{
    TrajectoryRunner runner(p);
    runner.advance(cfg.n_steps);
    if (cfg.horizon.doubling) {
        long horizon = cfg.n_steps;
        while (2 * horizon <= cfg.horizon.max_steps) {
            const long kappa_before = runner.state().last_positive_index();
            runner.advance(horizon);
            horizon *= 2;
            if (runner.state().last_positive_index() == kappa_before)
                break;
        }
    }
    return runner.state();
}

Estimate final_cluster_volume(const ChainState& state, long mc_samples)
{
    if (state.params().d == 1)
        return {union_length_1d(state.cluster_view(), 0.0), 0.0};
    RngStream est = StreamFamily(state.params().seed).stream(Stream::estimator, 2);
    return union_volume_mc(state.cluster_view(), 0.0, mc_samples, est);
}

struct SeedOutputs {
    std::uint64_t seed = 0;
    long n_steps = 0;
    FreezeReport freeze;
    Estimate cluster_volume;
};

SeedOutputs run_one_seed(const RunConfig& cfg, std::uint64_t seed,
                         const fs::path& dir)
{
    Params p = cfg.params;
    p.seed = seed;
    const AlphaConfig acfg = resolve_alpha(cfg, p);
    const ChainState traj = run_with_policy(cfg, p);

    make_dirs(dir);
    write_events_jsonl(dir / "events.jsonl", traj);

    FreezeKnobs knobs;
    knobs.method = p.d == 1 ? Method::exact1d : Method::monte_carlo;
    knobs.mc_samples = cfg.mc_samples;
    SeedOutputs out;
    out.seed = seed;
    out.n_steps = traj.step_count();
    out.freeze = freeze_report(traj, traj.step_count(), acfg, knobs);
    out.cluster_volume = final_cluster_volume(traj, cfg.mc_samples);
    write_freeze_json(dir / "freeze.json", p, out.freeze, out.cluster_volume);
    return out;
}

int cmd_run(const RunConfig& cfg)
{
    make_dirs(cfg.out_dir);
    const SeedOutputs out = run_one_seed(cfg, cfg.seed_lo, cfg.out_dir);
    std::cerr << "run: seed " << out.seed << ", " << out.n_steps
              << " steps, kappa_hat " << out.freeze.kappa_hat << "\n";
    return kExitOk;
}

int cmd_ensemble(const RunConfig& cfg)
{
    const std::uint64_t count = cfg.seed_hi - cfg.seed_lo + 1;
    if (count < 2)
        throw ConfigError("ensemble needs at least 2 seeds");
    make_dirs(cfg.out_dir);

    std::vector<SeedOutputs> results(count);
    std::atomic<std::uint64_t> next{0};
    std::mutex log_mutex;
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto worker = [&]() {
        for (;;) {
            const std::uint64_t i = next.fetch_add(1);
            if (i >= count)
                return;
            const std::uint64_t seed = cfg.seed_lo + i;
            try {
                results[i] = run_one_seed(cfg, seed,
                                          cfg.out_dir / ("seed-" + std::to_string(seed)));
                std::lock_guard<std::mutex> lock(log_mutex);
                std::cerr << "ensemble: seed " << seed << " done ("
                          << results[i].freeze.kappa_hat << ")\n";
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error)
                    first_error = std::current_exception();
                next.store(count);
                return;
            }
        }
    };

    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const unsigned n_threads =
        static_cast<unsigned>(std::min<std::uint64_t>(hw, count));
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t)
        pool.emplace_back(worker);
    for (auto& t : pool)
        t.join();
    if (first_error)
        std::rethrow_exception(first_error);

    const fs::path csv_path = cfg.out_dir / "summary.csv";
    std::ofstream csv(csv_path, std::ios::binary | std::ios::trunc);
    if (!csv)
        throw IoError("cannot open for writing: " + csv_path.string());
    csv << "schema_version,seed,n_steps,kappa_hat,tau_alpha_hat,sup_freq,"
           "final_cluster_volume,final_cluster_volume_stderr\n";
    for (const SeedOutputs& r : results) {
        csv << kSchemaVersion << ',' << r.seed << ',' << r.n_steps << ','
            << r.freeze.kappa_hat << ',' << r.freeze.tau_alpha_hat << ','
            << format_double(r.freeze.sup_freq) << ','
            << format_double(r.cluster_volume.value) << ','
            << format_double(r.cluster_volume.stderror) << '\n';
    }
    csv.flush();
    if (!csv)
        throw IoError("write failed: " + csv_path.string());
    return kExitOk;
}

struct VerifyRow {
    std::uint64_t seed = 0;
    long step = 0;
    std::string check;
    double value = 0.0;
    double bound = 0.0;
    double slack = 0.0;
    bool pass = true;
};

// Exact d=1 suite: per-step identity, growth and dichotomy checks plus
// sampled drift and Lipschitz checks on one trajectory.
void verify_exact1d(const RunConfig& cfg, std::uint64_t seed,
                    std::vector<VerifyRow>& rows)
{
    Params p = cfg.params;
    p.seed = seed;
    const AlphaConfig acfg = resolve_alpha(cfg, p);
    const double VR = ball_volume(p.d, p.R);
    const double SR = sphere_area(p.d, p.R);
    const double V2R = ball_volume(p.d, 2.0 * p.R);
    const double lo_gap = acfg.alpha / p.U;
    const double hi_gap = VR - acfg.alpha / p.U;
    const double psi = psi_threshold(p, acfg);

    TrajectoryRunner runner(p);
    runner.advance(cfg.n_steps);
    const ChainState traj = runner.state();
    const double vol0R = union_length_1d(traj.at_step(0).cluster_view(), p.R);

    auto add = [&](long step, const char* check, double value, double bound,
                   bool pass) {
        rows.push_back({seed, step, check, value, bound, bound - value, pass});
    };

    struct StepTrace {
        double inc = 0.0;
        double phi_c = 0.0;
        bool positive = false;
        bool premise = false; // |inc| < alpha and sup Phi above the high gap
        double f_len = 0.0;
        bool center_in_F = false;
    };
    std::vector<StepTrace> trace(static_cast<std::size_t>(cfg.n_steps));

    PiecewiseField1D field = PiecewiseField1D::from_blocks(traj.initial_blocks());
    double mass_prev = exact_mass_1d(field);
    for (long k = 1; k <= cfg.n_steps; ++k) {
        const Event ev = traj.event(k);
        StepTrace& t = trace[static_cast<std::size_t>(k - 1)];
        t.positive = ev.positive;
        t.phi_c = exact_phi_1d(field, ev.center[0], p.R);
        const double sup_phi = sup_phi_1d(field, p.R);
        // F belongs to the pre-event state; measure it while we hold it
        const double f_len_pre = sup_phi > hi_gap
            ? level_band_length_1d(field, p.R, lo_gap, hi_gap)
            : 0.0;

        field = apply_event_1d(std::move(field), ev.center[0], p.R, p.U, ev.positive);
        const double mass_now = exact_mass_1d(field);
        t.inc = mass_now - mass_prev;

        const double eps = ev.positive ? 1.0 : 0.0;
        const double residual = std::abs(t.inc - p.U * (eps * VR - t.phi_c));
        add(k, "mass_change", residual, 1e-9, residual <= 1e-9);

        const double vol = union_length_1d(traj.at_step(k).cluster_view(), p.R);
        const double growth_cap = vol0R + static_cast<double>(k) * V2R + 1e-9;
        add(k, "growth_bound", vol, growth_cap, vol <= growth_cap);

        if (std::abs(t.inc) < acfg.alpha && sup_phi > hi_gap) {
            t.premise = true;
            t.center_in_F = t.phi_c >= lo_gap && t.phi_c <= hi_gap;
            t.f_len = f_len_pre;
            add(k, "forbidden_center", t.phi_c, 0.0, !t.center_in_F);
            add(k, "forbidden_volume", t.f_len, psi - 1e-6, t.f_len >= psi - 1e-6);
        }
        mass_prev = mass_now;
    }

    // dichotomy past the horizon-censored tau
    long tau = 0;
    for (long k = 1; k <= cfg.n_steps; ++k)
        if (std::abs(trace[static_cast<std::size_t>(k - 1)].inc) >= acfg.alpha)
            tau = k;
    for (long k = tau + 1; k <= cfg.n_steps; ++k) {
        const StepTrace& t = trace[static_cast<std::size_t>(k - 1)];
        const double slack = t.positive ? t.phi_c - hi_gap : lo_gap - t.phi_c;
        add(k, "constraint_dichotomy", -slack, 0.0, slack > 0.0);
    }

    // drift at up to 10 snapshots spread over the run
    const long snaps = std::min<long>(10, cfg.n_steps);
    for (long i = 1; i <= snaps; ++i) {
        const long n = cfg.n_steps * i / snaps;
        const double drift =
            std::abs(martingale_drift(traj.at_step(n), Method::exact1d).value);
        add(n, "martingale_drift", drift, 1e-9, drift <= 1e-9);
    }

    // Lipschitz slack on random pairs over the 2R-grown hull of the cluster
    RngStream probes = StreamFamily(p.seed).stream(Stream::probes, 3);
    const PiecewiseField1D final_field = PiecewiseField1D::from_state(traj);
    const PhiEvaluator1D eval(final_field);
    double span_lo = traj.cluster_view().front().center[0];
    double span_hi = span_lo;
    for (const Ball& b : traj.cluster_view()) {
        span_lo = std::min(span_lo, b.center[0] - b.radius - 2.0 * p.R);
        span_hi = std::max(span_hi, b.center[0] + b.radius + 2.0 * p.R);
    }
    for (int i = 0; i < 50; ++i) {
        const double x = span_lo + (span_hi - span_lo) * probes.uniform01();
        const double y = span_lo + (span_hi - span_lo) * probes.uniform01();
        const double slack =
            std::abs(y - x) * SR - (eval.phi(y, p.R) - eval.phi(x, p.R));
        add(cfg.n_steps, "lipschitz", slack, -1e-9, slack >= -1e-9);
    }

    // frequency range on random probes
    double excursion = 0.0;
    for (int i = 0; i < 200; ++i) {
        Point x(1);
        x[0] = span_lo + (span_hi - span_lo) * probes.uniform01();
        const double f = traj.frequency(x);
        excursion = std::max({excursion, -f, f - 1.0});
    }
    add(cfg.n_steps, "frequency_range", excursion, 0.0, excursion <= 0.0);
}

// Monte Carlo suite for d >= 2 with 4-stderr gates.
void verify_mc(const RunConfig& cfg, std::uint64_t seed, std::vector<VerifyRow>& rows)
{
    Params p = cfg.params;
    p.seed = seed;
    resolve_alpha(cfg, p);
    const double SR = sphere_area(p.d, p.R);

    TrajectoryRunner runner(p);
    runner.advance(cfg.n_steps);
    const ChainState traj = runner.state();
    RngStream est = StreamFamily(p.seed).stream(Stream::estimator, 4);
    RngStream probes = StreamFamily(p.seed).stream(Stream::probes, 4);

    auto add = [&](long step, const char* check, double value, double bound,
                   bool pass) {
        rows.push_back({seed, step, check, value, bound, bound - value, pass});
    };

    const long snaps = std::min<long>(5, cfg.n_steps);
    for (long i = 1; i <= snaps; ++i) {
        const long n = cfg.n_steps * i / snaps;
        const Estimate drift = martingale_drift(traj.at_step(n), Method::monte_carlo,
                                                cfg.mc_samples, &est);
        const double gate = 4.0 * drift.stderror;
        add(n, "martingale_drift_mc", std::abs(drift.value), gate,
            std::abs(drift.value) <= gate);
    }

    const long id_checks = std::min<long>(10, cfg.n_steps);
    for (long i = 1; i <= id_checks; ++i) {
        const long k = cfg.n_steps * i / id_checks;
        const Estimate res =
            mass_change_check(traj.at_step(k - 1), traj.event(k), traj.at_step(k),
                              Method::monte_carlo, cfg.mc_samples, &est);
        const double gate = 4.0 * res.stderror;
        add(k, "mass_change_mc", std::abs(res.value), gate,
            std::abs(res.value) <= gate);
    }

    auto balls = traj.cluster_view();
    for (int i = 0; i < 20; ++i) {
        const Point x = sample_uniform(balls, 2.0 * p.R, probes);
        const Point y = sample_uniform(balls, 2.0 * p.R, probes);
        const Estimate px = local_average(traj, x, Method::monte_carlo,
                                          cfg.mc_samples, &est);
        const Estimate py = local_average(traj, y, Method::monte_carlo,
                                          cfg.mc_samples, &est);
        const double slack = (y - x).norm() * SR - (py.value - px.value);
        const double gate =
            -4.0 * std::sqrt(px.stderror * px.stderror + py.stderror * py.stderror);
        add(cfg.n_steps, "lipschitz_mc", slack, gate, slack >= gate);
    }
}

int cmd_verify(const RunConfig& cfg)
{
    make_dirs(cfg.out_dir);
    std::vector<VerifyRow> rows;
    for (std::uint64_t seed = cfg.seed_lo; seed <= cfg.seed_hi; ++seed) {
        std::cerr << "verify: seed " << seed << "\n";
        if (cfg.params.d == 1)
            verify_exact1d(cfg, seed, rows);
        else
            verify_mc(cfg, seed, rows);
    }

    const fs::path csv_path = cfg.out_dir / "verify.csv";
    std::ofstream csv(csv_path, std::ios::binary | std::ios::trunc);
    if (!csv)
        throw IoError("cannot open for writing: " + csv_path.string());
    csv << "schema_version,seed,step,check,value,bound,slack,pass\n";
    long failures = 0;
    std::map<std::string, std::pair<long, long>> by_check; // count, failures
    for (const VerifyRow& r : rows) {
        csv << kSchemaVersion << ',' << r.seed << ',' << r.step << ',' << r.check
            << ',' << format_double(r.value) << ',' << format_double(r.bound) << ','
            << format_double(r.slack) << ',' << (r.pass ? "true" : "false") << '\n';
        auto& [count, fails] = by_check[r.check];
        ++count;
        if (!r.pass) {
            ++fails;
            ++failures;
        }
    }
    csv.flush();
    if (!csv)
        throw IoError("write failed: " + csv_path.string());

    json by = json::object();
    for (const auto& [name, cf] : by_check)
        by[name] = json{{"count", cf.first}, {"failures", cf.second}};
    const json summary{{"schema_version", kSchemaVersion},
                       {"checks", static_cast<long>(rows.size())},
                       {"failures", failures},
                       {"by_check", by}};
    const fs::path sum_path = cfg.out_dir / "verify_summary.json";
    std::ofstream sum(sum_path, std::ios::binary | std::ios::trunc);
    if (!sum)
        throw IoError("cannot open for writing: " + sum_path.string());
    sum << summary.dump(2) << '\n';
    sum.flush();
    if (!sum)
        throw IoError("write failed: " + sum_path.string());

    std::cerr << "verify: " << rows.size() << " checks, " << failures
              << " failures\n";
    return failures == 0 ? kExitOk : kExitVerifyFailure;
}

int cmd_nonspatial(const RunConfig& cfg)
{
    make_dirs(cfg.out_dir);
    const double U = cfg.params.U;
    const std::uint64_t count = cfg.seed_hi - cfg.seed_lo + 1;

    const fs::path csv_path = cfg.out_dir / "nonspatial.csv";
    std::ofstream csv(csv_path, std::ios::binary | std::ios::trunc);
    if (!csv)
        throw IoError("cannot open for writing: " + csv_path.string());
    csv << "schema_version,seed,terminal_z,last_flip_index\n";

    double sum = 0.0, sum_sq = 0.0;
    for (std::uint64_t seed = cfg.seed_lo; seed <= cfg.seed_hi; ++seed) {
        RngStream rng = StreamFamily(seed).stream(Stream::uniforms);
        double z = cfg.z0;
        int prev_eps = -1;
        long last_flip = 0;
        for (long n = 1; n <= cfg.n_steps; ++n) {
            const double z_next = nonspatial_step(z, U, rng);
            // recover eps from the move; absorbing states keep eps = z
            const int eps = z_next > z ? 1 : (z_next < z ? 0 : (z == 1.0 ? 1 : 0));
            if (prev_eps >= 0 && eps != prev_eps)
                last_flip = n;
            prev_eps = eps;
            z = z_next;
        }
        csv << kSchemaVersion << ',' << seed << ',' << format_double(z) << ','
            << last_flip << '\n';
        sum += z;
        sum_sq += z * z;
    }
    csv.flush();
    if (!csv)
        throw IoError("write failed: " + csv_path.string());

    const double mean = sum / static_cast<double>(count);
    double se = 0.0;
    if (count > 1) {
        const double var = std::max(
            0.0, (sum_sq - static_cast<double>(count) * mean * mean)
                     / static_cast<double>(count - 1));
        se = std::sqrt(var / static_cast<double>(count));
    }
    // E[Z_n] = z0; gate at 4 standard errors
    const bool martingale_pass =
        count < 2 || std::abs(mean - cfg.z0) <= 4.0 * se + 1e-12;

    const json summary{{"schema_version", kSchemaVersion},
                       {"z0", cfg.z0},
                       {"impact", U},
                       {"n_steps", cfg.n_steps},
                       {"seeds", count},
                       {"mean_terminal", mean},
                       {"stderr", se},
                       {"martingale_pass", martingale_pass}};
    const fs::path sum_path = cfg.out_dir / "nonspatial_summary.json";
    std::ofstream out(sum_path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open for writing: " + sum_path.string());
    out << summary.dump(2) << '\n';
    out.flush();
    if (!out)
        throw IoError("write failed: " + sum_path.string());

    std::cerr << "nonspatial: mean terminal " << mean << " (z0 " << cfg.z0
              << ")\n";
    return martingale_pass ? kExitOk : kExitVerifyFailure;
}

} // namespace

int cli_main(int argc, const char* const* argv)
{
    CLI::App app{"Spatial Lambda-Fleming-Viot two-type voter model: simulator "
                 "and verification harness"};
    app.require_subcommand(1);

    FlagValues run_v, ens_v, ver_v, non_v;
    CLI::App* run_cmd = app.add_subcommand("run", "simulate one trajectory");
    CLI::App* ens_cmd = app.add_subcommand("ensemble", "simulate a seed range");
    CLI::App* ver_cmd = app.add_subcommand("verify", "run the invariant suite");
    CLI::App* non_cmd = app.add_subcommand("nonspatial", "run the scalar chain");
    const FlagOptions run_o = add_common_flags(run_cmd, run_v);
    const FlagOptions ens_o = add_common_flags(ens_cmd, ens_v);
    const FlagOptions ver_o = add_common_flags(ver_cmd, ver_v);
    const FlagOptions non_o = add_common_flags(non_cmd, non_v);

    try {
        app.parse(argc, const_cast<char**>(argv));
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfigError;
    }

    try {
        if (run_cmd->parsed())
            return cmd_run(build_config(run_v, run_o));
        if (ens_cmd->parsed())
            return cmd_ensemble(build_config(ens_v, ens_o));
        if (ver_cmd->parsed())
            return cmd_verify(build_config(ver_v, ver_o));
        if (non_cmd->parsed())
            return cmd_nonspatial(build_config(non_v, non_o));
        std::cerr << "no subcommand given\n";
        return kExitConfigError;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitIoError;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIoError;
    }
}

} // namespace slfv
