#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "slfv/chain.hpp"
#include "slfv/cli.hpp"
#include "slfv/diagnostics.hpp"
#include "slfv/io.hpp"
#include "slfv/rng.hpp"

using namespace slfv;
namespace fs = std::filesystem;

namespace {

Point pt1(double x)
{
    Point p(1);
    p[0] = x;
    return p;
}

fs::path fresh_dir(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / ("slfv-test-" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
}

int cli(std::vector<std::string> args)
{
    std::vector<const char*> argv;
    argv.push_back("slfv");
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli_main(static_cast<int>(argv.size()), argv.data());
}

} // namespace

TEST_CASE("params serialize losslessly")
{
    Params p;
    p.d = 2;
    p.R = 0.7;
    p.U = 0.321;
    p.a = 0.125;
    p.r0 = 2.5;
    p.C0 = Point::Zero(2);
    p.C0 << 1.0 / 3.0, -0.1;
    p.seed = 9876543210123456789ull;
    const Params q = params_from_json(params_to_json(p));
    CHECK(q.d == p.d);
    CHECK(q.R == p.R);
    CHECK(q.U == p.U);
    CHECK(q.a == p.a);
    CHECK(q.r0 == p.r0);
    CHECK(q.seed == p.seed);
    CHECK(q.C0 == p.C0);
}

TEST_CASE("format_double round-trips and is compact")
{
    for (double x : {0.5, 0.1, 1.0 / 3.0, 1e-300, 6.02e23, -0.0, 1.0,
                     0.24999999999999997, 3.141592653589793}) {
        CHECK(std::stod(format_double(x)) == x);
    }
    CHECK(format_double(0.5) == "0.5");
    CHECK(format_double(1.0) == "1");
}

TEST_CASE("event logs round-trip bit for bit")
{
    const fs::path dir = fresh_dir("jsonl");
    Params p;
    p.seed = 4242;
    p.a = 0.8;
    TrajectoryRunner run(p);
    run.advance(100);
    const fs::path file = dir / "events.jsonl";
    write_events_jsonl(file, run.state());

    const ChainState back = read_events_jsonl(file);
    REQUIRE(back.step_count() == 100);
    CHECK(back.params().seed == p.seed);
    for (long k = 1; k <= 100; ++k) {
        const Event a = run.state().event(k);
        const Event b = back.event(k);
        CHECK(a.center == b.center);
        CHECK(a.uniform == b.uniform);
        CHECK(a.positive == b.positive);
        CHECK(a.freq_at_center == b.freq_at_center);
    }
    RngStream probes(3);
    for (int i = 0; i < 100; ++i) {
        const Point x = pt1(12.0 * probes.uniform01() - 6.0);
        CHECK(back.frequency(x) == run.state().frequency(x));
    }

    // Re-serialising the reread trajectory reproduces the file bytes.
    const fs::path file2 = dir / "events2.jsonl";
    write_events_jsonl(file2, back);
    CHECK(slurp(file) == slurp(file2));
    fs::remove_all(dir);
}

TEST_CASE("corrupt event logs are rejected on replay")
{
    const fs::path dir = fresh_dir("corrupt");
    Params p;
    p.seed = 99;
    TrajectoryRunner run(p);
    run.advance(30);
    const fs::path file = dir / "events.jsonl";
    write_events_jsonl(file, run.state());

    std::vector<std::string> lines;
    {
        std::ifstream in(file);
        for (std::string l; std::getline(in, l);) lines.push_back(l);
    }
    REQUIRE(lines.size() == 31);

    auto rewrite = [&](int idx, const std::string& repl) {
        std::vector<std::string> tmp = lines;
        tmp[idx] = repl;
        std::ostringstream ss;
        for (const auto& l : tmp) ss << l << '\n';
        spit(file, ss.str());
    };

    // Flip an outcome bit.
    {
        nlohmann::json j = nlohmann::json::parse(lines[5]);
        j["positive"] = !j["positive"].get<bool>();
        rewrite(5, j.dump());
        CHECK_THROWS_AS(read_events_jsonl(file), IoError);
    }
    // Tamper with a recorded frequency.
    {
        nlohmann::json j = nlohmann::json::parse(lines[8]);
        j["freq_at_center"] = 0.987654321;
        rewrite(8, j.dump());
        CHECK_THROWS_AS(read_events_jsonl(file), IoError);
    }
    // Break the step numbering.
    {
        nlohmann::json j = nlohmann::json::parse(lines[10]);
        j["n"] = 999;
        rewrite(10, j.dump());
        CHECK_THROWS_AS(read_events_jsonl(file), IoError);
    }
    // Malformed JSON.
    rewrite(3, "{not json");
    CHECK_THROWS_AS(read_events_jsonl(file), IoError);
    // Wrong schema version in the header.
    {
        nlohmann::json h = nlohmann::json::parse(lines[0]);
        h["schema_version"] = 99;
        rewrite(0, h.dump());
        CHECK_THROWS_AS(read_events_jsonl(file), IoError);
    }
    // Missing header entirely.
    {
        std::ostringstream ss;
        for (std::size_t i = 1; i < lines.size(); ++i) ss << lines[i] << '\n';
        spit(file, ss.str());
        CHECK_THROWS_AS(read_events_jsonl(file), IoError);
    }
    CHECK_THROWS_AS(read_events_jsonl(dir / "missing.jsonl"), IoError);
    fs::remove_all(dir);
}

TEST_CASE("freeze summaries carry the report and provenance")
{
    const fs::path dir = fresh_dir("freeze");
    Params p;
    p.seed = 7;
    FreezeReport rep;
    rep.kappa_hat = 12;
    rep.n_steps = 500;
    rep.sup_freq = 1.25e-20;
    rep.tau_alpha_hat = 15;
    rep.alpha = 0.25;
    const fs::path file = dir / "freeze.json";
    write_freeze_json(file, p, rep, Estimate{6.5, 0.0});
    const nlohmann::json j = nlohmann::json::parse(slurp(file));
    CHECK(j.at("schema_version") == kSchemaVersion);
    CHECK(j.at("kappa_hat") == 12);
    CHECK(j.at("n_steps") == 500);
    CHECK(j.at("sup_freq") == 1.25e-20);
    CHECK(j.at("tau_alpha_hat") == 15);
    CHECK(j.at("alpha") == 0.25);
    CHECK(j.at("horizon_censored") == true);
    CHECK(j.at("final_cluster_volume").at("value") == 6.5);
    CHECK(j.at("params").at("seed") == 7);
    fs::remove_all(dir);
}

TEST_CASE("cli run: deterministic outputs and exit codes")
{
    const fs::path d1 = fresh_dir("cli-run1");
    const fs::path d2 = fresh_dir("cli-run2");
    CHECK(cli({"run", "--seed", "7", "--steps", "200", "--out", (d1 / "o").string()}) == 0);
    CHECK(cli({"run", "--seed", "7", "--steps", "200", "--out", (d2 / "o").string()}) == 0);
    CHECK(fs::exists(d1 / "o" / "events.jsonl"));
    CHECK(fs::exists(d1 / "o" / "freeze.json"));
    CHECK(slurp(d1 / "o" / "events.jsonl") == slurp(d2 / "o" / "events.jsonl"));
    CHECK(slurp(d1 / "o" / "freeze.json") == slurp(d2 / "o" / "freeze.json"));

    const nlohmann::json fz = nlohmann::json::parse(slurp(d1 / "o" / "freeze.json"));
    CHECK(fz.at("n_steps") == 200);
    CHECK(fz.at("alpha") == 0.24999999999999997); // U V(R) / 4 for the defaults

    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("cli config handling")
{
    const fs::path dir = fresh_dir("cli-cfg");
    const fs::path cfg = dir / "cfg.json";
    spit(cfg, R"({"params": {"U": 0.25, "seed": 3}, "n_steps": 40})");
    CHECK(cli({"run", "--config", cfg.string(), "--out", (dir / "o").string()}) == 0);
    const nlohmann::json header =
        nlohmann::json::parse(slurp(dir / "o" / "events.jsonl").substr(
            0, slurp(dir / "o" / "events.jsonl").find('\n')));
    CHECK(header.at("params").at("U") == 0.25);
    CHECK(header.at("params").at("seed") == 3);

    // Flags override the file.
    CHECK(cli({"run", "--config", cfg.string(), "--seed", "5", "--steps", "10",
               "--out", (dir / "o2").string()}) == 0);
    const std::string first2 = slurp(dir / "o2" / "events.jsonl");
    CHECK(nlohmann::json::parse(first2.substr(0, first2.find('\n'))).at("params").at("seed")
          == 5);

    spit(cfg, "{broken");
    CHECK(cli({"run", "--config", cfg.string(), "--out", (dir / "o3").string()}) == 2);
    CHECK(cli({"run", "--config", (dir / "nope.json").string()}) == 3);
    fs::remove_all(dir);
}

TEST_CASE("cli error paths")
{
    const fs::path dir = fresh_dir("cli-err");
    CHECK(cli({"--help"}) == 0);
    CHECK(cli({}) == 2);                     // a subcommand is required
    CHECK(cli({"run", "--bogus"}) == 2);     // unknown flag
    CHECK(cli({"run", "--impact", "1.5", "--out", (dir / "x").string()}) == 2);
    CHECK(!fs::exists(dir / "x"));           // rejected before any output
    CHECK(cli({"run", "--steps", "-4", "--out", (dir / "x").string()}) == 2);
    CHECK(cli({"ensemble", "--seeds", "5..3", "--out", (dir / "x").string()}) == 2);
    CHECK(cli({"ensemble", "--seeds", "abc", "--out", (dir / "x").string()}) == 2);
    CHECK(cli({"ensemble", "--seed", "4", "--out", (dir / "x").string()}) == 2); // needs >= 2

    // An output path blocked by a regular file maps to the I/O exit code.
    spit(dir / "blocker", "file");
    CHECK(cli({"run", "--steps", "5", "--out", (dir / "blocker" / "sub").string()}) == 3);
    fs::remove_all(dir);
}

TEST_CASE("cli verify")
{
    const fs::path dir = fresh_dir("cli-verify");
    CHECK(cli({"verify", "--seed", "11", "--steps", "300", "--out", (dir / "v").string()})
          == 0);
    const std::string csv = slurp(dir / "v" / "verify.csv");
    CHECK(csv.rfind("schema_version,seed,step,check,value,bound,slack,pass\n", 0) == 0);
    const nlohmann::json sum = nlohmann::json::parse(slurp(dir / "v" / "verify_summary.json"));
    CHECK(sum.at("failures") == 0);
    CHECK(sum.at("checks").get<long>() > 300);
    CHECK(sum.at("by_check").contains("mass_change"));
    CHECK(sum.at("by_check").contains("martingale_drift"));

    // Two dimensions exercises the Monte Carlo checks.
    CHECK(cli({"verify", "--seed", "2", "--dim", "2", "--steps", "60", "--mc-samples",
               "8000", "--out", (dir / "v2").string()}) == 0);
    const nlohmann::json sum2 =
        nlohmann::json::parse(slurp(dir / "v2" / "verify_summary.json"));
    CHECK(sum2.at("failures") == 0);
    CHECK(sum2.at("by_check").contains("martingale_drift_mc"));
    fs::remove_all(dir);
}

TEST_CASE("cli ensemble")
{
    const fs::path dir = fresh_dir("cli-ens");
    CHECK(cli({"ensemble", "--seeds", "1..3", "--steps", "150", "--out",
               (dir / "e").string()}) == 0);
    std::ifstream in(dir / "e" / "summary.csv");
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    REQUIRE(lines.size() == 4);
    CHECK(lines[0] == "schema_version,seed,n_steps,kappa_hat,tau_alpha_hat,sup_freq,"
                      "final_cluster_volume,final_cluster_volume_stderr");
    CHECK(lines[1].rfind("1,1,150,", 0) == 0);
    CHECK(lines[2].rfind("1,2,150,", 0) == 0);
    CHECK(lines[3].rfind("1,3,150,", 0) == 0);
    for (int s = 1; s <= 3; ++s) {
        CHECK(fs::exists(dir / "e" / ("seed-" + std::to_string(s)) / "events.jsonl"));
        CHECK(fs::exists(dir / "e" / ("seed-" + std::to_string(s)) / "freeze.json"));
    }
    fs::remove_all(dir);
}

TEST_CASE("cli nonspatial")
{
    const fs::path dir = fresh_dir("cli-ns");
    CHECK(cli({"nonspatial", "--seeds", "1..50", "--steps", "400", "--z0", "0",
               "--out", (dir / "n").string()}) == 0);
    std::ifstream in(dir / "n" / "nonspatial.csv");
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    REQUIRE(lines.size() == 51);
    CHECK(lines[0] == "schema_version,seed,terminal_z,last_flip_index");
    for (std::size_t i = 1; i < lines.size(); ++i) {
        std::vector<std::string> fields;
        std::istringstream row(lines[i]);
        for (std::string f; std::getline(row, f, ',');) fields.push_back(f);
        REQUIRE(fields.size() == 4);
        CHECK(fields[2] == "0"); // z = 0 is absorbing
    }

    CHECK(cli({"nonspatial", "--seeds", "1..100", "--steps", "500", "--z0", "0.5",
               "--out", (dir / "n2").string()}) == 0);
    const nlohmann::json sum =
        nlohmann::json::parse(slurp(dir / "n2" / "nonspatial_summary.json"));
    CHECK(sum.at("martingale_pass") == true);
    CHECK(sum.at("seeds") == 100);
    fs::remove_all(dir);
}
