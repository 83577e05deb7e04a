#include "slfv/io.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>

namespace slfv {

using nlohmann::json;

std::string format_double(double x)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

json params_to_json(const Params& p)
{
    json c0 = json::array();
    const Point c = p.initial_center();
    for (int i = 0; i < p.d; ++i)
        c0.push_back(c[i]);
    return json{{"d", p.d},   {"R", p.R},   {"U", p.U},      {"a", p.a},
                {"r0", p.r0}, {"C0", c0},   {"seed", p.seed}};
}

Params params_from_json(const json& j)
{
    Params p;
    p.d = j.at("d").get<int>();
    p.R = j.at("R").get<double>();
    p.U = j.at("U").get<double>();
    p.a = j.at("a").get<double>();
    p.r0 = j.at("r0").get<double>();
    if (j.contains("C0") && !j.at("C0").is_null()) {
        const auto& arr = j.at("C0");
        p.C0.resize(static_cast<Eigen::Index>(arr.size()));
        for (std::size_t i = 0; i < arr.size(); ++i)
            p.C0[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
    }
    if (j.contains("seed"))
        p.seed = j.at("seed").get<std::uint64_t>();
    p.validate();
    return p;
}

namespace {

json point_to_json(const Point& x)
{
    json arr = json::array();
    for (Eigen::Index i = 0; i < x.size(); ++i)
        arr.push_back(x[i]);
    return arr;
}

json blocks_to_json(const std::vector<InitialBlock>& blocks)
{
    json arr = json::array();
    for (const auto& blk : blocks)
        arr.push_back(json{{"center", point_to_json(blk.ball.center)},
                           {"radius", blk.ball.radius},
                           {"value", blk.value}});
    return arr;
}

std::vector<InitialBlock> blocks_from_json(const json& arr, int d)
{
    std::vector<InitialBlock> blocks;
    for (const auto& j : arr) {
        InitialBlock blk;
        const auto& c = j.at("center");
        if (static_cast<int>(c.size()) != d)
            throw IoError("initial block dimension mismatch");
        blk.ball.center.resize(d);
        for (int i = 0; i < d; ++i)
            blk.ball.center[i] = c[static_cast<std::size_t>(i)].get<double>();
        blk.ball.radius = j.at("radius").get<double>();
        blk.value = j.at("value").get<double>();
        blocks.push_back(std::move(blk));
    }
    return blocks;
}

} // namespace

void write_events_jsonl(const std::filesystem::path& path, const ChainState& trajectory)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open for writing: " + path.string());
    const json header{{"schema_version", kSchemaVersion},
                      {"kind", "header"},
                      {"params", params_to_json(trajectory.params())},
                      {"initial", blocks_to_json(trajectory.initial_blocks())}};
    out << header.dump() << '\n';
    for (long k = 1; k <= trajectory.step_count(); ++k) {
        const Event ev = trajectory.event(k);
        const json line{{"n", ev.index},
                        {"center", point_to_json(ev.center)},
                        {"uniform", ev.uniform},
                        {"positive", ev.positive},
                        {"freq_at_center", ev.freq_at_center}};
        out << line.dump() << '\n';
    }
    out.flush();
    if (!out)
        throw IoError("write failed: " + path.string());
}

ChainState read_events_jsonl(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open for reading: " + path.string());
    try {
        std::string line;
        if (!std::getline(in, line))
            throw IoError("empty event log: " + path.string());
        const json header = json::parse(line);
        if (header.value("kind", std::string{}) != "header")
            throw IoError("first line is not a header: " + path.string());
        if (header.at("schema_version").get<int>() != kSchemaVersion)
            throw IoError("unsupported schema_version in " + path.string());
        const Params p = params_from_json(header.at("params"));
        ChainState state =
            ChainState::initial(p, blocks_from_json(header.at("initial"), p.d));

        long expected = 1;
        while (std::getline(in, line)) {
            if (line.empty())
                continue;
            const json j = json::parse(line);
            if (j.at("n").get<long>() != expected)
                throw IoError("event index out of order at line "
                              + std::to_string(expected));
            const auto& arr = j.at("center");
            if (static_cast<int>(arr.size()) != p.d)
                throw IoError("event center dimension mismatch");
            Point c(p.d);
            for (int i = 0; i < p.d; ++i)
                c[i] = arr[static_cast<std::size_t>(i)].get<double>();
            auto [next, ev] =
                replay_append(state, std::move(c), j.at("uniform").get<double>());
            // Bit-exact replay contract: the stored outcome and frequency
            // must match what the kernel recomputes.
            if (ev.positive != j.at("positive").get<bool>()
                || ev.freq_at_center != j.at("freq_at_center").get<double>())
                throw IoError("replay mismatch at event " + std::to_string(expected));
            state = next;
            ++expected;
        }
        return state;
    } catch (const json::exception& e) {
        throw IoError("malformed event log " + path.string() + ": " + e.what());
    }
}

void write_freeze_json(const std::filesystem::path& path, const Params& p,
                       const FreezeReport& rep, const Estimate& final_cluster_volume)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open for writing: " + path.string());
    const json doc{{"schema_version", kSchemaVersion},
                   {"params", params_to_json(p)},
                   {"kappa_hat", rep.kappa_hat},
                   {"n_steps", rep.n_steps},
                   {"sup_freq", rep.sup_freq},
                   {"tau_alpha_hat", rep.tau_alpha_hat},
                   {"alpha", rep.alpha},
                   {"horizon_censored", rep.horizon_censored},
                   {"final_cluster_volume",
                    json{{"value", final_cluster_volume.value},
                         {"stderr", final_cluster_volume.stderror}}}};
    out << doc.dump(2) << '\n';
    out.flush();
    if (!out)
        throw IoError("write failed: " + path.string());
}

} // namespace slfv
