#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "slfv/chain.hpp"
#include "slfv/diagnostics.hpp"

namespace slfv {

inline constexpr int kSchemaVersion = 1;

/// Raised for unreadable, unwritable or corrupt data files.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

nlohmann::json params_to_json(const Params& p);
Params params_from_json(const nlohmann::json& j);

/// Writes the trajectory as JSON Lines: a header object carrying the schema
/// version and Params, then one object per event with fields
/// {n, center, uniform, positive, freq_at_center}. Doubles are serialized
/// losslessly (shortest round-trip form).
void write_events_jsonl(const std::filesystem::path& path, const ChainState& trajectory);

/// Reads a JSONL event log back by replaying every event through the chain
/// kernel. Throws std::runtime_error if a stored outcome or frequency
/// disagrees with the replay bitwise.
ChainState read_events_jsonl(const std::filesystem::path& path);

/// Writes the freeze summary plus run provenance as a JSON document.
void write_freeze_json(const std::filesystem::path& path, const Params& p,
                       const FreezeReport& rep, const Estimate& final_cluster_volume);

/// Shortest decimal form of x that parses back to exactly the same double.
std::string format_double(double x);

} // namespace slfv
