#pragma once

// JSON (de)serialization for reports and traces. Kept out of the core
// headers so that only translation units that need JSON pull it in.

#include <filesystem>
#include <span>

#include "json.hpp"
#include "subrisk/bounds.hpp"
#include "subrisk/experiment.hpp"
#include "subrisk/trainer.hpp"

namespace subrisk {

void to_json(nlohmann::json& j, const BoundReport& r);
void from_json(const nlohmann::json& j, BoundReport& r);
void to_json(nlohmann::json& j, const TraceRecord& r);
void to_json(nlohmann::json& j, const Summary& s);
void from_json(const nlohmann::json& j, Summary& s);
void to_json(nlohmann::json& j, const RunEntry& e);
void from_json(const nlohmann::json& j, RunEntry& e);
void to_json(nlohmann::json& j, const RunAggregate& a);
void from_json(const nlohmann::json& j, RunAggregate& a);
void to_json(nlohmann::json& j, const RunReport& r);
void from_json(const nlohmann::json& j, RunReport& r);

/// One JSON object per line, one line per optimization step.
void write_trace_jsonl(std::span<const TraceRecord> trace, const std::filesystem::path& path);

bool operator==(const BoundReport& a, const BoundReport& b);
bool operator==(const RunEntry& a, const RunEntry& b);
bool operator==(const Summary& a, const Summary& b);
bool operator==(const RunAggregate& a, const RunAggregate& b);
bool operator==(const RunReport& a, const RunReport& b);

}  // namespace subrisk
