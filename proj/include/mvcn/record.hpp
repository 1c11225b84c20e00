#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "mvcn/studies.hpp"

namespace mvcn {

inline constexpr const char* kArtifactVersion = MVCN_VERSION;

struct RunInfo {
  double wall_seconds = 0.0;
  int threads = 1;
  std::string refused;  // non-empty when the study refused to run
};

/// record.json content: config echo, artifact version, seed, wall-clock,
/// tables, flags and findings.
nlohmann::json make_record(const RunConfig& cfg, const StudyResult& result, const RunInfo& info);

/// Writes record.json, tables/<name>.csv and, when present, noise.bin under
/// `dir` (created if missing). Raises Io on failure.
void write_outputs(const std::filesystem::path& dir, const RunConfig& cfg, const StudyResult& result,
                   const RunInfo& info);

/// CSV with a header row; numbers at 17 significant digits.
void write_table_csv(const Table& table, std::ostream& os);

nlohmann::json table_to_json(const Table& table);
Table table_from_json(const nlohmann::json& j);

nlohmann::json read_record(const std::filesystem::path& path);
/// Tables stored in a record.
std::vector<Table> record_tables(const nlohmann::json& record);

/// Bitwise comparison (NaN equal to NaN). On mismatch `why` names the first
/// differing cell.
bool tables_identical(const std::vector<Table>& a, const std::vector<Table>& b, std::string* why = nullptr);

}  // namespace mvcn
