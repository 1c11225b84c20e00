#include "mvcn/record.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "mvcn/errors.hpp"

namespace mvcn {

using nlohmann::json;

namespace {

// JSON has no NaN or infinity; they are stored as strings.
json encode(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

double decode(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  fail(ErrorKind::Config, "record table holds a non-numeric cell");
}

std::string format17(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

}  // namespace

json table_to_json(const Table& t) {
  json rows = json::array();
  for (const auto& r : t.rows) {
    json row = json::array();
    for (double x : r) row.push_back(encode(x));
    rows.push_back(std::move(row));
  }
  json j = {{"name", t.name}, {"columns", t.columns}, {"rows", rows}};
  if (!t.label_column.empty()) {
    j["label_column"] = t.label_column;
    j["labels"] = t.labels;
  }
  return j;
}

Table table_from_json(const json& j) {
  Table t;
  try {
    t.name = j.at("name").get<std::string>();
    t.columns = j.at("columns").get<std::vector<std::string>>();
    if (j.contains("label_column")) {
      t.label_column = j.at("label_column").get<std::string>();
      t.labels = j.at("labels").get<std::vector<std::string>>();
    }
    for (const auto& row : j.at("rows")) {
      std::vector<double> r;
      for (const auto& x : row) r.push_back(decode(x));
      t.rows.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("malformed table in record: ") + e.what());
  }
  return t;
}

json make_record(const RunConfig& cfg, const StudyResult& result, const RunInfo& info) {
  json tables = json::array();
  for (const auto& t : result.tables) tables.push_back(table_to_json(t));
  json flags = json::array();
  for (const auto& f : result.flags) flags.push_back({{"name", f.name}, {"pass", f.pass}, {"detail", f.detail}});
  json rec = {
      {"artifact_version", kArtifactVersion},
      {"study", std::string(to_string(cfg.study))},
      {"seed", cfg.seed},
      {"config", to_json(cfg)},
      {"wall_clock_seconds", info.wall_seconds},
      {"threads", info.threads},
      {"tables", tables},
      {"flags", flags},
      {"findings", result.findings},
      {"pass", info.refused.empty() && result.pass()},
  };
  if (!info.refused.empty()) rec["refused"] = info.refused;
  return rec;
}

void write_table_csv(const Table& t, std::ostream& os) {
  bool first = true;
  auto sep = [&] {
    if (!first) os << ',';
    first = false;
  };
  if (!t.label_column.empty()) {
    sep();
    os << csv_field(t.label_column);
  }
  for (const auto& c : t.columns) {
    sep();
    os << csv_field(c);
  }
  os << '\n';
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    first = true;
    if (!t.label_column.empty()) {
      sep();
      os << csv_field(t.labels[r]);
    }
    for (double x : t.rows[r]) {
      sep();
      os << format17(x);
    }
    os << '\n';
  }
}

void write_outputs(const std::filesystem::path& dir, const RunConfig& cfg, const StudyResult& result,
                   const RunInfo& info) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "tables", ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + (dir / "tables").string() + ": " + ec.message());
  {
    std::ofstream os(dir / "record.json");
    if (!os) fail(ErrorKind::Io, "cannot write " + (dir / "record.json").string());
    os << make_record(cfg, result, info).dump(2) << '\n';
    if (!os) fail(ErrorKind::Io, "write to record.json failed");
  }
  for (const auto& t : result.tables) {
    const auto path = dir / "tables" / (t.name + ".csv");
    std::ofstream os(path);
    if (!os) fail(ErrorKind::Io, "cannot write " + path.string());
    write_table_csv(t, os);
    if (!os) fail(ErrorKind::Io, "write to " + path.string() + " failed");
  }
  if (result.noise) {
    std::ofstream os(dir / "noise.bin", std::ios::binary);
    if (!os) fail(ErrorKind::Io, "cannot write noise.bin");
    write_bundle(*result.noise, os);
  }
}

json read_record(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open record " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Config, "record " + path.string() + " is not valid JSON: " + e.what());
  }
}

std::vector<Table> record_tables(const json& record) {
  if (!record.contains("tables") || !record["tables"].is_array()) fail(ErrorKind::Config, "record has no tables");
  std::vector<Table> out;
  for (const auto& t : record["tables"]) out.push_back(table_from_json(t));
  return out;
}

bool tables_identical(const std::vector<Table>& a, const std::vector<Table>& b, std::string* why) {
  auto fail_with = [&](std::string msg) {
    if (why) *why = std::move(msg);
    return false;
  };
  if (a.size() != b.size()) return fail_with("table count differs");
  for (std::size_t t = 0; t < a.size(); ++t) {
    const Table& x = a[t];
    const Table& y = b[t];
    if (x.name != y.name || x.columns != y.columns || x.labels != y.labels || x.rows.size() != y.rows.size()) {
      return fail_with("table " + x.name + " differs in shape");
    }
    for (std::size_t r = 0; r < x.rows.size(); ++r) {
      if (x.rows[r].size() != y.rows[r].size()) return fail_with("table " + x.name + " row width differs");
      for (std::size_t c = 0; c < x.rows[r].size(); ++c) {
        const double p = x.rows[r][c], q = y.rows[r][c];
        const bool same = (std::isnan(p) && std::isnan(q)) ||
                          std::bit_cast<std::uint64_t>(p) == std::bit_cast<std::uint64_t>(q);
        if (!same) {
          return fail_with("table " + x.name + " row " + std::to_string(r) + " column " + std::to_string(c) + ": " +
                           format17(p) + " vs " + format17(q));
        }
      }
    }
  }
  return true;
}

}  // namespace mvcn
