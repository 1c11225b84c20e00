#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mvcn/config.hpp"
#include "mvcn/noise.hpp"

namespace mvcn {

/// Numeric table with an optional leading text column.
struct Table {
  std::string name;
  std::string label_column;  // empty: no label column
  std::vector<std::string> columns;
  std::vector<std::string> labels;
  std::vector<std::vector<double>> rows;

  void add(std::vector<double> row, std::string label = {});
};

struct Flag {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct StudyResult {
  std::vector<Table> tables;
  std::vector<Flag> flags;
  std::vector<std::string> findings;  // reported, never folded into pass()
  std::optional<NoiseBundle> noise;   // filled when the config asks for a dump

  bool pass() const noexcept;
  const Table* table(const std::string& name) const noexcept;
};

/// Seed of repetition r; noise, initial states and pilots of the repetition
/// all derive from it through separate stream families.
std::uint64_t rep_seed(const RunConfig& cfg, int r) noexcept;

StudyResult run_simulate_study(const RunConfig& cfg);
/// Distances of N-particle clouds to an n_ref reference driven by the same
/// common path, over `reps` common-noise repetitions.
StudyResult run_poc_study(const RunConfig& cfg);
/// Closed-form, finite-difference and moment rows for the tangent processes.
StudyResult run_tangent_validation(const RunConfig& cfg);
/// Spatial and measure integration by parts. A degenerate diffusion raises
/// EllipticityFailure, which callers report as a refusal.
StudyResult run_ibp_study(const RunConfig& cfg);

StudyResult run_study(const RunConfig& cfg);

}  // namespace mvcn
