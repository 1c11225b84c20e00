#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "mvcn/model.hpp"
#include "mvcn/noise.hpp"

namespace mvcn {

inline constexpr int kSchemaVersion = 1;

enum class Study { Simulate, Poc, Tangent, Ibp };

std::string_view to_string(Study s) noexcept;

struct ModelConfig {
  std::string name = "linear";  // constant | linear | tanh
  Dims dims;
  Eigen::MatrixXd a, c, s0, s1;
  double kappa = 1.0;
  double beta0 = 0.0;
  double beta1 = 0.0;
  double lipschitz = -1.0;
};

struct InitConfig {
  std::vector<double> mean;  // empty: origin
  double std_dev = 1.0;
};

struct SimulateConfig {
  int stride = 1;           // grid stride of the emitted moment table
  bool write_paths = false; // also emit tables/paths.csv
  int lipschitz_samples = 64;
};

struct PocConfig {
  std::vector<int> ladder{64, 256, 1024};
  int n_ref = 8192;
  int reps = 8;
  int time_samples = 16;  // grid nodes used for the sup-over-t column
};

struct TangentConfig {
  std::vector<int> s_indices;  // empty: default set
  double eps = 1e-4;
  std::vector<std::string> fd_functions{"linear", "sin"};
  std::vector<int> moment_ladder;  // empty: no moment rows
  double moment_spread = 0.25;
  bool closed_form = true;
  bool d1_fd = true;
  double closed_form_tol = 1e-3;
};

struct IbpConfig {
  std::string mode = "both";  // spatial | measure | both
  std::vector<std::string> f{"linear"};
  std::vector<double> x;    // spatial pilot start (empty: origin)
  std::vector<double> phi;  // spatial weight (empty: first basis vector)
  std::vector<double> v;    // measure argument point (empty: origin)
  int pilots = 10000;
  int reps = 1;             // outer common-noise repetitions of the measure IBP
  int spatial_reps = 1;     // common paths for the spatial IBP, which holds conditionally on each
  double delta = 1e-8;
  double eps_fd = 1e-3;
  double bump_width = 0.25;
  double eps_skorokhod = 1e-4;
  int pilots_per_rep = 8;
  int max_direction_reruns = 64;
  bool duality = true;
  double rel_tol = 0.05;
};

/// One experiment. Validated against the model dimensions on load.
struct RunConfig {
  Study study = Study::Simulate;
  std::uint64_t seed = 1;
  TimeGrid grid;
  int N = 256;
  ModelConfig model;
  InitConfig init;
  SimulateConfig simulate;
  PocConfig poc;
  TangentConfig tangent;
  IbpConfig ibp;
  bool dump_noise = false;
};

/// Parse a schema-1 document. Unknown keys, wrong types and values
/// inconsistent with the model dimensions raise Config.
RunConfig parse_config(const nlohmann::json& doc);
/// Read and parse a file; a missing or unreadable file raises Io.
RunConfig load_config(const std::filesystem::path& path);
/// Canonical document; parse_config(to_json(c)) reproduces c.
nlohmann::json to_json(const RunConfig& cfg);

std::unique_ptr<CoefficientSet> build_model(const ModelConfig& mc);
/// Initial states for N particles from the config's seed.
std::vector<double> initial_states(const RunConfig& cfg, int N, std::uint64_t seed);

}  // namespace mvcn
