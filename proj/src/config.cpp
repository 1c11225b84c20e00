#include "mvcn/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "mvcn/errors.hpp"

namespace mvcn {

using nlohmann::json;

std::string_view to_string(Study s) noexcept {
  switch (s) {
    case Study::Simulate: return "simulate";
    case Study::Poc: return "poc";
    case Study::Tangent: return "tangent";
    case Study::Ibp: return "ibp";
  }
  return "?";
}

namespace {

// Reads the members of one JSON object and rejects whatever it did not consume.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) fail(ErrorKind::Config, where_ + " must be an object");
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  const json* get(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  template <class T>
  void read(const std::string& key, T& dst) {
    if (const json* v = get(key)) {
      try {
        dst = v->get<T>();
      } catch (const json::exception&) {
        fail(ErrorKind::Config, "wrong type for " + path(key));
      }
    }
  }

  void read_u64(const std::string& key, std::uint64_t& dst) {
    if (const json* v = get(key)) {
      if (!v->is_number_unsigned()) fail(ErrorKind::Config, path(key) + " must be a non-negative integer");
      dst = v->get<std::uint64_t>();
    }
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) fail(ErrorKind::Config, "unknown key " + path(it.key()));
    }
  }

 private:
  const json& obj_;
  std::string where_;
  std::set<std::string> seen_;
};

// A scalar means that value on the diagonal; otherwise a rows x cols nested array.
Eigen::MatrixXd read_matrix(const json& v, int rows, int cols, const std::string& where) {
  if (v.is_number()) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(rows, cols);
    for (int k = 0; k < std::min(rows, cols); ++k) m(k, k) = v.get<double>();
    return m;
  }
  if (!v.is_array() || static_cast<int>(v.size()) != rows) {
    fail(ErrorKind::Config, where + " must be a number or " + std::to_string(rows) + " rows");
  }
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const json& row = v[r];
    if (!row.is_array() || static_cast<int>(row.size()) != cols) {
      fail(ErrorKind::Config, where + " row " + std::to_string(r) + " must have " + std::to_string(cols) + " entries");
    }
    for (int c = 0; c < cols; ++c) {
      if (!row[c].is_number()) fail(ErrorKind::Config, where + " entries must be numbers");
      m(r, c) = row[c].get<double>();
    }
  }
  return m;
}

json write_matrix(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

void check_vector(const std::vector<double>& v, int d, const std::string& where) {
  if (!v.empty() && static_cast<int>(v.size()) != d) {
    fail(ErrorKind::Config, where + " must have " + std::to_string(d) + " entries");
  }
}

ModelConfig parse_model(const json& obj) {
  ObjectReader r(obj, "model");
  ModelConfig mc;
  r.read("name", mc.name);
  r.read("d", mc.dims.d);
  r.read("m0", mc.dims.m0);
  r.read("m", mc.dims.m);
  try {
    mc.dims.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Config, e.what());
  }
  const int d = mc.dims.d;
  std::set<std::string> allowed;
  if (mc.name == "constant") {
    allowed = {"s0", "s1"};
  } else if (mc.name == "linear") {
    allowed = {"a", "c", "s0", "s1", "lipschitz"};
  } else if (mc.name == "tanh") {
    allowed = {"a", "c", "s0", "s1", "kappa", "beta0", "beta1", "lipschitz"};
  } else {
    fail(ErrorKind::Config, "unknown model '" + mc.name + "' (expected constant, linear or tanh)");
  }
  for (const char* key : {"a", "c", "s0", "s1", "kappa", "beta0", "beta1", "lipschitz"}) {
    if (r.has(key) && !allowed.count(key)) fail(ErrorKind::Config, "model '" + mc.name + "' takes no " + key);
  }
  auto matrix = [&](const char* key, int rows, int cols, double fallback) {
    const json* v = r.get(key);
    return v ? read_matrix(*v, rows, cols, r.path(key)) : read_matrix(json(fallback), rows, cols, r.path(key));
  };
  mc.a = matrix("a", d, d, mc.name == "constant" ? 0.0 : -0.5);
  mc.c = matrix("c", d, d, mc.name == "constant" ? 0.0 : 0.3);
  mc.s0 = matrix("s0", d, mc.dims.m0, 0.2);
  mc.s1 = matrix("s1", d, mc.dims.m, 0.4);
  r.read("kappa", mc.kappa);
  r.read("beta0", mc.beta0);
  r.read("beta1", mc.beta1);
  r.read("lipschitz", mc.lipschitz);
  r.finish();
  return mc;
}

}  // namespace

RunConfig parse_config(const json& doc) {
  ObjectReader top(doc, "config");
  RunConfig cfg;

  int schema = -1;
  top.read("schema_version", schema);
  if (schema != kSchemaVersion) {
    fail(ErrorKind::Config, "schema_version must be " + std::to_string(kSchemaVersion));
  }
  std::string study;
  top.read("study", study);
  if (study == "simulate") cfg.study = Study::Simulate;
  else if (study == "poc") cfg.study = Study::Poc;
  else if (study == "tangent") cfg.study = Study::Tangent;
  else if (study == "ibp") cfg.study = Study::Ibp;
  else fail(ErrorKind::Config, "study must be one of simulate, poc, tangent, ibp");

  top.read_u64("seed", cfg.seed);
  top.read("N", cfg.N);
  top.read("dump_noise", cfg.dump_noise);
  if (const json* g = top.get("grid")) {
    ObjectReader r(*g, "grid");
    r.read("T", cfg.grid.T);
    r.read("K", cfg.grid.K);
    r.finish();
  }
  try {
    cfg.grid.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Config, e.what());
  }
  if (cfg.N < 1) fail(ErrorKind::Config, "N must be positive");

  if (const json* m = top.get("model")) cfg.model = parse_model(*m);
  else cfg.model = parse_model(json::object());
  const int d = cfg.model.dims.d;

  if (const json* in = top.get("init")) {
    ObjectReader r(*in, "init");
    r.read("mean", cfg.init.mean);
    r.read("std", cfg.init.std_dev);
    r.finish();
  }
  check_vector(cfg.init.mean, d, "init.mean");
  if (!(cfg.init.std_dev >= 0.0)) fail(ErrorKind::Config, "init.std must be non-negative");

  if (const json* s = top.get("simulate")) {
    ObjectReader r(*s, "simulate");
    r.read("stride", cfg.simulate.stride);
    r.read("write_paths", cfg.simulate.write_paths);
    r.read("lipschitz_samples", cfg.simulate.lipschitz_samples);
    r.finish();
  }
  if (cfg.simulate.stride < 1) fail(ErrorKind::Config, "simulate.stride must be positive");

  if (const json* p = top.get("poc")) {
    ObjectReader r(*p, "poc");
    r.read("ladder", cfg.poc.ladder);
    r.read("n_ref", cfg.poc.n_ref);
    r.read("reps", cfg.poc.reps);
    r.read("time_samples", cfg.poc.time_samples);
    r.finish();
  }
  {
    PocConfig& p = cfg.poc;
    if (p.ladder.empty() || p.reps < 1 || p.time_samples < 1) fail(ErrorKind::Config, "poc needs a ladder, reps and time_samples");
    if (!std::is_sorted(p.ladder.begin(), p.ladder.end()) ||
        std::adjacent_find(p.ladder.begin(), p.ladder.end()) != p.ladder.end()) {
      fail(ErrorKind::Config, "poc.ladder must be strictly increasing");
    }
    int largest = 0;
    for (int n : p.ladder) {
      if (n < 1 || n > p.n_ref) fail(ErrorKind::Config, "poc.ladder entries must lie in [1, n_ref]");
      if (n < p.n_ref) largest = std::max(largest, n);
    }
    if (static_cast<long>(p.n_ref) < 8L * largest) fail(ErrorKind::Config, "poc.n_ref must be at least 8 times the ladder");
  }

  if (const json* t = top.get("tangent")) {
    ObjectReader r(*t, "tangent");
    r.read("s_indices", cfg.tangent.s_indices);
    r.read("eps", cfg.tangent.eps);
    r.read("fd_functions", cfg.tangent.fd_functions);
    r.read("moment_ladder", cfg.tangent.moment_ladder);
    r.read("moment_spread", cfg.tangent.moment_spread);
    r.read("closed_form", cfg.tangent.closed_form);
    r.read("d1_fd", cfg.tangent.d1_fd);
    r.read("closed_form_tol", cfg.tangent.closed_form_tol);
    r.finish();
  }
  {
    const auto& s = cfg.tangent.s_indices;
    for (std::size_t q = 0; q < s.size(); ++q) {
      if (s[q] < 0 || s[q] > cfg.grid.K || (q > 0 && s[q] <= s[q - 1])) {
        fail(ErrorKind::Config, "tangent.s_indices must be strictly increasing in [0, K]");
      }
    }
    if (!(cfg.tangent.eps > 0.0)) fail(ErrorKind::Config, "tangent.eps must be positive");
    for (int n : cfg.tangent.moment_ladder) {
      if (n < 1) fail(ErrorKind::Config, "tangent.moment_ladder entries must be positive");
    }
  }

  if (const json* b = top.get("ibp")) {
    ObjectReader r(*b, "ibp");
    IbpConfig& c = cfg.ibp;
    r.read("mode", c.mode);
    r.read("f", c.f);
    r.read("x", c.x);
    r.read("phi", c.phi);
    r.read("v", c.v);
    r.read("pilots", c.pilots);
    r.read("reps", c.reps);
    r.read("spatial_reps", c.spatial_reps);
    r.read("delta", c.delta);
    r.read("eps_fd", c.eps_fd);
    r.read("bump_width", c.bump_width);
    r.read("eps_skorokhod", c.eps_skorokhod);
    r.read("pilots_per_rep", c.pilots_per_rep);
    r.read("max_direction_reruns", c.max_direction_reruns);
    r.read("duality", c.duality);
    r.read("rel_tol", c.rel_tol);
    r.finish();
  }
  {
    const IbpConfig& c = cfg.ibp;
    if (c.mode != "spatial" && c.mode != "measure" && c.mode != "both") {
      fail(ErrorKind::Config, "ibp.mode must be spatial, measure or both");
    }
    for (const auto& name : c.f) {
      if (name != "linear" && name != "sin" && name != "indicator") {
        fail(ErrorKind::Config, "unknown test function '" + name + "'");
      }
    }
    check_vector(c.x, d, "ibp.x");
    check_vector(c.phi, d, "ibp.phi");
    check_vector(c.v, d, "ibp.v");
    if (c.pilots < 2 || c.reps < 1 || c.spatial_reps < 1 || c.pilots_per_rep < 1) fail(ErrorKind::Config, "ibp pilot and rep counts must be positive");
    if (!(c.delta > 0.0) || !(c.eps_fd > 0.0) || !(c.eps_skorokhod > 0.0) || !(c.bump_width > 0.0)) {
      fail(ErrorKind::Config, "ibp step sizes must be positive");
    }
  }

  top.finish();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Config, "config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

json to_json(const RunConfig& cfg) {
  const ModelConfig& mc = cfg.model;
  json model = {{"name", mc.name}, {"d", mc.dims.d}, {"m0", mc.dims.m0}, {"m", mc.dims.m},
                {"s0", write_matrix(mc.s0)}, {"s1", write_matrix(mc.s1)}};
  if (mc.name != "constant") {
    model["a"] = write_matrix(mc.a);
    model["c"] = write_matrix(mc.c);
    model["lipschitz"] = mc.lipschitz;
  }
  if (mc.name == "tanh") {
    model["kappa"] = mc.kappa;
    model["beta0"] = mc.beta0;
    model["beta1"] = mc.beta1;
  }
  const IbpConfig& b = cfg.ibp;
  const TangentConfig& t = cfg.tangent;
  return {
      {"schema_version", kSchemaVersion},
      {"study", std::string(to_string(cfg.study))},
      {"seed", cfg.seed},
      {"grid", {{"T", cfg.grid.T}, {"K", cfg.grid.K}}},
      {"N", cfg.N},
      {"model", model},
      {"init", {{"mean", cfg.init.mean}, {"std", cfg.init.std_dev}}},
      {"simulate",
       {{"stride", cfg.simulate.stride},
        {"write_paths", cfg.simulate.write_paths},
        {"lipschitz_samples", cfg.simulate.lipschitz_samples}}},
      {"poc",
       {{"ladder", cfg.poc.ladder},
        {"n_ref", cfg.poc.n_ref},
        {"reps", cfg.poc.reps},
        {"time_samples", cfg.poc.time_samples}}},
      {"tangent",
       {{"s_indices", t.s_indices},
        {"eps", t.eps},
        {"fd_functions", t.fd_functions},
        {"moment_ladder", t.moment_ladder},
        {"moment_spread", t.moment_spread},
        {"closed_form", t.closed_form},
        {"d1_fd", t.d1_fd},
        {"closed_form_tol", t.closed_form_tol}}},
      {"ibp",
       {{"mode", b.mode},
        {"f", b.f},
        {"x", b.x},
        {"phi", b.phi},
        {"v", b.v},
        {"pilots", b.pilots},
        {"reps", b.reps},
        {"spatial_reps", b.spatial_reps},
        {"delta", b.delta},
        {"eps_fd", b.eps_fd},
        {"bump_width", b.bump_width},
        {"eps_skorokhod", b.eps_skorokhod},
        {"pilots_per_rep", b.pilots_per_rep},
        {"max_direction_reruns", b.max_direction_reruns},
        {"duality", b.duality},
        {"rel_tol", b.rel_tol}}},
      {"dump_noise", cfg.dump_noise},
  };
}

std::unique_ptr<CoefficientSet> build_model(const ModelConfig& mc) {
  if (mc.name == "constant") return make_model(ConstantParams{mc.s0, mc.s1});
  if (mc.name == "linear") return make_model(LinearMeanFieldParams{mc.a, mc.c, mc.s0, mc.s1, mc.lipschitz});
  if (mc.name == "tanh") {
    return make_model(TanhInteractionParams{mc.a, mc.c, mc.kappa, mc.s0, mc.s1, mc.beta0, mc.beta1, mc.lipschitz});
  }
  fail(ErrorKind::Config, "unknown model '" + mc.name + "'");
}

std::vector<double> initial_states(const RunConfig& cfg, int N, std::uint64_t seed) {
  const int d = cfg.model.dims.d;
  std::vector<double> mean = cfg.init.mean;
  if (mean.empty()) mean.assign(d, 0.0);
  return sample_initial(N, d, mean, cfg.init.std_dev, seed);
}

}  // namespace mvcn
