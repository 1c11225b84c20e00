// Acceptance suite: one PASS/FAIL line per criterion C1-C8. Oracles are
// computed here, independently of the study code; the studies only supply
// the Monte Carlo estimates.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "../helpers.hpp"
#include "../oracles.hpp"
#include "mvcn/cli.hpp"
#include "mvcn/errors.hpp"
#include "mvcn/ibp.hpp"
#include "mvcn/record.hpp"

using namespace mvcn;
using namespace mvcn::test;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = MVCN_FIXTURE_DIR;
const fs::path kScratch = MVCN_SCRATCH_DIR;

// Pinned tolerances.
constexpr double kC1Rel = 1e-3;
constexpr double kC1Seconds = 10.0;
constexpr double kC2Eps = 1e-4;
constexpr double kC2Seconds = 60.0;
constexpr double kC3Spread = 0.25;
constexpr double kC4Slope = -0.5;
constexpr double kSeMultiple = 3.0;
constexpr double kC6GammaAbs = 1e-3;
constexpr double kC6Rel = 0.05;
constexpr long kC6MinSeeds = 10000;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}
std::string g(double v) { return fmt("%.6g", v); }

struct Line {
  bool pass = true;
  std::vector<std::string> notes;
  std::vector<std::string> findings;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    notes.push_back((ok ? "" : "!") + what);
  }
};

double rel(double got, double want) { return std::abs(got - want) / std::abs(want); }

const Table& need_table(const StudyResult& r, const std::string& name) {
  const Table* t = r.table(name);
  if (!t) throw std::runtime_error("study produced no table " + name);
  return *t;
}

double cell(const Table& t, std::size_t row, const std::string& col) {
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    if (t.columns[c] == col) return t.rows.at(row)[c];
  }
  throw std::runtime_error("table " + t.name + " has no column " + col);
}

std::size_t row_of(const Table& t, const std::string& label) {
  for (std::size_t r = 0; r < t.labels.size(); ++r) {
    if (t.labels[r] == label) return r;
  }
  throw std::runtime_error("table " + t.name + " has no row " + label);
}

bool agree3(double a, double sa, double b, double sb, double rel_tol, double scale) {
  return std::abs(a - b) <= rel_tol * std::abs(scale) + kSeMultiple * std::hypot(sa, sb);
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mvcn");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return cli_dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
}

// ---------------------------------------------------------------------------

// Linear model a=-0.5, c=0.3, s0=0.2, s1=0.4, T=1, K=2^12.
Line c1() {
  Line L;
  const auto t0 = Clock::now();
  const RunConfig cfg = load_config(kFixtures / "linear_tangent.json");
  const auto m = build_model(cfg.model);
  const std::uint64_t seed = rep_seed(cfg, 0);
  const NoiseBundle nb = generate(cfg.grid, cfg.N, 1, 1, seed);
  const Trajectory tr = simulate_ips(*m, nb, initial_states(cfg, cfg.N, seed));
  const double D0 = run_tangent_d0(*m, tr, nb, {0}).block.at(0, 0, 0);
  const double D1 = d1_value(run_tangent_d1(*m, tr, nb, 0, 0, D1Mode::Limit), 0)(0, 0);
  const LionsRun run = run_lions_tangent(*m, tr, nb, pilot_noise_for(nb, 1, seed), {0.0}, false);
  const double secs = seconds_since(t0);
  L.check(cfg.grid.K == 4096, "K=4096");
  L.check(rel(D0, 0.2 * std::exp(-0.2)) <= kC1Rel, "D0 rel " + g(rel(D0, 0.2 * std::exp(-0.2))));
  L.check(rel(D1, 0.4 * std::exp(-0.5)) <= kC1Rel, "D1 rel " + g(rel(D1, 0.4 * std::exp(-0.5))));
  const double w = run.fv.block.at(0, 0, 0);
  L.check(rel(w, std::exp(-0.5)) <= kC1Rel, "w rel " + g(rel(w, std::exp(-0.5))));
  const double G = run.lt.gamma.at(0, 0, 0), Go = std::exp(-0.2) - std::exp(-0.5);
  L.check(rel(G, Go) <= kC1Rel, "Gamma rel " + g(rel(G, Go)));
  L.check(secs <= kC1Seconds, fmt("%.2f s", secs));
  return L;
}

// Tanh model, N=1024, K=2^10, eps=1e-4, F = mean f(X_T^i) for f in {linear, sin}.
Line c2() {
  Line L;
  const auto t0 = Clock::now();
  const RunConfig cfg = load_config(kFixtures / "tanh_tangent.json");
  L.check(cfg.N == 1024 && cfg.grid.K == 1024 && cfg.model.name == "tanh", "N=1024 K=1024 tanh");
  const auto m = build_model(cfg.model);
  const std::uint64_t seed = rep_seed(cfg, 0);
  const NoiseBundle nb = generate(cfg.grid, cfg.N, 1, 1, seed);
  const auto init = initial_states(cfg, cfg.N, seed);
  const Trajectory tr = simulate_ips(*m, nb, init);
  CameronMartinDirection h{cfg.grid, 1, {}};
  for (int k = 0; k < cfg.grid.K; ++k) h.hprime.push_back(0.8 + std::sin(3.0 * cfg.grid.node(k)));
  const TangentBlock Y = run_d0_directional(*m, tr, nb, h);
  const Trajectory up = simulate_ips(*m, bump_common(nb, h, kC2Eps), init);
  const Trajectory dn = simulate_ips(*m, bump_common(nb, h, -kC2Eps), init);
  const int K = cfg.grid.K;
  const double tol = 3.0 * (kC2Eps + std::sqrt(cfg.grid.dt()));
  const std::vector<std::pair<std::string, std::function<double(double)>>> fs{{"linear", [](double x) { return x; }},
                                                                             {"sin", [](double x) { return std::sin(x); }}};
  const std::vector<std::function<double(double)>> dfs{[](double) { return 1.0; }, [](double x) { return std::cos(x); }};
  for (std::size_t q = 0; q < fs.size(); ++q) {
    double fd = 0.0, pair = 0.0;
    for (int i = 0; i < cfg.N; ++i) {
      fd += (fs[q].second(up.state(K, i)[0]) - fs[q].second(dn.state(K, i)[0])) / (2 * kC2Eps * cfg.N);
      pair += dfs[q](tr.state(K, i)[0]) * Y.at(i, 0, 0) / cfg.N;
    }
    L.check(rel(pair, fd) <= tol, fs[q].first + " rel " + g(rel(pair, fd)) + " <= " + g(tol));
  }
  const double secs = seconds_since(t0);
  L.check(secs <= kC2Seconds, fmt("%.1f s", secs));
  return L;
}

// Particle-averaged sup_s |D0_s X_T|^2 on the tanh model across N.
Line c3() {
  Line L;
  const RunConfig cfg = load_config(kFixtures / "tanh_moments.json");
  const auto m = build_model(cfg.model);
  std::vector<double> sup;
  for (int N : {128, 512, 2048}) {
    const std::uint64_t seed = rep_seed(cfg, 0);
    const NoiseBundle nb = generate(cfg.grid, N, 1, 1, seed);
    const Trajectory tr = simulate_ips(*m, nb, initial_states(cfg, N, seed));
    const TangentD0 tg = run_tangent_d0(*m, tr, nb, cfg.tangent.s_indices);
    double best = 0.0;
    for (int q = 0; q < tg.S(); ++q) {
      double acc = 0.0;
      for (int i = 0; i < N; ++i) acc += std::pow(tg.block.at(i, 0, q), 2);
      best = std::max(best, acc / N);
    }
    sup.push_back(best);
    L.notes.push_back("N=" + std::to_string(N) + " " + g(best));
  }
  const auto [lo, hi] = std::minmax_element(sup.begin(), sup.end());
  const double spread = (*hi - *lo) / *lo;
  L.check(spread <= kC3Spread, "spread " + g(spread));
  return L;
}

// Conditional PoC along {64, 256, 1024} against N_ref = 8192.
Line c4() {
  Line L;
  const RunConfig cfg = load_config(kFixtures / "linear_poc.json");
  L.check(cfg.poc.ladder == std::vector<int>{64, 256, 1024} && cfg.poc.n_ref == 8192, "ladder 64/256/1024 ref 8192");
  const StudyResult r = run_study(cfg);
  const Table& t = need_table(r, "poc");
  std::vector<double> ns, mean, se;
  for (std::size_t q = 0; q < t.rows.size(); ++q) {
    ns.push_back(cell(t, q, "N"));
    mean.push_back(cell(t, q, "w2sq_T"));
    se.push_back(cell(t, q, "se_w2sq_T"));
    L.notes.push_back("N=" + g(ns.back()) + " " + g(mean.back()) + "+-" + g(se.back()));
  }
  bool dec = true;
  for (std::size_t q = 1; q < mean.size(); ++q) dec = dec && mean[q] < mean[q - 1] + std::hypot(se[q], se[q - 1]);
  L.check(dec, "decreasing");
  // Least-squares slope of log E W2^2 against log N.
  const double n = static_cast<double>(ns.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t q = 0; q < ns.size(); ++q) {
    const double x = std::log(ns[q]), y = std::log(mean[q]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  L.check(slope <= kC4Slope, "slope " + g(slope));
  return L;
}

struct IbpRuns {
  StudyResult linear, constant, tanh;
  RunConfig linear_cfg, constant_cfg, tanh_cfg;
};

// Spatial IBP: linear model rhs vs e^{-0.5}; constant model with sin vs quadrature.
Line c5(const IbpRuns& runs) {
  Line L;
  {
    const Table& t = need_table(runs.linear, "ibp_spatial");
    const std::size_t r = row_of(t, "linear");
    const double rhs = cell(t, r, "rhs"), se = cell(t, r, "se_rhs");
    L.check(runs.linear_cfg.ibp.pilots >= 10000, "pilots " + std::to_string(runs.linear_cfg.ibp.pilots));
    L.check(std::abs(rhs - std::exp(-0.5)) <= kSeMultiple * se,
            "linear rhs " + g(rhs) + "+-" + g(se) + " vs " + g(std::exp(-0.5)));
  }
  {
    const RunConfig& cfg = runs.constant_cfg;
    const Table& t = need_table(runs.constant, "ibp_spatial");
    const std::size_t r = row_of(t, "sin");
    const NoiseBundle nb = generate(cfg.grid, cfg.N, 1, 1, rep_seed(cfg, 0));
    const double W0 = std::accumulate(nb.dW0.begin(), nb.dW0.end(), 0.0);
    const double x = cfg.ibp.x.at(0), s0 = cfg.model.s0(0, 0), s1 = cfg.model.s1(0, 0), T = cfg.grid.T;
    const double oracle = gaussian_expectation([&](double z) { return std::cos(x + s0 * W0 + s1 * std::sqrt(T) * z); });
    const double lhs = cell(t, r, "lhs"), sl = cell(t, r, "se_lhs"), rhs = cell(t, r, "rhs"), sr = cell(t, r, "se_rhs");
    L.check(agree3(lhs, sl, rhs, sr, 0.0, 0.0), "sin lhs " + g(lhs) + " rhs " + g(rhs));
    L.check(agree3(lhs, sl, oracle, 0.0, 0.0, 0.0), "lhs vs quadrature " + g(oracle));
    L.check(agree3(rhs, sr, oracle, 0.0, 0.0, 0.0), "rhs vs quadrature");
  }
  return L;
}

// Measure IBP: linear closed form, tanh three-way agreement.
Line c6(const IbpRuns& runs) {
  Line L;
  const double Go = std::exp(-0.2) - std::exp(-0.5);
  {
    const Table& t = need_table(runs.linear, "ibp_measure");
    const std::size_t r = row_of(t, "linear");
    const double gm = cell(t, r, "lhs_gamma"), gs = cell(t, r, "se_gamma");
    const double rhs = cell(t, r, "rhs"), rs = cell(t, r, "se_rhs");
    L.check(std::abs(gm - Go) <= kC6GammaAbs && gs <= 1e-12, "linear Gamma " + g(gm) + " vs " + g(Go));
    L.check(std::abs(rhs - Go) <= kSeMultiple * rs, "linear rhs " + g(rhs) + "+-" + g(rs));
    const double du = cell(t, r, "duality"), ds = cell(t, r, "se_duality");
    if (std::abs(du - gm) > kSeMultiple * ds + 2e-3 * Go) {
      L.findings.push_back("linear: pairing <D0 X_T, h> = " + g(du) + "+-" + g(ds) + " against Gamma_T " + g(gm) +
                           "; D0_r X_T h(r) is not r-independent");
    }
  }
  {
    const RunConfig& cfg = runs.tanh_cfg;
    const long seeds = static_cast<long>(cfg.N) * cfg.ibp.reps;
    L.check(cfg.N == 1024 && seeds >= kC6MinSeeds, "tanh N=1024, " + std::to_string(seeds) + " particle seeds");
    const Table& t = need_table(runs.tanh, "ibp_measure");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const double gm = cell(t, r, "lhs_gamma"), gs = cell(t, r, "se_gamma");
      const double fd = cell(t, r, "lhs_fd"), fs = cell(t, r, "se_fd");
      const double rhs = cell(t, r, "rhs"), rs = cell(t, r, "se_rhs");
      const std::string f = t.labels[r];
      L.check(agree3(gm, gs, fd, fs, kC6Rel, gm), "tanh " + f + " gamma " + g(gm) + " vs fd " + g(fd));
      L.check(agree3(gm, gs, rhs, rs, kC6Rel, gm), "gamma vs rhs " + g(rhs) + "+-" + g(rs));
      L.check(agree3(fd, fs, rhs, rs, kC6Rel, gm), "fd vs rhs");
      const double du = cell(t, r, "duality"), ds = cell(t, r, "se_duality");
      if (std::abs(du - gm) > kSeMultiple * std::hypot(ds, gs) + 2e-3 * std::abs(gm)) {
        L.findings.push_back("tanh " + f + ": pairing <D0 X_T, h> = " + g(du) + "+-" + g(ds) + " against Gamma " +
                             g(gm));
      }
    }
  }
  return L;
}

// Replay of one record per study at threads {1, 4}.
Line c7() {
  Line L;
  const std::vector<std::pair<std::string, std::string>> runs{{"simulate", "tanh_simulate.json"},
                                                              {"poc", "linear_poc.json"},
                                                              {"tangent", "linear_tangent.json"},
                                                              {"ibp", "constant_ibp.json"}};
  for (const auto& [study, fixture] : runs) {
    const fs::path out = kScratch / ("replay_" + study);
    const int first = cli({study, "--config", (kFixtures / fixture).string(), "--out", out.string(), "--threads", "4"});
    const std::string rec = (out / "record.json").string();
    const int one = cli({"replay", rec, "--threads", "1"});
    const int four = cli({"replay", rec, "--threads", "4"});
    L.check(first == kExitPass && one == kExitPass && four == kExitPass,
            study + " " + std::to_string(first) + "/" + std::to_string(one) + "/" + std::to_string(four));
  }
  return L;
}

// Degeneracy contracts.
Line c8(const IbpRuns& runs) {
  Line L;
  const int s0 = cli({"ibp", "--config", (kFixtures / "s0_zero_ibp.json").string(), "--out",
                      (kScratch / "s0_zero").string()});
  L.check(s0 == kExitRefused, "s0=0 exit " + std::to_string(s0));
  const int s1 = cli({"ibp", "--config", (kFixtures / "s1_zero_ibp.json").string(), "--out",
                      (kScratch / "s1_zero").string()});
  L.check(s1 == kExitRefused, "s1=0 exit " + std::to_string(s1));

  const RunConfig& cfg = runs.constant_cfg;
  const auto m = build_model(cfg.model);
  const NoiseBundle nb = generate(cfg.grid, cfg.N, 1, 1, rep_seed(cfg, 0));
  const Trajectory tr = simulate_ips(*m, nb, initial_states(cfg, cfg.N, rep_seed(cfg, 0)));
  const LionsRun run = run_lions_tangent(*m, tr, nb, pilot_noise_for(nb, 4, 1), {0.5}, false);
  bool zero = true;
  for (double v : run.lt.gamma.data) zero = zero && v == 0.0;
  for (double v : run.lt.psi.data) zero = zero && v == 0.0;
  L.check(zero, "constant Gamma, Psi exactly 0");
  const Table& t = need_table(runs.constant, "ibp_measure");
  bool mz = true;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    mz = mz && cell(t, r, "lhs_gamma") == 0.0 && cell(t, r, "lhs_fd") == 0.0 && cell(t, r, "rhs") == 0.0;
  }
  L.check(mz, "constant measure IBP exactly 0");
  return L;
}

}  // namespace

int main() {
  fs::create_directories(kScratch);
  int failed = 0;
  auto report = [&](const char* id, const char* title, const std::function<Line()>& fn) {
    const auto t0 = Clock::now();
    Line L;
    try {
      L = fn();
    } catch (const std::exception& e) {
      L.pass = false;
      L.notes.push_back(std::string("exception: ") + e.what());
    }
    std::string detail;
    for (const auto& n : L.notes) detail += (detail.empty() ? "" : "; ") + n;
    std::printf("%s %s  %s  [%s] (%.1f s)\n", id, L.pass ? "PASS" : "FAIL", title, detail.c_str(), seconds_since(t0));
    for (const auto& f : L.findings) std::printf("   FINDING %s\n", f.c_str());
    std::fflush(stdout);
    if (!L.pass) ++failed;
  };

  report("C1", "closed-form tangents", c1);
  report("C2", "Cameron-Martin pairing vs FD", c2);
  report("C3", "tangent moments bounded in N", c3);
  report("C4", "conditional propagation of chaos", c4);

  IbpRuns runs;
  std::string ibp_error;
  try {
    runs.linear_cfg = load_config(kFixtures / "linear_ibp.json");
    runs.constant_cfg = load_config(kFixtures / "constant_ibp.json");
    runs.tanh_cfg = load_config(kFixtures / "tanh_ibp.json");
    runs.linear = run_study(runs.linear_cfg);
    runs.constant = run_study(runs.constant_cfg);
    runs.tanh = run_study(runs.tanh_cfg);
  } catch (const std::exception& e) {
    ibp_error = e.what();
  }
  auto guarded = [&](Line (*fn)(const IbpRuns&)) {
    return [&, fn] {
      if (!ibp_error.empty()) throw std::runtime_error(ibp_error);
      return fn(runs);
    };
  };
  report("C5", "spatial IBP", guarded(c5));
  report("C6", "measure IBP", guarded(c6));
  report("C7", "replay determinism", c7);
  report("C8", "degeneracy contracts", guarded(c8));

  std::printf("%d of 8 criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
