#include "mvcn/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <omp.h>

#include "CLI11.hpp"
#include "mvcn/errors.hpp"
#include "mvcn/record.hpp"

namespace mvcn {

namespace {

int exit_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io: return kExitIo;
    case ErrorKind::Config:
    case ErrorKind::EllipticityFailure:
    case ErrorKind::UnsupportedSize:
    case ErrorKind::ShapeMismatch:
    case ErrorKind::DerivativeUnavailable:
    case ErrorKind::MissingDerivative:
      return kExitRefused;
    default: return kExitNumericFailure;
  }
}

int resolve_threads(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("MVCN_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n > 0) return static_cast<int>(n);
    fail(ErrorKind::Config, "MVCN_THREADS must be a positive integer");
  }
  return omp_get_max_threads();
}

void report(const StudyResult& r, std::ostream& out) {
  for (const auto& f : r.flags) {
    out << (f.pass ? "PASS " : "FAIL ") << f.name;
    if (!f.detail.empty()) out << "  (" << f.detail << ")";
    out << '\n';
  }
  for (const auto& f : r.findings) out << "FINDING " << f << '\n';
}

struct Timed {
  StudyResult result;
  double seconds = 0.0;
};

Timed timed_run(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  Timed t{run_study(cfg), 0.0};
  t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return t;
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Particle simulation, Malliavin tangents and integration-by-parts checks for mean-field SDEs"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "mvcn_out", record_path;
  std::optional<std::uint64_t> seed;
  int threads = 0;

  std::vector<CLI::App*> runs;
  for (const char* name : {"simulate", "poc", "tangent", "ibp"}) {
    CLI::App* sub = app.add_subcommand(name, std::string("run the ") + name + " study");
    sub->add_option("--config", config_path, "JSON config")->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--threads", threads, "OpenMP threads (default: MVCN_THREADS)");
    runs.push_back(sub);
  }
  CLI::App* replay = app.add_subcommand("replay", "re-run a record.json and compare its tables bit for bit");
  replay->add_option("record", record_path, "record.json to replay")->required();
  replay->add_option("--out", out_dir, "directory for the replayed outputs");
  replay->add_option("--threads", threads, "OpenMP threads (default: MVCN_THREADS)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitPass : kExitRefused;
  }

  try {
    const int nt = resolve_threads(threads);
    omp_set_num_threads(nt);

    if (replay->parsed()) {
      const nlohmann::json rec = read_record(record_path);
      if (!rec.contains("config")) fail(ErrorKind::Config, "record has no config");
      const RunConfig cfg = parse_config(rec["config"]);
      if (rec.value("artifact_version", std::string()) != kArtifactVersion) {
        err << "warning: record written by version " << rec.value("artifact_version", std::string("?"))
            << ", replaying with " << kArtifactVersion << '\n';
      }
      const Timed t = timed_run(cfg);
      std::string why;
      const bool same = tables_identical(record_tables(rec), t.result.tables, &why);
      if (replay->count("--out")) write_outputs(out_dir, cfg, t.result, {t.seconds, nt, {}});
      if (!same) {
        err << "replay mismatch: " << why << '\n';
        return kExitNumericFailure;
      }
      out << "replay identical: " << t.result.tables.size() << " tables, " << nt << " threads\n";
      return kExitPass;
    }

    CLI::App* sub = nullptr;
    for (auto* s : runs) {
      if (s->parsed()) sub = s;
    }
    RunConfig cfg = load_config(config_path);
    if (to_string(cfg.study) != sub->get_name()) {
      fail(ErrorKind::Config, "config describes a " + std::string(to_string(cfg.study)) + " study, not " +
                                  sub->get_name());
    }
    if (seed) cfg.seed = *seed;

    Timed t;
    try {
      t = timed_run(cfg);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::EllipticityFailure) throw;
      err << "refused: " << e.what() << '\n';
      write_outputs(out_dir, cfg, StudyResult{}, {0.0, nt, e.what()});
      return kExitRefused;
    }
    write_outputs(out_dir, cfg, t.result, {t.seconds, nt, {}});
    report(t.result, out);
    const bool pass = t.result.pass();
    out << sub->get_name() << ": " << (pass ? "pass" : "fail") << " in " << t.seconds << " s, wrote " << out_dir
        << '\n';
    return pass ? kExitPass : kExitNumericFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumericFailure;
  }
}

int cli_dispatch(int argc, const char* const* argv) { return cli_dispatch(argc, argv, std::cout, std::cerr); }

}  // namespace mvcn
