// Copyright 2026 The odgate Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// odgate command-line front end. Exit codes: 0 success / all inliers,
// 2 usage or environment error, 3 at least one outlier.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <unistd.h>
#include <vector>

#include "odgate/odgate.h"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitOutlier = 3;

bool g_quiet = false;

bool use_color() {
  const char* no_color = std::getenv("NO_COLOR");
  return (no_color == nullptr || *no_color == '\0') && isatty(STDOUT_FILENO);
}

void info(const std::string& line) {
  if (!g_quiet) std::cerr << line << '\n';
}

int report_failure(odg_status status, const std::string& context) {
  std::cerr << "odgate: " << context << ": " << odg_status_name(status);
  const std::string detail = odg_last_error();
  if (!detail.empty()) std::cerr << ": " << detail;
  std::cerr << '\n';
  return kExitUsage;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

// Regular files directly under `dir`, sorted by name.
std::vector<std::string> list_dir(const std::string& dir) {
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file()) out.push_back(entry.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<const char*> c_strings(const std::vector<std::string>& v) {
  std::vector<const char*> out;
  out.reserve(v.size());
  for (const auto& s : v) out.push_back(s.c_str());
  return out;
}

std::string epoch_to_rfc3339(long long secs) {
  const std::time_t t = static_cast<std::time_t>(secs);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  return static_cast<bool>(out);
}

struct PackGuard {
  odg_pack* p = nullptr;
  ~PackGuard() { odg_pack_free(p); }
};

struct StringGuard {
  char* s = nullptr;
  ~StringGuard() { odg_free_string(s); }
};

// ---- fit ----

struct FitArgs {
  std::string dir;
  std::string out;
  double tau = 5.0;
  std::uint64_t seed = 0;
  std::string created_at;
  std::string embedder_url;
  int dimension = 64;
  int k_max = 5;
  bool json = false;
};

int cmd_fit(const FitArgs& a) {
  if (!fs::is_directory(a.dir)) {
    std::cerr << "odgate: not a directory: " << a.dir << '\n';
    return kExitUsage;
  }
  const auto files = list_dir(a.dir);
  const auto paths = c_strings(files);

  odg_fit_options opts;
  odg_fit_options_init(&opts);
  opts.tau = a.tau;
  opts.seed = a.seed;
  opts.k_max = a.k_max;
  opts.embedder_dimension = a.dimension;
  if (!a.embedder_url.empty()) opts.embedder_url = a.embedder_url.c_str();
  std::string created_at = a.created_at;
  if (created_at.empty()) {
    if (const char* sde = std::getenv("SOURCE_DATE_EPOCH"); sde && *sde) {
      char* end = nullptr;
      errno = 0;
      const long long secs = std::strtoll(sde, &end, 10);
      if (errno != 0 || *end != '\0' || secs < 0) {
        std::cerr << "odgate: SOURCE_DATE_EPOCH must be a non-negative integer\n";
        return kExitUsage;
      }
      created_at = epoch_to_rfc3339(secs);
    }
  }
  if (!created_at.empty()) opts.created_at = created_at.c_str();

  info("fitting on " + std::to_string(files.size()) + " files in " + a.dir);
  PackGuard pack;
  size_t skipped = 0;
  if (auto st = odg_pack_fit_files(paths.data(), paths.size(), &opts, &pack.p, &skipped); st != ODG_OK) {
    return report_failure(st, "fit");
  }
  if (auto st = odg_pack_save_file(pack.p, a.out.c_str()); st != ODG_OK) return report_failure(st, "write pack");

  odg_pack_summary s;
  odg_pack_get_summary(pack.p, &s);
  if (a.json) {
    ordered_json doc{{"schema", "odgate.fit/1"},
                     {"pack", a.out},
                     {"n", s.n_reference},
                     {"n_fit", s.n_fit},
                     {"n_holdout", s.n_holdout},
                     {"skipped", skipped},
                     {"k", s.k},
                     {"r_star", s.r_star},
                     {"tau", s.tau},
                     {"gmm_loglik_threshold", s.gmm_loglik_threshold},
                     {"recon_loss_threshold", s.recon_loss_threshold}};
    std::cout << doc.dump() << '\n';
  } else if (!g_quiet) {
    std::cout << "pack:                 " << a.out << '\n'
              << "n:                    " << s.n_reference << " (fit " << s.n_fit << ", holdout "
              << s.n_holdout << ", skipped " << skipped << ")\n"
              << "K:                    " << s.k << '\n'
              << "r_star:               " << s.r_star << '\n'
              << "tau:                  " << fmt(s.tau) << '\n'
              << "gmm_loglik_threshold: " << fmt(s.gmm_loglik_threshold) << '\n'
              << "recon_loss_threshold: " << fmt(s.recon_loss_threshold) << '\n';
  }
  return kExitOk;
}

// ---- score ----

struct ScoreArgs {
  std::string pack;
  std::vector<std::string> files;
  bool json = false;
  int jobs = 0;
};

int cmd_score(const ScoreArgs& a) {
  PackGuard pack;
  if (auto st = odg_pack_load_file(a.pack.c_str(), &pack.p); st != ODG_OK) return report_failure(st, "load pack");

  struct Result {
    odg_status status = ODG_OK;
    std::string error;
    odg_verdict verdict{};
  };
  std::vector<Result> results(a.files.size());
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const size_t workers = std::min<size_t>(a.jobs > 0 ? a.jobs : hw, std::max<size_t>(a.files.size(), 1));
  std::atomic<size_t> next{0};
  {
    std::vector<std::jthread> pool;
    for (size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (size_t i = next++; i < a.files.size(); i = next++) {
          Result& r = results[i];
          r.status = odg_score_file(pack.p, a.files[i].c_str(), &r.verdict);
          if (r.status != ODG_OK) r.error = odg_last_error();
        }
      });
    }
  }

  bool any_error = false;
  bool any_outlier = false;
  const bool color = use_color();
  ordered_json items = ordered_json::array();
  for (size_t i = 0; i < a.files.size(); ++i) {
    const Result& r = results[i];
    const odg_verdict& v = r.verdict;
    if (r.status != ODG_OK) {
      any_error = true;
      if (a.json) {
        items.push_back({{"path", a.files[i]}, {"error", odg_status_name(r.status)}, {"detail", r.error}});
      } else {
        std::cerr << "odgate: " << a.files[i] << ": " << odg_status_name(r.status) << ": " << r.error << '\n';
      }
      continue;
    }
    any_outlier = any_outlier || v.outlier;
    if (a.json) {
      ordered_json item{{"path", a.files[i]},
                        {"gmm_loglik", v.gmm_loglik},
                        {"recon_loss", v.has_embedding ? ordered_json(v.recon_loss) : ordered_json(nullptr)},
                        {"gmm_flag", static_cast<bool>(v.gmm_flag)},
                        {"embed_flag", v.has_embedding ? ordered_json(static_cast<bool>(v.embed_flag)) : ordered_json(nullptr)},
                        {"outlier", static_cast<bool>(v.outlier)},
                        {"degraded", static_cast<bool>(v.degraded)}};
      items.push_back(item);
    } else if (!g_quiet || v.outlier) {
      std::string verdict = v.outlier ? "OUTLIER" : "inlier";
      if (color) verdict = (v.outlier ? "\033[31m" : "\033[32m") + verdict + "\033[0m";
      std::cout << a.files[i] << "\tgmm_loglik=" << fmt(v.gmm_loglik)
                << "\trecon_loss=" << (v.has_embedding ? fmt(v.recon_loss) : "-")
                << "\tflags=" << (v.gmm_flag ? 'G' : '-')
                << (v.has_embedding ? (v.embed_flag ? 'E' : '-') : '?')
                << (v.degraded ? "\tdegraded" : "") << '\t' << verdict << '\n';
    }
  }
  if (a.json) {
    std::cout << ordered_json{{"schema", "odgate.score/1"}, {"pack", a.pack}, {"results", items}}.dump() << '\n';
  }
  if (any_error) return kExitUsage;
  return any_outlier ? kExitOutlier : kExitOk;
}

// ---- sweep ----

struct SweepArgs {
  std::string train;
  std::string test;
  double tau = 5.0;
  std::vector<int> candidates;
  std::string embedder_url;
  int dimension = 64;
  bool json = false;
};

int cmd_sweep(const SweepArgs& a) {
  for (const auto& d : {a.train, a.test}) {
    if (!fs::is_directory(d)) {
      std::cerr << "odgate: not a directory: " << d << '\n';
      return kExitUsage;
    }
  }
  const auto train = list_dir(a.train);
  const auto test = list_dir(a.test);
  const auto train_c = c_strings(train);
  const auto test_c = c_strings(test);
  odg_fit_options opts;
  odg_fit_options_init(&opts);
  opts.embedder_dimension = a.dimension;
  if (!a.embedder_url.empty()) opts.embedder_url = a.embedder_url.c_str();
  StringGuard out;
  const auto st = odg_sweep_files(train_c.data(), train_c.size(), test_c.data(), test_c.size(), a.tau,
                                  a.candidates.empty() ? nullptr : a.candidates.data(), a.candidates.size(),
                                  &opts, &out.s);
  if (st != ODG_OK) return report_failure(st, "sweep");
  if (a.json) {
    std::cout << out.s << '\n';
    return kExitOk;
  }
  const auto doc = nlohmann::json::parse(out.s);
  if (!g_quiet) {
    std::printf("%6s %6s %10s %10s\n", "r", "r_eff", "p_train", "p_test");
    for (const auto& row : doc["table"]) {
      std::printf("%6d %6d %10.4f %10.4f\n", row["r"].get<int>(), row["r_effective"].get<int>(),
                  row["p_train"].get<double>(), row["p_test"].get<double>());
    }
  }
  std::cout << "r_star: " << doc["r_star"].get<int>() << '\n';
  return kExitOk;
}

// ---- serve ----

struct ServeArgs {
  std::string listen = "127.0.0.1:8080";
  std::string data_dir = "odgate-data";
  std::string embedder_url;
  int dimension = 64;
  int max_in_flight = 4;
  int embed_timeout_ms = 10'000;
  std::string api_token;
  std::string static_dir;
  int max_records = 0;
};

bool split_listen(const std::string& listen, std::string& host, int& port) {
  const auto colon = listen.rfind(':');
  std::string port_text = listen;
  host = "127.0.0.1";
  if (colon != std::string::npos) {
    if (colon > 0) host = listen.substr(0, colon);
    port_text = listen.substr(colon + 1);
  }
  if (port_text.empty() || port_text.find_first_not_of("0123456789") != std::string::npos) return false;
  port = std::stoi(port_text);
  return port >= 0 && port <= 65535;
}

int cmd_serve(ServeArgs a) {
  std::string host;
  int port = 0;
  if (!split_listen(a.listen, host, port)) {
    std::cerr << "odgate: --listen expects HOST:PORT, got '" << a.listen << "'\n";
    return kExitUsage;
  }
  if (a.api_token.empty()) {
    if (const char* env = std::getenv("ODGATE_API_TOKEN"); env) a.api_token = env;
  }

  // Block the signals before any thread exists so that only sigwait sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  odg_service_options opts;
  odg_service_options_init(&opts);
  opts.host = host.c_str();
  opts.port = port;
  opts.data_dir = a.data_dir.c_str();
  opts.embedder_url = a.embedder_url.empty() ? nullptr : a.embedder_url.c_str();
  opts.embedder_dimension = a.dimension;
  opts.max_in_flight = a.max_in_flight;
  opts.embed_timeout_ms = a.embed_timeout_ms;
  opts.api_token = a.api_token.empty() ? nullptr : a.api_token.c_str();
  opts.static_dir = a.static_dir.empty() ? nullptr : a.static_dir.c_str();
  opts.max_records = a.max_records;

  odg_service* service = nullptr;
  if (auto st = odg_service_start(&opts, &service); st != ODG_OK) return report_failure(st, "serve");
  std::cout << "listening on http://" << host << ':' << odg_service_port(service) << std::endl;

  int sig = 0;
  sigwait(&signals, &sig);
  info(std::string("received ") + (sig == SIGTERM ? "SIGTERM" : "SIGINT") + ", shutting down");
  const auto st = odg_service_stop(service);
  odg_service_free(service);
  return st == ODG_OK ? kExitOk : report_failure(st, "shutdown");
}

// ---- bench / export-corpus ----

struct BenchArgs {
  std::string spec;
  double tau = 5.0;
  std::uint64_t seed = 0;
  std::string report;
  int dimension = 64;
};

int cmd_bench(const BenchArgs& a) {
  std::string spec_text;
  if (!a.spec.empty()) {
    try {
      spec_text = read_text(a.spec);
    } catch (const std::exception& e) {
      std::cerr << "odgate: " << e.what() << '\n';
      return kExitUsage;
    }
  }
  odg_fit_options opts;
  odg_fit_options_init(&opts);
  opts.seed = a.seed;
  opts.embedder_dimension = a.dimension;
  StringGuard report;
  if (auto st = odg_bench_run(a.spec.empty() ? nullptr : spec_text.c_str(), a.tau, &opts, &report.s); st != ODG_OK) {
    return report_failure(st, "bench");
  }
  if (!a.report.empty() && !write_text(a.report, std::string(report.s) + "\n")) {
    std::cerr << "odgate: cannot write " << a.report << '\n';
    return kExitUsage;
  }
  const auto doc = nlohmann::json::parse(report.s);
  if (a.report.empty()) {
    std::cout << report.s << '\n';
  } else if (!g_quiet) {
    auto rate = [](const nlohmann::json& v) { return v.is_null() ? std::string("n/a") : fmt(v.get<double>()); };
    const auto& h = doc["hybrid"];
    std::cout << "hybrid sensitivity: " << rate(h["sensitivity"]) << '\n'
              << "hybrid specificity: " << rate(h["specificity"]) << '\n'
              << "report:             " << a.report << '\n';
  }
  return kExitOk;
}

int cmd_export(const std::string& spec, const std::string& out) {
  std::string spec_text;
  if (!spec.empty()) {
    try {
      spec_text = read_text(spec);
    } catch (const std::exception& e) {
      std::cerr << "odgate: " << e.what() << '\n';
      return kExitUsage;
    }
  }
  size_t n = 0;
  if (auto st = odg_corpus_export(spec.empty() ? nullptr : spec_text.c_str(), out.c_str(), &n); st != ODG_OK) {
    return report_failure(st, "export-corpus");
  }
  info("wrote " + std::to_string(n) + " images to " + out);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"odgate: out-of-distribution gate for image pipelines"};
  app.require_subcommand(1);
  app.add_flag("-q,--quiet", g_quiet, "Suppress progress and summaries");
  app.set_version_flag("--version", std::string(odg_version()));

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a detector pack on a directory of reference images");
  fit_cmd->add_option("dir", fit.dir, "Directory of reference images")->required();
  fit_cmd->add_option("--out,-o", fit.out, "Output pack path")->required();
  fit_cmd->add_option("--tau", fit.tau, "Sensitivity percentile in (0, 50]");
  fit_cmd->add_option("--seed", fit.seed, "Seed for every random choice");
  fit_cmd->add_option("--k-max", fit.k_max, "Largest mixture size tried by BIC")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--created-at", fit.created_at, "Pack timestamp (default: SOURCE_DATE_EPOCH or epoch)");
  fit_cmd->add_option("--embedder-url", fit.embedder_url, "Remote embedding endpoint (http://...)");
  fit_cmd->add_option("--dimension", fit.dimension, "Embedding dimension")->check(CLI::PositiveNumber);
  fit_cmd->add_flag("--json", fit.json, "Machine-readable summary");

  ScoreArgs score;
  auto* score_cmd = app.add_subcommand("score", "Score image files against a pack");
  score_cmd->add_option("--pack,-p", score.pack, "Pack file")->required();
  score_cmd->add_option("files", score.files, "Image files")->required();
  score_cmd->add_flag("--json", score.json, "Machine-readable output");
  score_cmd->add_option("--jobs,-j", score.jobs, "Parallel workers (default: hardware threads)")
      ->check(CLI::NonNegativeNumber);

  SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run the subspace-dimension sweep");
  sweep_cmd->add_option("--train", sweep.train, "Training image directory")->required();
  sweep_cmd->add_option("--test", sweep.test, "Test image directory")->required();
  sweep_cmd->add_option("--tau", sweep.tau, "Sensitivity percentile in (0, 50]");
  sweep_cmd->add_option("--candidates", sweep.candidates, "Candidate dimensions")->delimiter(',');
  sweep_cmd->add_option("--embedder-url", sweep.embedder_url, "Remote embedding endpoint (http://...)");
  sweep_cmd->add_option("--dimension", sweep.dimension, "Embedding dimension")->check(CLI::PositiveNumber);
  sweep_cmd->add_flag("--json", sweep.json, "Machine-readable output");

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the monitoring HTTP service");
  serve_cmd->add_option("--listen", serve.listen, "HOST:PORT (port 0 picks a free one)")->envname("ODGATE_LISTEN");
  serve_cmd->add_option("--data-dir", serve.data_dir, "Store directory")->envname("ODGATE_DATA_DIR");
  serve_cmd->add_option("--embedder-url", serve.embedder_url, "Remote embedding endpoint (http://...)")
      ->envname("ODGATE_EMBEDDER_URL");
  serve_cmd->add_option("--dimension", serve.dimension, "Embedding dimension")->check(CLI::PositiveNumber);
  serve_cmd->add_option("--max-in-flight", serve.max_in_flight, "Concurrent embedding requests")
      ->envname("ODGATE_MAX_IN_FLIGHT")
      ->check(CLI::PositiveNumber);
  serve_cmd->add_option("--embed-timeout-ms", serve.embed_timeout_ms, "Embedding request timeout")
      ->check(CLI::PositiveNumber);
  serve_cmd->add_option("--api-token", serve.api_token, "Static bearer token (or ODGATE_API_TOKEN)");
  serve_cmd->add_option("--static-dir", serve.static_dir, "Dashboard bundle served at /");
  serve_cmd->add_option("--max-records", serve.max_records, "Per-project record cap (0 = unbounded)")
      ->check(CLI::NonNegativeNumber);

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Run the synthetic detection benchmark");
  bench_cmd->add_option("--spec", bench.spec, "Corpus spec JSON (default corpus if omitted)");
  bench_cmd->add_option("--tau", bench.tau, "Sensitivity percentile in (0, 50]");
  bench_cmd->add_option("--seed", bench.seed, "Fit seed");
  bench_cmd->add_option("--dimension", bench.dimension, "Embedding dimension")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--report", bench.report, "Write the evaluation report here");

  std::string export_spec;
  std::string export_out;
  auto* export_cmd = app.add_subcommand("export-corpus", "Write the synthetic corpus as PNG files");
  export_cmd->add_option("--spec", export_spec, "Corpus spec JSON (default corpus if omitted)");
  export_cmd->add_option("--out,-o", export_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*fit_cmd) return cmd_fit(fit);
    if (*score_cmd) return cmd_score(score);
    if (*sweep_cmd) return cmd_sweep(sweep);
    if (*serve_cmd) return cmd_serve(serve);
    if (*bench_cmd) return cmd_bench(bench);
    if (*export_cmd) return cmd_export(export_spec, export_out);
  } catch (const std::exception& e) {
    std::cerr << "odgate: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
