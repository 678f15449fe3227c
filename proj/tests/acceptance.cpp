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

// Acceptance suite. Prints one [PASS] or [FAIL] line per criterion and
// exits non-zero when any criterion fails.
//
// usage: odgate_acceptance <path to the odgate CLI>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include "fixtures.hpp"
#include "odgate/embedder.hpp"
#include "odgate/error.hpp"
#include "odgate/fof.hpp"
#include "odgate/gate.hpp"
#include "odgate/gmm.hpp"
#include "odgate/image.hpp"
#include "odgate/pack_io.hpp"
#include "odgate/percentile.hpp"
#include "odgate/subspace.hpp"
#include "odgate/synthbench.hpp"
#include "oracle.hpp"

#include <httplib.h>
#include <json.hpp>

namespace fs = std::filesystem;
using namespace odgate;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;
fs::path g_cli;
fs::path g_work;

void report(bool ok, const std::string& name, const std::string& detail) {
  std::cout << (ok ? "[PASS] " : "[FAIL] ") << name << ": " << detail << std::endl;
  if (!ok) ++g_failures;
}

// Runs a criterion; an escaped exception is a failure, never a crash.
void criterion(const std::string& name, const std::function<void(const std::string&)>& body) {
  try {
    body(name);
  } catch (const std::exception& e) {
    report(false, name, std::string("exception: ") + e.what());
  }
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

oracle::Rows rows_of(const Matrix& m) { return testing_util::to_rows(m); }

Matrix fof_matrix(const std::vector<synth::CorpusItem>& items) {
  Matrix m(static_cast<Eigen::Index>(items.size()), kFofDim);
  for (std::size_t i = 0; i < items.size(); ++i) {
    m.row(static_cast<Eigen::Index>(i)) = to_vector(extract_fof(to_grayscale(items[i].image))).transpose();
  }
  return m;
}

Matrix embedding_matrix(const std::vector<synth::CorpusItem>& items, const Embedder& e) {
  Matrix m(static_cast<Eigen::Index>(items.size()), e.spec().dimension);
  for (std::size_t i = 0; i < items.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = e.embed(items[i].image).values.transpose();
  return m;
}

std::vector<synth::CorpusItem> inliers_only(int n, std::uint64_t seed, int size = 128) {
  synth::CorpusSpec spec;
  spec.n_inliers = n;
  spec.outlier_counts = {0, 0, 0, 0, 0};
  spec.size = size;
  spec.seed = seed;
  return synth::generate_corpus(spec);
}

// ---- child processes ----

struct Child {
  pid_t pid = -1;
  int out_fd = -1;
};

Child spawn(const std::vector<std::string>& args, bool capture) {
  int pipefd[2] = {-1, -1};
  if (capture && pipe(pipefd) != 0) throw std::runtime_error("pipe failed");
  const pid_t pid = fork();
  if (pid < 0) throw std::runtime_error("fork failed");
  if (pid == 0) {
    const int devnull = open("/dev/null", O_RDWR);
    dup2(devnull, STDIN_FILENO);
    dup2(capture ? pipefd[1] : devnull, STDOUT_FILENO);
    dup2(devnull, STDERR_FILENO);
    if (capture) {
      close(pipefd[0]);
      close(pipefd[1]);
    }
    std::vector<char*> argv;
    for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    execv(argv[0], argv.data());
    _exit(127);
  }
  Child c;
  c.pid = pid;
  if (capture) {
    close(pipefd[1]);
    c.out_fd = pipefd[0];
  }
  return c;
}

int wait_exit(pid_t pid) {
  int status = 0;
  while (waitpid(pid, &status, 0) < 0) {
    if (errno != EINTR) return -1;
  }
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  return 128 + WTERMSIG(status);
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), g_cli.string());
  return wait_exit(spawn(args, false).pid);
}

// Starts `odgate serve` on a free port and returns the child and the port.
std::pair<Child, int> start_server(const fs::path& data_dir) {
  Child c = spawn({g_cli.string(), "serve", "--listen", "127.0.0.1:0", "--data-dir", data_dir.string()}, true);
  std::string line;
  char ch = 0;
  while (read(c.out_fd, &ch, 1) == 1) {
    if (ch != '\n') {
      line += ch;
      continue;
    }
    const auto pos = line.rfind(':');
    if (line.starts_with("listening on ") && pos != std::string::npos) {
      return {c, std::stoi(line.substr(pos + 1))};
    }
    line.clear();
  }
  kill(c.pid, SIGKILL);
  wait_exit(c.pid);
  throw std::runtime_error("server did not report a listening address");
}

void stop_server(Child& c) {
  kill(c.pid, SIGTERM);
  wait_exit(c.pid);
  if (c.out_fd >= 0) close(c.out_fd);
}

std::string png_string(const ImageTensor& img) {
  const auto bytes = encode_png(img);
  return {bytes.begin(), bytes.end()};
}

// ---- criteria ----

void em_monotonicity(const std::string& name) {
  const auto t0 = Clock::now();
  const auto corpus = synth::generate_corpus(synth::CorpusSpec{});
  const Matrix fof = fof_matrix(corpus);
  const Matrix x = standardize_fit(fof).apply(fof);
  double worst = 0.0;
  std::size_t steps = 0;
  std::size_t reseeds = 0;
  int runs = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    EmConfig cfg;
    cfg.seed = seed;
    const int k = 1 + static_cast<int>(seed % 5);
    const EmResult r = em_fit_detailed(x, k, cfg);
    for (const EmTrace& t : r.restarts) {
      reseeds += t.reseed_at.size();
      for (std::size_t i = 1; i < t.total_loglik.size(); ++i) {
        // A collapsed-component re-seed replaces parameters outside EM.
        if (std::find(t.reseed_at.begin(), t.reseed_at.end(), i) != t.reseed_at.end()) continue;
        worst = std::max(worst, t.total_loglik[i - 1] - t.total_loglik[i]);
        ++steps;
      }
    }
    ++runs;
  }
  const double secs = seconds_since(t0);
  report(worst <= 1e-9 && secs < 30.0 && x.rows() == 500, name,
         std::to_string(runs) + " runs, n=" + std::to_string(x.rows()) + ", " + std::to_string(steps) +
             " EM steps, largest decrease " + fmt(worst, 3) + " (limit 1e-9), re-seeds " + std::to_string(reseeds) +
             ", " + fmt(secs, 3) + " s (limit 30 s)");
}

void k1_closed_form(const std::string& name) {
  double worst = 0.0;
  Rng rng(derive_seed(2026, 11));
  for (int i = 0; i < 20; ++i) {
    const int n = 30 + 41 * i;
    const int d = 1 + i % 9;
    Matrix x(n, d);
    for (int j = 0; j < d; ++j) {
      const double scale = rng.uniform(0.05, 4.0);
      const double shift = rng.uniform(-3.0, 3.0);
      const bool constant = (i % 5 == 4) && j == 0;
      for (int r = 0; r < n; ++r) x(r, j) = constant ? shift : shift + scale * rng.normal();
    }
    EmConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(i);
    const GmmParams p = em_fit(x, 1, cfg);
    const oracle::Rows rows = rows_of(x);
    const auto mean = oracle::column_mean(rows);
    const auto cov = oracle::covariance(rows, static_cast<double>(n));
    worst = std::max(worst, std::abs(p.weights(0) - 1.0));
    for (int j = 0; j < d; ++j) {
      worst = std::max(worst, std::abs(p.means(0, j) - mean[j]));
      worst = std::max(worst, std::abs(p.variances(0, j) - std::max(cov[j][j], kVarianceFloor)));
    }
  }
  report(worst <= 1e-10, name, "20 datasets, largest deviation " + fmt(worst, 3) + " (limit 1e-10)");
}

struct EmbeddingSet {
  Matrix train;  // 200 inliers
  Matrix probe;  // 100 further inliers and 25 outliers
};

const EmbeddingSet& embeddings() {
  static const EmbeddingSet set = [] {
    synth::CorpusSpec spec;
    spec.n_inliers = 300;
    spec.outlier_counts = {5, 5, 5, 5, 5};
    spec.seed = 77;
    const auto corpus = synth::generate_corpus(spec);
    const TestEmbedder e(EmbedderSpec{});
    const Matrix all = embedding_matrix(corpus, e);
    return EmbeddingSet{all.topRows(200), all.bottomRows(all.rows() - 200)};
  }();
  return set;
}

void eigen_residual(const std::string& name) {
  const Matrix& x = embeddings().train;
  const double n = static_cast<double>(x.rows());
  // Eigenvalues of the covariance normalised like the mean loss (by n).
  const oracle::Eigen eig = oracle::jacobi(oracle::covariance(rows_of(x), n));
  double worst = 0.0;
  std::string detail;
  for (int r : {1, 2, 5, 10}) {
    const auto losses = recon_losses(pca_fit(x, r), x);
    const double mean_loss = std::accumulate(losses.begin(), losses.end(), 0.0) / n;
    const double tail = std::accumulate(eig.values.begin() + r, eig.values.end(), 0.0);
    const double rel = std::abs(mean_loss - tail) / tail;
    worst = std::max(worst, rel);
    detail += " r=" + std::to_string(r) + ":" + fmt(rel, 2);
  }
  report(worst <= 1e-6 && x.rows() == 200 && x.cols() == 64, name,
         "n=200 D=64, relative error" + detail + " (limit 1e-6)");
}

void rotation_invariance(const std::string& name) {
  const EmbeddingSet& set = embeddings();
  const oracle::Rows q = oracle::random_orthogonal(64, 4242);
  const Matrix qm = testing_util::to_matrix(q);
  const Matrix train_rot = set.train * qm.transpose();
  const Matrix probe_rot = set.probe * qm.transpose();
  double worst = 0.0;
  for (int r : {1, 2, 5, 10, 32}) {
    const SubspaceModel a = pca_fit(set.train, r);
    const SubspaceModel b = pca_fit(train_rot, r);
    const auto la = recon_losses(a, set.train);
    const auto lb = recon_losses(b, train_rot);
    const auto pa = recon_losses(a, set.probe);
    const auto pb = recon_losses(b, probe_rot);
    for (std::size_t i = 0; i < la.size(); ++i) worst = std::max(worst, std::abs(la[i] - lb[i]));
    for (std::size_t i = 0; i < pa.size(); ++i) worst = std::max(worst, std::abs(pa[i] - pb[i]));
  }
  report(worst <= 1e-8, name,
         "r in {1,2,5,10,32}, 325 losses each, largest change " + fmt(worst, 3) + " (limit 1e-8)");
}

void calibration(const std::string& name) {
  const auto items = inliers_only(2000, 913);
  const std::vector<synth::CorpusItem> train(items.begin(), items.begin() + 1000);
  const std::vector<synth::CorpusItem> fresh(items.begin() + 1000, items.end());

  const GmmFitResult g = fit_gmm_detector(fof_matrix(train), 5.0, GmmFitConfig{});
  std::set<double> distinct_g(g.train_logliks.begin(), g.train_logliks.end());
  const auto g_train = std::count_if(g.train_logliks.begin(), g.train_logliks.end(),
                                     [&](double l) { return l < g.detector.loglik_threshold; });
  int g_fresh = 0;
  const Matrix fresh_fof = fof_matrix(fresh);
  for (Eigen::Index i = 0; i < fresh_fof.rows(); ++i) {
    g_fresh += score_gmm(g.detector, fresh_fof.row(i).transpose()).flag;
  }

  const TestEmbedder e(EmbedderSpec{});
  const Matrix emb = embedding_matrix(train, e);
  // r chosen from the training data alone, as the gate does.
  const int r = sweep_r(emb.topRows(800), emb.bottomRows(200), default_r_candidates(800, 64), 5.0).r_star;
  const SubspaceModel s = pca_fit(emb, r);
  const auto losses = recon_losses(s, emb);
  std::set<double> distinct_e(losses.begin(), losses.end());
  const double thr = fit_loss_threshold(losses, 5.0);
  const auto e_train = std::count_if(losses.begin(), losses.end(), [&](double l) { return l > thr; });
  const auto fresh_losses = recon_losses(s, embedding_matrix(fresh, e));
  const auto e_fresh = std::count_if(fresh_losses.begin(), fresh_losses.end(), [&](double l) { return l > thr; });

  const bool distinct = distinct_g.size() == 1000 && distinct_e.size() == 1000;
  const bool ok = distinct && g_train == 50 && e_train == 50 && g_fresh >= 20 && g_fresh <= 90 &&
                  e_fresh >= 20 && e_fresh <= 90;
  report(ok, name,
         std::string("distinct train scores ") + (distinct ? "yes" : "no") + "; GMM (K=" +
             std::to_string(g.detector.params.components()) + ") train " + std::to_string(g_train) +
             "/1000, fresh " + fmt(g_fresh / 10.0) + "%; subspace (r=" + std::to_string(r) + ") train " +
             std::to_string(e_train) + "/1000, fresh " + fmt(e_fresh / 10.0) +
             "% (need exactly 50 and fresh in [2%, 9%])");
}

void sweep_oracle(const std::string& name) {
  const auto c = testing_util::rank2_corpus();
  // Candidates stay below D: at r = D every loss is zero up to rounding.
  const std::vector<int> cand = {1, 2, 3, 4, 5, 6};
  const SweepResult s = sweep_r(c.train, c.test, cand, 5.0);
  const oracle::Sweep o = oracle::sweep(rows_of(c.train), rows_of(c.test), cand, 5.0);
  bool same = s.table.size() == o.table.size() && s.r_star == o.r_star;
  for (std::size_t i = 0; same && i < s.table.size(); ++i) {
    same = s.table[i].r == o.table[i].r && s.table[i].p_train == o.table[i].p_train &&
           s.table[i].p_test == o.table[i].p_test;
  }
  std::string table;
  for (const auto& row : s.table) {
    table += " (" + std::to_string(row.r) + "," + fmt(row.p_train) + "," + fmt(row.p_test) + ")";
  }
  report(same && s.r_star == 2, name,
         "r_star " + std::to_string(s.r_star) + " (oracle " + std::to_string(o.r_star) + "), tables " +
             (same ? "identical" : "differ") + ":" + table);
}

synth::BenchResult* g_bench = nullptr;

void detection_quality(const std::string& name) {
  const auto t0 = Clock::now();
  synth::BenchConfig cfg;  // default corpus, 200 reference inliers, tau 5, OR, test embedder
  static synth::BenchResult result = synth::run_bench(cfg);
  g_bench = &result;
  const double secs = seconds_since(t0);
  const synth::EvalReport& r = result.report;
  auto kind = [&](const std::string& k) {
    for (const auto& [name, c] : r.hybrid_by_kind)
      if (name == k) return c.sensitivity().value_or(0.0);
    return 0.0;
  };
  const double sens = r.hybrid.sensitivity().value_or(0.0);
  const double spec = r.hybrid.specificity().value_or(0.0);
  const bool ok = sens >= 0.95 && kind("noise") >= 0.99 && kind("blank") >= 0.99 && spec >= 0.88 &&
                  secs < 120.0 && r.hybrid.true_negative + r.hybrid.false_positive == 100 &&
                  r.hybrid.true_positive + r.hybrid.false_negative == 200;
  std::string per_kind;
  for (const auto& [k, c] : r.hybrid_by_kind) {
    if (k != "inlier") per_kind += " " + k + "=" + fmt(c.sensitivity().value_or(0.0), 4);
  }
  report(ok, name,
         "sensitivity " + fmt(sens, 4) + " (>= 0.95), specificity " + fmt(spec, 4) + " (>= 0.88), by kind" +
             per_kind + " (noise, blank >= 0.99), K=" + std::to_string(result.pack.gmm.params.components()) +
             " r*=" + std::to_string(result.pack.subspace.rank()) + ", " + fmt(secs, 3) + " s (limit 120 s)");
}

void pack_round_trip(const std::string& name) {
  if (!g_bench) throw std::runtime_error("benchmark pack unavailable");
  const std::string bytes = save_pack(g_bench->pack);
  const fs::path file = g_work / "bench.odpack";
  save_pack_file(g_bench->pack, file);
  const bool identical = save_pack(load_pack(bytes)) == bytes && save_pack(load_pack_file(file)) == bytes;

  auto code_of = [](const std::string& text) -> std::string {
    try {
      load_pack(text);
      return "accepted";
    } catch (const Error& e) {
      return std::string(error_code_name(e.code()));
    }
  };
  json doc = json::parse(bytes);
  json weights = doc;
  for (auto& w : weights["gmm"]["weights"]) w = w.get<double>() * 0.9;
  json version = doc;
  version["pack_version"] = doc["pack_version"].get<int>() + 1;
  const std::string w_code = code_of(weights.dump());
  const std::string v_code = code_of(version.dump());
  report(identical && w_code == "InvariantViolation" && v_code == "SchemaVersionMismatch", name,
         std::string("save/load/save ") + (identical ? "byte-identical" : "differs") + " (" +
             std::to_string(bytes.size()) + " bytes); weights x0.9 -> " + w_code +
             "; pack_version+1 -> " + v_code);
}

void service_durability(const std::string& name) {
  const fs::path data = g_work / "service-data";
  auto [server, port] = start_server(data);
  httplib::Client c("127.0.0.1", port);
  c.set_read_timeout(60, 0);

  const std::string project = json::parse(c.Post("/v1/projects", R"({"name": "durability"})", "application/json")->body)["project_id"];
  synth::CorpusSpec spec;
  spec.n_inliers = 160;
  spec.outlier_counts = {8, 8, 8, 8, 8};
  spec.size = 64;
  spec.seed = 5150;
  const auto corpus = synth::generate_corpus(spec);
  httplib::MultipartFormDataItems refs;
  for (int i = 0; i < 60; ++i) refs.push_back({"f" + std::to_string(i), png_string(corpus[static_cast<std::size_t>(i)].image), corpus[static_cast<std::size_t>(i)].id + ".png", "image/png"});
  c.Post("/v1/projects/" + project + "/reference", refs);
  const std::string job = json::parse(c.Post("/v1/projects/" + project + "/fit", "{}", "application/json")->body)["job_id"];
  json job_state;
  for (int i = 0; i < 1200; ++i) {
    job_state = json::parse(c.Get("/v1/fit-jobs/" + job)->body);
    if (job_state["state"] != "pending" && job_state["state"] != "running") break;
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  if (job_state["state"] != "done") throw std::runtime_error("fit did not finish: " + job_state.dump());
  const json before = json::parse(c.Get("/v1/projects/" + project)->body);

  std::vector<std::string> payloads;
  for (std::size_t i = 60; i < corpus.size(); ++i) payloads.push_back(png_string(corpus[i].image));

  std::atomic<int> next{0};
  std::mutex acked_mu;
  std::vector<std::string> acked;
  std::atomic<bool> killed{false};
  {
    std::vector<std::jthread> clients;
    for (int t = 0; t < 4; ++t) {
      clients.emplace_back([&, port = port] {
        httplib::Client cl("127.0.0.1", port);
        cl.set_read_timeout(30, 0);
        for (;;) {
          const int i = next.fetch_add(1);
          if (i >= 1000 || killed) return;
          auto r = cl.Post("/v1/projects/" + project + "/score", payloads[static_cast<std::size_t>(i) % payloads.size()], "image/png");
          if (!r || r->status != 201) return;
          std::lock_guard lock(acked_mu);
          acked.push_back(json::parse(r->body)["record_id"]);
        }
      });
    }
    for (;;) {
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
      std::lock_guard lock(acked_mu);
      if (acked.size() >= 400 || next >= 1000) break;
    }
    kill(server.pid, SIGKILL);
    killed = true;
  }
  const int status = wait_exit(server.pid);
  close(server.out_fd);

  auto [again, port2] = start_server(data);
  httplib::Client c2("127.0.0.1", port2);
  c2.set_read_timeout(60, 0);
  const json after = json::parse(c2.Get("/v1/projects/" + project)->body);
  std::set<std::string> ids;
  std::vector<std::int64_t> seqs;
  std::int64_t since = 0;
  for (;;) {
    const json page = json::parse(c2.Get("/v1/projects/" + project + "/records?limit=1000&since=" + std::to_string(since))->body);
    if (page["records"].empty()) break;
    for (const auto& rec : page["records"]) {
      ids.insert(rec["record_id"].get<std::string>());
      seqs.push_back(rec["seq"]);
    }
    since = page["next_since"];
  }
  std::size_t missing = 0;
  for (const auto& id : acked) missing += ids.count(id) == 0;
  bool gap_free = true;
  for (std::size_t i = 0; i < seqs.size(); ++i) gap_free = gap_free && seqs[i] == static_cast<std::int64_t>(i + 1);
  const bool pack_intact = after["active_pack_version"] == before["active_pack_version"] &&
                           after["pack"] == before["pack"];
  auto more = c2.Post("/v1/projects/" + project + "/score", payloads[0], "image/png");
  const bool resumes = more && more->status == 201 &&
                       json::parse(more->body)["seq"] == static_cast<std::int64_t>(seqs.size() + 1);
  stop_server(again);

  report(status == 128 + SIGKILL && missing == 0 && gap_free && pack_intact && resumes && acked.size() >= 400,
         name,
         "killed after " + std::to_string(acked.size()) + " acknowledged records; after restart " +
             std::to_string(seqs.size()) + " stored, " + std::to_string(missing) + " acknowledged missing, seq " +
             (gap_free ? "1.." + std::to_string(seqs.size()) + " gap-free" : "has gaps") + ", active pack v" +
             after["active_pack_version"].dump() + (pack_intact ? " intact" : " changed") + ", next seq " +
             (resumes ? "continues" : "broken"));
}

void cli_exit_codes(const std::string& name) {
  const fs::path corpus_dir = g_work / "cli-corpus";
  const fs::path ref_dir = g_work / "cli-ref";
  const fs::path spec_file = g_work / "cli-spec.json";
  std::ofstream(spec_file) << R"({"n_inliers": 90, "size": 64, "seed": 99,
    "outliers": {"noise": 2, "blank": 0, "inverted": 0, "bright_shift": 0, "grid": 0}})";
  if (run_cli({"export-corpus", "--spec", spec_file.string(), "--out", corpus_dir.string()}) != 0) {
    throw std::runtime_error("export-corpus failed");
  }
  fs::create_directories(ref_dir);
  for (int i = 0; i < 80; ++i) {
    char file[32];
    std::snprintf(file, sizeof(file), "inlier-%04d.png", i);
    fs::copy_file(corpus_dir / file, ref_dir / file, fs::copy_options::overwrite_existing);
  }
  const fs::path pack = g_work / "cli.odpack";
  const int fit = run_cli({"-q", "fit", ref_dir.string(), "--out", pack.string()});
  const std::string inlier = (corpus_dir / "inlier-0085.png").string();
  const std::string noise = (corpus_dir / "noise-0000.png").string();
  struct Case {
    std::string label;
    std::vector<std::string> args;
    int expected;
  };
  const std::vector<Case> cases = {
      {"inlier", {"score", "--pack", pack.string(), inlier}, 0},
      {"noise", {"score", "--pack", pack.string(), noise}, 3},
      {"missing pack", {"score", "--pack", (g_work / "absent.odpack").string(), inlier}, 2},
  };
  bool ok = fit == 0;
  std::string detail = "fit exit " + std::to_string(fit) + ";";
  for (const auto& c : cases) {
    const int got = run_cli(c.args);
    ok = ok && got == c.expected;
    detail += " " + c.label + " -> " + std::to_string(got) + " (want " + std::to_string(c.expected) + ");";
  }
  report(ok, name, detail);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: odgate_acceptance <odgate CLI>\n";
    return 2;
  }
  g_cli = fs::absolute(argv[1]);
  g_work = fs::temp_directory_path() / ("odgate-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(g_work);
  fs::create_directories(g_work);

  criterion("EM monotonicity", em_monotonicity);
  criterion("K=1 closed form", k1_closed_form);
  criterion("PCA eigen-residual identity", eigen_residual);
  criterion("Rotation invariance", rotation_invariance);
  criterion("Calibration", calibration);
  criterion("Sweep oracle equivalence", sweep_oracle);
  criterion("Detection quality", detection_quality);
  criterion("Pack round-trip", pack_round_trip);
  criterion("Service durability", service_durability);
  criterion("CLI gating contract", cli_exit_codes);

  fs::remove_all(g_work);
  std::cout << (g_failures == 0 ? "all criteria passed" : std::to_string(g_failures) + " criteria failed")
            << std::endl;
  return g_failures == 0 ? 0 : 1;
}
