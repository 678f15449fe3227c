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

#include "odgate/service.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <condition_variable>
#include <ctime>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <thread>
#include <vector>

#include "odgate/error.hpp"
#include "odgate/gate.hpp"
#include "odgate/image.hpp"
#include "odgate/pack_io.hpp"
#include "odgate/percentile.hpp"
#include "odgate/store.hpp"

// After Eigen: <resolv.h> defines a _res macro that clashes with Eigen internals.
#include <httplib.h>
#include <json.hpp>

namespace odgate {

using nlohmann::json;

std::string rfc3339_now() {
  const auto now = std::chrono::system_clock::now();
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count();
  const std::time_t secs = static_cast<std::time_t>(ms / 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[80];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms % 1000));
  return buf;
}

namespace {

constexpr int kDisplayBins = 32;
constexpr int kRecentWindow = 500;
constexpr int kThumbnailEdge = 128;
constexpr int kMaxPageLimit = 1000;

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kInvalidTau:
    case ErrorCode::kInvalidLabel:
      return 400;
    case ErrorCode::kProjectNotFound:
    case ErrorCode::kRecordNotFound:
    case ErrorCode::kJobNotFound:
      return 404;
    case ErrorCode::kDuplicateName:
    case ErrorCode::kFitAlreadyRunning:
    case ErrorCode::kNoActivePack:
      return 409;
    case ErrorCode::kDecodeError:
    case ErrorCode::kEmptyImage:
    case ErrorCode::kInsufficientReference:
    case ErrorCode::kTooFewSamples:
    case ErrorCode::kDegenerateFit:
    case ErrorCode::kNonFinite:
    case ErrorCode::kNormZero:
      return 422;
    case ErrorCode::kEmbedderUnavailable:
    case ErrorCode::kDimensionMismatch:
    case ErrorCode::kMalformedResponse:
      return 503;
    default:
      return 500;
  }
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& detail) {
  send_json(res, status, json{{"error", code}, {"detail", detail}});
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
json opt(const std::optional<bool>& v) { return v ? json(*v) : json(nullptr); }

json features_json(const FeatureVector& f) {
  json out = json::object();
  const auto& names = fof_names();
  for (int i = 0; i < kFofDim; ++i) out[std::string(names[i])] = f[i];
  return out;
}

json record_json(const ScoreRecord& r) {
  const Verdict& v = r.verdict;
  json out{{"record_id", r.record_id},
           {"project_id", r.project_id},
           {"seq", r.seq},
           {"timestamp", r.timestamp},
           {"pack_version", r.pack_version},
           {"gmm_loglik", v.gmm_loglik},
           {"recon_loss", opt(v.recon_loss)},
           {"gmm_flag", v.gmm_flag},
           {"embed_flag", opt(v.embed_flag)},
           {"outlier", v.outlier},
           {"gmm_margin", v.gmm_margin},
           {"embed_margin", opt(v.embed_margin)},
           {"degraded", v.degraded},
           {"features", features_json(v.features)},
           {"review", r.review},
           {"review_note", r.review_note},
           {"reviewed_at", r.reviewed_at.empty() ? json(nullptr) : json(r.reviewed_at)}};
  out["thumbnail_url"] =
      r.has_thumbnail ? json("/v1/records/" + r.record_id + "/thumbnail") : json(nullptr);
  return out;
}

json job_json(const FitJob& j) {
  return json{{"job_id", j.job_id},
              {"project_id", j.project_id},
              {"state", j.state},
              {"pack_version", j.pack_version ? json(*j.pack_version) : json(nullptr)},
              {"error", j.error.empty() ? json(nullptr) : json(j.error)},
              {"created_at", j.created_at},
              {"updated_at", j.updated_at}};
}

json thresholds_json(const DetectorPack& pack) {
  return json{{"gmm_loglik", pack.gmm.loglik_threshold}, {"recon_loss", pack.subspace.loss_threshold}};
}

json pack_summary(const StoredPack& stored, const DetectorPack& pack) {
  return json{{"version", stored.version},
              {"created_at", stored.created_at},
              {"tau", pack.tau},
              {"combine", to_string(pack.combine)},
              {"n_reference", pack.n_reference},
              {"n_fit", pack.n_fit},
              {"n_holdout", pack.n_holdout},
              {"k", static_cast<int>(pack.gmm.params.weights.size())},
              {"r_star", pack.subspace.rank()},
              {"embedder", {{"kind", pack.embedder.kind == EmbedderKind::kTest ? "test" : "remote"},
                            {"dimension", pack.embedder.dimension},
                            {"identifier", pack.embedder.identifier}}},
              {"thresholds", thresholds_json(pack)}};
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  json body = json::parse(req.body, nullptr, false);
  if (body.is_discarded() || !body.is_object()) fail(ErrorCode::kInvalidArgument, "request body must be a JSON object");
  return body;
}

template <typename T>
T field(const json& body, const char* key, T fallback) {
  auto it = body.find(key);
  if (it == body.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::kInvalidArgument, std::string("field '") + key + "' has the wrong type");
  }
}

std::int64_t parse_int(const std::string& text, const char* name) {
  std::int64_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    fail(ErrorCode::kInvalidArgument, std::string("query parameter '") + name + "' must be an integer");
  }
  return v;
}

bool parse_bool(const std::string& text) {
  if (text == "1" || text == "true") return true;
  if (text == "0" || text == "false" || text.empty()) return false;
  fail(ErrorCode::kInvalidArgument, "flagged must be true or false");
}

// Display histogram over fixed edges; values outside are clamped into the
// end bins and counted separately.
struct DisplayHistogram {
  std::vector<double> probs;
  int out_of_range = 0;
};

DisplayHistogram bin_values(const std::vector<double>& values, double lo, double hi) {
  DisplayHistogram h;
  if (values.empty()) return h;
  std::vector<int> counts(kDisplayBins, 0);
  for (double v : values) {
    if (v < lo || v > hi) ++h.out_of_range;
    int b = static_cast<int>(std::floor((v - lo) / (hi - lo) * kDisplayBins));
    counts[std::clamp(b, 0, kDisplayBins - 1)]++;
  }
  h.probs.resize(kDisplayBins);
  for (int i = 0; i < kDisplayBins; ++i) h.probs[i] = static_cast<double>(counts[i]) / values.size();
  return h;
}

}  // namespace

struct Service::Impl {
  ServiceOptions options;
  std::unique_ptr<Store> store;
  std::shared_ptr<const Embedder> embedder;
  httplib::Server server;
  std::thread listener;
  int bound_port = 0;

  // Active gate per project; replaced wholesale on every pack activation.
  struct Active {
    int version = 0;
    std::shared_ptr<const Gate> gate;
  };
  std::mutex gates_mu;
  std::map<std::string, Active> gates;

  std::mutex fits_mu;
  std::set<std::string> fitting;
  std::vector<std::jthread> fit_threads;

  std::mutex id_mu;
  std::mt19937_64 id_rng{std::random_device{}()};

  std::mutex run_mu;
  std::condition_variable run_cv;
  bool running = false;

  explicit Impl(ServiceOptions opts) : options(std::move(opts)) {
    std::filesystem::create_directories(options.data_dir);
    store = std::make_unique<Store>(options.data_dir / "odgate.db", options.max_records);
    store->fail_interrupted_jobs(rfc3339_now());
    EmbedderSpec spec;
    spec.dimension = options.embedder_dimension;
    spec.seed = options.embedder_seed;
    if (!options.embedder_url.empty()) {
      spec.kind = EmbedderKind::kRemote;
      spec.identifier = options.embedder_url;
      spec.seed = 0;
    }
    embedder = make_embedder(spec, remote_options());
    routes();
  }

  RemoteOptions remote_options() const {
    return RemoteOptions{options.embed_timeout, options.max_in_flight};
  }

  std::string new_id(const char* prefix) {
    std::lock_guard lock(id_mu);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%016llx", prefix, static_cast<unsigned long long>(id_rng()));
    return buf;
  }

  bool same_embedder(const EmbedderSpec& a, const EmbedderSpec& b) const {
    return a.kind == b.kind && a.dimension == b.dimension && a.identifier == b.identifier &&
           (a.kind == EmbedderKind::kRemote || a.seed == b.seed);
  }

  std::shared_ptr<const Gate> make_gate(std::shared_ptr<const DetectorPack> pack) const {
    if (same_embedder(pack->embedder, embedder->spec())) return std::make_shared<Gate>(pack, embedder);
    return std::make_shared<Gate>(pack, remote_options());
  }

  // Snapshot of the active gate; loaded from the store on first use.
  Active active(const std::string& project_id) {
    std::lock_guard lock(gates_mu);
    auto it = gates.find(project_id);
    if (it != gates.end()) return it->second;
    store->require_project(project_id);
    auto stored = store->active_pack(project_id);
    if (!stored) fail(ErrorCode::kNoActivePack, "project '" + project_id + "' has no fitted pack");
    auto pack = std::make_shared<const DetectorPack>(load_pack(stored->body));
    Active a{stored->version, make_gate(pack)};
    gates[project_id] = a;
    return a;
  }

  // Persists and swaps in a pack as one step with respect to scoring.
  int activate(const std::string& project_id, const DetectorPack& pack) {
    const std::string body = save_pack(pack);
    auto shared = std::make_shared<const DetectorPack>(pack);
    auto gate = make_gate(shared);
    std::lock_guard lock(gates_mu);
    const int version = store->activate_pack(project_id, pack.created_at, pack.tau, body);
    gates[project_id] = Active{version, gate};
    return version;
  }

  // Wraps a handler with error translation.
  template <typename F>
  httplib::Server::Handler wrap(F fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const Error& e) {
        send_error(res, http_status(e.code()), std::string(error_code_name(e.code())), e.what());
      } catch (const json::exception& e) {
        send_error(res, 400, std::string(error_code_name(ErrorCode::kInvalidArgument)), e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, std::string(error_code_name(ErrorCode::kInternal)), e.what());
      }
    };
  }

  void routes() {
    server.new_task_queue = [n = std::max(options.threads, 1)] { return new httplib::ThreadPool(n); };
    server.set_payload_max_length(256u << 20);
    // httplib defaults to SO_REUSEPORT, which lets a second server share the port.
    server.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });

    server.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
      if (req.method == "OPTIONS") {
        res.set_header("Access-Control-Allow-Methods", "GET, POST, PATCH, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Authorization, Content-Type");
        res.status = 204;
        return httplib::Server::HandlerResponse::Handled;
      }
      if (!options.api_token.empty() && req.path.starts_with("/v1/") && req.path != "/v1/health") {
        if (req.get_header_value("Authorization") != "Bearer " + options.api_token) {
          send_error(res, 401, "Unauthorized", "missing or invalid bearer token");
          return httplib::Server::HandlerResponse::Handled;
        }
      }
      return httplib::Server::HandlerResponse::Unhandled;
    });

    server.Get("/v1/health", [](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, json{{"status", "ok"}, {"version", kVersion}});
    });

    server.Post("/v1/projects", wrap([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      const auto name = field<std::string>(body, "name", "");
      if (name.empty()) fail(ErrorCode::kInvalidArgument, "name must be non-empty");
      const Project p = store->create_project(new_id("p-"), name, rfc3339_now());
      send_json(res, 201, project_json(p));
    }));

    server.Get("/v1/projects", wrap([this](const httplib::Request&, httplib::Response& res) {
      json list = json::array();
      for (const auto& p : store->list_projects()) list.push_back(project_json(p));
      send_json(res, 200, json{{"projects", list}});
    }));

    server.Get("/v1/projects/:id", wrap([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, 200, project_json(store->require_project(req.path_params.at("id"))));
    }));

    server.Post("/v1/projects/:id/reference",
                wrap([this](const httplib::Request& req, httplib::Response& res) {
                  ingest_reference(req, res);
                }));

    server.Post("/v1/projects/:id/fit", wrap([this](const httplib::Request& req, httplib::Response& res) {
      start_fit(req, res);
    }));

    server.Get("/v1/fit-jobs/:id", wrap([this](const httplib::Request& req, httplib::Response& res) {
      auto job = store->find_job(req.path_params.at("id"));
      if (!job) fail(ErrorCode::kJobNotFound, "no fit job '" + req.path_params.at("id") + "'");
      send_json(res, 200, job_json(*job));
    }));

    server.Post("/v1/projects/:id/score", wrap([this](const httplib::Request& req, httplib::Response& res) {
      score(req, res);
    }));

    server.Get("/v1/projects/:id/records", wrap([this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.path_params.at("id");
      store->require_project(id);
      RecordQuery q;
      if (req.has_param("since")) q.since_seq = parse_int(req.get_param_value("since"), "since");
      if (req.has_param("flagged")) q.flagged_only = parse_bool(req.get_param_value("flagged"));
      if (req.has_param("limit")) {
        const auto limit = parse_int(req.get_param_value("limit"), "limit");
        if (limit < 1 || limit > kMaxPageLimit) {
          fail(ErrorCode::kInvalidArgument, "limit must be in [1, " + std::to_string(kMaxPageLimit) + "]");
        }
        q.limit = static_cast<int>(limit);
      }
      json records = json::array();
      std::int64_t next = q.since_seq;
      for (const auto& r : store->list_records(id, q)) {
        records.push_back(record_json(r));
        next = r.seq;
      }
      send_json(res, 200, json{{"records", records}, {"next_since", next}});
    }));

    server.Get("/v1/projects/:id/stats", wrap([this](const httplib::Request& req, httplib::Response& res) {
      stats(req, res);
    }));

    server.Patch("/v1/projects/:id/threshold",
                 wrap([this](const httplib::Request& req, httplib::Response& res) {
                   const std::string id = req.path_params.at("id");
                   const json body = parse_body(req);
                   if (!body.contains("tau") || !body["tau"].is_number()) {
                     fail(ErrorCode::kInvalidTau, "tau must be a number");
                   }
                   const double tau = body["tau"].get<double>();
                   check_tau(tau);
                   const Active a = active(id);
                   DetectorPack next = rethreshold(a.gate->pack(), tau);
                   next.created_at = rfc3339_now();
                   const int version = activate(id, next);
                   send_json(res, 200, json{{"project_id", id},
                                            {"pack_version", version},
                                            {"tau", tau},
                                            {"thresholds", thresholds_json(next)}});
                 }));

    server.Post("/v1/records/:id/review", wrap([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      const auto label = field<std::string>(body, "label", "");
      if (label != "confirmed_outlier" && label != "false_alarm") {
        fail(ErrorCode::kInvalidLabel, "label must be confirmed_outlier or false_alarm");
      }
      const auto note = field<std::string>(body, "note", "");
      const ScoreRecord r = store->review(req.path_params.at("id"), label, note, rfc3339_now());
      send_json(res, 200, record_with_audit(r));
    }));

    server.Get("/v1/records/:id", wrap([this](const httplib::Request& req, httplib::Response& res) {
      auto r = store->find_record(req.path_params.at("id"));
      if (!r) fail(ErrorCode::kRecordNotFound, "no record '" + req.path_params.at("id") + "'");
      send_json(res, 200, record_with_audit(*r));
    }));

    server.Get("/v1/records/:id/thumbnail", wrap([this](const httplib::Request& req, httplib::Response& res) {
      auto png = store->thumbnail(req.path_params.at("id"));
      if (!png) fail(ErrorCode::kRecordNotFound, "no thumbnail for '" + req.path_params.at("id") + "'");
      res.status = 200;
      res.set_content(std::string(png->begin(), png->end()), "image/png");
    }));

    if (!options.static_dir.empty()) server.set_mount_point("/", options.static_dir.string());
  }

  json project_json(const Project& p) {
    json out{{"project_id", p.project_id},
             {"name", p.name},
             {"created_at", p.created_at},
             {"active_pack_version", p.active_pack_version ? json(*p.active_pack_version) : json(nullptr)},
             {"reference_count", store->reference_count(p.project_id)}};
    {
      std::lock_guard lock(fits_mu);
      out["fit_running"] = fitting.count(p.project_id) > 0;
    }
    if (auto stored = store->active_pack(p.project_id)) {
      out["pack"] = pack_summary(*stored, load_pack(stored->body));
    } else {
      out["pack"] = nullptr;
    }
    return out;
  }

  json record_with_audit(const ScoreRecord& r) {
    json out = record_json(r);
    json audit = json::array();
    for (const auto& a : store->audit_trail(r.record_id)) {
      audit.push_back(json{{"at", a.at}, {"old_label", a.old_label}, {"new_label", a.new_label}, {"note", a.note}});
    }
    out["audit"] = audit;
    return out;
  }

  void ingest_reference(const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.path_params.at("id");
    store->require_project(id);
    if (!req.is_multipart_form_data()) fail(ErrorCode::kInvalidArgument, "expected multipart/form-data");
    int accepted = 0;
    json rejected = json::array();
    int index = 0;
    for (const auto& [key, file] : req.files) {
      const std::string name = file.filename.empty() ? key : file.filename;
      const std::vector<std::uint8_t> bytes(file.content.begin(), file.content.end());
      try {
        decode_image(bytes);
        store->add_reference(id, name, bytes);
        ++accepted;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kDecodeError && e.code() != ErrorCode::kEmptyImage) throw;
        rejected.push_back(json{{"index", index}, {"name", name}, {"error", std::string(error_code_name(e.code()))}, {"detail", e.what()}});
      }
      ++index;
    }
    send_json(res, 200, json{{"accepted", accepted}, {"rejected", rejected}, {"reference_count", store->reference_count(id)}});
  }

  void start_fit(const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.path_params.at("id");
    store->require_project(id);
    const json body = parse_body(req);
    const double tau = field<double>(body, "tau", 5.0);
    check_tau(tau);
    GateConfig config;
    config.seed = field<std::uint64_t>(body, "seed", 0);
    config.split_fraction = field<double>(body, "split_fraction", config.split_fraction);
    config.k_max = field<int>(body, "k_max", config.k_max);
    config.r_candidates = field<std::vector<int>>(body, "r_candidates", {});
    config.combine = parse_combine_rule(field<std::string>(body, "combine", "or"));
    const auto cov = field<std::string>(body, "covariance", "diagonal");
    if (cov == "full") {
      config.covariance = CovarianceType::kFull;
    } else if (cov != "diagonal") {
      fail(ErrorCode::kInvalidArgument, "covariance must be diagonal or full");
    }
    if (!(config.split_fraction > 0.0 && config.split_fraction < 1.0)) {
      fail(ErrorCode::kInvalidArgument, "split_fraction must be in (0, 1)");
    }
    if (config.k_max < 1) fail(ErrorCode::kInvalidArgument, "k_max must be positive");

    const int n = store->reference_count(id);
    if (n < kMinReferenceImages) {
      fail(ErrorCode::kInsufficientReference, std::to_string(n) + " reference images, need at least " +
                                                  std::to_string(kMinReferenceImages));
    }

    FitJob job;
    job.job_id = new_id("j-");
    job.project_id = id;
    job.state = "pending";
    job.created_at = job.updated_at = rfc3339_now();
    {
      std::lock_guard lock(fits_mu);
      if (fitting.count(id)) fail(ErrorCode::kFitAlreadyRunning, "a fit is already running for '" + id + "'");
      store->insert_job(job);
      fitting.insert(id);
      fit_threads.emplace_back([this, job, tau, config]() mutable { run_fit(job, tau, config); });
    }
    send_json(res, 202, job_json(job));
  }

  void run_fit(FitJob job, double tau, GateConfig config) {
    try {
      job.state = "running";
      job.updated_at = rfc3339_now();
      store->update_job(job);
      std::vector<ImageTensor> images;
      std::vector<std::vector<std::uint8_t>> encoded;
      for (auto& [name, bytes] : store->reference_images(job.project_id)) {
        images.push_back(decode_image(bytes));
        encoded.push_back(std::move(bytes));
      }
      config.created_at = rfc3339_now();
      const DetectorPack pack = fit_gate(images, tau, config, *embedder, encoded);
      job.pack_version = activate(job.project_id, pack);
      job.state = "done";
    } catch (const Error& e) {
      job.state = "failed";
      job.error = std::string(error_code_name(e.code())) + ": " + e.what();
    } catch (const std::exception& e) {
      job.state = "failed";
      job.error = std::string("Internal: ") + e.what();
    }
    job.updated_at = rfc3339_now();
    try {
      store->update_job(job);
    } catch (const std::exception&) {
      // Left for fail_interrupted_jobs on the next start.
    }
    std::lock_guard lock(fits_mu);
    fitting.erase(job.project_id);
  }

  void score(const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.path_params.at("id");
    const Active a = active(id);
    const std::vector<std::uint8_t> bytes(req.body.begin(), req.body.end());
    const ImageTensor img = decode_image(bytes);
    ScoreRecord r;
    r.record_id = new_id("r-");
    r.project_id = id;
    r.timestamp = rfc3339_now();
    r.pack_version = a.version;
    r.verdict = a.gate->score(img, bytes);
    const auto thumb = encode_png(from_gray(thumbnail(to_grayscale(img), kThumbnailEdge)));
    r = store->insert_record(std::move(r), thumb);
    send_json(res, 201, record_json(r));
  }

  void stats(const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.path_params.at("id");
    const Active a = active(id);
    const DetectorPack& pack = a.gate->pack();
    const auto recent = store->recent_records(id, kRecentWindow);

    int flagged = 0;
    int degraded = 0;
    for (const auto& r : recent) {
      flagged += r.verdict.outlier;
      degraded += r.verdict.degraded;
    }
    const double n_recent = static_cast<double>(recent.size());

    json features = json::array();
    const auto& names = fof_names();
    for (int f = 0; f < kFofDim; ++f) {
      std::vector<double> ref;
      ref.reserve(pack.train_features.size());
      for (const auto& fv : pack.train_features) ref.push_back(fv[f]);
      double lo = *std::min_element(ref.begin(), ref.end());
      double hi = *std::max_element(ref.begin(), ref.end());
      if (!(hi > lo)) {
        lo -= 0.5;
        hi += 0.5;
      }
      std::vector<double> cur;
      cur.reserve(recent.size());
      for (const auto& r : recent) cur.push_back(r.verdict.features[f]);
      const DisplayHistogram ref_h = bin_values(ref, lo, hi);
      const DisplayHistogram cur_h = bin_values(cur, lo, hi);
      std::vector<double> edges(kDisplayBins + 1);
      for (int i = 0; i <= kDisplayBins; ++i) edges[i] = lo + (hi - lo) * i / kDisplayBins;
      features.push_back(json{{"name", std::string(names[f])},
                              {"edges", edges},
                              {"reference", ref_h.probs},
                              {"recent", cur_h.probs},
                              {"recent_out_of_range", cur_h.out_of_range}});
    }

    send_json(res, 200,
              json{{"project_id", id},
                   {"pack_version", a.version},
                   {"tau", pack.tau},
                   {"combine", to_string(pack.combine)},
                   {"display_bins", kDisplayBins},
                   {"recent_window", kRecentWindow},
                   {"recent_count", recent.size()},
                   {"recent_flagged", flagged},
                   {"flag_rate", recent.empty() ? 0.0 : flagged / n_recent},
                   {"degraded_rate", recent.empty() ? 0.0 : degraded / n_recent},
                   {"features", features},
                   {"thresholds", thresholds_json(pack)},
                   {"train", {{"gmm_logliks", pack.train_gmm_logliks}, {"recon_losses", pack.train_recon_losses}}}});
  }
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

Service::~Service() { stop(); }

void Service::start() {
  Impl& s = *impl_;
  if (s.options.port == 0) {
    s.bound_port = s.server.bind_to_any_port(s.options.host);
    if (s.bound_port <= 0) fail(ErrorCode::kAddressInUse, "cannot bind " + s.options.host);
  } else {
    if (!s.server.bind_to_port(s.options.host, s.options.port)) {
      fail(ErrorCode::kAddressInUse,
           "cannot bind " + s.options.host + ":" + std::to_string(s.options.port));
    }
    s.bound_port = s.options.port;
  }
  {
    std::lock_guard lock(s.run_mu);
    s.running = true;
  }
  s.listener = std::thread([&s] { s.server.listen_after_bind(); });
  s.server.wait_until_ready();
}

int Service::port() const { return impl_->bound_port; }

void Service::stop() {
  Impl& s = *impl_;
  s.server.stop();
  if (s.listener.joinable()) s.listener.join();
  std::vector<std::jthread> fits;
  {
    std::lock_guard lock(s.fits_mu);
    fits.swap(s.fit_threads);
  }
  fits.clear();  // joins
  {
    std::lock_guard lock(s.run_mu);
    s.running = false;
  }
  s.run_cv.notify_all();
}

void Service::wait() {
  std::unique_lock lock(impl_->run_mu);
  impl_->run_cv.wait(lock, [this] { return !impl_->running; });
}

}  // namespace odgate
