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

#include "odgate/odgate.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "odgate/embedder.hpp"
#include "odgate/error.hpp"
#include "odgate/gate.hpp"
#include "odgate/pack_io.hpp"
#include "odgate/parallel.hpp"
#include "odgate/percentile.hpp"
#include "odgate/service.hpp"
#include "odgate/subspace.hpp"
#include "odgate/synthbench.hpp"

struct odg_pack {
  std::shared_ptr<const odgate::DetectorPack> pack;
  odgate::Gate gate;
};

struct odg_service {
  std::unique_ptr<odgate::Service> service;
};

namespace {

using odgate::ErrorCode;

thread_local std::string last_error;

odg_status to_status(ErrorCode code) { return static_cast<odg_status>(static_cast<int>(code) + 1); }

template <typename F>
odg_status guard(F&& fn) {
  try {
    fn();
    last_error.clear();
    return ODG_OK;
  } catch (const odgate::Error& e) {
    last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return ODG_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return ODG_ERR_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) odgate::fail(ErrorCode::kInvalidArgument, what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

std::vector<std::uint8_t> read_file(const char* path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) odgate::fail(ErrorCode::kIoError, std::string("cannot read ") + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

odgate::RemoteOptions remote_options(const odg_fit_options& o) {
  odgate::RemoteOptions r;
  if (o.embed_timeout_ms > 0) r.timeout = std::chrono::milliseconds(o.embed_timeout_ms);
  return r;
}

odgate::EmbedderSpec embedder_spec(const odg_fit_options& o) {
  odgate::EmbedderSpec spec;
  spec.dimension = o.embedder_dimension;
  spec.seed = o.embedder_seed;
  if (o.embedder_url && *o.embedder_url) {
    spec.kind = odgate::EmbedderKind::kRemote;
    spec.identifier = o.embedder_url;
    spec.seed = 0;
  }
  odgate::validate(spec);
  return spec;
}

odgate::GateConfig gate_config(const odg_fit_options& o) {
  odgate::GateConfig c;
  c.seed = o.seed;
  c.split_fraction = o.split_fraction;
  c.k_max = o.k_max;
  if (o.r_candidates) c.r_candidates.assign(o.r_candidates, o.r_candidates + o.n_r_candidates);
  c.covariance = o.full_covariance ? odgate::CovarianceType::kFull : odgate::CovarianceType::kDiagonal;
  c.combine = o.combine_and ? odgate::CombineRule::kAnd : odgate::CombineRule::kOr;
  c.em_max_iter = o.em_max_iter;
  c.em_rel_tol = o.em_rel_tol;
  c.em_n_init = o.em_n_init;
  if (o.created_at) c.created_at = o.created_at;
  return c;
}

odg_pack* wrap_pack(odgate::DetectorPack pack, const odgate::RemoteOptions& remote = {}) {
  auto shared = std::make_shared<const odgate::DetectorPack>(std::move(pack));
  return new odg_pack{shared, odgate::Gate(shared, remote)};
}

odgate::synth::CorpusSpec parse_spec(const char* text) {
  if (!text) return {};
  auto doc = nlohmann::json::parse(text, nullptr, false);
  if (doc.is_discarded()) odgate::fail(ErrorCode::kInvalidArgument, "corpus spec is not valid JSON");
  return odgate::synth::corpus_spec_from_json(doc);
}

// Decodes files in order; undecodable ones are dropped.
struct Decoded {
  std::vector<odgate::ImageTensor> images;
  std::vector<std::vector<std::uint8_t>> bytes;
  size_t skipped = 0;
};

Decoded decode_files(const char* const* paths, size_t n) {
  Decoded d;
  for (size_t i = 0; i < n; ++i) {
    require(paths[i] != nullptr, "null path");
    try {
      auto bytes = read_file(paths[i]);
      d.images.push_back(odgate::decode_image(bytes));
      d.bytes.push_back(std::move(bytes));
    } catch (const odgate::Error& e) {
      if (e.code() != ErrorCode::kDecodeError && e.code() != ErrorCode::kEmptyImage &&
          e.code() != ErrorCode::kIoError) {
        throw;
      }
      ++d.skipped;
    }
  }
  return d;
}

odgate::Matrix embed_all(const odgate::Embedder& embedder, const Decoded& d) {
  odgate::Matrix out(static_cast<Eigen::Index>(d.images.size()), embedder.spec().dimension);
  odgate::parallel_for(d.images.size(), embedder.parallelism(), [&](std::size_t i) {
    out.row(static_cast<Eigen::Index>(i)) = embedder.embed(d.images[i], d.bytes[i]).values.transpose();
  });
  return out;
}

void fill_verdict(const odgate::Verdict& v, odg_verdict* out) {
  *out = odg_verdict{};
  out->gmm_loglik = v.gmm_loglik;
  out->gmm_margin = v.gmm_margin;
  out->gmm_flag = v.gmm_flag;
  out->has_embedding = v.recon_loss.has_value();
  out->recon_loss = v.recon_loss.value_or(0.0);
  out->embed_margin = v.embed_margin.value_or(0.0);
  out->embed_flag = v.embed_flag.value_or(false);
  out->outlier = v.outlier;
  out->degraded = v.degraded;
  for (int i = 0; i < ODG_FEATURE_COUNT; ++i) out->features[i] = v.features[i];
}

}  // namespace

extern "C" {

const char* odg_version(void) { return odgate::kVersion; }

const char* odg_status_name(odg_status status) {
  if (status == ODG_OK) return "OK";
  const int i = static_cast<int>(status) - 1;
  if (i < 0 || i > static_cast<int>(ErrorCode::kInternal)) return "Unknown";
  // Names are static literals.
  return odgate::error_code_name(static_cast<ErrorCode>(i)).data();
}

const char* odg_last_error(void) { return last_error.c_str(); }

const char* odg_feature_name(int index) {
  if (index < 0 || index >= ODG_FEATURE_COUNT) return nullptr;
  return odgate::fof_names()[index].data();
}

void odg_free_string(char* s) { std::free(s); }

void odg_fit_options_init(odg_fit_options* o) {
  if (!o) return;
  const odgate::GateConfig c;
  const odgate::EmbedderSpec e;
  *o = odg_fit_options{};
  o->tau = 5.0;
  o->seed = c.seed;
  o->split_fraction = c.split_fraction;
  o->k_max = c.k_max;
  o->em_max_iter = c.em_max_iter;
  o->em_rel_tol = c.em_rel_tol;
  o->em_n_init = c.em_n_init;
  o->embedder_dimension = e.dimension;
  o->embedder_seed = e.seed;
  o->embed_timeout_ms = 10'000;
}

odg_status odg_pack_fit_files(const char* const* paths, size_t n_paths, const odg_fit_options* options,
                              odg_pack** out, size_t* n_skipped) {
  return guard([&] {
    require(out != nullptr && (paths != nullptr || n_paths == 0), "null argument");
    odg_fit_options defaults;
    odg_fit_options_init(&defaults);
    const odg_fit_options& o = options ? *options : defaults;
    const Decoded d = decode_files(paths, n_paths);
    if (n_skipped) *n_skipped = d.skipped;
    const auto remote = remote_options(o);
    auto embedder = odgate::make_embedder(embedder_spec(o), remote);
    auto pack = odgate::fit_gate(d.images, o.tau, gate_config(o), *embedder, d.bytes);
    *out = wrap_pack(std::move(pack), remote);
  });
}

odg_status odg_pack_load_file(const char* path, odg_pack** out) {
  return guard([&] {
    require(path && out, "null argument");
    *out = wrap_pack(odgate::load_pack_file(path));
  });
}

odg_status odg_pack_load_text(const char* text, size_t length, odg_pack** out) {
  return guard([&] {
    require(text && out, "null argument");
    *out = wrap_pack(odgate::load_pack(std::string_view(text, length)));
  });
}

odg_status odg_pack_save_file(const odg_pack* pack, const char* path) {
  return guard([&] {
    require(pack && path, "null argument");
    odgate::save_pack_file(*pack->pack, path);
  });
}

odg_status odg_pack_to_text(const odg_pack* pack, char** out) {
  return guard([&] {
    require(pack && out, "null argument");
    *out = dup_string(odgate::save_pack(*pack->pack));
  });
}

odg_status odg_pack_rethreshold(const odg_pack* pack, double tau, odg_pack** out) {
  return guard([&] {
    require(pack && out, "null argument");
    *out = wrap_pack(odgate::rethreshold(*pack->pack, tau));
  });
}

void odg_pack_free(odg_pack* pack) { delete pack; }

odg_status odg_pack_get_summary(const odg_pack* pack, odg_pack_summary* out) {
  return guard([&] {
    require(pack && out, "null argument");
    const odgate::DetectorPack& p = *pack->pack;
    *out = odg_pack_summary{};
    out->pack_version = p.pack_version;
    out->tau = p.tau;
    out->combine_and = p.combine == odgate::CombineRule::kAnd;
    out->n_reference = p.n_reference;
    out->n_fit = p.n_fit;
    out->n_holdout = p.n_holdout;
    out->k = static_cast<int>(p.gmm.params.weights.size());
    out->r_star = p.subspace.rank();
    out->dimension = p.subspace.dimension();
    out->gmm_loglik_threshold = p.gmm.loglik_threshold;
    out->recon_loss_threshold = p.subspace.loss_threshold;
  });
}

odg_status odg_score_buffer(const odg_pack* pack, const uint8_t* data, size_t length, odg_verdict* out) {
  return guard([&] {
    require(pack && out && (data || length == 0), "null argument");
    const std::span<const std::uint8_t> bytes(data, length);
    fill_verdict(pack->gate.score(odgate::decode_image(bytes), bytes), out);
  });
}

odg_status odg_score_file(const odg_pack* pack, const char* path, odg_verdict* out) {
  return guard([&] {
    require(pack && path && out, "null argument");
    const auto bytes = read_file(path);
    fill_verdict(pack->gate.score(odgate::decode_image(bytes), bytes), out);
  });
}

odg_status odg_sweep_files(const char* const* train_paths, size_t n_train, const char* const* test_paths,
                           size_t n_test, double tau, const int* candidates, size_t n_candidates,
                           const odg_fit_options* options, char** out_json) {
  return guard([&] {
    require(out_json && (train_paths || n_train == 0) && (test_paths || n_test == 0), "null argument");
    odgate::check_tau(tau);
    odg_fit_options defaults;
    odg_fit_options_init(&defaults);
    const odg_fit_options& o = options ? *options : defaults;
    auto embedder = odgate::make_embedder(embedder_spec(o), remote_options(o));
    const Decoded train = decode_files(train_paths, n_train);
    const Decoded test = decode_files(test_paths, n_test);
    if (train.images.size() < 2) odgate::fail(ErrorCode::kTooFewSamples, "need at least 2 decodable training images");
    const odgate::Matrix x_train = embed_all(*embedder, train);
    const odgate::Matrix x_test = embed_all(*embedder, test);
    std::vector<int> cand = candidates ? std::vector<int>(candidates, candidates + n_candidates)
                                       : odgate::default_r_candidates(static_cast<int>(x_train.rows()),
                                                                      static_cast<int>(x_train.cols()));
    const odgate::SweepResult sweep = odgate::sweep_r(x_train, x_test, cand, tau);
    nlohmann::ordered_json doc;
    doc["schema"] = "odgate.sweep/1";
    doc["tau"] = tau;
    doc["n_train"] = x_train.rows();
    doc["n_test"] = x_test.rows();
    doc["skipped"] = train.skipped + test.skipped;
    doc["r_star"] = sweep.r_star;
    auto table = nlohmann::ordered_json::array();
    for (const auto& row : sweep.table) {
      table.push_back({{"r", row.r}, {"r_effective", row.r_effective}, {"p_train", row.p_train}, {"p_test", row.p_test}});
    }
    doc["table"] = table;
    *out_json = dup_string(doc.dump());
  });
}

odg_status odg_bench_run(const char* corpus_spec_json, double tau, const odg_fit_options* options,
                         char** report_json) {
  return guard([&] {
    require(report_json != nullptr, "null argument");
    odg_fit_options defaults;
    odg_fit_options_init(&defaults);
    const odg_fit_options& o = options ? *options : defaults;
    odgate::synth::BenchConfig config;
    config.corpus = parse_spec(corpus_spec_json);
    config.tau = tau;
    config.gate = gate_config(o);
    config.embedder = embedder_spec(o);
    const auto result = odgate::synth::run_bench(config);
    *report_json = dup_string(odgate::synth::to_json(result.report).dump(2));
  });
}

odg_status odg_corpus_export(const char* corpus_spec_json, const char* dir, size_t* n_written) {
  return guard([&] {
    require(dir != nullptr, "null argument");
    const auto corpus = odgate::synth::generate_corpus(parse_spec(corpus_spec_json));
    const int n = odgate::synth::export_corpus(corpus, dir);
    if (n_written) *n_written = static_cast<size_t>(n);
  });
}

void odg_service_options_init(odg_service_options* o) {
  if (!o) return;
  const odgate::ServiceOptions d;
  *o = odg_service_options{};
  o->host = "127.0.0.1";
  o->port = d.port;
  o->data_dir = "odgate-data";
  o->embedder_dimension = d.embedder_dimension;
  o->max_in_flight = d.max_in_flight;
  o->embed_timeout_ms = static_cast<int>(d.embed_timeout.count());
  o->max_records = d.max_records;
}

odg_status odg_service_start(const odg_service_options* options, odg_service** out) {
  return guard([&] {
    require(options && out, "null argument");
    odgate::ServiceOptions s;
    if (options->host) s.host = options->host;
    s.port = options->port;
    if (options->data_dir) s.data_dir = options->data_dir;
    if (options->embedder_url) s.embedder_url = options->embedder_url;
    s.embedder_dimension = options->embedder_dimension;
    s.max_in_flight = options->max_in_flight;
    s.embed_timeout = std::chrono::milliseconds(options->embed_timeout_ms);
    if (options->api_token) s.api_token = options->api_token;
    if (options->static_dir) s.static_dir = options->static_dir;
    s.max_records = options->max_records;
    require(s.port >= 0 && s.port <= 65535, "port out of range");
    require(s.max_in_flight >= 1, "max_in_flight must be positive");
    auto service = std::make_unique<odgate::Service>(std::move(s));
    service->start();
    *out = new odg_service{std::move(service)};
  });
}

int odg_service_port(const odg_service* service) { return service ? service->service->port() : 0; }

odg_status odg_service_stop(odg_service* service) {
  return guard([&] {
    require(service != nullptr, "null argument");
    service->service->stop();
  });
}

void odg_service_wait(odg_service* service) {
  if (service) service->service->wait();
}

void odg_service_free(odg_service* service) { delete service; }

}  // extern "C"
