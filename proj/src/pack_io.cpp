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

#include "odgate/pack_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <system_error>

#include "odgate/error.hpp"

namespace odgate {

using ordered_json = nlohmann::ordered_json;

std::string format_double(double value) {
  if (!std::isfinite(value)) fail(ErrorCode::kNonFinite, "cannot serialize a non-finite number");
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  std::string out(buf, res.ptr);
  if (out.find_first_of(".eEn") == std::string::npos) out += ".0";
  return out;
}

namespace {

bool is_scalar(const ordered_json& j) { return !j.is_array() && !j.is_object(); }

void emit(const ordered_json& j, int indent, std::string& out) {
  const std::string pad(static_cast<std::size_t>(indent), ' ');
  const std::string inner(static_cast<std::size_t>(indent + 2), ' ');
  switch (j.type()) {
    case ordered_json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (const auto& [key, value] : j.items()) {
        if (!first) out += ",\n";
        first = false;
        out += inner;
        out += ordered_json(key).dump();
        out += ": ";
        emit(value, indent + 2, out);
      }
      out += "\n" + pad + "}";
      return;
    }
    case ordered_json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      const bool flat = std::all_of(j.begin(), j.end(), is_scalar);
      if (flat) {
        out += "[";
        for (std::size_t i = 0; i < j.size(); ++i) {
          if (i) out += ", ";
          emit(j[i], indent, out);
        }
        out += "]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ",\n";
        out += inner;
        emit(j[i], indent + 2, out);
      }
      out += "\n" + pad + "]";
      return;
    }
    case ordered_json::value_t::number_float:
      out += format_double(j.get<double>());
      return;
    default:
      out += j.dump();
      return;
  }
}

ordered_json doubles(const std::vector<double>& v) {
  ordered_json a = ordered_json::array();
  for (double x : v) a.push_back(x);
  return a;
}

ordered_json doubles(const Vector& v) {
  ordered_json a = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

ordered_json rows(const Matrix& m) {
  ordered_json a = ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(doubles(Vector(m.row(i).transpose())));
  return a;
}

const char* covariance_name(CovarianceType c) {
  return c == CovarianceType::kDiagonal ? "diagonal" : "full";
}

const char* embedder_kind_name(EmbedderKind k) { return k == EmbedderKind::kTest ? "test" : "remote"; }

// ---- reading ----

[[noreturn]] void malformed(const std::string& what) {
  fail(ErrorCode::kInvariantViolation, "malformed pack: " + what);
}

const ordered_json& at(const ordered_json& obj, const char* key) {
  if (!obj.is_object()) malformed(std::string("expected an object around '") + key + "'");
  const auto it = obj.find(key);
  if (it == obj.end()) malformed(std::string("missing key '") + key + "'");
  return *it;
}

double num(const ordered_json& j, const char* what) {
  if (!j.is_number()) malformed(std::string(what) + " must be a number");
  return j.get<double>();
}

long long integer(const ordered_json& j, const char* what) {
  if (!j.is_number_integer()) malformed(std::string(what) + " must be an integer");
  return j.get<long long>();
}

std::uint64_t uinteger(const ordered_json& j, const char* what) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0)) {
    malformed(std::string(what) + " must be a non-negative integer");
  }
  return j.get<std::uint64_t>();
}

std::string str(const ordered_json& j, const char* what) {
  if (!j.is_string()) malformed(std::string(what) + " must be a string");
  return j.get<std::string>();
}

std::vector<double> read_doubles(const ordered_json& j, const char* what) {
  if (!j.is_array()) malformed(std::string(what) + " must be an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& x : j) out.push_back(num(x, what));
  return out;
}

Vector read_vector(const ordered_json& j, const char* what) {
  const auto v = read_doubles(j, what);
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Matrix read_rows(const ordered_json& j, const char* what, Eigen::Index cols = -1) {
  if (!j.is_array()) malformed(std::string(what) + " must be an array of rows");
  Matrix m;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const Vector row = read_vector(j[i], what);
    if (i == 0) {
      if (cols >= 0 && row.size() != cols) malformed(std::string(what) + " has rows of the wrong width");
      m.resize(static_cast<Eigen::Index>(j.size()), row.size());
    } else if (row.size() != m.cols()) {
      malformed(std::string(what) + " is ragged");
    }
    m.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return m;
}

}  // namespace

std::string canonical_json(const ordered_json& doc) {
  std::string out;
  emit(doc, 0, out);
  out += "\n";
  return out;
}

std::string save_pack(const DetectorPack& pack) {
  ordered_json doc;
  doc["format"] = "odpack";
  doc["pack_version"] = pack.pack_version;
  doc["created_at"] = pack.created_at;
  doc["tau"] = pack.tau;
  doc["combine"] = to_string(pack.combine);

  const GateConfig& c = pack.config;
  ordered_json config;
  config["seed"] = c.seed;
  config["split_fraction"] = c.split_fraction;
  config["k_max"] = c.k_max;
  config["r_candidates"] = c.r_candidates;
  config["em_max_iter"] = c.em_max_iter;
  config["em_rel_tol"] = c.em_rel_tol;
  config["em_n_init"] = c.em_n_init;
  config["covariance"] = covariance_name(c.covariance);
  doc["config"] = std::move(config);

  ordered_json embedder;
  embedder["kind"] = embedder_kind_name(pack.embedder.kind);
  embedder["dimension"] = pack.embedder.dimension;
  embedder["identifier"] = pack.embedder.identifier;
  embedder["seed"] = pack.embedder.seed;
  doc["embedder"] = std::move(embedder);

  ordered_json reference;
  reference["n_reference"] = pack.n_reference;
  reference["n_fit"] = pack.n_fit;
  reference["n_holdout"] = pack.n_holdout;
  doc["reference"] = std::move(reference);

  const GmmParams& p = pack.gmm.params;
  ordered_json gmm;
  gmm["loglik_threshold"] = pack.gmm.loglik_threshold;
  gmm["standardizer"] = {{"mean", doubles(pack.gmm.standardizer.mean)},
                         {"std", doubles(pack.gmm.standardizer.std)}};
  gmm["covariance"] = covariance_name(p.covariance_type);
  gmm["weights"] = doubles(p.weights);
  gmm["means"] = rows(p.means);
  if (p.covariance_type == CovarianceType::kDiagonal) {
    gmm["variances"] = rows(p.variances);
  } else {
    ordered_json full = ordered_json::array();
    for (const Matrix& cov : p.full) full.push_back(rows(cov));
    gmm["covariances"] = std::move(full);
  }
  ordered_json bic = ordered_json::array();
  for (double b : pack.gmm_bic) bic.push_back(std::isfinite(b) ? ordered_json(b) : ordered_json(nullptr));
  gmm["bic"] = std::move(bic);
  doc["gmm"] = std::move(gmm);

  ordered_json subspace;
  subspace["loss_threshold"] = pack.subspace.loss_threshold;
  subspace["r"] = pack.subspace.rank();
  subspace["mean"] = doubles(pack.subspace.mean);
  subspace["components"] = rows(pack.subspace.components);
  doc["subspace"] = std::move(subspace);

  ordered_json sweep;
  sweep["r_star"] = pack.sweep.r_star;
  ordered_json table = ordered_json::array();
  for (const SweepRow& row : pack.sweep.table) {
    table.push_back(ordered_json{{"r", row.r},
                                 {"r_effective", row.r_effective},
                                 {"p_train", row.p_train},
                                 {"p_test", row.p_test}});
  }
  sweep["table"] = std::move(table);
  doc["sweep"] = std::move(sweep);

  ordered_json train;
  train["gmm_logliks"] = doubles(pack.train_gmm_logliks);
  train["recon_losses"] = doubles(pack.train_recon_losses);
  ordered_json features = ordered_json::array();
  for (const FeatureVector& f : pack.train_features) {
    features.push_back(doubles(std::vector<double>(f.values.begin(), f.values.end())));
  }
  train["features"] = std::move(features);
  doc["train"] = std::move(train);

  return canonical_json(doc);
}

DetectorPack load_pack(std::string_view text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::exception& e) {
    malformed(e.what());
  }
  if (!doc.is_object() || !doc.contains("format") || doc["format"] != "odpack") {
    fail(ErrorCode::kSchemaVersionMismatch, "not an odpack document");
  }
  DetectorPack pack;
  pack.pack_version = static_cast<int>(integer(at(doc, "pack_version"), "pack_version"));
  if (pack.pack_version != kPackVersion) {
    fail(ErrorCode::kSchemaVersionMismatch,
         "pack_version " + std::to_string(pack.pack_version) + " is not supported (expected " +
             std::to_string(kPackVersion) + ")");
  }
  try {
    pack.created_at = str(at(doc, "created_at"), "created_at");
    pack.tau = num(at(doc, "tau"), "tau");
    pack.combine = parse_combine_rule(str(at(doc, "combine"), "combine"));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kInvariantViolation) throw;
    malformed(e.what());
  }

  const auto& config = at(doc, "config");
  GateConfig& c = pack.config;
  c.seed = uinteger(at(config, "seed"), "config.seed");
  c.split_fraction = num(at(config, "split_fraction"), "config.split_fraction");
  c.k_max = static_cast<int>(integer(at(config, "k_max"), "config.k_max"));
  for (const auto& r : at(config, "r_candidates")) c.r_candidates.push_back(static_cast<int>(integer(r, "r")));
  c.em_max_iter = static_cast<int>(integer(at(config, "em_max_iter"), "config.em_max_iter"));
  c.em_rel_tol = num(at(config, "em_rel_tol"), "config.em_rel_tol");
  c.em_n_init = static_cast<int>(integer(at(config, "em_n_init"), "config.em_n_init"));
  const std::string cov = str(at(config, "covariance"), "config.covariance");
  if (cov != "diagonal" && cov != "full") malformed("unknown covariance type");
  c.covariance = cov == "diagonal" ? CovarianceType::kDiagonal : CovarianceType::kFull;
  c.combine = pack.combine;
  c.created_at = pack.created_at;

  const auto& embedder = at(doc, "embedder");
  const std::string kind = str(at(embedder, "kind"), "embedder.kind");
  if (kind != "test" && kind != "remote") malformed("unknown embedder kind");
  pack.embedder.kind = kind == "test" ? EmbedderKind::kTest : EmbedderKind::kRemote;
  pack.embedder.dimension = static_cast<int>(integer(at(embedder, "dimension"), "embedder.dimension"));
  pack.embedder.identifier = str(at(embedder, "identifier"), "embedder.identifier");
  pack.embedder.seed = uinteger(at(embedder, "seed"), "embedder.seed");

  const auto& reference = at(doc, "reference");
  pack.n_reference = static_cast<int>(integer(at(reference, "n_reference"), "n_reference"));
  pack.n_fit = static_cast<int>(integer(at(reference, "n_fit"), "n_fit"));
  pack.n_holdout = static_cast<int>(integer(at(reference, "n_holdout"), "n_holdout"));

  const auto& gmm = at(doc, "gmm");
  pack.gmm.tau = pack.tau;
  pack.gmm.loglik_threshold = num(at(gmm, "loglik_threshold"), "gmm.loglik_threshold");
  const auto& standardizer = at(gmm, "standardizer");
  pack.gmm.standardizer.mean = read_vector(at(standardizer, "mean"), "standardizer.mean");
  pack.gmm.standardizer.std = read_vector(at(standardizer, "std"), "standardizer.std");
  GmmParams& p = pack.gmm.params;
  const std::string gcov = str(at(gmm, "covariance"), "gmm.covariance");
  if (gcov != "diagonal" && gcov != "full") malformed("unknown GMM covariance type");
  p.covariance_type = gcov == "diagonal" ? CovarianceType::kDiagonal : CovarianceType::kFull;
  p.weights = read_vector(at(gmm, "weights"), "gmm.weights");
  p.means = read_rows(at(gmm, "means"), "gmm.means");
  if (p.covariance_type == CovarianceType::kDiagonal) {
    p.variances = read_rows(at(gmm, "variances"), "gmm.variances", p.means.cols());
  } else {
    const auto& full = at(gmm, "covariances");
    if (!full.is_array()) malformed("gmm.covariances must be an array");
    p.variances.resize(static_cast<Eigen::Index>(full.size()), p.means.cols());
    for (std::size_t k = 0; k < full.size(); ++k) {
      p.full.push_back(read_rows(full[k], "gmm.covariances", p.means.cols()));
      if (p.full.back().rows() != p.means.cols()) malformed("gmm.covariances must be square");
      p.variances.row(static_cast<Eigen::Index>(k)) = p.full.back().diagonal().transpose();
    }
  }
  for (const auto& b : at(gmm, "bic")) {
    pack.gmm_bic.push_back(b.is_null() ? std::numeric_limits<double>::infinity() : num(b, "gmm.bic"));
  }

  const auto& subspace = at(doc, "subspace");
  pack.subspace.tau = pack.tau;
  pack.subspace.loss_threshold = num(at(subspace, "loss_threshold"), "subspace.loss_threshold");
  const long long r = integer(at(subspace, "r"), "subspace.r");
  pack.subspace.mean = read_vector(at(subspace, "mean"), "subspace.mean");
  pack.subspace.components = read_rows(at(subspace, "components"), "subspace.components",
                                       pack.subspace.mean.size());
  if (pack.subspace.components.rows() != r) malformed("subspace.r disagrees with the component count");

  const auto& sweep = at(doc, "sweep");
  pack.sweep.r_star = static_cast<int>(integer(at(sweep, "r_star"), "sweep.r_star"));
  for (const auto& row : at(sweep, "table")) {
    SweepRow s;
    s.r = static_cast<int>(integer(at(row, "r"), "sweep.r"));
    s.r_effective = static_cast<int>(integer(at(row, "r_effective"), "sweep.r_effective"));
    s.p_train = num(at(row, "p_train"), "sweep.p_train");
    s.p_test = num(at(row, "p_test"), "sweep.p_test");
    pack.sweep.table.push_back(s);
  }

  const auto& train = at(doc, "train");
  pack.train_gmm_logliks = read_doubles(at(train, "gmm_logliks"), "train.gmm_logliks");
  pack.train_recon_losses = read_doubles(at(train, "recon_losses"), "train.recon_losses");
  const auto& features = at(train, "features");
  if (!features.is_array()) malformed("train.features must be an array");
  for (const auto& row : features) {
    const auto v = read_doubles(row, "train.features");
    if (v.size() != static_cast<std::size_t>(kFofDim)) malformed("train.features rows must have 9 values");
    FeatureVector f;
    std::copy(v.begin(), v.end(), f.values.begin());
    pack.train_features.push_back(f);
  }

  validate(pack);
  return pack;
}

DetectorPack load_pack_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot open pack file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_pack(buf.str());
}

void save_pack_file(const DetectorPack& pack, const std::filesystem::path& path) {
  const std::string text = save_pack(pack);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIoError, "cannot write pack file " + tmp.string());
    out << text;
    if (!out.flush()) fail(ErrorCode::kIoError, "short write on " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::kIoError, "cannot move pack into place: " + ec.message());
}

}  // namespace odgate
