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

#include "odgate/synthbench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "odgate/error.hpp"
#include "odgate/parallel.hpp"
#include "odgate/prng.hpp"

namespace odgate::synth {
namespace {

// Stream tags keep every (family, index) pair on its own random stream.
enum : std::uint64_t {
  kTagInlier = 0,
  kTagNoise = 1,
  kTagBlank = 2,
  kTagInverted = 3,
  kTagBright = 4,
  kTagGrid = 5,
};

std::uint64_t stream(std::uint64_t tag, int index) {
  return (tag << 32) | static_cast<std::uint32_t>(index);
}

constexpr double kBackground = 0.1;
constexpr double kNoiseSigma = 0.02;

ImageTensor blob_image(int size, std::uint64_t seed) {
  Rng rng(seed);
  const double w = size;
  const double peak = rng.uniform(0.7, 0.9);
  const double cx = w * (0.5 + rng.uniform(-0.1, 0.1));
  const double cy = w * (0.5 + rng.uniform(-0.1, 0.1));
  const double ax = w * rng.uniform(0.15, 0.25);
  const double ay = w * rng.uniform(0.15, 0.25);
  const double theta = rng.uniform(0.0, std::numbers::pi);
  const double c = std::cos(theta), s = std::sin(theta);

  ImageTensor img{size, size, 1, std::vector<double>(static_cast<std::size_t>(size) * size)};
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      const double u = dx * c + dy * s;
      const double v = -dx * s + dy * c;
      const double g = std::exp(-0.5 * (u * u / (ax * ax) + v * v / (ay * ay)));
      const double value = kBackground + kNoiseSigma * rng.normal() + (peak - kBackground) * g;
      img.values[static_cast<std::size_t>(y) * size + x] = std::clamp(value, 0.0, 1.0);
    }
  }
  return img;
}

ImageTensor grid_image(int size, std::uint64_t seed) {
  Rng rng(seed);
  const int period = 8 + static_cast<int>(rng.below(9));
  const int width = 2 + static_cast<int>(rng.below(3));
  const int ox = static_cast<int>(rng.below(static_cast<std::uint64_t>(period)));
  const int oy = static_cast<int>(rng.below(static_cast<std::uint64_t>(period)));
  const double bright = rng.uniform(0.7, 0.9);
  ImageTensor img{size, size, 1, std::vector<double>(static_cast<std::size_t>(size) * size)};
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const bool line = (x + ox) % period < width || (y + oy) % period < width;
      const double value = (line ? bright : kBackground) + kNoiseSigma * rng.normal();
      img.values[static_cast<std::size_t>(y) * size + x] = std::clamp(value, 0.0, 1.0);
    }
  }
  return img;
}

std::string padded(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", index);
  return buf;
}

nlohmann::ordered_json rate(const std::optional<double>& r) {
  return r ? nlohmann::ordered_json(*r) : nlohmann::ordered_json(nullptr);
}

nlohmann::ordered_json to_json(const Confusion& c) {
  nlohmann::ordered_json j;
  j["true_positive"] = c.true_positive;
  j["false_negative"] = c.false_negative;
  j["true_negative"] = c.true_negative;
  j["false_positive"] = c.false_positive;
  j["flagged"] = c.flagged();
  j["sensitivity"] = rate(c.sensitivity());
  j["specificity"] = rate(c.specificity());
  return j;
}

void tally(Confusion& c, bool outlier, bool flagged) {
  if (outlier) {
    (flagged ? c.true_positive : c.false_negative)++;
  } else {
    (flagged ? c.false_positive : c.true_negative)++;
  }
}

}  // namespace

const char* to_string(OutlierKind kind) {
  switch (kind) {
    case OutlierKind::kNoise: return "noise";
    case OutlierKind::kBlank: return "blank";
    case OutlierKind::kInverted: return "inverted";
    case OutlierKind::kBrightShift: return "bright_shift";
    case OutlierKind::kGrid: return "grid";
  }
  return "?";
}

OutlierKind parse_outlier_kind(const std::string& text) {
  for (OutlierKind k : kOutlierKinds) {
    if (text == to_string(k)) return k;
  }
  fail(ErrorCode::kInvalidArgument, "unknown outlier kind '" + text + "'");
}

void validate(const CorpusSpec& spec) {
  if (spec.n_inliers < 0) fail(ErrorCode::kInvalidArgument, "n_inliers must be non-negative");
  for (int c : spec.outlier_counts) {
    if (c < 0) fail(ErrorCode::kInvalidArgument, "outlier counts must be non-negative");
  }
  if (spec.size < 32) fail(ErrorCode::kInvalidArgument, "image size must be at least 32");
}

ImageTensor gen_inlier(const CorpusSpec& spec, int index) {
  return blob_image(spec.size, derive_seed(spec.seed, stream(kTagInlier, index)));
}

ImageTensor gen_outlier(OutlierKind kind, const CorpusSpec& spec, int index) {
  const std::size_t n = static_cast<std::size_t>(spec.size) * spec.size;
  switch (kind) {
    case OutlierKind::kNoise: {
      Rng rng(derive_seed(spec.seed, stream(kTagNoise, index)));
      ImageTensor img{spec.size, spec.size, 1, std::vector<double>(n)};
      for (double& v : img.values) v = rng.uniform();
      return img;
    }
    case OutlierKind::kBlank:
      return ImageTensor{spec.size, spec.size, 1, std::vector<double>(n, kBackground)};
    case OutlierKind::kInverted: {
      ImageTensor img = blob_image(spec.size, derive_seed(spec.seed, stream(kTagInverted, index)));
      for (double& v : img.values) v = 1.0 - v;
      return img;
    }
    case OutlierKind::kBrightShift: {
      ImageTensor img = blob_image(spec.size, derive_seed(spec.seed, stream(kTagBright, index)));
      for (double& v : img.values) v = std::min(v + 0.4, 1.0);
      return img;
    }
    case OutlierKind::kGrid:
      return grid_image(spec.size, derive_seed(spec.seed, stream(kTagGrid, index)));
  }
  fail(ErrorCode::kInvalidArgument, "unknown outlier kind");
}

std::vector<CorpusItem> generate_corpus(const CorpusSpec& spec) {
  validate(spec);
  struct Job {
    std::string kind;
    int index;
  };
  std::vector<Job> jobs;
  for (int i = 0; i < spec.n_inliers; ++i) jobs.push_back({"inlier", i});
  for (OutlierKind k : kOutlierKinds) {
    for (int i = 0; i < spec.outlier_count(k); ++i) jobs.push_back({to_string(k), i});
  }
  std::vector<CorpusItem> out(jobs.size());
  parallel_for(jobs.size(), default_workers(), [&](std::size_t j) {
    CorpusItem& item = out[j];
    item.kind = jobs[j].kind;
    item.id = jobs[j].kind + "-" + padded(jobs[j].index);
    item.outlier = jobs[j].kind != "inlier";
    item.image = item.outlier ? gen_outlier(parse_outlier_kind(jobs[j].kind), spec, jobs[j].index)
                              : gen_inlier(spec, jobs[j].index);
  });
  return out;
}

std::optional<double> Confusion::sensitivity() const {
  const int positives = true_positive + false_negative;
  if (positives == 0) return std::nullopt;
  return static_cast<double>(true_positive) / positives;
}

std::optional<double> Confusion::specificity() const {
  const int negatives = true_negative + false_positive;
  if (negatives == 0) return std::nullopt;
  return static_cast<double>(true_negative) / negatives;
}

EvalReport evaluate(const Gate& gate, const std::vector<CorpusItem>& corpus) {
  if (corpus.empty()) fail(ErrorCode::kInvalidArgument, "evaluation corpus is empty");
  std::vector<Verdict> verdicts(corpus.size());
  parallel_for(corpus.size(), gate.embedder().parallelism(),
               [&](std::size_t i) { verdicts[i] = gate.score(corpus[i].image); });

  EvalReport report;
  report.n_items = static_cast<int>(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const Verdict& v = verdicts[i];
    const bool outlier = corpus[i].outlier;
    tally(report.gmm, outlier, v.gmm_flag);
    tally(report.embed, outlier, v.embed_flag.value_or(false));
    tally(report.hybrid, outlier, v.outlier);
    if (v.degraded) ++report.degraded;
    auto it = std::find_if(report.hybrid_by_kind.begin(), report.hybrid_by_kind.end(),
                           [&](const auto& p) { return p.first == corpus[i].kind; });
    if (it == report.hybrid_by_kind.end()) {
      report.hybrid_by_kind.emplace_back(corpus[i].kind, Confusion{});
      it = std::prev(report.hybrid_by_kind.end());
    }
    tally(it->second, outlier, v.outlier);
  }
  report.config["pack_tau"] = gate.pack().tau;
  report.config["combine"] = to_string(gate.pack().combine);
  report.config["r_star"] = gate.pack().subspace.rank();
  report.config["gmm_components"] = gate.pack().gmm.params.components();
  return report;
}

EvalReport evaluate(const DetectorPack& pack, const std::vector<CorpusItem>& corpus) {
  return evaluate(Gate(std::make_shared<const DetectorPack>(pack)), corpus);
}

nlohmann::ordered_json to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["schema"] = kReportSchema;
  j["n_items"] = report.n_items;
  j["degraded"] = report.degraded;
  j["gmm"] = to_json(report.gmm);
  j["embed"] = to_json(report.embed);
  j["hybrid"] = to_json(report.hybrid);
  nlohmann::ordered_json by_kind;
  for (const auto& [kind, c] : report.hybrid_by_kind) by_kind[kind] = to_json(c);
  j["hybrid_by_kind"] = std::move(by_kind);
  j["config"] = report.config;
  return j;
}

nlohmann::ordered_json to_json(const CorpusSpec& spec) {
  nlohmann::ordered_json j;
  j["n_inliers"] = spec.n_inliers;
  nlohmann::ordered_json outliers;
  for (OutlierKind k : kOutlierKinds) outliers[to_string(k)] = spec.outlier_count(k);
  j["outliers"] = std::move(outliers);
  j["size"] = spec.size;
  j["seed"] = spec.seed;
  return j;
}

CorpusSpec corpus_spec_from_json(const nlohmann::json& doc) {
  CorpusSpec spec;
  try {
    if (!doc.is_object()) fail(ErrorCode::kInvalidArgument, "corpus spec must be a JSON object");
    if (doc.contains("n_inliers")) spec.n_inliers = doc.at("n_inliers").get<int>();
    if (doc.contains("size")) spec.size = doc.at("size").get<int>();
    if (doc.contains("seed")) spec.seed = doc.at("seed").get<std::uint64_t>();
    if (doc.contains("outliers")) {
      for (const auto& [name, count] : doc.at("outliers").items()) {
        spec.outlier_counts[static_cast<std::size_t>(parse_outlier_kind(name))] = count.get<int>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidArgument, std::string("bad corpus spec: ") + e.what());
  }
  validate(spec);
  return spec;
}

BenchResult run_bench(const BenchConfig& config) {
  if (config.n_reference > config.corpus.n_inliers) {
    fail(ErrorCode::kInvalidArgument, "n_reference exceeds the number of inliers");
  }
  const std::vector<CorpusItem> corpus = generate_corpus(config.corpus);
  std::vector<ImageTensor> reference;
  std::vector<CorpusItem> held_out;
  for (const CorpusItem& item : corpus) {
    if (!item.outlier && static_cast<int>(reference.size()) < config.n_reference) {
      reference.push_back(item.image);
    } else {
      held_out.push_back(item);
    }
  }
  BenchResult out;
  std::shared_ptr<const Embedder> embedder = make_embedder(config.embedder);
  out.pack = fit_gate(reference, config.tau, config.gate, *embedder);
  out.report = evaluate(Gate(std::make_shared<const DetectorPack>(out.pack), embedder), held_out);
  out.report.config["corpus"] = to_json(config.corpus);
  out.report.config["n_reference"] = config.n_reference;
  out.report.config["seed"] = config.gate.seed;
  out.report.config["embedder_dimension"] = config.embedder.dimension;
  return out;
}

int export_corpus(const std::vector<CorpusItem>& corpus, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIoError, "cannot create " + dir.string() + ": " + ec.message());
  std::ofstream manifest(dir / "manifest.tsv", std::ios::trunc);
  if (!manifest) fail(ErrorCode::kIoError, "cannot write manifest in " + dir.string());
  manifest << "id\tkind\tlabel\tfile\n";
  int written = 0;
  for (const CorpusItem& item : corpus) {
    const std::string file = item.id + ".png";
    const auto bytes = encode_png(item.image, PngDepth::k16);
    std::ofstream out(dir / file, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::kIoError, "cannot write " + (dir / file).string());
    manifest << item.id << '\t' << item.kind << '\t' << (item.outlier ? "outlier" : "inlier") << '\t'
             << file << '\n';
    ++written;
  }
  if (!manifest.flush()) fail(ErrorCode::kIoError, "cannot write manifest");
  return written;
}

}  // namespace odgate::synth
