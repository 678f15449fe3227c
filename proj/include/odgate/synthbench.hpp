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

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "odgate/gate.hpp"
#include "odgate/image.hpp"

namespace odgate::synth {

enum class OutlierKind { kNoise, kBlank, kInverted, kBrightShift, kGrid };

inline constexpr std::array<OutlierKind, 5> kOutlierKinds = {
    OutlierKind::kNoise, OutlierKind::kBlank, OutlierKind::kInverted, OutlierKind::kBrightShift,
    OutlierKind::kGrid};

const char* to_string(OutlierKind kind);
OutlierKind parse_outlier_kind(const std::string& text);

struct CorpusSpec {
  int n_inliers = 300;
  std::array<int, 5> outlier_counts = {40, 40, 40, 40, 40};  // kOutlierKinds order
  int size = 128;
  std::uint64_t seed = 7;

  int outlier_count(OutlierKind kind) const { return outlier_counts[static_cast<std::size_t>(kind)]; }
};

void validate(const CorpusSpec& spec);

/// Dark noisy background with one bright rotated elliptical Gaussian blob.
ImageTensor gen_inlier(const CorpusSpec& spec, int index);

ImageTensor gen_outlier(OutlierKind kind, const CorpusSpec& spec, int index);

struct CorpusItem {
  std::string id;
  std::string kind;  // "inlier" or an OutlierKind name
  bool outlier = false;
  ImageTensor image;
};

/// Inliers 0..n_inliers-1 first, then each outlier family in kOutlierKinds
/// order.
std::vector<CorpusItem> generate_corpus(const CorpusSpec& spec);

struct Confusion {
  int true_positive = 0;   // outlier, flagged
  int false_negative = 0;  // outlier, passed
  int true_negative = 0;   // inlier, passed
  int false_positive = 0;  // inlier, flagged

  int flagged() const { return true_positive + false_positive; }
  int total() const { return true_positive + false_negative + true_negative + false_positive; }
  std::optional<double> sensitivity() const;  // absent without outliers
  std::optional<double> specificity() const;  // absent without inliers
};

struct EvalReport {
  Confusion gmm;
  Confusion embed;
  Confusion hybrid;
  std::vector<std::pair<std::string, Confusion>> hybrid_by_kind;  // corpus kind order
  int degraded = 0;
  int n_items = 0;
  nlohmann::ordered_json config;  // echo
};

/// Scores every item with the pack and tallies confusion counts. Degraded
/// verdicts count as embed "passed".
EvalReport evaluate(const Gate& gate, const std::vector<CorpusItem>& corpus);
EvalReport evaluate(const DetectorPack& pack, const std::vector<CorpusItem>& corpus);

inline constexpr const char* kReportSchema = "odgate.eval_report/1";

nlohmann::ordered_json to_json(const EvalReport& report);

struct BenchConfig {
  CorpusSpec corpus;
  int n_reference = 200;  // leading inliers used for fitting; the rest are held out
  double tau = 5.0;
  GateConfig gate;
  EmbedderSpec embedder;
};

struct BenchResult {
  EvalReport report;
  DetectorPack pack;
};

BenchResult run_bench(const BenchConfig& config);

CorpusSpec corpus_spec_from_json(const nlohmann::json& doc);
nlohmann::ordered_json to_json(const CorpusSpec& spec);

/// Writes <id>.png (16-bit gray) per item and manifest.tsv with the columns
/// id, kind, label, file. Returns the number of images written.
int export_corpus(const std::vector<CorpusItem>& corpus, const std::filesystem::path& dir);

}  // namespace odgate::synth
