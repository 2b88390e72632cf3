#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "smaui/gmm.hpp"
#include "smaui/nn.hpp"
#include "smaui/swd.hpp"
#include "smaui/tape.hpp"

namespace smaui {

struct AdaptConfig {
  double lambda = 1e-3;         // weight of the alignment term
  double tau = 0.99;            // pseudo-label confidence threshold
  int iterations = 100;         // passes over the target set
  std::size_t batch_size = 64;
  std::size_t slices = 128;     // projection directions per step
  double lr = 1e-4;
  double power = 2.0;           // transport cost exponent
  std::optional<std::size_t> pseudo_size;  // N_p; defaults to the source count stored in the GMM
  std::optional<std::size_t> max_attempts;
  std::uint64_t seed = 0;
  int eval_every = 1;
  bool freeze_encoder = false;
  bool freeze_classifier = false;
  bool regenerate_pseudo_each_iteration = false;
  // Also log the alignment term evaluated on the full target and pseudo sets.
  bool full_set_swd = false;
  std::size_t full_set_slices = 5000;

  void validate() const;
  nlohmann::json to_json() const;
};

struct IterationRecord {
  int iteration = 0;
  double classification = 0.0;  // mean cross-entropy on pseudo batches
  double alignment = 0.0;       // mean batch SWD^2
  double total = 0.0;           // mean classification + lambda * alignment
  std::optional<double> target_accuracy;
  std::optional<double> full_set_alignment;

  friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

struct AdaptReport {
  std::vector<IterationRecord> records;
  std::optional<double> initial_accuracy;
  std::optional<double> final_accuracy;
  std::size_t pseudo_requested = 0;
  std::size_t pseudo_accepted = 0;
  std::size_t pseudo_attempts = 0;
  double wall_seconds = 0.0;  // not serialised

  // Equality ignores wall time.
  bool same_results(const AdaptReport& other) const;
};

// Held-out accuracy callback. Adaptation only ever sees this opaque
// function, never the labels behind it.
using TargetEvaluator = std::function<double(const NetworkParams&)>;

struct LossTerms {
  Var total;
  Var classification;
  Var alignment;
};

// Cross-entropy of the classifier on the pseudo batch plus lambda times the
// sliced Wasserstein distance between encoded target batch and pseudo batch.
LossTerms adaptation_loss(const BoundNetwork& net, Var target_batch, Var pseudo_points,
                          std::span<const int> pseudo_labels, double lambda, const SliceSet& slices,
                          double power = 2.0);

struct AdaptResult {
  NetworkParams params;
  AdaptReport report;
  PseudoDataset pseudo;
};

AdaptResult adapt(const NetworkParams& params, const UnlabeledDataset& target, const GmmModel& gmm,
                  const AdaptConfig& config, const TargetEvaluator& evaluator = {});

struct Metrics {
  double accuracy = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // rows true, cols predicted
  std::vector<std::optional<double>> per_class_accuracy;  // nullopt for classes with no samples

  nlohmann::json to_json() const;
  friend bool operator==(const Metrics&, const Metrics&) = default;
};

Metrics evaluate(const NetworkParams& params, const Dataset& dataset);

// Line-delimited JSON: one object per iteration, then a summary object.
void write_report(const AdaptReport& report, const std::filesystem::path& path);
AdaptReport read_report(const std::filesystem::path& path);

}  // namespace smaui
