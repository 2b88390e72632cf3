#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "smaui/nn.hpp"

namespace smaui {

enum class TaskKind { RotatedMoons, TranslatedBlobs };

std::string to_string(TaskKind kind);
TaskKind parse_task_kind(const std::string& text);

// Parameters of a synthetic source/target pair.
struct ShiftSpec {
  TaskKind kind = TaskKind::RotatedMoons;
  std::size_t n = 2000;  // samples per domain
  double rotation_deg = 40.0;
  std::vector<double> offset{0.0, 0.0};
  double noise = 0.1;
  std::uint64_t seed = 0;
  // Blobs only.
  std::size_t num_classes = 3;
  std::vector<double> class_proportions{};  // empty: equal split

  void validate() const;
  nlohmann::json to_json() const;
};

struct DomainPair {
  Dataset source;
  Dataset target;  // labels kept for evaluation only
};

// Two interleaved half-circles (radius 1, inner moon shifted by (1, -0.5))
// with Gaussian noise; the target is the same point set rotated about the
// origin.
DomainPair gen_two_moons_shift(const ShiftSpec& spec);

// Gaussian clusters with means evenly spaced on a radius-5 circle and
// isotropic std `noise`; the target is the same point set translated by
// `offset`.
DomainPair gen_gaussian_blobs_shift(const ShiftSpec& spec);

DomainPair generate(const ShiftSpec& spec);

// Exact per-class sample counts for `n` samples under `proportions`.
std::vector<std::size_t> stratified_counts(std::size_t n, const std::vector<double>& proportions);

// CSV with header f0,...,f{d-1},label; label -1 marks an unlabeled row.
// Values are written with 17 significant digits so a round trip is exact.
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
// num_classes, when given, bounds the admissible label range.
Dataset load_dataset(const std::filesystem::path& path,
                     std::optional<std::size_t> num_classes = std::nullopt);

void write_metadata(const ShiftSpec& spec, const std::filesystem::path& path);

// Every dataset path opened by load_dataset is recorded here, so callers
// can verify which files a pipeline stage touched.
namespace read_audit {
void clear();
std::vector<std::filesystem::path> paths();
bool touched(const std::filesystem::path& path);
}  // namespace read_audit

}  // namespace smaui
