#include "smaui/databench.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numbers>
#include <numeric>
#include <sstream>

#include "smaui/errors.hpp"

namespace smaui {

namespace {

std::mutex audit_mutex;
std::vector<std::filesystem::path> audit_log;

void record_read(const std::filesystem::path& path) {
  std::error_code ec;
  auto abs = std::filesystem::absolute(path, ec);
  std::lock_guard lock(audit_mutex);
  audit_log.push_back(ec ? path : abs.lexically_normal());
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
bool parse_number(const std::string& text, T& out) {
  const char* first = text.data();
  const char* last = first + text.size();
  while (first < last && *first == ' ') ++first;
  while (last > first && (last[-1] == ' ' || last[-1] == '\r')) --last;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

}  // namespace

std::string to_string(TaskKind kind) {
  return kind == TaskKind::RotatedMoons ? "rotated-moons" : "translated-blobs";
}

TaskKind parse_task_kind(const std::string& text) {
  if (text == "rotated-moons") return TaskKind::RotatedMoons;
  if (text == "translated-blobs") return TaskKind::TranslatedBlobs;
  throw ContractError("unknown task kind '" + text + "' (expected rotated-moons|translated-blobs)");
}

void ShiftSpec::validate() const {
  if (n < 10) throw ContractError("shift spec: n must be >= 10");
  if (!(noise >= 0.0)) throw ContractError("shift spec: noise must be >= 0");
  if (!(rotation_deg >= 0.0 && rotation_deg <= 180.0)) {
    throw ContractError("shift spec: rotation must lie in [0, 180] degrees");
  }
  if (offset.size() != 2) throw ContractError("shift spec: offset must be a 2-vector");
  if (kind == TaskKind::TranslatedBlobs) {
    if (num_classes < 2) throw ContractError("shift spec: blobs need at least 2 classes");
    if (!class_proportions.empty()) {
      if (class_proportions.size() != num_classes) {
        throw ContractError("shift spec: class_proportions length must equal num_classes");
      }
      double total = 0.0;
      for (double p : class_proportions) {
        if (!(p >= 0.0)) throw ContractError("shift spec: negative class proportion");
        total += p;
      }
      if (std::abs(total - 1.0) > 1e-9) throw ContractError("shift spec: class proportions must sum to 1");
    }
  }
}

nlohmann::json ShiftSpec::to_json() const {
  nlohmann::json j = {{"task", to_string(kind)}, {"n", n},         {"rotation_deg", rotation_deg},
                      {"offset", offset},        {"noise", noise}, {"seed", seed}};
  if (kind == TaskKind::TranslatedBlobs) {
    j["num_classes"] = num_classes;
    j["class_proportions"] = class_proportions;
  }
  return j;
}

std::vector<std::size_t> stratified_counts(std::size_t n, const std::vector<double>& proportions) {
  std::vector<std::size_t> counts(proportions.size());
  std::size_t assigned = 0;
  for (std::size_t j = 0; j < proportions.size(); ++j) {
    counts[j] = static_cast<std::size_t>(std::floor(proportions[j] * static_cast<double>(n)));
    assigned += counts[j];
  }
  // Remainder goes to classes in index order, skipping zero-proportion ones.
  for (std::size_t j = 0; assigned < n; j = (j + 1) % counts.size()) {
    if (proportions[j] > 0.0) {
      ++counts[j];
      ++assigned;
    }
  }
  return counts;
}

DomainPair gen_two_moons_shift(const ShiftSpec& spec) {
  spec.validate();
  if (spec.kind != TaskKind::RotatedMoons) throw ContractError("gen_two_moons_shift: spec is not rotated-moons");
  Rng rng(spec.seed);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::normal_distribution<double> noise(0.0, 1.0);

  const std::size_t n_outer = spec.n / 2;
  DomainPair out;
  out.source.name = "source";
  out.source.features = Matrix(spec.n, 2);
  out.source.labels = std::vector<int>(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const double t = angle(rng);
    const bool outer = i < n_outer;
    double x = outer ? std::cos(t) : 1.0 - std::cos(t);
    double y = outer ? std::sin(t) : 0.5 - std::sin(t);
    if (spec.noise > 0.0) {
      x += spec.noise * noise(rng);
      y += spec.noise * noise(rng);
    }
    out.source.features(i, 0) = x;
    out.source.features(i, 1) = y;
    (*out.source.labels)[i] = outer ? 0 : 1;
  }

  const double theta = spec.rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  out.target.name = "target";
  out.target.labels = out.source.labels;
  out.target.features = Matrix(spec.n, 2);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const double x = out.source.features(i, 0);
    const double y = out.source.features(i, 1);
    out.target.features(i, 0) = c * x - s * y;
    out.target.features(i, 1) = s * x + c * y;
  }
  return out;
}

DomainPair gen_gaussian_blobs_shift(const ShiftSpec& spec) {
  spec.validate();
  if (spec.kind != TaskKind::TranslatedBlobs) {
    throw ContractError("gen_gaussian_blobs_shift: spec is not translated-blobs");
  }
  const std::size_t k = spec.num_classes;
  std::vector<double> props = spec.class_proportions;
  if (props.empty()) props.assign(k, 1.0 / static_cast<double>(k));
  const auto counts = stratified_counts(spec.n, props);

  Rng rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  constexpr double kRadius = 5.0;

  DomainPair out;
  out.source.name = "source";
  out.source.features = Matrix(spec.n, 2);
  out.source.labels = std::vector<int>();
  std::size_t row = 0;
  for (std::size_t j = 0; j < k; ++j) {
    const double phi = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(k);
    const double mx = kRadius * std::cos(phi);
    const double my = kRadius * std::sin(phi);
    for (std::size_t i = 0; i < counts[j]; ++i, ++row) {
      out.source.features(row, 0) = mx + spec.noise * normal(rng);
      out.source.features(row, 1) = my + spec.noise * normal(rng);
      out.source.labels->push_back(static_cast<int>(j));
    }
  }

  out.target.name = "target";
  out.target.labels = out.source.labels;
  out.target.features = out.source.features;
  for (std::size_t i = 0; i < spec.n; ++i) {
    out.target.features(i, 0) += spec.offset[0];
    out.target.features(i, 1) += spec.offset[1];
  }
  return out;
}

DomainPair generate(const ShiftSpec& spec) {
  return spec.kind == TaskKind::RotatedMoons ? gen_two_moons_shift(spec) : gen_gaussian_blobs_shift(spec);
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  ds.validate();
  if (ds.features.cols() == 0) throw SchemaError("save_dataset: dataset has no feature columns");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (std::size_t c = 0; c < ds.features.cols(); ++c) out << 'f' << c << ',';
  out << "label\n";
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (double v : ds.features.row(r)) out << format_double(v) << ',';
    out << (ds.labels ? (*ds.labels)[r] : -1) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path, std::optional<std::size_t> num_classes) {
  record_read(path);
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw SchemaError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv(line);
  if (header.empty() || header.back() != "label") {
    throw ParseError(path.string() + ": header must end with 'label'", 1);
  }
  const std::size_t d = header.size() - 1;
  if (d == 0) throw SchemaError(path.string() + ": no feature columns");
  for (std::size_t c = 0; c < d; ++c) {
    if (header[c] != "f" + std::to_string(c)) {
      throw ParseError(path.string() + ": expected header column f" + std::to_string(c), 1);
    }
  }

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != d + 1) {
      throw ParseError(path.string() + ": expected " + std::to_string(d + 1) + " fields, got " +
                           std::to_string(cells.size()),
                       line_no);
    }
    for (std::size_t c = 0; c < d; ++c) {
      double v = 0.0;
      if (!parse_number(cells[c], v) || !std::isfinite(v)) {
        throw ParseError(path.string() + ": bad feature value '" + cells[c] + "'", line_no);
      }
      values.push_back(v);
    }
    int y = 0;
    if (!parse_number(cells[d], y)) throw ParseError(path.string() + ": bad label '" + cells[d] + "'", line_no);
    if (y < -1) throw SchemaError(path.string() + ": label " + std::to_string(y) + " on line " + std::to_string(line_no));
    if (num_classes && y >= static_cast<int>(*num_classes)) {
      throw SchemaError(path.string() + ": label " + std::to_string(y) + " on line " + std::to_string(line_no) +
                        " (data row " + std::to_string(labels.size()) + ") is outside [0," +
                        std::to_string(*num_classes) + ")");
    }
    labels.push_back(y);
  }
  if (labels.empty()) throw SchemaError(path.string() + ": no data rows");

  const auto unlabeled = std::count(labels.begin(), labels.end(), -1);
  if (unlabeled != 0 && unlabeled != static_cast<std::ptrdiff_t>(labels.size())) {
    throw SchemaError(path.string() + ": mixes labeled and unlabeled rows");
  }
  Dataset ds;
  ds.name = path.stem().string();
  ds.features = Matrix(labels.size(), d, std::move(values));
  if (unlabeled == 0) ds.labels = std::move(labels);
  return ds;
}

void write_metadata(const ShiftSpec& spec, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  nlohmann::json j = {{"format_version", 1}, {"generator", spec.to_json()}};
  out << j.dump(2) << '\n';
}

namespace read_audit {

void clear() {
  std::lock_guard lock(audit_mutex);
  audit_log.clear();
}

std::vector<std::filesystem::path> paths() {
  std::lock_guard lock(audit_mutex);
  return audit_log;
}

bool touched(const std::filesystem::path& path) {
  std::error_code ec;
  auto abs = std::filesystem::absolute(path, ec);
  const auto key = ec ? path : abs.lexically_normal();
  std::lock_guard lock(audit_mutex);
  return std::find(audit_log.begin(), audit_log.end(), key) != audit_log.end();
}

}  // namespace read_audit

}  // namespace smaui
