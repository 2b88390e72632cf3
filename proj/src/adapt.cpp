#include "smaui/adapt.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "smaui/errors.hpp"

namespace smaui {

namespace {

constexpr int kReportFormatVersion = 1;

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> optional_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

// Resamples `points` with replacement to `count` rows.
Matrix resample_rows(const Matrix& points, std::size_t count, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, points.rows() - 1);
  std::vector<std::size_t> idx(count);
  for (auto& i : idx) i = pick(rng);
  return points.select_rows(idx);
}

double full_set_alignment(const NetworkParams& params, const Matrix& target, const PseudoDataset& pseudo,
                          std::size_t slices, double power, Rng& rng) {
  Matrix z_target = encode(params, target);
  Matrix z_pseudo = pseudo.points;
  if (z_target.rows() < z_pseudo.rows()) z_target = resample_rows(z_target, z_pseudo.rows(), rng);
  if (z_pseudo.rows() < z_target.rows()) z_pseudo = resample_rows(z_pseudo, z_target.rows(), rng);
  const SliceSet dirs = sample_unit_directions(slices, params.embedding_dim(), rng);
  return swd2(z_target, z_pseudo, dirs, power);
}

}  // namespace

void AdaptConfig::validate() const {
  if (!(lambda >= 0.0)) throw ContractError("adapt config: lambda must be >= 0");
  if (!(tau >= 0.0 && tau < 1.0)) throw ContractError("adapt config: tau must lie in [0, 1)");
  if (iterations < 1) throw ContractError("adapt config: iterations must be >= 1");
  if (batch_size < 2) throw ContractError("adapt config: batch size must be >= 2");
  if (slices < 1) throw ContractError("adapt config: slice count must be >= 1");
  if (!(lr >= 0.0)) throw ContractError("adapt config: learning rate must be >= 0");
  if (!(power > 0.0)) throw ContractError("adapt config: power must be > 0");
  if (eval_every < 1) throw ContractError("adapt config: eval_every must be >= 1");
  if (pseudo_size && *pseudo_size < 1) throw ContractError("adapt config: pseudo size must be >= 1");
}

nlohmann::json AdaptConfig::to_json() const {
  return {{"lambda", lambda},
          {"tau", tau},
          {"iterations", iterations},
          {"batch_size", batch_size},
          {"slices", slices},
          {"lr", lr},
          {"power", power},
          {"pseudo_size", pseudo_size ? nlohmann::json(*pseudo_size) : nlohmann::json(nullptr)},
          {"max_attempts", max_attempts ? nlohmann::json(*max_attempts) : nlohmann::json(nullptr)},
          {"seed", seed},
          {"eval_every", eval_every},
          {"freeze_encoder", freeze_encoder},
          {"freeze_classifier", freeze_classifier},
          {"regenerate_pseudo_each_iteration", regenerate_pseudo_each_iteration},
          {"full_set_swd", full_set_swd},
          {"full_set_slices", full_set_slices}};
}

bool AdaptReport::same_results(const AdaptReport& other) const {
  return records == other.records && initial_accuracy == other.initial_accuracy &&
         final_accuracy == other.final_accuracy && pseudo_requested == other.pseudo_requested &&
         pseudo_accepted == other.pseudo_accepted && pseudo_attempts == other.pseudo_attempts;
}

LossTerms adaptation_loss(const BoundNetwork& net, Var target_batch, Var pseudo_points,
                          std::span<const int> pseudo_labels, double lambda, const SliceSet& slices,
                          double power) {
  if (target_batch.value().rows() == 0 || pseudo_points.value().rows() == 0) {
    throw ContractError("adaptation_loss: empty batch");
  }
  if (target_batch.value().rows() != pseudo_points.value().rows()) {
    throw ContractError("adaptation_loss: target batch has " + std::to_string(target_batch.value().rows()) +
                        " rows but pseudo batch has " + std::to_string(pseudo_points.value().rows()));
  }
  Var ce = ad::cross_entropy(classify(net, pseudo_points), pseudo_labels);
  Var align = swd2(encode(net, target_batch), pseudo_points, slices, power);
  Var total = ad::add(ce, ad::scale(align, lambda));
  return {total, ce, align};
}

AdaptResult adapt(const NetworkParams& params, const UnlabeledDataset& target, const GmmModel& gmm,
                  const AdaptConfig& config, const TargetEvaluator& evaluator) {
  const auto started = std::chrono::steady_clock::now();
  config.validate();
  params.validate();
  if (gmm.dim() != params.embedding_dim()) {
    throw ContractError("adapt: gmm dimension " + std::to_string(gmm.dim()) + " does not match encoder output " +
                        std::to_string(params.embedding_dim()));
  }
  if (gmm.num_components() != params.num_classes()) {
    throw ContractError("adapt: gmm has " + std::to_string(gmm.num_components()) + " components for " +
                        std::to_string(params.num_classes()) + " classes");
  }
  if (target.features.rows() == 0) throw ContractError("adapt: empty target dataset");
  if (target.features.cols() != params.input_dim()) {
    throw ContractError("adapt: target has " + std::to_string(target.features.cols()) + " features, encoder expects " +
                        std::to_string(params.input_dim()));
  }

  Rng rng(config.seed);
  const std::size_t requested =
      config.pseudo_size.value_or(gmm.source_count > 0 ? gmm.source_count : target.features.rows());

  // The pseudo-labelling classifier is the source model's, fixed for the run.
  const NetworkParams source_model = params;
  AdaptResult result{params, {}, build_pseudo_dataset(gmm, source_model, requested, config.tau, rng, config.max_attempts)};
  AdaptReport& report = result.report;
  report.pseudo_requested = result.pseudo.requested;
  report.pseudo_accepted = result.pseudo.accepted();
  report.pseudo_attempts = result.pseudo.attempts;
  if (evaluator) report.initial_accuracy = evaluator(result.params);

  NetworkParams& model = result.params;
  AdamState adam = AdamState::zeros_like(std::as_const(model).tensors());
  const std::size_t m = target.features.rows();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);

  for (int it = 1; it <= config.iterations; ++it) {
    if (config.regenerate_pseudo_each_iteration && it > 1) {
      result.pseudo = build_pseudo_dataset(gmm, source_model, requested, config.tau, rng, config.max_attempts);
    }
    const PseudoDataset& pseudo = result.pseudo;
    std::uniform_int_distribution<std::size_t> pick(0, pseudo.accepted() - 1);

    std::shuffle(order.begin(), order.end(), rng);
    IterationRecord rec;
    rec.iteration = it;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < m; start += config.batch_size) {
      const std::size_t end = std::min(m, start + config.batch_size);
      const std::span<const std::size_t> tidx(order.data() + start, end - start);
      std::vector<std::size_t> pidx(tidx.size());
      for (auto& i : pidx) i = pick(rng);
      std::vector<int> plabels(pidx.size());
      for (std::size_t i = 0; i < pidx.size(); ++i) plabels[i] = pseudo.labels[pidx[i]];
      const SliceSet slices = sample_unit_directions(config.slices, model.embedding_dim(), rng);

      Tape tape;
      const BoundNetwork net = bind(tape, model, !config.freeze_encoder, !config.freeze_classifier);
      Var xt = tape.constant(target.features.select_rows(tidx));
      Var zp = tape.constant(pseudo.points.select_rows(pidx));
      const LossTerms loss = adaptation_loss(net, xt, zp, plabels, config.lambda, slices, config.power);
      const Gradients grads = tape.backward(loss.total);
      adam_step(model, collect_gradients(net, grads), adam, config.lr);

      rec.classification += loss.classification.value()(0, 0);
      rec.alignment += loss.alignment.value()(0, 0);
      rec.total += loss.total.value()(0, 0);
      ++batches;
    }
    const double nb = static_cast<double>(batches);
    rec.classification /= nb;
    rec.alignment /= nb;
    rec.total /= nb;
    if (evaluator && (it % config.eval_every == 0 || it == config.iterations)) {
      rec.target_accuracy = evaluator(model);
    }
    if (config.full_set_swd) {
      rec.full_set_alignment =
          full_set_alignment(model, target.features, pseudo, config.full_set_slices, config.power, rng);
    }
    report.records.push_back(rec);
  }
  if (evaluator) report.final_accuracy = report.records.back().target_accuracy;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

Metrics evaluate(const NetworkParams& params, const Dataset& dataset) {
  if (!dataset.labeled()) throw ContractError("evaluate: dataset is unlabeled");
  const std::size_t k = params.num_classes();
  const auto pred = argmax_rows(predict_proba(params, dataset.features));
  Metrics m;
  m.confusion.assign(k, std::vector<std::size_t>(k, 0));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int y = (*dataset.labels)[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw ContractError("evaluate: label " + std::to_string(y) + " outside [0," + std::to_string(k) + ")");
    }
    ++m.confusion[static_cast<std::size_t>(y)][static_cast<std::size_t>(pred[i])];
    hits += pred[i] == y;
  }
  m.accuracy = pred.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(pred.size());
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t support = std::accumulate(m.confusion[j].begin(), m.confusion[j].end(), std::size_t{0});
    m.per_class_accuracy.push_back(support == 0 ? std::nullopt
                                                : std::optional<double>(static_cast<double>(m.confusion[j][j]) /
                                                                        static_cast<double>(support)));
  }
  return m;
}

nlohmann::json Metrics::to_json() const {
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& a : per_class_accuracy) per_class.push_back(optional_json(a));
  return {{"format_version", 1}, {"accuracy", accuracy}, {"confusion", confusion}, {"per_class_accuracy", per_class}};
}

void write_report(const AdaptReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& r : report.records) {
    nlohmann::json j = {{"record", "iteration"},
                        {"iteration", r.iteration},
                        {"classification", r.classification},
                        {"alignment", r.alignment},
                        {"total", r.total},
                        {"target_accuracy", optional_json(r.target_accuracy)}};
    if (r.full_set_alignment) j["full_set_alignment"] = *r.full_set_alignment;
    out << j.dump() << '\n';
  }
  nlohmann::json summary = {{"record", "summary"},
                            {"format_version", kReportFormatVersion},
                            {"iterations", report.records.size()},
                            {"initial_accuracy", optional_json(report.initial_accuracy)},
                            {"final_accuracy", optional_json(report.final_accuracy)},
                            {"pseudo_requested", report.pseudo_requested},
                            {"pseudo_accepted", report.pseudo_accepted},
                            {"pseudo_attempts", report.pseudo_attempts}};
  out << summary.dump() << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

AdaptReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  AdaptReport report;
  std::string line;
  std::size_t line_no = 0;
  bool summary_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ": " + e.what(), line_no);
    }
    try {
      const auto kind = j.at("record").get<std::string>();
      if (kind == "iteration") {
        IterationRecord r;
        r.iteration = j.at("iteration").get<int>();
        r.classification = j.at("classification").get<double>();
        r.alignment = j.at("alignment").get<double>();
        r.total = j.at("total").get<double>();
        r.target_accuracy = optional_from(j, "target_accuracy");
        r.full_set_alignment = optional_from(j, "full_set_alignment");
        report.records.push_back(r);
      } else if (kind == "summary") {
        if (j.at("format_version").get<int>() != kReportFormatVersion) {
          throw SchemaError(path.string() + ": unsupported report format version");
        }
        report.initial_accuracy = optional_from(j, "initial_accuracy");
        report.final_accuracy = optional_from(j, "final_accuracy");
        report.pseudo_requested = j.at("pseudo_requested").get<std::size_t>();
        report.pseudo_accepted = j.at("pseudo_accepted").get<std::size_t>();
        report.pseudo_attempts = j.at("pseudo_attempts").get<std::size_t>();
        summary_seen = true;
      } else {
        throw ParseError(path.string() + ": unknown record type '" + kind + "'", line_no);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ": " + e.what(), line_no);
    }
  }
  if (!summary_seen) throw SchemaError(path.string() + ": missing summary record");
  return report;
}

}  // namespace smaui
