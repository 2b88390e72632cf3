#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "smaui/matrix.hpp"
#include "smaui/nn.hpp"

namespace smaui {

// Class-conditional Gaussian mixture over the embedding space, one
// component per class.
struct GmmModel {
  std::vector<double> weights;      // alpha_j, sums to 1
  Matrix means;                     // k x p
  std::vector<Matrix> covariances;  // unregularised Sigma_j, p x p
  // Lower-triangular factor of Sigma_j + reg_eps I. When that matrix is only
  // semi-definite (reg_eps = 0 with a singular Sigma_j) it holds a symmetric
  // square root instead and `degenerate[j]` is set.
  std::vector<Matrix> factors;
  std::vector<bool> degenerate;
  double reg_eps = 0.0;
  std::size_t source_count = 0;  // N, number of embeddings estimated from

  std::size_t num_components() const { return weights.size(); }
  std::size_t dim() const { return means.cols(); }

  // Throws ContractError on a violated invariant.
  void validate() const;
  // Recomputes `factors` from `covariances` and `reg_eps`.
  void refactor();
};

// reg_eps used when none is given: 1e-6 times the mean diagonal entry over
// all class covariances, floored at 1e-8.
double default_reg_eps(std::span<const Matrix> covariances);

// Closed-form estimate from labelled embeddings: class frequencies, class
// means and class (biased) covariances.
GmmModel estimate_gmm(const Matrix& embeddings, std::span<const int> labels, std::size_t num_classes,
                      std::optional<double> reg_eps = std::nullopt);

double gmm_logpdf(const GmmModel& gmm, std::span<const double> z);

struct GmmSamples {
  Matrix points;                // n x p
  std::vector<int> components;  // generating component per row
};

GmmSamples sample_gmm(const GmmModel& gmm, std::size_t n, Rng& rng);

struct PseudoDataset {
  Matrix points;                // accepted embedding samples, N_p' x p
  std::vector<int> labels;      // classifier argmax
  std::vector<int> components;  // generating component, diagnostics only
  double tau = 0.0;
  std::size_t requested = 0;
  std::size_t attempts = 0;

  std::size_t accepted() const { return labels.size(); }
  double acceptance_rate() const {
    return attempts == 0 ? 0.0 : static_cast<double>(accepted()) / static_cast<double>(attempts);
  }
};

// Rejection-samples the mixture, keeping draws whose top class probability
// exceeds tau, until `requested` are accepted or `max_attempts` draws have
// been examined (default 100 * requested).
PseudoDataset build_pseudo_dataset(const GmmModel& gmm, const NetworkParams& params,
                                   std::size_t requested, double tau, Rng& rng,
                                   std::optional<std::size_t> max_attempts = std::nullopt);

void save_gmm(const GmmModel& gmm, const std::filesystem::path& path);
GmmModel load_gmm(const std::filesystem::path& path);

}  // namespace smaui
