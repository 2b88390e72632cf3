#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "smaui/matrix.hpp"
#include "smaui/tape.hpp"

namespace smaui {

using Rng = std::mt19937_64;

// Whether the encoder output passes through a row softmax (embedding on the
// probability simplex) or is returned as raw activations.
enum class EmbeddingMode { PreSoftmax, Simplex };

std::string to_string(EmbeddingMode mode);
EmbeddingMode parse_embedding_mode(const std::string& text);

// Fully connected layer y = x W + b with W stored fan_in x fan_out.
struct DenseLayer {
  Matrix weight;
  Matrix bias;  // 1 x fan_out

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Encoder (input -> embedding) and classifier (embedding -> class
// probabilities) of the composed model. Hidden layers use tanh; the
// classifier output is always a softmax.
struct NetworkParams {
  std::vector<DenseLayer> encoder;
  std::vector<DenseLayer> classifier;
  EmbeddingMode embedding_mode = EmbeddingMode::PreSoftmax;

  std::size_t input_dim() const { return encoder.front().weight.rows(); }
  std::size_t embedding_dim() const { return encoder.back().weight.cols(); }
  std::size_t num_classes() const { return classifier.back().weight.cols(); }

  std::vector<std::size_t> encoder_sizes() const;
  std::vector<std::size_t> classifier_sizes() const;
  std::size_t encoder_tensor_count() const { return 2 * encoder.size(); }

  // Parameter tensors in declaration order: encoder (W, b) per layer, then
  // classifier (W, b) per layer.
  std::vector<Matrix*> tensors();
  std::vector<const Matrix*> tensors() const;

  // Throws ContractError if the layer chain is broken, k < 2, p < 1 or a
  // weight is non-finite.
  void validate() const;

  friend bool operator==(const NetworkParams&, const NetworkParams&) = default;
};

struct Architecture {
  std::size_t input_dim = 2;
  std::vector<std::size_t> encoder_hidden{32};
  std::size_t embedding_dim = 8;
  std::vector<std::size_t> classifier_hidden{};
  std::size_t num_classes = 2;
  EmbeddingMode embedding_mode = EmbeddingMode::PreSoftmax;
};

// Glorot-uniform weights, zero biases.
NetworkParams init_network(const Architecture& arch, Rng& rng);

struct Dataset {
  Matrix features;                        // n x d
  std::optional<std::vector<int>> labels;  // class indices in [0, k)
  std::string name;

  bool labeled() const { return labels.has_value(); }
  std::size_t size() const { return features.rows(); }
  // 1 + largest label; 0 when unlabeled.
  std::size_t inferred_num_classes() const;
  void validate() const;
};

// Features only. Adaptation consumes this type, so target labels cannot
// reach the gradient path.
struct UnlabeledDataset {
  Matrix features;
  std::string name;
};

UnlabeledDataset strip_labels(const Dataset& ds);

Matrix encode(const NetworkParams& params, const Matrix& x);
Matrix classify(const NetworkParams& params, const Matrix& z);
Matrix predict_proba(const NetworkParams& params, const Matrix& x);

double cross_entropy(const Matrix& probs, std::span<const int> labels);

// Parameters bound to tape leaves (or constants when frozen).
struct BoundNetwork {
  const NetworkParams* params = nullptr;
  std::vector<Var> tensors;  // declaration order, mirrors NetworkParams::tensors()
};

BoundNetwork bind(Tape& tape, const NetworkParams& params, bool train_encoder = true,
                  bool train_classifier = true);
Var encode(const BoundNetwork& net, Var x);
Var classify(const BoundNetwork& net, Var z);

// Gradient per parameter tensor in declaration order. Frozen tensors get
// zero gradients.
std::vector<Matrix> collect_gradients(const BoundNetwork& net, const Gradients& grads);

struct AdamState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState zeros_like(std::span<const Matrix* const> params);
};

// One bias-corrected ADAM update applied in place.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state,
               double lr);
void adam_step(NetworkParams& params, std::span<const Matrix> grads, AdamState& state, double lr);

struct SourceTrainConfig {
  int epochs = 100;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

struct SourceTrainResult {
  NetworkParams params;
  std::vector<double> epoch_loss;  // mean mini-batch cross-entropy per epoch
};

// Empirical risk minimisation on a labelled source set.
SourceTrainResult train_source(const Dataset& source, const Architecture& arch,
                               const SourceTrainConfig& config);

double accuracy(const NetworkParams& params, const Dataset& ds);

// Binary checkpoint; see docs/formats.md.
void save_network(const NetworkParams& params, const std::filesystem::path& path);
NetworkParams load_network(const std::filesystem::path& path);

}  // namespace smaui
