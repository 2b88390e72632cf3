#include "smaui/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "binio.hpp"
#include "smaui/errors.hpp"

namespace smaui {

namespace {

constexpr const char* kNetMagic = "SMAUI-NET";
constexpr int kNetFormatVersion = 1;

std::vector<std::size_t> layer_sizes(const std::vector<DenseLayer>& layers) {
  std::vector<std::size_t> sizes;
  if (layers.empty()) return sizes;
  sizes.push_back(layers.front().weight.rows());
  for (const auto& l : layers) sizes.push_back(l.weight.cols());
  return sizes;
}

std::vector<DenseLayer> make_layers(const std::vector<std::size_t>& sizes, Rng& rng) {
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const std::size_t fan_in = sizes[i];
    const std::size_t fan_out = sizes[i + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    DenseLayer layer{Matrix(fan_in, fan_out), Matrix(1, fan_out)};
    for (double& w : layer.weight.data()) w = dist(rng);
    layers.push_back(std::move(layer));
  }
  return layers;
}

Matrix forward_stack(const std::vector<DenseLayer>& layers, Matrix h) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = add_row_bias(matmul(h, layers[i].weight), layers[i].bias);
    if (i + 1 < layers.size()) h = smaui::tanh(h);
  }
  return h;
}

Var forward_stack(std::span<const Var> tensors, Var h) {
  const std::size_t n_layers = tensors.size() / 2;
  for (std::size_t i = 0; i < n_layers; ++i) {
    h = ad::add_row_bias(ad::matmul(h, tensors[2 * i]), tensors[2 * i + 1]);
    if (i + 1 < n_layers) h = ad::tanh(h);
  }
  return h;
}

void require_cols(const Matrix& x, std::size_t expected, const char* op) {
  if (x.cols() != expected) {
    throw ShapeError(std::string(op) + ": input " + x.shape_string() + " needs " +
                     std::to_string(expected) + " columns");
  }
}

}  // namespace

std::string to_string(EmbeddingMode mode) {
  return mode == EmbeddingMode::Simplex ? "simplex" : "pre-softmax";
}

EmbeddingMode parse_embedding_mode(const std::string& text) {
  if (text == "simplex") return EmbeddingMode::Simplex;
  if (text == "pre-softmax") return EmbeddingMode::PreSoftmax;
  throw ContractError("unknown embedding mode '" + text + "' (expected pre-softmax|simplex)");
}

std::vector<std::size_t> NetworkParams::encoder_sizes() const { return layer_sizes(encoder); }
std::vector<std::size_t> NetworkParams::classifier_sizes() const { return layer_sizes(classifier); }

std::vector<Matrix*> NetworkParams::tensors() {
  std::vector<Matrix*> out;
  for (auto* stack : {&encoder, &classifier})
    for (auto& l : *stack) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
  return out;
}

std::vector<const Matrix*> NetworkParams::tensors() const {
  std::vector<const Matrix*> out;
  for (const auto* stack : {&encoder, &classifier})
    for (const auto& l : *stack) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
  return out;
}

void NetworkParams::validate() const {
  if (encoder.empty() || classifier.empty()) throw ContractError("network needs encoder and classifier layers");
  auto check_chain = [](const std::vector<DenseLayer>& layers, const char* what) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      if (l.bias.rows() != 1 || l.bias.cols() != l.weight.cols()) {
        throw ContractError(std::string(what) + " layer " + std::to_string(i) + ": bias shape " +
                            l.bias.shape_string() + " does not match weight " + l.weight.shape_string());
      }
      if (i > 0 && layers[i - 1].weight.cols() != l.weight.rows()) {
        throw ContractError(std::string(what) + " layer " + std::to_string(i) + " does not chain");
      }
      if (!l.weight.all_finite() || !l.bias.all_finite()) {
        throw ContractError(std::string(what) + " layer " + std::to_string(i) + " has non-finite weights");
      }
    }
  };
  check_chain(encoder, "encoder");
  check_chain(classifier, "classifier");
  if (embedding_dim() != classifier.front().weight.rows()) {
    throw ContractError("classifier input does not match embedding dimension");
  }
  if (embedding_dim() < 1) throw ContractError("embedding dimension must be >= 1");
  if (num_classes() < 2) throw ContractError("need at least 2 classes");
}

NetworkParams init_network(const Architecture& arch, Rng& rng) {
  std::vector<std::size_t> enc{arch.input_dim};
  enc.insert(enc.end(), arch.encoder_hidden.begin(), arch.encoder_hidden.end());
  enc.push_back(arch.embedding_dim);
  std::vector<std::size_t> cls{arch.embedding_dim};
  cls.insert(cls.end(), arch.classifier_hidden.begin(), arch.classifier_hidden.end());
  cls.push_back(arch.num_classes);
  NetworkParams params;
  params.encoder = make_layers(enc, rng);
  params.classifier = make_layers(cls, rng);
  params.embedding_mode = arch.embedding_mode;
  params.validate();
  return params;
}

std::size_t Dataset::inferred_num_classes() const {
  if (!labels || labels->empty()) return 0;
  return static_cast<std::size_t>(*std::max_element(labels->begin(), labels->end())) + 1;
}

void Dataset::validate() const {
  if (!features.all_finite()) throw ContractError("dataset '" + name + "' has non-finite features");
  if (labels) {
    if (labels->size() != features.rows()) {
      throw ContractError("dataset '" + name + "': " + std::to_string(labels->size()) +
                          " labels for " + std::to_string(features.rows()) + " rows");
    }
    for (int y : *labels)
      if (y < 0) throw ContractError("dataset '" + name + "': negative label");
  }
}

UnlabeledDataset strip_labels(const Dataset& ds) { return {ds.features, ds.name}; }

Matrix encode(const NetworkParams& params, const Matrix& x) {
  require_cols(x, params.input_dim(), "encode");
  Matrix z = forward_stack(params.encoder, x);
  if (params.embedding_mode == EmbeddingMode::Simplex) z = softmax_rows(z);
  return z;
}

Matrix classify(const NetworkParams& params, const Matrix& z) {
  require_cols(z, params.embedding_dim(), "classify");
  return softmax_rows(forward_stack(params.classifier, z));
}

Matrix predict_proba(const NetworkParams& params, const Matrix& x) {
  return classify(params, encode(params, x));
}

double cross_entropy(const Matrix& probs, std::span<const int> labels) {
  Tape tape;
  return ad::cross_entropy(tape.constant(probs), labels).value()(0, 0);
}

BoundNetwork bind(Tape& tape, const NetworkParams& params, bool train_encoder,
                  bool train_classifier) {
  BoundNetwork net{&params, {}};
  const auto tensors = params.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const bool trainable = i < params.encoder_tensor_count() ? train_encoder : train_classifier;
    net.tensors.push_back(trainable ? tape.leaf(*tensors[i]) : tape.constant(*tensors[i]));
  }
  return net;
}

Var encode(const BoundNetwork& net, Var x) {
  require_cols(x.value(), net.params->input_dim(), "encode");
  const std::span<const Var> all(net.tensors);
  Var z = forward_stack(all.first(net.params->encoder_tensor_count()), x);
  if (net.params->embedding_mode == EmbeddingMode::Simplex) z = ad::softmax_rows(z);
  return z;
}

Var classify(const BoundNetwork& net, Var z) {
  require_cols(z.value(), net.params->embedding_dim(), "classify");
  const std::span<const Var> all(net.tensors);
  return ad::softmax_rows(forward_stack(all.subspan(net.params->encoder_tensor_count()), z));
}

std::vector<Matrix> collect_gradients(const BoundNetwork& net, const Gradients& grads) {
  std::vector<Matrix> out;
  out.reserve(net.tensors.size());
  for (Var v : net.tensors) {
    if (v.tape->requires_grad(v.id)) {
      out.push_back(grads.wrt(v));
    } else {
      out.emplace_back(v.value().rows(), v.value().cols());
    }
  }
  return out;
}

AdamState AdamState::zeros_like(std::span<const Matrix* const> params) {
  AdamState s;
  for (const Matrix* p : params) {
    s.first_moment.emplace_back(p->rows(), p->cols());
    s.second_moment.emplace_back(p->rows(), p->cols());
  }
  return s;
}

void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state,
               double lr) {
  if (grads.size() != params.size()) {
    throw ContractError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                        std::to_string(params.size()) + " parameters");
  }
  if (state.first_moment.empty()) {
    std::vector<const Matrix*> cp(params.begin(), params.end());
    const double b1 = state.beta1, b2 = state.beta2, eps = state.epsilon;
    const auto step = state.step;
    state = AdamState::zeros_like(cp);
    state.beta1 = b1;
    state.beta2 = b2;
    state.epsilon = eps;
    state.step = step;
  }
  if (state.first_moment.size() != params.size()) throw ContractError("adam_step: state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(*params[i], grads[i], "adam_step");
    require_same_shape(*params[i], state.first_moment[i], "adam_step");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    auto g = grads[i].data();
    auto m = state.first_moment[i].data();
    auto v = state.second_moment[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p[j] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

void adam_step(NetworkParams& params, std::span<const Matrix> grads, AdamState& state, double lr) {
  const auto tensors = params.tensors();
  adam_step(std::span<Matrix* const>(tensors), grads, state, lr);
}

SourceTrainResult train_source(const Dataset& source, const Architecture& arch,
                               const SourceTrainConfig& config) {
  if (!source.labeled()) throw ContractError("train_source: source dataset is unlabeled");
  if (config.epochs < 1) throw ContractError("train_source: epochs must be >= 1");
  if (config.batch_size < 1) throw ContractError("train_source: batch size must be >= 1");
  if (source.size() == 0) throw ContractError("train_source: empty dataset");
  source.validate();
  if (source.inferred_num_classes() > arch.num_classes) {
    throw ContractError("train_source: label exceeds architecture class count");
  }
  require_cols(source.features, arch.input_dim, "train_source");

  Rng rng(config.seed);
  SourceTrainResult result{init_network(arch, rng), {}};
  AdamState adam = AdamState::zeros_like(std::as_const(result.params).tensors());

  const std::size_t n = source.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      std::vector<int> y;
      y.reserve(idx.size());
      for (std::size_t i : idx) y.push_back((*source.labels)[i]);

      Tape tape;
      const BoundNetwork net = bind(tape, result.params);
      Var x = tape.constant(source.features.select_rows(idx));
      Var loss = ad::cross_entropy(classify(net, encode(net, x)), y);
      const Gradients g = tape.backward(loss);
      adam_step(result.params, collect_gradients(net, g), adam, config.lr);
      loss_sum += loss.value()(0, 0);
      ++batches;
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
  }
  return result;
}

double accuracy(const NetworkParams& params, const Dataset& ds) {
  if (!ds.labeled()) throw ContractError("accuracy: dataset is unlabeled");
  if (ds.size() == 0) return 0.0;
  const auto pred = argmax_rows(predict_proba(params, ds.features));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == (*ds.labels)[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

void save_network(const NetworkParams& params, const std::filesystem::path& path) {
  params.validate();
  nlohmann::json manifest = {
      {"format_version", kNetFormatVersion},
      {"encoder_sizes", params.encoder_sizes()},
      {"classifier_sizes", params.classifier_sizes()},
      {"embedding_mode", to_string(params.embedding_mode)},
      {"d", params.input_dim()},
      {"p", params.embedding_dim()},
      {"k", params.num_classes()},
  };
  std::vector<double> payload;
  for (const Matrix* t : params.tensors()) payload.insert(payload.end(), t->data().begin(), t->data().end());
  binio::write(path, kNetMagic, manifest, payload);
}

NetworkParams load_network(const std::filesystem::path& path) {
  const auto cp = binio::read(path, kNetMagic);
  try {
    if (cp.manifest.at("format_version").get<int>() != kNetFormatVersion) {
      throw SchemaError(path.string() + ": unsupported network format version");
    }
    const auto enc = cp.manifest.at("encoder_sizes").get<std::vector<std::size_t>>();
    const auto cls = cp.manifest.at("classifier_sizes").get<std::vector<std::size_t>>();
    if (enc.size() < 2 || cls.size() < 2) throw SchemaError(path.string() + ": layer size list too short");
    NetworkParams params;
    params.embedding_mode = parse_embedding_mode(cp.manifest.at("embedding_mode").get<std::string>());
    std::size_t offset = 0;
    auto take = [&](std::size_t rows, std::size_t cols) {
      if (offset + rows * cols > cp.payload.size()) throw SchemaError(path.string() + ": payload too short");
      std::vector<double> v(cp.payload.begin() + static_cast<std::ptrdiff_t>(offset),
                            cp.payload.begin() + static_cast<std::ptrdiff_t>(offset + rows * cols));
      offset += rows * cols;
      return Matrix(rows, cols, std::move(v));
    };
    for (auto [sizes, stack] : {std::pair{&enc, &params.encoder}, std::pair{&cls, &params.classifier}}) {
      for (std::size_t i = 0; i + 1 < sizes->size(); ++i) {
        Matrix w = take((*sizes)[i], (*sizes)[i + 1]);
        Matrix b = take(1, (*sizes)[i + 1]);
        stack->push_back({std::move(w), std::move(b)});
      }
    }
    if (offset != cp.payload.size()) throw SchemaError(path.string() + ": trailing payload data");
    if (cp.manifest.at("d").get<std::size_t>() != enc.front() ||
        cp.manifest.at("p").get<std::size_t>() != enc.back() ||
        cp.manifest.at("k").get<std::size_t>() != cls.back() || cls.front() != enc.back()) {
      throw SchemaError(path.string() + ": manifest dimensions are inconsistent");
    }
    params.validate();
    return params;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  } catch (const ContractError& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

}  // namespace smaui
