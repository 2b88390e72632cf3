#include "smaui/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "binio.hpp"
#include "smaui/errors.hpp"

namespace smaui {

namespace {

constexpr const char* kGmmMagic = "SMAUI-GMM";
constexpr int kGmmFormatVersion = 1;

using EigenMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

EigenMat to_eigen(const Matrix& m) {
  return Eigen::Map<const EigenMat>(m.data().data(), static_cast<Eigen::Index>(m.rows()),
                                    static_cast<Eigen::Index>(m.cols()));
}

Matrix from_eigen(const EigenMat& m) {
  Matrix out(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  Eigen::Map<EigenMat>(out.data().data(), m.rows(), m.cols()) = m;
  return out;
}

}  // namespace

double default_reg_eps(std::span<const Matrix> covariances) {
  double diag = 0.0;
  std::size_t count = 0;
  for (const Matrix& c : covariances)
    for (std::size_t i = 0; i < c.rows(); ++i, ++count) diag += c(i, i);
  const double mean_diag = count == 0 ? 0.0 : diag / static_cast<double>(count);
  return std::max(1e-6 * mean_diag, 1e-8);
}

void GmmModel::refactor() {
  const std::size_t p = dim();
  factors.clear();
  degenerate.clear();
  for (const Matrix& cov : covariances) {
    EigenMat reg = to_eigen(cov);
    reg += reg_eps * EigenMat::Identity(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
    Eigen::LLT<EigenMat> llt(reg);
    if (llt.info() == Eigen::Success) {
      factors.push_back(from_eigen(llt.matrixL().toDenseMatrix()));
      degenerate.push_back(false);
      continue;
    }
    Eigen::SelfAdjointEigenSolver<EigenMat> eig(reg);
    const Eigen::VectorXd lambda = eig.eigenvalues();
    const double tol = 1e-12 * std::max(1.0, lambda.cwiseAbs().maxCoeff());
    if (lambda.minCoeff() < -tol) {
      throw EstimationError("covariance is not positive semi-definite after regularisation");
    }
    const Eigen::VectorXd root = lambda.cwiseMax(0.0).cwiseSqrt();
    factors.push_back(from_eigen(eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose()));
    degenerate.push_back(true);
  }
}

void GmmModel::validate() const {
  const std::size_t k = num_components();
  const std::size_t p = dim();
  if (k == 0) throw ContractError("gmm has no components");
  if (means.rows() != k || covariances.size() != k || factors.size() != k) {
    throw ContractError("gmm component arrays disagree on k");
  }
  double total = 0.0;
  for (double a : weights) {
    if (!(a >= 0.0)) throw ContractError("gmm weight is negative or NaN");
    total += a;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ContractError("gmm weights do not sum to 1");
  if (!means.all_finite()) throw ContractError("gmm means are not finite");
  if (!(reg_eps >= 0.0)) throw ContractError("gmm reg_eps must be >= 0");
  for (std::size_t j = 0; j < k; ++j) {
    const Matrix& c = covariances[j];
    if (c.rows() != p || c.cols() != p) throw ContractError("gmm covariance has wrong shape");
    if (!c.all_finite()) throw ContractError("gmm covariance is not finite");
    for (std::size_t r = 0; r < p; ++r)
      for (std::size_t s = r + 1; s < p; ++s)
        if (std::abs(c(r, s) - c(s, r)) > 1e-10) throw ContractError("gmm covariance is not symmetric");
  }
}

GmmModel estimate_gmm(const Matrix& embeddings, std::span<const int> labels, std::size_t num_classes,
                      std::optional<double> reg_eps) {
  if (labels.size() != embeddings.rows()) {
    throw ContractError("estimate_gmm: " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(embeddings.rows()) + " embeddings");
  }
  if (!embeddings.all_finite()) throw ContractError("estimate_gmm: non-finite embedding");
  if (reg_eps && !(*reg_eps >= 0.0)) throw ContractError("estimate_gmm: reg_eps must be >= 0");
  const std::size_t p = embeddings.cols();
  const std::size_t k = num_classes;

  std::vector<std::size_t> counts(k, 0);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw ContractError("estimate_gmm: label " + std::to_string(y) + " outside [0," + std::to_string(k) + ")");
    }
    ++counts[static_cast<std::size_t>(y)];
  }
  for (std::size_t j = 0; j < k; ++j) {
    if (counts[j] == 0) throw EstimationError("estimate_gmm: class " + std::to_string(j) + " has no samples");
  }

  GmmModel gmm;
  gmm.means = Matrix(k, p);
  const double n = static_cast<double>(labels.size());
  for (std::size_t j = 0; j < k; ++j) gmm.weights.push_back(static_cast<double>(counts[j]) / n);

  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto m = gmm.means.row(static_cast<std::size_t>(labels[i]));
    auto z = embeddings.row(i);
    for (std::size_t c = 0; c < p; ++c) m[c] += z[c];
  }
  for (std::size_t j = 0; j < k; ++j)
    for (double& v : gmm.means.row(j)) v /= static_cast<double>(counts[j]);

  gmm.covariances.assign(k, Matrix(p, p));
  std::vector<double> dev(p);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto j = static_cast<std::size_t>(labels[i]);
    auto z = embeddings.row(i);
    auto m = gmm.means.row(j);
    for (std::size_t c = 0; c < p; ++c) dev[c] = z[c] - m[c];
    Matrix& cov = gmm.covariances[j];
    for (std::size_t r = 0; r < p; ++r)
      for (std::size_t s = r; s < p; ++s) cov(r, s) += dev[r] * dev[s];
  }
  for (std::size_t j = 0; j < k; ++j) {
    Matrix& cov = gmm.covariances[j];
    const double inv = 1.0 / static_cast<double>(counts[j]);
    for (std::size_t r = 0; r < p; ++r)
      for (std::size_t s = r; s < p; ++s) {
        cov(r, s) *= inv;
        cov(s, r) = cov(r, s);
      }
  }

  gmm.reg_eps = reg_eps.value_or(default_reg_eps(gmm.covariances));
  gmm.source_count = labels.size();
  gmm.refactor();
  gmm.validate();
  return gmm;
}

double gmm_logpdf(const GmmModel& gmm, std::span<const double> z) {
  const std::size_t p = gmm.dim();
  if (z.size() != p) throw ShapeError("gmm_logpdf: point of length " + std::to_string(z.size()) + " for p = " + std::to_string(p));
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  std::vector<double> terms;
  std::vector<double> w(p);
  for (std::size_t j = 0; j < gmm.num_components(); ++j) {
    if (gmm.weights[j] <= 0.0 || gmm.degenerate[j]) continue;
    const Matrix& l = gmm.factors[j];
    auto mu = gmm.means.row(j);
    // Solve L w = z - mu.
    double quad = 0.0;
    double log_det = 0.0;
    for (std::size_t r = 0; r < p; ++r) {
      double s = z[r] - mu[r];
      for (std::size_t c = 0; c < r; ++c) s -= l(r, c) * w[c];
      w[r] = s / l(r, r);
      quad += w[r] * w[r];
      log_det += 2.0 * std::log(l(r, r));
    }
    terms.push_back(std::log(gmm.weights[j]) - 0.5 * (static_cast<double>(p) * log_2pi + log_det + quad));
  }
  if (terms.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(terms.begin(), terms.end());
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - m);
  return m + std::log(acc);
}

GmmSamples sample_gmm(const GmmModel& gmm, std::size_t n, Rng& rng) {
  if (n < 1) throw ContractError("sample_gmm: n must be >= 1");
  const std::size_t k = gmm.num_components();
  const std::size_t p = gmm.dim();
  std::vector<double> cumulative(k);
  double acc = 0.0;
  for (std::size_t j = 0; j < k; ++j) cumulative[j] = acc += gmm.weights[j];

  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  GmmSamples out{Matrix(n, p), std::vector<int>(n)};
  std::vector<double> eps(p);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = uniform(rng) * acc;
    std::size_t j = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) -
                                             cumulative.begin());
    j = std::min(j, k - 1);
    out.components[i] = static_cast<int>(j);
    for (double& e : eps) e = normal(rng);
    const Matrix& l = gmm.factors[j];
    auto mu = gmm.means.row(j);
    auto row = out.points.row(i);
    for (std::size_t r = 0; r < p; ++r) {
      double s = mu[r];
      // Degenerate factors are full symmetric roots, so use the whole row.
      const std::size_t upto = gmm.degenerate[j] ? p : r + 1;
      for (std::size_t c = 0; c < upto; ++c) s += l(r, c) * eps[c];
      row[r] = s;
    }
  }
  return out;
}

PseudoDataset build_pseudo_dataset(const GmmModel& gmm, const NetworkParams& params,
                                   std::size_t requested, double tau, Rng& rng,
                                   std::optional<std::size_t> max_attempts) {
  if (requested < 1) throw ContractError("build_pseudo_dataset: N_p must be >= 1");
  if (!(tau >= 0.0 && tau < 1.0)) throw ContractError("build_pseudo_dataset: tau must lie in [0, 1)");
  if (gmm.dim() != params.embedding_dim()) {
    throw ContractError("build_pseudo_dataset: gmm dimension " + std::to_string(gmm.dim()) +
                        " does not match embedding dimension " + std::to_string(params.embedding_dim()));
  }
  const std::size_t limit = max_attempts.value_or(100 * requested);
  const std::size_t p = gmm.dim();

  PseudoDataset out;
  out.tau = tau;
  out.requested = requested;
  std::vector<double> accepted_points;
  while (out.accepted() < requested && out.attempts < limit) {
    const std::size_t chunk = std::min(limit - out.attempts, std::max<std::size_t>(requested - out.accepted(), 64));
    const GmmSamples draw = sample_gmm(gmm, chunk, rng);
    const Matrix probs = classify(params, draw.points);
    const std::vector<int> pred = argmax_rows(probs);
    for (std::size_t i = 0; i < chunk && out.accepted() < requested; ++i) {
      ++out.attempts;
      if (probs(i, static_cast<std::size_t>(pred[i])) > tau) {
        auto row = draw.points.row(i);
        accepted_points.insert(accepted_points.end(), row.begin(), row.end());
        out.labels.push_back(pred[i]);
        out.components.push_back(draw.components[i]);
      }
    }
  }
  if (out.accepted() == 0) {
    throw GenerationError("pseudo-dataset generation accepted no samples in " + std::to_string(out.attempts) +
                          " draws at tau = " + std::to_string(tau) + "; lower the confidence threshold");
  }
  out.points = Matrix(out.accepted(), p, std::move(accepted_points));
  return out;
}

void save_gmm(const GmmModel& gmm, const std::filesystem::path& path) {
  gmm.validate();
  nlohmann::json manifest = {{"format_version", kGmmFormatVersion},
                             {"k", gmm.num_components()},
                             {"p", gmm.dim()},
                             {"reg_eps", gmm.reg_eps},
                             {"n", gmm.source_count}};
  std::vector<double> payload(gmm.weights);
  payload.insert(payload.end(), gmm.means.data().begin(), gmm.means.data().end());
  for (const Matrix& c : gmm.covariances) payload.insert(payload.end(), c.data().begin(), c.data().end());
  binio::write(path, kGmmMagic, manifest, payload);
}

GmmModel load_gmm(const std::filesystem::path& path) {
  const auto cp = binio::read(path, kGmmMagic);
  try {
    if (cp.manifest.at("format_version").get<int>() != kGmmFormatVersion) {
      throw SchemaError(path.string() + ": unsupported gmm format version");
    }
    const auto k = cp.manifest.at("k").get<std::size_t>();
    const auto p = cp.manifest.at("p").get<std::size_t>();
    if (cp.payload.size() != k + k * p + k * p * p) {
      throw SchemaError(path.string() + ": payload length does not match k = " + std::to_string(k) +
                        ", p = " + std::to_string(p));
    }
    GmmModel gmm;
    gmm.reg_eps = cp.manifest.at("reg_eps").get<double>();
    gmm.source_count = cp.manifest.value("n", std::size_t{0});
    auto it = cp.payload.begin();
    gmm.weights.assign(it, it + static_cast<std::ptrdiff_t>(k));
    it += static_cast<std::ptrdiff_t>(k);
    gmm.means = Matrix(k, p, std::vector<double>(it, it + static_cast<std::ptrdiff_t>(k * p)));
    it += static_cast<std::ptrdiff_t>(k * p);
    for (std::size_t j = 0; j < k; ++j, it += static_cast<std::ptrdiff_t>(p * p)) {
      gmm.covariances.emplace_back(p, p, std::vector<double>(it, it + static_cast<std::ptrdiff_t>(p * p)));
    }
    gmm.refactor();
    gmm.validate();
    return gmm;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  } catch (const ContractError& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

}  // namespace smaui
