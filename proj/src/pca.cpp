#include "smaui/pca.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <Eigen/Eigenvalues>

#include "smaui/errors.hpp"

namespace smaui {

PcaProjection pca_2d(const Matrix& points) {
  const std::size_t n = points.rows();
  const std::size_t p = points.cols();
  if (p < 2) throw ContractError("pca_2d: need at least 2 dimensions, got " + std::to_string(p));
  if (n == 0) throw ContractError("pca_2d: no points");

  PcaProjection out{Matrix(1, p), Matrix(p, 2), Matrix(n, 2)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < p; ++c) out.mean(0, c) += points(i, c);
  for (double& v : out.mean.data()) v /= static_cast<double>(n);

  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd d(static_cast<Eigen::Index>(p));
    for (std::size_t c = 0; c < p; ++c) d(static_cast<Eigen::Index>(c)) = points(i, c) - out.mean(0, c);
    cov.noalias() += d * d.transpose();
  }
  cov /= static_cast<double>(n);

  if (cov.cwiseAbs().maxCoeff() == 0.0) {
    out.axes(0, 0) = 1.0;
    out.axes(1, 1) = 1.0;
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const Eigen::MatrixXd& vecs = eig.eigenvectors();  // ascending eigenvalues
    for (std::size_t a = 0; a < 2; ++a) {
      Eigen::VectorXd v = vecs.col(static_cast<Eigen::Index>(p - 1 - a));
      Eigen::Index lead = 0;
      v.cwiseAbs().maxCoeff(&lead);
      if (v(lead) < 0) v = -v;
      for (std::size_t c = 0; c < p; ++c) out.axes(c, a) = v(static_cast<Eigen::Index>(c));
    }
  }

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < 2; ++a) {
      double s = 0.0;
      for (std::size_t c = 0; c < p; ++c) s += (points(i, c) - out.mean(0, c)) * out.axes(c, a);
      out.scores(i, a) = s;
    }
  return out;
}

void export_embedding(const NetworkParams& params, const Dataset& dataset, const std::filesystem::path& path) {
  dataset.validate();
  const PcaProjection proj = pca_2d(encode(params, dataset.features));
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "pc1,pc2,label\n";
  char buf[64];
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,", proj.scores(i, 0), proj.scores(i, 1));
    out << buf << (dataset.labels ? (*dataset.labels)[i] : -1) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace smaui
