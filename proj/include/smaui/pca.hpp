#pragma once

#include <filesystem>

#include "smaui/matrix.hpp"
#include "smaui/nn.hpp"

namespace smaui {

struct PcaProjection {
  Matrix mean;    // 1 x p
  Matrix axes;    // p x 2, columns are the top-2 principal directions
  Matrix scores;  // n x 2
};

// Projects rows onto the two leading eigenvectors of their covariance.
// Each axis is signed so that its largest-magnitude entry is positive; a
// zero covariance yields the first two canonical basis vectors.
PcaProjection pca_2d(const Matrix& points);

// Encodes `dataset`, projects the embeddings with pca_2d and writes
// CSV `pc1,pc2,label` (label -1 when unlabeled).
void export_embedding(const NetworkParams& params, const Dataset& dataset, const std::filesystem::path& path);

}  // namespace smaui
