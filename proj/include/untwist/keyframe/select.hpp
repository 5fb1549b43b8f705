// Copyright 2026 The Untwist Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "untwist/media/ingest.hpp"

namespace untwist::keyframe {

class ExtractorFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FeatureVector {
  std::vector<double> values;
  std::size_t source_index = 0;
};

/// Dense row-major N x D matrix.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static FeatureMatrix from_vectors(std::span<const FeatureVector> vectors);
  static FeatureMatrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::span<const double> row(std::size_t r) const { return {&data_[r * cols_], cols_}; }
  std::span<double> row(std::size_t r) { return {&data_[r * cols_], cols_}; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double squared_distance(std::span<const double> a, std::span<const double> b);

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::size_t dimension() const = 0;
  /// Deterministic; throws ExtractorFailure on failure.
  virtual std::vector<double> extract(const media::PreprocessedFrame& frame) const = 0;
};

/// Per-cell mean of each channel over an 8 x 8 grid: 192 dimensions.
class GridMeanExtractor final : public FeatureExtractor {
 public:
  static constexpr int kGrid = 8;
  std::size_t dimension() const override { return kGrid * kGrid * 3; }
  std::vector<double> extract(const media::PreprocessedFrame& frame) const override;
};

/// One vector per frame, in input order. Up to `workers` threads.
std::vector<FeatureVector> embed_frames(std::span<const media::PreprocessedFrame> frames,
                                        const FeatureExtractor& extractor,
                                        std::size_t workers = 4);

struct ClusterModel {
  FeatureMatrix centroids;                // K x D
  std::vector<std::size_t> assignments;   // per row, nearest centroid (lowest index on ties)
  double distortion = 0;                  // sum of squared distances to assigned centroids
  std::size_t iterations = 0;

  std::size_t k() const { return centroids.rows(); }
};

inline constexpr int kMaxLloydIterations = 300;

/// Lloyd's algorithm with k-means++ seeding. Requires 1 <= k <= N.
/// Deterministic for fixed (features, k, seed). Clusters that empty out are
/// re-seeded with the point farthest from its centroid.
ClusterModel kmeans(const FeatureMatrix& features, std::size_t k, std::uint64_t seed,
                    int max_iterations = kMaxLloydIterations);

/// Lowest-distortion model over `restarts` seeds derived from `seed`.
ClusterModel kmeans_best_of(const FeatureMatrix& features, std::size_t k, std::uint64_t seed,
                            int restarts);

struct KBounds {
  std::size_t k_min = 1;
  std::size_t k_max = 4;
};

/// k_min = 1, k_max = clamp(round(duration / 30), 4, 32).
KBounds default_k_bounds(double duration_s);

struct ElbowOptions {
  double tau = 0.05;
  std::uint64_t seed = 0;
  int restarts = 4;
};

struct ElbowChoice {
  std::size_t k = 1;
  std::size_t k_first = 1;
  /// distortion[i] is J(k_first + i); J(1) is the total scatter.
  std::vector<double> distortion;
  double total_scatter = 0;
};

/// Smallest K in [k_min, min(k_max, N)] whose step to K + 1 improves
/// distortion by less than tau * J(1); the upper bound if none does.
/// Zero-scatter input yields k_min.
ElbowChoice choose_k(const FeatureMatrix& features, KBounds bounds, const ElbowOptions& options = {});
ElbowChoice choose_k(const FeatureMatrix& features, double duration_s,
                     std::optional<KBounds> bounds = std::nullopt,
                     const ElbowOptions& options = {});

struct KeyFrame {
  media::FrameRecord frame;
  std::size_t cluster_id = 0;
  double distance_to_centroid = 0;
};

/// One keyframe per non-empty cluster: the member nearest its centroid,
/// earliest timestamp on ties. Output is ordered by timestamp.
/// `features` rows align with `frames`.
std::vector<KeyFrame> select_representatives(const ClusterModel& model,
                                             const FeatureMatrix& features,
                                             std::span<const media::FrameRecord> frames);

}  // namespace untwist::keyframe
