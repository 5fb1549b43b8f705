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

#include "untwist/keyframe/select.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <random>
#include <thread>

namespace untwist::keyframe {
namespace {

constexpr std::size_t kExpectedValues =
    static_cast<std::size_t>(media::kModelInputSize) * media::kModelInputSize * 3;

// Uniform in [0, 1) from the raw engine, so results do not depend on the
// standard library's distribution implementation.
double unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::size_t nearest(const FeatureMatrix& centroids, std::span<const double> point,
                    double* best_out = nullptr) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d = squared_distance(point, centroids.row(c));
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (best_out) *best_out = best_d;
  return best;
}

FeatureMatrix seed_plus_plus(const FeatureMatrix& x, std::size_t k, std::mt19937_64& rng) {
  const std::size_t n = x.rows();
  FeatureMatrix centroids(k, x.cols());
  std::vector<bool> chosen(n, false);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());

  auto take = [&](std::size_t c, std::size_t i) {
    std::copy_n(x.row(i).begin(), x.cols(), centroids.row(c).begin());
    chosen[i] = true;
    for (std::size_t p = 0; p < n; ++p)
      d2[p] = std::min(d2[p], squared_distance(x.row(p), x.row(i)));
  };

  take(0, std::min(static_cast<std::size_t>(unit(rng) * static_cast<double>(n)), n - 1));
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0;
    for (double v : d2) total += v;
    std::size_t pick = n;
    if (total > 0) {
      const double target = unit(rng) * total;
      double acc = 0;
      for (std::size_t p = 0; p < n; ++p) {
        if (d2[p] <= 0) continue;
        acc += d2[p];
        pick = p;
        if (acc > target) break;
      }
    }
    if (pick == n) {
      // No scatter left: fall back to the first point not yet used.
      pick = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), false) - chosen.begin());
      if (pick == n) pick = 0;
    }
    take(c, pick);
  }
  return centroids;
}

void assign_all(const FeatureMatrix& x, const FeatureMatrix& centroids,
                std::vector<std::size_t>& out) {
  out.resize(x.rows());
  for (std::size_t p = 0; p < x.rows(); ++p) out[p] = nearest(centroids, x.row(p));
}

void update_centroids(const FeatureMatrix& x, const std::vector<std::size_t>& assign,
                      FeatureMatrix& centroids) {
  const std::size_t k = centroids.rows();
  const std::size_t d = x.cols();
  std::vector<std::size_t> counts(k, 0);
  FeatureMatrix sums(k, d);
  for (std::size_t p = 0; p < x.rows(); ++p) {
    ++counts[assign[p]];
    auto s = sums.row(assign[p]);
    const auto r = x.row(p);
    for (std::size_t j = 0; j < d; ++j) s[j] += r[j];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) continue;
    for (std::size_t j = 0; j < d; ++j)
      centroids(c, j) = sums(c, j) / static_cast<double>(counts[c]);
  }

  std::vector<bool> used(x.rows(), false);
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] != 0) continue;
    std::size_t far = x.rows();
    double far_d = -1;
    for (std::size_t p = 0; p < x.rows(); ++p) {
      if (used[p]) continue;
      const double dist = squared_distance(x.row(p), centroids.row(assign[p]));
      if (dist > far_d) {
        far_d = dist;
        far = p;
      }
    }
    if (far == x.rows()) continue;
    used[far] = true;
    std::copy_n(x.row(far).begin(), d, centroids.row(c).begin());
  }
}

}  // namespace

FeatureMatrix FeatureMatrix::from_vectors(std::span<const FeatureVector> vectors) {
  if (vectors.empty()) return {};
  FeatureMatrix m(vectors.size(), vectors.front().values.size());
  for (std::size_t r = 0; r < vectors.size(); ++r) {
    if (vectors[r].values.size() != m.cols())
      throw std::invalid_argument("feature vectors differ in dimension");
    std::copy(vectors[r].values.begin(), vectors[r].values.end(), m.row(r).begin());
  }
  return m;
}

FeatureMatrix FeatureMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  FeatureMatrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) throw std::invalid_argument("ragged feature rows");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

std::vector<double> GridMeanExtractor::extract(const media::PreprocessedFrame& frame) const {
  if (frame.data.size() != kExpectedValues)
    throw ExtractorFailure("preprocessed frame is not 224x224x3");
  constexpr int kCell = media::kModelInputSize / kGrid;
  std::vector<double> out(dimension(), 0.0);
  for (int y = 0; y < media::kModelInputSize; ++y) {
    const int gy = y / kCell;
    for (int x = 0; x < media::kModelInputSize; ++x) {
      const int gx = x / kCell;
      const std::size_t base = static_cast<std::size_t>(gy * kGrid + gx) * 3;
      for (int c = 0; c < 3; ++c) out[base + static_cast<std::size_t>(c)] += frame.at(y, x, c);
    }
  }
  for (double& v : out) v /= static_cast<double>(kCell * kCell);
  for (double v : out)
    if (!std::isfinite(v)) throw ExtractorFailure("non-finite feature value");
  return out;
}

std::vector<FeatureVector> embed_frames(std::span<const media::PreprocessedFrame> frames,
                                        const FeatureExtractor& extractor, std::size_t workers) {
  for (const auto& f : frames)
    if (f.data.size() != kExpectedValues)
      throw ExtractorFailure("frame " + std::to_string(f.source_index) + " is not 224x224x3");

  std::vector<FeatureVector> out(frames.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto work = [&] {
    for (std::size_t i = next++; i < frames.size(); i = next++) {
      try {
        out[i] = {extractor.extract(frames[i]), frames[i].source_index};
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(frames.size(), 1));
  if (n_threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
  for (const auto& v : out)
    if (v.values.size() != extractor.dimension())
      throw ExtractorFailure("extractor returned a vector of unexpected dimension");
  return out;
}

ClusterModel kmeans(const FeatureMatrix& features, std::size_t k, std::uint64_t seed,
                    int max_iterations) {
  const std::size_t n = features.rows();
  if (k < 1 || k > n) throw std::invalid_argument("kmeans requires 1 <= k <= N");

  std::mt19937_64 rng(seed);
  ClusterModel model;
  model.centroids = seed_plus_plus(features, k, rng);

  std::vector<std::size_t> next;
  bool converged = false;
  for (int it = 0; it < max_iterations; ++it) {
    assign_all(features, model.centroids, next);
    model.iterations = static_cast<std::size_t>(it) + 1;
    if (it > 0 && next == model.assignments) {
      converged = true;
      break;
    }
    model.assignments = next;
    update_centroids(features, model.assignments, model.centroids);
  }
  if (!converged) assign_all(features, model.centroids, model.assignments);

  model.distortion = 0;
  for (std::size_t p = 0; p < n; ++p)
    model.distortion +=
        squared_distance(features.row(p), model.centroids.row(model.assignments[p]));
  return model;
}

ClusterModel kmeans_best_of(const FeatureMatrix& features, std::size_t k, std::uint64_t seed,
                            int restarts) {
  ClusterModel best = kmeans(features, k, seed);
  for (int r = 1; r < restarts; ++r) {
    ClusterModel m = kmeans(features, k, seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(r));
    if (m.distortion < best.distortion) best = std::move(m);
  }
  return best;
}

KBounds default_k_bounds(double duration_s) {
  const double raw = std::round(std::max(duration_s, 0.0) / 30.0);
  return {1, static_cast<std::size_t>(std::clamp(raw, 4.0, 32.0))};
}

ElbowChoice choose_k(const FeatureMatrix& features, KBounds bounds, const ElbowOptions& options) {
  const std::size_t n = features.rows();
  if (n == 0) throw std::invalid_argument("choose_k needs at least one frame");
  if (bounds.k_min < 1 || bounds.k_min > bounds.k_max)
    throw std::invalid_argument("choose_k requires 1 <= k_min <= k_max");

  const std::size_t upper = std::min(bounds.k_max, n);
  const std::size_t lower = std::min(bounds.k_min, upper);

  ElbowChoice choice;
  choice.k_first = lower;
  std::vector<double> mean(features.cols(), 0.0);
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t j = 0; j < features.cols(); ++j) mean[j] += features(p, j);
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t p = 0; p < n; ++p) choice.total_scatter += squared_distance(features.row(p), mean);

  choice.k = lower;
  if (!(choice.total_scatter > 1e-12)) {
    choice.distortion.push_back(0.0);
    return choice;
  }

  auto distortion_at = [&](std::size_t k) {
    if (k == 1) return choice.total_scatter;
    return kmeans_best_of(features, k, options.seed, options.restarts).distortion;
  };

  choice.distortion.push_back(distortion_at(lower));
  for (std::size_t k = lower; k < upper; ++k) {
    const double next = distortion_at(k + 1);
    choice.distortion.push_back(next);
    if ((choice.distortion[k - lower] - next) / choice.total_scatter < options.tau) {
      choice.k = k;
      return choice;
    }
  }
  choice.k = upper;
  return choice;
}

ElbowChoice choose_k(const FeatureMatrix& features, double duration_s,
                     std::optional<KBounds> bounds, const ElbowOptions& options) {
  return choose_k(features, bounds.value_or(default_k_bounds(duration_s)), options);
}

std::vector<KeyFrame> select_representatives(const ClusterModel& model,
                                             const FeatureMatrix& features,
                                             std::span<const media::FrameRecord> frames) {
  if (model.assignments.size() != frames.size() || features.rows() != frames.size())
    throw std::invalid_argument("cluster assignments do not cover the frames");

  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> best(model.k(), kNone);
  std::vector<double> best_d(model.k(), 0.0);
  for (std::size_t p = 0; p < frames.size(); ++p) {
    const std::size_t c = model.assignments[p];
    const double d = squared_distance(features.row(p), model.centroids.row(c));
    const bool better =
        best[c] == kNone || d < best_d[c] ||
        (d == best_d[c] && frames[p].timestamp_s < frames[best[c]].timestamp_s);
    if (better) {
      best[c] = p;
      best_d[c] = d;
    }
  }

  std::vector<KeyFrame> out;
  for (std::size_t c = 0; c < model.k(); ++c)
    if (best[c] != kNone) out.push_back({frames[best[c]], c, std::sqrt(best_d[c])});
  std::sort(out.begin(), out.end(), [](const KeyFrame& a, const KeyFrame& b) {
    return a.frame.timestamp_s < b.frame.timestamp_s;
  });
  return out;
}

}  // namespace untwist::keyframe
