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


#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "support.hpp"
#include "untwist/keyframe/select.hpp"

using namespace untwist;
using namespace untwist::keyframe;

namespace {

std::vector<media::FrameRecord> frames_for(std::size_t n, double interval = 2.0) {
  std::vector<media::FrameRecord> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({i, interval * static_cast<double>(i), RgbImage(1, 1)});
  return out;
}

FeatureMatrix random_matrix(std::mt19937_64& rng, std::size_t n, std::size_t d) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<std::vector<double>> rows(n, std::vector<double>(d));
  for (auto& r : rows)
    for (auto& v : r) v = g(rng);
  return FeatureMatrix::from_rows(rows);
}

// Exact optimal 1-D k-means distortion by dynamic programming over sorted
// contiguous partitions.
double optimal_1d(std::vector<double> xs, std::size_t k) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  std::vector<double> s(n + 1, 0), s2(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    s[i + 1] = s[i] + xs[i];
    s2[i + 1] = s2[i] + xs[i] * xs[i];
  }
  auto cost = [&](std::size_t a, std::size_t b) {  // [a, b)
    const double m = static_cast<double>(b - a);
    const double sum = s[b] - s[a];
    return (s2[b] - s2[a]) - sum * sum / m;
  };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> dp(k + 1, std::vector<double>(n + 1, inf));
  dp[0][0] = 0;
  for (std::size_t c = 1; c <= k; ++c)
    for (std::size_t b = c; b <= n; ++b)
      for (std::size_t a = c - 1; a < b; ++a)
        if (dp[c - 1][a] < inf) dp[c][b] = std::min(dp[c][b], dp[c - 1][a] + cost(a, b));
  return std::max(0.0, dp[k][n]);
}

// Exact optimal distortion by enumerating every labelling (small N only).
double optimal_exhaustive(const FeatureMatrix& x, std::size_t k) {
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<std::size_t> label(n, 0);
  double best = std::numeric_limits<double>::infinity();
  for (;;) {
    std::vector<bool> used(k, false);
    for (auto l : label) used[l] = true;
    if (std::all_of(used.begin(), used.end(), [](bool u) { return u; })) {
      double total = 0;
      for (std::size_t c = 0; c < k; ++c) {
        std::vector<double> mean(d, 0.0);
        std::size_t count = 0;
        for (std::size_t p = 0; p < n; ++p)
          if (label[p] == c) {
            ++count;
            for (std::size_t j = 0; j < d; ++j) mean[j] += x(p, j);
          }
        for (auto& m : mean) m /= static_cast<double>(count);
        for (std::size_t p = 0; p < n; ++p)
          if (label[p] == c) total += squared_distance(x.row(p), mean);
      }
      best = std::min(best, total);
    }
    std::size_t i = 0;
    while (i < n && ++label[i] == k) label[i++] = 0;
    if (i == n) break;
  }
  return best;
}

class ConstantExtractor final : public FeatureExtractor {
 public:
  explicit ConstantExtractor(std::size_t dim) : dim_(dim) {}
  std::size_t dimension() const override { return dim_; }
  std::vector<double> extract(const media::PreprocessedFrame& f) const override {
    return std::vector<double>(dim_, static_cast<double>(f.source_index));
  }

 private:
  std::size_t dim_;
};

class ThrowingExtractor final : public FeatureExtractor {
 public:
  std::size_t dimension() const override { return 4; }
  std::vector<double> extract(const media::PreprocessedFrame&) const override {
    throw ExtractorFailure("model not loaded");
  }
};

media::PreprocessedFrame preprocessed(const RgbImage& img, std::size_t index) {
  return media::preprocess_frame({index, 0.0, img});
}

}  // namespace

TEST_SUITE("keyframe-select") {
  TEST_CASE("default extractor: D = 192, deterministic") {
    std::mt19937_64 rng(1);
    const RgbImage img = untwist::testing::random_image(rng, 64, 48);
    const std::vector frames{preprocessed(img, 0), preprocessed(img, 1)};
    const auto v = embed_frames(frames, GridMeanExtractor{});
    REQUIRE(v.size() == 2);
    CHECK(v[0].values.size() == 192);
    CHECK(v[0].values == v[1].values);
    CHECK(v[1].source_index == 1);
  }

  TEST_CASE("grid cells average the normalized values") {
    RgbImage img(224, 224, {255, 255, 255});
    for (int y = 0; y < 28; ++y)
      for (int x = 0; x < 28; ++x) img.set(x, y, {0, 0, 0});
    const auto v = GridMeanExtractor{}.extract(preprocessed(img, 0));
    const media::NormalizationConstants n;
    CHECK(v[0] == doctest::Approx((0 - n.mean[0]) / n.stddev[0]));
    CHECK(v[3] == doctest::Approx((1 - n.mean[0]) / n.stddev[0]));
  }

  TEST_CASE("plugin extractors keep their dimension and input order") {
    std::vector<media::PreprocessedFrame> frames;
    for (std::size_t i = 0; i < 9; ++i) frames.push_back(preprocessed(RgbImage(8, 8), i));
    const auto v = embed_frames(frames, ConstantExtractor(2048), 4);
    REQUIRE(v.size() == 9);
    for (std::size_t i = 0; i < v.size(); ++i) {
      CHECK(v[i].values.size() == 2048);
      CHECK(v[i].values[0] == static_cast<double>(i));
    }
  }

  TEST_CASE("extractor failures surface") {
    const std::vector frames{preprocessed(RgbImage(8, 8), 0)};
    CHECK_THROWS_AS(embed_frames(frames, ThrowingExtractor{}), ExtractorFailure);
    media::PreprocessedFrame wrong;
    wrong.data.assign(10, 0.0f);
    const std::vector bad{wrong};
    CHECK_THROWS_AS(embed_frames(bad, GridMeanExtractor{}), ExtractorFailure);
  }

  TEST_CASE("kmeans: K = N fits exactly") {
    std::mt19937_64 rng(4);
    const auto x = random_matrix(rng, 12, 3);
    const auto m = kmeans(x, 12, 7);
    CHECK(m.distortion == doctest::Approx(0.0));
    std::vector<std::size_t> sorted = m.assignments;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
  }

  TEST_CASE("kmeans: K = 1 centroid is the coordinate-wise mean") {
    std::mt19937_64 rng(5);
    const auto x = random_matrix(rng, 17, 4);
    const auto m = kmeans(x, 1, 0);
    for (std::size_t j = 0; j < 4; ++j) {
      double mean = 0;
      for (std::size_t p = 0; p < 17; ++p) mean += x(p, j);
      CHECK(m.centroids(0, j) == doctest::Approx(mean / 17));
    }
  }

  TEST_CASE("kmeans: fixed seed is deterministic, assignments are nearest") {
    std::mt19937_64 rng(6);
    const auto x = random_matrix(rng, 40, 5);
    const auto a = kmeans(x, 4, 99);
    const auto b = kmeans(x, 4, 99);
    CHECK(a.assignments == b.assignments);
    CHECK(a.centroids == b.centroids);
    for (std::size_t p = 0; p < x.rows(); ++p) {
      const double mine = squared_distance(x.row(p), a.centroids.row(a.assignments[p]));
      for (std::size_t c = 0; c < a.k(); ++c) {
        const double other = squared_distance(x.row(p), a.centroids.row(c));
        CHECK(mine <= other);
        if (other == mine) CHECK(a.assignments[p] <= c);
      }
    }
  }

  TEST_CASE("kmeans rejects K outside [1, N]") {
    std::mt19937_64 rng(1);
    const auto x = random_matrix(rng, 3, 2);
    CHECK_THROWS_AS(kmeans(x, 0, 0), std::invalid_argument);
    CHECK_THROWS_AS(kmeans(x, 4, 0), std::invalid_argument);
  }

  TEST_CASE("kmeans on 1-D data reaches the DP optimum when clusters are separated") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g(0, 0.3);
    for (std::size_t k = 1; k <= 4; ++k) {
      std::vector<double> xs;
      std::vector<std::vector<double>> rows;
      for (std::size_t c = 0; c < k; ++c)
        for (int i = 0; i < 6; ++i) {
          xs.push_back(20.0 * static_cast<double>(c) + g(rng));
          rows.push_back({xs.back()});
        }
      const auto m = kmeans_best_of(FeatureMatrix::from_rows(rows), k, 3, 4);
      CHECK(m.distortion == doctest::Approx(optimal_1d(xs, k)).epsilon(1e-9));
    }
  }

  TEST_CASE("kmeans never beats the exhaustive optimum") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 20; ++trial) {
      const auto x = random_matrix(rng, 6, 2);
      for (std::size_t k = 1; k <= 3; ++k)
        CHECK(kmeans_best_of(x, k, static_cast<std::uint64_t>(trial), 4).distortion >=
              optimal_exhaustive(x, k) - 1e-9);
    }
  }

  TEST_CASE("optimal distortion is non-increasing in K") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 10; ++trial) {
      const auto x = random_matrix(rng, 7, 2);
      double prev = std::numeric_limits<double>::infinity();
      for (std::size_t k = 1; k <= 4; ++k) {
        const double j = optimal_exhaustive(x, k);
        CHECK(j <= prev + 1e-12);
        prev = j;
      }
    }
  }

  TEST_CASE("empty clusters are re-seeded") {
    // Duplicate points force k-means++ to reuse a location, leaving a
    // cluster empty after the first assignment.
    const auto x = FeatureMatrix::from_rows({{0}, {0}, {0}, {10}});
    const auto m = kmeans(x, 3, 1);
    CHECK(m.distortion == doctest::Approx(0.0));
  }

  TEST_CASE("choose_k: identical vectors give K = 1") {
    const auto x = FeatureMatrix::from_rows(std::vector<std::vector<double>>(20, {1.0, 2.0, 3.0}));
    CHECK(choose_k(x, KBounds{1, 8}).k == 1);
    CHECK(choose_k(x, 600.0).k == 1);
  }

  TEST_CASE("choose_k: two separated blobs give K = 2, matching the exact curve's knee") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> g(0, 0.05);
    std::vector<std::vector<double>> rows;
    std::vector<double> xs;
    for (int b = 0; b < 2; ++b)
      for (int i = 0; i < 10; ++i) {
        rows.push_back({10.0 * b + g(rng), g(rng)});
        xs.push_back(rows.back()[0]);
      }
    const auto x = FeatureMatrix::from_rows(rows);
    const auto choice = choose_k(x, KBounds{1, 8});
    CHECK(choice.k == 2);

    // Brute-force knee on the first coordinate, which carries almost all scatter.
    std::vector<double> curve;
    for (std::size_t k = 1; k <= 8; ++k) curve.push_back(optimal_1d(xs, k));
    std::size_t knee = 8;
    for (std::size_t k = 1; k < 8; ++k)
      if ((curve[k - 1] - curve[k]) / curve[0] < 0.05) {
        knee = k;
        break;
      }
    CHECK(knee == 2);
  }

  TEST_CASE("choose_k: K never exceeds N or the bounds") {
    std::mt19937_64 rng(2);
    const auto x = random_matrix(rng, 3, 4);
    const auto c = choose_k(x, KBounds{1, 10});
    CHECK(c.k <= 3);
    CHECK(c.k >= 1);
    const auto many = random_matrix(rng, 30, 2);
    const auto bounded = choose_k(many, KBounds{2, 5});
    CHECK(bounded.k >= 2);
    CHECK(bounded.k <= 5);
    CHECK_THROWS_AS(choose_k(many, KBounds{3, 2}), std::invalid_argument);
  }

  TEST_CASE("choose_k: uniform noise stops exactly where the relative gain drops") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 64; ++i) {
      std::vector<double> r(8);
      for (auto& v : r) v = u(rng);
      rows.push_back(r);
    }
    const auto c = choose_k(FeatureMatrix::from_rows(rows), KBounds{1, 6});
    REQUIRE(c.distortion.size() >= c.k);
    CHECK(c.distortion[0] == doctest::Approx(c.total_scatter));
    // No knee in noise: each added cluster keeps paying off until the rule stops.
    CHECK(c.k >= 2);
    const double j1 = c.distortion[0];
    for (std::size_t k = 1; k < c.k; ++k) CHECK((c.distortion[k - 1] - c.distortion[k]) / j1 >= 0.05);
    if (c.k < 6) CHECK((c.distortion[c.k - 1] - c.distortion[c.k]) / j1 < 0.05);
  }

  TEST_CASE("default bounds follow the duration") {
    CHECK(default_k_bounds(10).k_max == 4);
    CHECK(default_k_bounds(600).k_max == 20);
    CHECK(default_k_bounds(36000).k_max == 32);
    CHECK(default_k_bounds(600).k_min == 1);
  }

  TEST_CASE("representatives: 1-D {0, 1, 9, 10} with K = 2") {
    const auto x = FeatureMatrix::from_rows({{0}, {1}, {9}, {10}});
    const auto frames = frames_for(4);
    const auto model = kmeans(x, 2, 0);
    const auto reps = select_representatives(model, x, frames);
    REQUIRE(reps.size() == 2);
    CHECK(reps[0].frame.index == 0);
    CHECK(reps[1].frame.index == 2);
    CHECK(reps[0].distance_to_centroid == doctest::Approx(0.5));
  }

  TEST_CASE("representatives: singleton cluster has distance 0") {
    const auto x = FeatureMatrix::from_rows({{0}, {0.2}, {50}});
    const auto model = kmeans(x, 2, 0);
    const auto reps = select_representatives(model, x, frames_for(3));
    REQUIRE(reps.size() == 2);
    CHECK(reps[1].frame.index == 2);
    CHECK(reps[1].distance_to_centroid == 0.0);
  }

  TEST_CASE("representatives: equidistant members pick the earlier timestamp") {
    ClusterModel model;
    model.centroids = FeatureMatrix::from_rows({{5}});
    model.assignments = {0, 0, 0};
    const auto x = FeatureMatrix::from_rows({{7}, {3}, {5.5}});
    std::vector<media::FrameRecord> frames{{0, 4.0, RgbImage(1, 1)}, {1, 2.0, RgbImage(1, 1)}, {2, 6.0, RgbImage(1, 1)}};
    auto reps = select_representatives(model, x, frames);
    REQUIRE(reps.size() == 1);
    CHECK(reps[0].frame.index == 2);
    frames[2].timestamp_s = 9;
    model.centroids = FeatureMatrix::from_rows({{5}});
    const auto tie = FeatureMatrix::from_rows({{7}, {3}, {9}});
    reps = select_representatives(model, tie, frames);
    CHECK(reps[0].frame.index == 1);  // 7 and 3 tie at 2; timestamp 2.0 < 4.0
  }

  TEST_CASE("representatives come out in timestamp order") {
    std::mt19937_64 rng(30);
    const auto x = random_matrix(rng, 40, 3);
    const auto model = kmeans(x, 6, 1);
    const auto reps = select_representatives(model, x, frames_for(40));
    CHECK(reps.size() <= 6);
    CHECK(std::is_sorted(reps.begin(), reps.end(), [](const KeyFrame& a, const KeyFrame& b) {
      return a.frame.timestamp_s < b.frame.timestamp_s;
    }));
  }

  TEST_CASE("representatives reject mismatched inputs") {
    const auto x = FeatureMatrix::from_rows({{0}, {1}});
    const auto model = kmeans(x, 1, 0);
    CHECK_THROWS_AS(select_representatives(model, x, frames_for(3)), std::invalid_argument);
  }
}
