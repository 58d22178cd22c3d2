#include "engage/cluster.hpp"

#include <gtest/gtest.h>

#include "cluster_oracles.hpp"
#include "engage/random.hpp"

using namespace engage;
using engage::testing::canonical;

namespace {

using Rows = std::vector<std::vector<double>>;

Rows random_rows(Rng& rng, std::size_t n, std::size_t dim) {
  Rows rows(n, std::vector<double>(dim));
  for (auto& r : rows) {
    for (auto& x : r) x = rng.uniform();
  }
  return rows;
}

Rows two_blobs(Rng& rng, std::size_t per_blob) {
  Rows rows;
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t i = 0; i < per_blob; ++i) {
      rows.push_back({0.1 + 0.8 * static_cast<double>(b) + rng.uniform(-0.02, 0.02),
                      0.2 + 0.6 * static_cast<double>(b) + rng.uniform(-0.02, 0.02)});
    }
  }
  return rows;
}

const Rows kTwoPairs{{0.0, 0.0}, {10.0, 10.0}, {0.0, 1.0}, {10.0, 11.0}};

}  // namespace

TEST(Normalize, Examples) {
  const auto raw = PointMatrix::from_rows({{0, 3, 0}, {5, 3, 1}, {10, 3, 0.5}});
  const auto [norm, params] = range_normalize(raw);
  EXPECT_EQ(norm, PointMatrix::from_rows({{0, 0, 0}, {0.5, 0, 1}, {1, 0, 0.5}}));
  EXPECT_EQ(params.min, (std::vector<double>{0, 3, 0}));
  EXPECT_EQ(params.max, (std::vector<double>{10, 3, 1}));
  // Idempotent on columns already spanning [0, 1].
  EXPECT_EQ(range_normalize(norm).first.row(1)[2], 1.0);
  EXPECT_THROW(range_normalize(PointMatrix::from_rows({{1, 2}})), DataError);
}

TEST(Normalize, DenormalizeRoundTrip) {
  Rng rng(3);
  Rows rows = random_rows(rng, 30, 4);
  for (auto& r : rows) {
    r[1] *= 24.0;
    r[3] = r[3] * 300.0 + 2.0;
  }
  const auto raw = PointMatrix::from_rows(rows);
  const auto [norm, params] = range_normalize(raw);
  const auto back = denormalize(norm, params);
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    for (std::size_t j = 0; j < raw.cols(); ++j) EXPECT_NEAR(back(i, j), raw(i, j), 1e-9);
  }
}

TEST(Ward, TwoDistantPairs) {
  const auto dg = hierarchical_cluster(PointMatrix::from_rows(kTwoPairs));
  ASSERT_EQ(dg.merges.size(), 3u);
  EXPECT_DOUBLE_EQ(dg.merges[0].height, 1.0);
  EXPECT_DOUBLE_EQ(dg.merges[1].height, 1.0);
  EXPECT_EQ(dg.merges[2].size, 4u);
  EXPECT_EQ(cut_tree(dg, 2), (std::vector<std::size_t>{0, 1, 0, 1}));
  const auto c = cut_to_centroids(dg, 2, PointMatrix::from_rows(kTwoPairs));
  EXPECT_EQ(c, PointMatrix::from_rows({{0.0, 0.5}, {10.0, 10.5}}));
}

TEST(Ward, TwoPointsAndDuplicates) {
  const auto two = hierarchical_cluster(PointMatrix::from_rows({{0.0, 0.0}, {3.0, 4.0}}));
  ASSERT_EQ(two.merges.size(), 1u);
  EXPECT_DOUBLE_EQ(two.merges[0].height, 5.0);

  const auto dup = hierarchical_cluster(PointMatrix::from_rows({{0.2, 0.2}, {0.9, 0.1}, {0.2, 0.2}, {0.9, 0.1}}));
  EXPECT_EQ(dup.merges[0].height, 0.0);
  EXPECT_EQ(dup.merges[1].height, 0.0);
  EXPECT_GT(dup.merges[2].height, 0.0);
}

TEST(Ward, MatchesNaiveAgglomeration) {
  Rng rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = static_cast<std::size_t>(rng.uniform_int(2, 25));
    const auto rows = random_rows(rng, n, 4);
    const auto dg = hierarchical_cluster(PointMatrix::from_rows(rows));
    const auto oracle = engage::testing::naive_ward(rows);
    ASSERT_EQ(dg.merges.size(), n - 1);
    for (std::size_t t = 0; t + 1 < n; ++t) {
      EXPECT_NEAR(dg.merges[t].height, oracle.heights[t], 1e-12);
      if (t > 0) {
        EXPECT_GE(dg.merges[t].height, dg.merges[t - 1].height);
      }
      const std::size_t k = n - t - 1;
      if (k >= 2) {
        EXPECT_EQ(canonical(cut_tree(dg, k)), oracle.partitions[t]) << "n=" << n << " k=" << k;
      }
    }
  }
}

TEST(Ward, CapSubsamplesDeterministically) {
  Rng rng(5);
  const auto pts = PointMatrix::from_rows(random_rows(rng, 50, 2));
  const auto a = hierarchical_cluster(pts, {20, 7});
  const auto b = hierarchical_cluster(pts, {20, 7});
  EXPECT_EQ(a.leaves, 20u);
  EXPECT_EQ(a.sample_map, b.sample_map);
  EXPECT_TRUE(std::is_sorted(a.sample_map.begin(), a.sample_map.end()));
  EXPECT_NE(a.sample_map, hierarchical_cluster(pts, {20, 8}).sample_map);
}

TEST(CutTree, RangeAndKEqualsN) {
  const auto pts = PointMatrix::from_rows(kTwoPairs);
  const auto dg = hierarchical_cluster(pts);
  EXPECT_THROW(cut_tree(dg, 1), ConfigError);
  EXPECT_THROW(cut_tree(dg, 5), ConfigError);
  EXPECT_EQ(cut_to_centroids(dg, 4, pts), pts);
}

TEST(Wss, Examples) {
  const auto pts = PointMatrix::from_rows({{0.0}, {1.0}});
  const std::vector<std::size_t> one{0, 0}, own{0, 1};
  EXPECT_DOUBLE_EQ(wss(pts, one, PointMatrix::from_rows({{0.5}})), 0.5);
  EXPECT_DOUBLE_EQ(wss(pts, own, pts), 0.0);

  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto rows = random_rows(rng, 15, 4);
    std::vector<std::size_t> labels(15);
    for (std::size_t i = 0; i < 15; ++i) labels[i] = i % 3;
    const auto pm = PointMatrix::from_rows(rows);
    const auto c = detail::cluster_means(pm, labels, 3);
    EXPECT_NEAR(wss(pm, labels, c), engage::testing::naive_wss(rows, labels, 3), 1e-12);
  }
}

TEST(KMeans, FixedPointConvergesImmediately) {
  Rng rng(1);
  const auto rows = two_blobs(rng, 20);
  const auto pts = PointMatrix::from_rows(rows);
  std::vector<std::size_t> truth(40);
  for (std::size_t i = 20; i < 40; ++i) truth[i] = 1;
  const auto res = kmeans(pts, detail::cluster_means(pts, truth, 2));
  EXPECT_EQ(res.iterations, 1u);
  EXPECT_EQ(res.stop_reason, "stable_assignments");
  EXPECT_EQ(res.assignments, truth);
}

TEST(KMeans, FourPointsReachExhaustiveOptimum) {
  const auto pts = PointMatrix::from_rows(kTwoPairs);
  const auto dg = hierarchical_cluster(pts);
  const auto res = seeded_kmeans(pts, dg, 2, {});
  EXPECT_NEAR(res.wss, engage::testing::exhaustive_min_wss(kTwoPairs, 2), 1e-12);
  EXPECT_DOUBLE_EQ(res.wss, 1.0);
}

TEST(KMeans, KEqualsNHasZeroWss) {
  Rng rng(2);
  const auto pts = PointMatrix::from_rows(random_rows(rng, 7, 3));
  const auto res = seeded_kmeans(pts, hierarchical_cluster(pts), 7, {});
  EXPECT_EQ(res.wss, 0.0);
}

TEST(KMeans, HistoryIsNonIncreasing) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto pts = PointMatrix::from_rows(random_rows(rng, 60, 4));
    PointMatrix init(4, 4);
    for (std::size_t c = 0; c < 4; ++c) {
      for (std::size_t j = 0; j < 4; ++j) init(c, j) = pts(c, j);
    }
    const auto res = kmeans(pts, init);
    for (std::size_t i = 1; i < res.wss_history.size(); ++i) {
      EXPECT_LE(res.wss_history[i], res.wss_history[i - 1] * (1 + 1e-12));
    }
    EXPECT_LE(res.wss, res.wss_history.back() * (1 + 1e-12));
  }
}

TEST(KMeans, RepairsEmptyCluster) {
  // The third centroid is far from every point and starts empty.
  const auto pts = PointMatrix::from_rows({{0.0, 0.0}, {0.1, 0.0}, {1.0, 1.0}, {1.1, 1.0}, {5.0, 5.0}});
  const auto init = PointMatrix::from_rows({{0.05, 0.0}, {3.0, 3.0}, {100.0, 100.0}});
  const auto res = kmeans(pts, init);
  std::vector<std::size_t> counts(3, 0);
  for (auto a : res.assignments) ++counts[a];
  for (auto c : counts) EXPECT_GT(c, 0u);
  EXPECT_NEAR(res.wss, engage::testing::exhaustive_min_wss(
                           {{0.0, 0.0}, {0.1, 0.0}, {1.0, 1.0}, {1.1, 1.0}, {5.0, 5.0}}, 3),
              1e-12);
}

TEST(KMeans, HartiganPassesLowerWssAndKeepNearestCentroid) {
  Rng rng(31);
  std::size_t improved = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto rows = random_rows(rng, 10, 4);
    const auto pts = PointMatrix::from_rows(rows);
    const auto init = cut_to_centroids(hierarchical_cluster(pts), 3, pts);
    KMeansOptions lloyd;
    lloyd.hartigan = false;
    const auto plain = kmeans(pts, init, lloyd);
    const auto refined = kmeans(pts, init);
    EXPECT_LE(refined.wss, plain.wss * (1 + 1e-12));
    improved += refined.transfers > 0;
    EXPECT_NEAR(refined.wss, engage::testing::naive_wss(rows, refined.assignments, 3), 1e-12);
    std::vector<std::size_t> nearest;
    detail::assign_nearest(pts, refined.centroids, nearest, 1);
    EXPECT_EQ(nearest, refined.assignments);
  }
  EXPECT_GT(improved, 0u);
}

TEST(KMeans, RestartsNeverWorseAndSeeded) {
  Rng rng(32);
  for (int trial = 0; trial < 50; ++trial) {
    const auto rows = random_rows(rng, 9, 4);
    const auto pts = PointMatrix::from_rows(rows);
    const auto dg = hierarchical_cluster(pts);
    ClusteringOptions none;
    none.restarts = 0;
    ClusteringOptions some;
    some.seed = static_cast<std::uint64_t>(trial);
    const auto base = seeded_kmeans(pts, dg, 3, none);
    const auto best = seeded_kmeans(pts, dg, 3, some);
    EXPECT_EQ(base.start, "hierarchical");
    EXPECT_LE(best.wss, base.wss);
    EXPECT_GE(best.wss, engage::testing::exhaustive_min_wss(rows, 3) * (1 - 1e-12));
    EXPECT_EQ(best.assignments, seeded_kmeans(pts, dg, 3, some).assignments);
  }
  // Fewer distinct points than k cannot seed k distinct centres.
  const auto dup = PointMatrix::from_rows({{0.0}, {0.0}, {1.0}, {1.0}});
  EXPECT_THROW(seeded_kmeans(dup, hierarchical_cluster(dup), 3, {}), DataError);
  Rng r(1);
  EXPECT_FALSE(kmeanspp_centroids(dup, 3, r));
}

TEST(KMeans, RejectsBadInput) {
  auto pts = PointMatrix::from_rows({{0.0}, {1.0}, {2.0}});
  EXPECT_THROW(kmeans(pts, PointMatrix::from_rows({{0.5}, {0.5}})), DataError);
  pts(1, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(kmeans(pts, PointMatrix::from_rows({{0.0}, {2.0}})), DataError);
}

TEST(KMeans, TieGoesToLowestIndex) {
  const auto pts = PointMatrix::from_rows({{0.0}, {1.0}, {2.0}});
  std::vector<std::size_t> out;
  detail::assign_nearest(pts, PointMatrix::from_rows({{0.5}, {1.5}}), out, 1);
  EXPECT_EQ(out, (std::vector<std::size_t>{0, 0, 1}));
}

TEST(Silhouette, SeparatedBlobsAreStrong) {
  Rng rng(4);
  const auto rows = two_blobs(rng, 25);
  std::vector<std::size_t> labels(50);
  for (std::size_t i = 25; i < 50; ++i) labels[i] = 1;
  const auto s = avg_silhouette(PointMatrix::from_rows(rows), labels, 2);
  EXPECT_GT(s.value, 0.9);
  EXPECT_EQ(s.interpretation, Interpretation::kStrong);
}

TEST(Silhouette, ZeroCaseAndSingletons) {
  // Point 1 sits at mean distance 1 from both clusters.
  const auto pts = PointMatrix::from_rows({{0.0}, {1.0}, {2.0}});
  const auto s = avg_silhouette(pts, std::vector<std::size_t>{0, 0, 1}, 2);
  EXPECT_DOUBLE_EQ(s.per_point[1], 0.0);
  EXPECT_DOUBLE_EQ(s.per_point[2], 0.0);  // singleton
  EXPECT_THROW(avg_silhouette(pts, std::vector<std::size_t>{0, 0, 0}, 1), ConfigError);
}

TEST(Silhouette, MatchesNaiveOracleAndBounds) {
  Rng rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    const auto rows = random_rows(rng, 30, 3);
    std::vector<std::size_t> labels(30);
    for (auto& l : labels) l = static_cast<std::size_t>(rng.uniform_int(0, 3));
    for (std::size_t c = 0; c < 4; ++c) labels[c] = c;
    const auto s = avg_silhouette(PointMatrix::from_rows(rows), labels, 4, 3);
    const auto oracle = engage::testing::naive_silhouette(rows, labels, 4);
    for (std::size_t i = 0; i < 30; ++i) {
      EXPECT_NEAR(s.per_point[i], oracle[i], 1e-12);
      EXPECT_GE(s.per_point[i], -1.0);
      EXPECT_LE(s.per_point[i], 1.0);
    }
  }
}

TEST(Silhouette, InterpretationBands) {
  EXPECT_EQ(interpret_silhouette(0.53), Interpretation::kReasonable);
  EXPECT_EQ(interpret_silhouette(1.0), Interpretation::kStrong);
  EXPECT_EQ(interpret_silhouette(-0.3), Interpretation::kNone);
  EXPECT_STREQ(to_string(Interpretation::kWeak), "weak");
}

TEST(ScanK, TwoBlobsSuggestTwo) {
  Rng rng(10);
  const auto [norm, params] = range_normalize(PointMatrix::from_rows(two_blobs(rng, 30)));
  const auto report = scan_k(norm, 2, 6);
  ASSERT_EQ(report.entries.size(), 5u);
  EXPECT_EQ(report.suggested_k, 2u);
  EXPECT_EQ(report.interpretation, Interpretation::kStrong);
  for (std::size_t i = 1; i < report.entries.size(); ++i) {
    EXPECT_LE(report.entries[i].wss, report.entries[i - 1].wss + 1e-12);
  }
}

TEST(ScanK, FeaturelessCloudDoesNotCrash) {
  Rng rng(11);
  const auto [norm, params] = range_normalize(PointMatrix::from_rows(random_rows(rng, 200, 4)));
  const auto report = scan_k(norm, 2, 10);
  for (const auto& e : report.entries) {
    EXPECT_TRUE(e.interpretation == Interpretation::kWeak || e.interpretation == Interpretation::kNone);
  }
}

TEST(ScanK, RangeValidation) {
  Rng rng(1);
  const auto pts = PointMatrix::from_rows(random_rows(rng, 6, 2));
  EXPECT_THROW(scan_k(pts, 1, 3), ConfigError);
  EXPECT_THROW(scan_k(pts, 4, 3), ConfigError);
  EXPECT_THROW(scan_k(pts, 2, 6), ConfigError);
  EXPECT_EQ(scan_k(pts, 2, 2).entries.size(), 1u);
}

TEST(Elbow, KneeOfConvexCurve) {
  std::vector<KScanEntry> entries;
  const double w[] = {100, 40, 20, 17, 15, 14};
  for (std::size_t i = 0; i < 6; ++i) entries.push_back({i + 2, w[i], 0.0, Interpretation::kNone, 0});
  // Normalised distances |x + y - 1| / sqrt(2): k=3 0.352, k=4 0.375, k=5 0.258.
  EXPECT_EQ(wss_elbow(entries), 4u);
}

TEST(ClusterVolunteers, PermutingRowsPermutesPartition) {
  Rng rng(13);
  Rows rows;
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t i = 0; i < 15; ++i) {
      rows.push_back({0.3 * static_cast<double>(b) + rng.uniform(0, 0.1), rng.uniform(0, 1) * 0.1,
                      1.0 - 0.4 * static_cast<double>(b) + rng.uniform(0, 0.1), rng.uniform(0, 1)});
    }
  }
  std::vector<std::size_t> perm(rows.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng.shuffle(perm);
  Rows permuted;
  for (auto p : perm) permuted.push_back(rows[p]);
  const auto a = cluster_volunteers(PointMatrix::from_rows(rows), 3);
  const auto b = cluster_volunteers(PointMatrix::from_rows(permuted), 3);
  std::vector<std::size_t> a_permuted;
  for (auto p : perm) a_permuted.push_back(a.assignments[p]);
  EXPECT_EQ(canonical(a_permuted), canonical(b.assignments));
  EXPECT_NEAR(a.wss, b.wss, 1e-12);
  EXPECT_THROW(cluster_volunteers(PointMatrix::from_rows(rows), 46), ConfigError);
  EXPECT_THROW(cluster_volunteers(PointMatrix::from_rows(rows), 1), ConfigError);
}

TEST(AdjustedRand, ReferenceValues) {
  const std::vector<std::size_t> a{0, 0, 0, 1, 1, 1}, b{0, 0, 1, 1, 2, 2};
  EXPECT_NEAR(adjusted_rand_index(a, b), 0.24242424242424243, 1e-15);
  const std::vector<std::size_t> c{0, 0, 1, 1, 2, 2, 2, 3}, d{1, 1, 0, 0, 2, 2, 3, 3};
  EXPECT_NEAR(adjusted_rand_index(c, d), 0.6037735849056604, 1e-15);
  const std::vector<std::size_t> e{4, 4, 9, 9, 7};
  const std::vector<std::size_t> f{0, 0, 1, 1, 2};
  EXPECT_DOUBLE_EQ(adjusted_rand_index(e, f), 1.0);
}
