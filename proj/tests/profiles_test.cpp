#include "engage/profiles.hpp"

#include <gtest/gtest.h>

#include <numeric>

#include "engage/random.hpp"

using namespace engage;

namespace {

// Centroids (a, d, r, v) in normalised space shaped like the five profiles.
const PointMatrix kFive = PointMatrix::from_rows({
    {0.35, 0.30, 0.30, 0.30},  // moderate
    {0.10, 0.20, 0.95, 0.20},  // persistent
    {0.90, 0.50, 0.05, 0.05},  // hardworking
    {0.12, 0.20, 0.50, 0.70},  // lasting
    {0.55, 0.30, 0.15, 0.40},  // spasmodic
});

std::vector<std::string> names(const std::vector<LabeledCluster>& labels) {
  std::vector<std::string> out;
  for (const auto& l : labels) out.push_back(l.label.name());
  return out;
}

// Average ranks by counting, independent of the library's sort-based ranks.
std::vector<double> count_ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double less = 0, equal = 0;
    for (double y : x) {
      less += y < x[i];
      equal += y == x[i];
    }
    r[i] = less + (equal + 1.0) / 2.0;
  }
  return r;
}

double brute_spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const auto rx = count_ranks(x), ry = count_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST(Labels, FiveProfileCentroids) {
  const auto labels = label_profiles(kFive);
  EXPECT_EQ(names(labels),
            (std::vector<std::string>{"moderate", "persistent", "hardworking", "lasting", "spasmodic"}));
  for (const auto& l : labels) EXPECT_FALSE(l.rule.empty());
  EXPECT_NE(labels[1].rule.find("relative activity duration"), std::string::npos);
}

TEST(Labels, BijectionOnRandomCentroids) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    PointMatrix c(5, 4);
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t j = 0; j < 4; ++j) c(i, j) = rng.uniform();
    }
    auto n = names(label_profiles(c));
    std::sort(n.begin(), n.end());
    EXPECT_EQ(n, (std::vector<std::string>{"hardworking", "lasting", "moderate", "persistent", "spasmodic"}));
  }
}

TEST(Labels, InvariantUnderAffineRescaling) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    PointMatrix c(5, 4), scaled(5, 4);
    for (std::size_t j = 0; j < 4; ++j) {
      const double s = rng.uniform(0.1, 50.0), t = rng.uniform(-3.0, 3.0);
      for (std::size_t i = 0; i < 5; ++i) {
        c(i, j) = rng.uniform();
        scaled(i, j) = s * c(i, j) + t;
      }
    }
    // Normalising the rescaled centroids recovers the original column layout.
    const auto c_norm = range_normalize(c).first;
    const auto s_norm = range_normalize(scaled).first;
    EXPECT_EQ(names(label_profiles(c_norm)), names(label_profiles(s_norm)));
  }
}

TEST(Labels, GenericWhenKIsNotFive) {
  const auto labels = label_profiles(PointMatrix::from_rows({{0.1, 0, 0, 0}, {0.5, 0, 0, 0}, {0.9, 0, 0, 0}}));
  EXPECT_EQ(names(labels), (std::vector<std::string>{"cluster-0", "cluster-1", "cluster-2"}));
  EXPECT_NE(labels[0].rule.find("a="), std::string::npos);
}

TEST(Labels, TieOnRGoesToLowerIndexAndIsRecorded) {
  auto c = kFive;
  c(3, 2) = 0.95;  // lasting now ties persistent on r
  const auto labels = label_profiles(c);
  EXPECT_EQ(labels[1].label.kind, ProfileKind::kPersistent);
  EXPECT_NE(labels[1].rule.find("tie"), std::string::npos);
}

TEST(Spearman, PerfectMonotone) {
  const std::vector<double> x{1, 2, 3, 4, 5, 6}, up{2, 4, 8, 16, 32, 64}, down{9, 7, 5, 3, 1, -1};
  EXPECT_DOUBLE_EQ(*spearman(x, up).rho, 1.0);
  EXPECT_DOUBLE_EQ(*spearman(x, up).p_value, 0.0);
  EXPECT_DOUBLE_EQ(*spearman(x, down).rho, -1.0);
  EXPECT_EQ(spearman(x, down).strength, CorrelationStrength::kVeryStrong);
}

TEST(Spearman, TiesMatchCountingOracle) {
  const std::vector<double> x{1, 2, 3, 4, 5}, y{1, 1, 3, 2, 5};
  const auto e = spearman(x, y);
  EXPECT_NEAR(*e.rho, brute_spearman(x, y), 1e-12);
  EXPECT_NEAR(*e.rho, 0.8720815992723809, 1e-12);
  EXPECT_NEAR(*e.p_value, 0.05385421772754211, 1e-10);
  EXPECT_FALSE(e.significant);
}

TEST(Spearman, ReferenceValues) {
  const std::vector<double> a{3, 1, 4, 1, 5, 9, 2, 6, 5, 3}, b{2, 7, 1, 8, 2, 8, 1, 8, 2, 8};
  EXPECT_NEAR(*spearman(a, b).rho, 0.13471506281091267, 1e-12);
  EXPECT_NEAR(*spearman(a, b).p_value, 0.7106008805223829, 1e-10);

  std::vector<double> v1{17, 86, 60, 77, 47, 3, 70, 87, 88, 92}, v2{70, 29, 85, 61, 80, 34, 60, 31, 73, 66};
  EXPECT_NEAR(*spearman(v1, v2).rho, -0.16363636363636364, 1e-12);
  EXPECT_NEAR(*spearman(v1, v2).p_value, 0.6514773427962428, 1e-10);
  v1[7] = 47;
  EXPECT_NEAR(*spearman(v1, v2).rho, 0.024316221747202587, 1e-12);
  EXPECT_NEAR(*spearman(v1, v2).p_value, 0.9468397049085097, 1e-10);
}

TEST(Spearman, SymmetricAndSelfCorrelated) {
  Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> x(20), y(20);
    for (auto& v : x) v = std::floor(rng.uniform(0, 8));
    for (auto& v : y) v = std::floor(rng.uniform(0, 8));
    const auto xy = spearman(x, y), yx = spearman(y, x);
    if (!xy.rho) continue;
    EXPECT_EQ(*xy.rho, *yx.rho);
    EXPECT_NEAR(*xy.rho, brute_spearman(x, y), 1e-12);
    EXPECT_GE(*xy.rho, -1.0);
    EXPECT_LE(*xy.rho, 1.0);
    EXPECT_DOUBLE_EQ(*spearman(x, x).rho, 1.0);
  }
}

TEST(Spearman, SmallAndDegenerateSamples) {
  const std::vector<double> x{1, 2, 3, 4}, y{2, 1, 4, 3};
  const auto small = spearman(x, y);
  EXPECT_TRUE(small.rho);
  EXPECT_FALSE(small.p_value);
  EXPECT_FALSE(small.significant);

  const std::vector<double> c{2, 2, 2, 2, 2, 2}, z{1, 2, 3, 4, 5, 6};
  EXPECT_FALSE(spearman(c, z).rho);
  EXPECT_FALSE(spearman(z, c).p_value);
  EXPECT_THROW(spearman(c, x), DataError);
}

TEST(Spearman, ExactPermutationP) {
  const std::vector<double> x{1, 2, 3, 4, 5}, y{2, 3, 5, 7, 11};
  SpearmanOptions opts;
  opts.exact_permutation = true;
  const auto e = spearman(x, y, opts);
  EXPECT_TRUE(e.exact_p);
  EXPECT_NEAR(*e.p_value, 2.0 / 120.0, 1e-15);
  EXPECT_TRUE(e.significant);
  // Large samples keep the t approximation.
  std::vector<double> big(12);
  std::iota(big.begin(), big.end(), 0.0);
  EXPECT_FALSE(spearman(big, big, opts).exact_p);
}

TEST(Spearman, StrengthBands) {
  EXPECT_EQ(correlation_strength(0.19), CorrelationStrength::kVeryWeak);
  EXPECT_EQ(correlation_strength(-0.2), CorrelationStrength::kWeak);
  EXPECT_EQ(correlation_strength(0.59), CorrelationStrength::kModerate);
  EXPECT_EQ(correlation_strength(-0.6), CorrelationStrength::kStrong);
  EXPECT_EQ(correlation_strength(0.8), CorrelationStrength::kVeryStrong);
}

TEST(Correlations, IdenticalVectorsAreUndefined) {
  const auto raw = PointMatrix::from_rows(std::vector<std::vector<double>>(8, {0.5, 2.0, 0.3, 1.0}));
  const std::vector<std::size_t> assign(8, 0);
  for (const auto& e : cluster_correlations(raw, assign, 0)) {
    EXPECT_FALSE(e.rho);
    EXPECT_FALSE(e.p_value);
  }
}

TEST(Correlations, RawEqualsNormalizedAndPairOrder) {
  Rng rng(9);
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> assign;
  for (int i = 0; i < 60; ++i) {
    rows.push_back({rng.uniform(), rng.uniform(0, 24), rng.uniform(), rng.uniform(0, 40)});
    assign.push_back(static_cast<std::size_t>(i % 2));
  }
  const auto raw = PointMatrix::from_rows(rows);
  const auto norm = range_normalize(raw).first;
  for (std::size_t c = 0; c < 2; ++c) {
    const auto r = cluster_correlations(raw, assign, c);
    const auto n = cluster_correlations(norm, assign, c);
    for (std::size_t p = 0; p < 6; ++p) {
      EXPECT_NEAR(*r[p].rho, *n[p].rho, 1e-12);
      EXPECT_EQ(r[p].n, 30u);
    }
    EXPECT_EQ(r[0].pair, "a,r");
    EXPECT_EQ(r[1].pair, "a,v");
    EXPECT_EQ(r[5].pair, "v,d");
  }
}

TEST(Importance, Shares) {
  const std::vector<LabeledCluster> one{{0, {}, ""}};
  const std::vector<std::size_t> all_zero{0, 0, 0};
  const std::vector<double> hours{1, 2, 3};
  const auto single = importance_table(all_zero, one, hours);
  ASSERT_EQ(single.size(), 1u);
  EXPECT_DOUBLE_EQ(single[0].volunteer_share, 100.0);
  EXPECT_DOUBLE_EQ(single[0].devoted_share, 100.0);
  EXPECT_DOUBLE_EQ(single[0].devoted_hours, 6.0);

  std::vector<LabeledCluster> two{{0, {ProfileKind::kGeneric, 0}, ""}, {1, {ProfileKind::kGeneric, 1}, ""}};
  const std::vector<std::size_t> assign{0, 1, 1};
  const std::vector<double> h{30, 20, 50};
  const auto rows = importance_table(assign, two, h);
  EXPECT_DOUBLE_EQ(rows[0].devoted_share, 30.0);
  EXPECT_DOUBLE_EQ(rows[1].devoted_share, 70.0);
  EXPECT_NEAR(rows[0].volunteer_share + rows[1].volunteer_share, 100.0, 1e-9);
}

TEST(Importance, SharesSumToHundred) {
  Rng rng(10);
  std::vector<LabeledCluster> labels;
  for (std::size_t c = 0; c < 5; ++c) labels.push_back({c, {ProfileKind::kGeneric, c}, ""});
  std::vector<std::size_t> assign;
  std::vector<double> hours;
  for (int i = 0; i < 997; ++i) {
    assign.push_back(static_cast<std::size_t>(rng.uniform_int(0, 4)));
    hours.push_back(rng.uniform(0.01, 500.0));
  }
  double vs = 0, ds = 0;
  for (const auto& r : importance_table(assign, labels, hours)) {
    vs += r.volunteer_share;
    ds += r.devoted_share;
  }
  EXPECT_NEAR(vs, 100.0, 0.01);
  EXPECT_NEAR(ds, 100.0, 0.01);
}
