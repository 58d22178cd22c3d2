#pragma once

// Range normalisation, Ward hierarchical clustering, hierarchical-seeded
// k-means and partition quality scores.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "engage/error.hpp"
#include "engage/parallel.hpp"
#include "engage/random.hpp"
#include "json.hpp"

namespace engage {

/// Dense row-major matrix of points.
class PointMatrix {
 public:
  PointMatrix() = default;
  PointMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static PointMatrix from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return {};
    PointMatrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != m.cols_) throw DataError("ragged point matrix");
      std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
    }
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  friend bool operator==(const PointMatrix&, const PointMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double squared_distance(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double d = x[j] - y[j];
    s += d * d;
  }
  return s;
}

inline double distance(std::span<const double> x, std::span<const double> y) {
  return std::sqrt(squared_distance(x, y));
}

struct NormalizationParams {
  std::vector<double> min;
  std::vector<double> max;
};

/// Maps every column onto [0, 1] with (x - min) / (max - min). Constant columns map to 0.
inline std::pair<PointMatrix, NormalizationParams> range_normalize(const PointMatrix& raw) {
  if (raw.rows() < 2) throw DataError("range normalisation needs at least two rows");
  NormalizationParams p{std::vector<double>(raw.cols(), std::numeric_limits<double>::infinity()),
                        std::vector<double>(raw.cols(), -std::numeric_limits<double>::infinity())};
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    for (std::size_t j = 0; j < raw.cols(); ++j) {
      p.min[j] = std::min(p.min[j], raw(i, j));
      p.max[j] = std::max(p.max[j], raw(i, j));
    }
  }
  PointMatrix out(raw.rows(), raw.cols());
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    for (std::size_t j = 0; j < raw.cols(); ++j) {
      const double range = p.max[j] - p.min[j];
      out(i, j) = range > 0.0 ? (raw(i, j) - p.min[j]) / range : 0.0;
    }
  }
  return {std::move(out), std::move(p)};
}

inline PointMatrix denormalize(const PointMatrix& normalized, const NormalizationParams& p) {
  PointMatrix out(normalized.rows(), normalized.cols());
  for (std::size_t i = 0; i < normalized.rows(); ++i) {
    for (std::size_t j = 0; j < normalized.cols(); ++j) {
      out(i, j) = p.min[j] + normalized(i, j) * (p.max[j] - p.min[j]);
    }
  }
  return out;
}

struct Merge {
  std::size_t left = 0;   // node ids: leaves 0..n-1, merge t creates node n + t
  std::size_t right = 0;
  double height = 0.0;
  std::size_t size = 0;
};

struct Dendrogram {
  std::size_t leaves = 0;
  std::vector<Merge> merges;            // n - 1 merges, heights non-decreasing
  std::vector<std::size_t> sample_map;  // leaf -> row of the clustered matrix
};

namespace detail {

class CondensedMatrix {
 public:
  explicit CondensedMatrix(std::size_t n) : n_(n), d_(n * (n - 1) / 2) {}
  double& at(std::size_t i, std::size_t j) {
    if (i > j) std::swap(i, j);
    return d_[i * (2 * n_ - i - 1) / 2 + (j - i - 1)];
  }

 private:
  std::size_t n_;
  std::vector<double> d_;
};

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) { parent_[find(a)] = find(b); }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace detail

/// Ward linkage on Euclidean distances using the nearest-neighbour-chain
/// algorithm over a condensed matrix of squared distances, updated with the
/// Lance-Williams recurrence
///   d(k, i+j) = ((n_i + n_k) d(k,i) + (n_j + n_k) d(k,j) - n_k d(i,j)) / (n_i + n_j + n_k).
/// Merge heights are sqrt of the updated value, so two singletons merge at
/// their Euclidean distance.
inline std::vector<Merge> ward_linkage(const PointMatrix& points) {
  const std::size_t n = points.rows();
  if (n < 2) throw DataError("hierarchical clustering needs at least two points");
  detail::CondensedMatrix d(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) d.at(i, j) = squared_distance(points.row(i), points.row(j));
  }
  std::vector<std::size_t> active(n);
  std::iota(active.begin(), active.end(), std::size_t{0});
  std::vector<double> size(n, 1.0);

  struct RawMerge {
    std::size_t a, b;
    double dist;
  };
  std::vector<RawMerge> raw;
  raw.reserve(n - 1);
  std::vector<std::size_t> chain;
  chain.reserve(n);

  while (raw.size() < n - 1) {
    if (chain.empty()) chain.push_back(active.front());
    for (;;) {
      const std::size_t a = chain.back();
      const bool has_prev = chain.size() >= 2;
      std::size_t best = has_prev ? chain[chain.size() - 2] : a;
      double best_d = has_prev ? d.at(a, best) : std::numeric_limits<double>::infinity();
      for (std::size_t c : active) {
        if (c == a) continue;
        const double dc = d.at(a, c);
        if (dc < best_d) {
          best_d = dc;
          best = c;
        }
      }
      if (has_prev && best == chain[chain.size() - 2]) {
        chain.pop_back();
        chain.pop_back();
        const std::size_t keep = std::max(a, best), gone = std::min(a, best);
        const double na = size[a], nb = size[best];
        for (std::size_t k : active) {
          if (k == a || k == best) continue;
          const double nk = size[k];
          d.at(k, keep) = ((na + nk) * d.at(k, a) + (nb + nk) * d.at(k, best) - nk * best_d) / (na + nb + nk);
        }
        size[keep] = na + nb;
        active.erase(std::find(active.begin(), active.end(), gone));
        raw.push_back({a, best, best_d});
        break;
      }
      chain.push_back(best);
    }
  }

  std::vector<std::size_t> order(raw.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t l, std::size_t r) { return raw[l].dist < raw[r].dist; });

  // Relabel in height order: leaves keep their index, merge t becomes node n + t.
  detail::DisjointSets sets(n);
  std::vector<std::size_t> node_of(n);
  std::iota(node_of.begin(), node_of.end(), std::size_t{0});
  std::vector<std::size_t> node_size(2 * n - 1, 1);
  std::vector<Merge> merges;
  merges.reserve(n - 1);
  for (std::size_t t = 0; t < order.size(); ++t) {
    const auto& m = raw[order[t]];
    const std::size_t ra = sets.find(m.a), rb = sets.find(m.b);
    const std::size_t na = node_of[ra], nb = node_of[rb];
    const std::size_t id = n + t;
    node_size[id] = node_size[na] + node_size[nb];
    merges.push_back({std::min(na, nb), std::max(na, nb), std::sqrt(std::max(m.dist, 0.0)), node_size[id]});
    sets.unite(ra, rb);
    node_of[sets.find(ra)] = id;
  }
  return merges;
}

struct HierarchicalOptions {
  std::size_t cap = 10000;
  std::uint64_t seed = 0;
};

/// Ward dendrogram of the rows, or of a seeded uniform subsample of `cap` rows
/// when there are more (sample_map then lists the chosen rows in ascending order).
inline Dendrogram hierarchical_cluster(const PointMatrix& points, const HierarchicalOptions& opts = {}) {
  const std::size_t n = points.rows();
  if (n < 2) throw DataError("hierarchical clustering needs at least two points");
  if (opts.cap < 2) throw ConfigError("hierarchical cap must be at least 2");
  Dendrogram dg;
  dg.sample_map.resize(n);
  std::iota(dg.sample_map.begin(), dg.sample_map.end(), std::size_t{0});
  if (n > opts.cap) {
    Rng rng(opts.seed);
    rng.shuffle(dg.sample_map);
    dg.sample_map.resize(opts.cap);
    std::sort(dg.sample_map.begin(), dg.sample_map.end());
    PointMatrix sample(opts.cap, points.cols());
    for (std::size_t i = 0; i < opts.cap; ++i) {
      std::copy(points.row(dg.sample_map[i]).begin(), points.row(dg.sample_map[i]).end(), sample.row(i).begin());
    }
    dg.merges = ward_linkage(sample);
  } else {
    dg.merges = ward_linkage(points);
  }
  dg.leaves = dg.sample_map.size();
  return dg;
}

/// Group label per leaf after undoing the last k - 1 merges. Groups are
/// numbered by their smallest leaf.
inline std::vector<std::size_t> cut_tree(const Dendrogram& dg, std::size_t k) {
  if (k < 2 || k > dg.leaves) {
    throw ConfigError("cut size k=" + std::to_string(k) + " outside [2, " + std::to_string(dg.leaves) + "]");
  }
  const std::size_t n = dg.leaves;
  detail::DisjointSets sets(2 * n - 1);
  for (std::size_t t = 0; t + k < n; ++t) {
    sets.unite(dg.merges[t].left, n + t);
    sets.unite(dg.merges[t].right, n + t);
  }
  std::map<std::size_t, std::size_t> label_of_root;
  std::vector<std::size_t> labels(n);
  for (std::size_t leaf = 0; leaf < n; ++leaf) {
    const auto [it, inserted] = label_of_root.try_emplace(sets.find(leaf), label_of_root.size());
    labels[leaf] = it->second;
  }
  return labels;
}

/// Mean of each dendrogram group's member rows, for k groups.
inline PointMatrix cut_to_centroids(const Dendrogram& dg, std::size_t k, const PointMatrix& points) {
  const auto labels = cut_tree(dg, k);
  PointMatrix centroids(k, points.cols());
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t leaf = 0; leaf < dg.leaves; ++leaf) {
    const auto row = points.row(dg.sample_map[leaf]);
    auto c = centroids.row(labels[leaf]);
    for (std::size_t j = 0; j < row.size(); ++j) c[j] += row[j];
    ++counts[labels[leaf]];
  }
  for (std::size_t g = 0; g < k; ++g) {
    for (auto& x : centroids.row(g)) x /= static_cast<double>(counts[g]);
  }
  return centroids;
}

/// Sum over points of the squared distance to the assigned centroid.
inline double wss(const PointMatrix& points, std::span<const std::size_t> assignments, const PointMatrix& centroids) {
  double total = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    total += squared_distance(points.row(i), centroids.row(assignments[i]));
  }
  return total;
}

enum class Interpretation { kStrong, kReasonable, kWeak, kNone };

inline const char* to_string(Interpretation i) {
  switch (i) {
    case Interpretation::kStrong: return "strong";
    case Interpretation::kReasonable: return "reasonable";
    case Interpretation::kWeak: return "weak";
    case Interpretation::kNone: return "none";
  }
  return "?";
}

/// Struyf et al. bands for average silhouette width.
inline Interpretation interpret_silhouette(double value) {
  if (value >= 0.71) return Interpretation::kStrong;
  if (value >= 0.51) return Interpretation::kReasonable;
  if (value >= 0.26) return Interpretation::kWeak;
  return Interpretation::kNone;
}

struct SilhouetteResult {
  double value = 0.0;
  Interpretation interpretation = Interpretation::kNone;
  std::vector<double> per_point;
};

/// Average silhouette width with Euclidean distance. Points in singleton
/// clusters score 0.
inline SilhouetteResult avg_silhouette(const PointMatrix& points, std::span<const std::size_t> assignments,
                                       std::size_t k, unsigned threads = 1) {
  if (k < 2) throw ConfigError("silhouette is undefined for fewer than two clusters");
  const std::size_t n = points.rows();
  std::vector<std::size_t> counts(k, 0);
  for (auto a : assignments) {
    if (a >= k) throw DataError("assignment out of range");
    ++counts[a];
  }
  for (auto c : counts) {
    if (c == 0) throw DataError("silhouette requires every cluster to be non-empty");
  }
  SilhouetteResult res;
  res.per_point.assign(n, 0.0);
  parallel_for(n, threads, [&](std::size_t i) {
    const std::size_t own = assignments[i];
    if (counts[own] < 2) return;
    std::vector<double> sums(k, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) sums[assignments[j]] += distance(points.row(i), points.row(j));
    }
    const double a = sums[own] / static_cast<double>(counts[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      if (c != own) b = std::min(b, sums[c] / static_cast<double>(counts[c]));
    }
    const double denom = std::max(a, b);
    res.per_point[i] = denom > 0.0 ? (b - a) / denom : 0.0;
  });
  double total = 0.0;
  for (double s : res.per_point) total += s;
  res.value = total / static_cast<double>(n);
  res.interpretation = interpret_silhouette(res.value);
  return res;
}

struct KMeansOptions {
  double tol = 1e-9;  // on the largest squared centroid movement
  std::size_t max_iter = 100;
  unsigned threads = 1;
  bool hartigan = true;  // single-point transfer passes after Lloyd converges
};

struct KMeansResult {
  std::vector<std::size_t> assignments;
  PointMatrix centroids;
  double wss = 0.0;
  std::vector<double> wss_history;  // after the initial assignment and after every iteration
  std::size_t iterations = 0;
  std::string stop_reason;
  std::size_t transfers = 0;  // points moved by the Hartigan passes
  std::string start = "hierarchical";
};

namespace detail {

inline void assign_nearest(const PointMatrix& points, const PointMatrix& centroids, std::vector<std::size_t>& out,
                           unsigned threads) {
  out.resize(points.rows());
  parallel_for(points.rows(), threads, [&](std::size_t i) {
    std::size_t best = 0;
    double best_d = squared_distance(points.row(i), centroids.row(0));
    for (std::size_t c = 1; c < centroids.rows(); ++c) {
      const double dc = squared_distance(points.row(i), centroids.row(c));
      if (dc < best_d) {
        best_d = dc;
        best = c;
      }
    }
    out[i] = best;
  });
}

// Gives every empty cluster the point farthest from its current centroid,
// taken from a cluster that can spare it.
inline void repair_empty_clusters(const PointMatrix& points, PointMatrix& centroids,
                                  std::vector<std::size_t>& assignments) {
  const std::size_t k = centroids.rows();
  std::vector<std::size_t> counts(k, 0);
  for (auto a : assignments) ++counts[a];
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] > 0) continue;
    std::optional<std::size_t> far;
    double far_d = -1.0;
    for (std::size_t i = 0; i < points.rows(); ++i) {
      if (counts[assignments[i]] < 2) continue;
      const double di = squared_distance(points.row(i), centroids.row(assignments[i]));
      if (di > far_d) {
        far_d = di;
        far = i;
      }
    }
    if (!far) throw InvariantError("cannot repair an empty cluster: too few points");
    --counts[assignments[*far]];
    assignments[*far] = c;
    counts[c] = 1;
    std::copy(points.row(*far).begin(), points.row(*far).end(), centroids.row(c).begin());
  }
}

inline PointMatrix cluster_means(const PointMatrix& points, std::span<const std::size_t> assignments, std::size_t k) {
  PointMatrix means(k, points.cols());
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < points.rows(); ++i) {
    auto m = means.row(assignments[i]);
    const auto p = points.row(i);
    for (std::size_t j = 0; j < p.size(); ++j) m[j] += p[j];
    ++counts[assignments[i]];
  }
  for (std::size_t c = 0; c < k; ++c) {
    for (auto& x : means.row(c)) x /= static_cast<double>(counts[c]);
  }
  return means;
}

// Hartigan's transfer step: move a point from cluster A to B whenever
// n_B/(n_B+1)*|x-c_B|^2 < n_A/(n_A-1)*|x-c_A|^2, which strictly lowers WSS.
// Points are visited in index order; the target is the best cluster, lowest
// index on ties. Returns the number of moves made in one pass.
inline std::size_t hartigan_pass(const PointMatrix& points, std::vector<std::size_t>& assignments,
                                 PointMatrix& centroids) {
  const std::size_t k = centroids.rows();
  std::vector<std::size_t> counts(k, 0);
  for (auto a : assignments) ++counts[a];
  std::size_t moves = 0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    const std::size_t from = assignments[i];
    if (counts[from] < 2) continue;
    const double nf = static_cast<double>(counts[from]);
    const double removal = nf / (nf - 1.0) * squared_distance(points.row(i), centroids.row(from));
    std::size_t best = from;
    double best_cost = removal;
    for (std::size_t c = 0; c < k; ++c) {
      if (c == from) continue;
      const double nc = static_cast<double>(counts[c]);
      const double cost = nc / (nc + 1.0) * squared_distance(points.row(i), centroids.row(c));
      if (cost < best_cost) {
        best_cost = cost;
        best = c;
      }
    }
    // Ignore gains at rounding level so the passes terminate.
    if (best == from || best_cost >= removal * (1.0 - 1e-12)) continue;
    assignments[i] = best;
    --counts[from];
    ++counts[best];
    ++moves;
    const double nt = static_cast<double>(counts[best]);
    auto cf = centroids.row(from);
    auto ct = centroids.row(best);
    const auto x = points.row(i);
    for (std::size_t j = 0; j < x.size(); ++j) {
      cf[j] = (nf * cf[j] - x[j]) / (nf - 1.0);
      ct[j] = ((nt - 1.0) * ct[j] + x[j]) / nt;
    }
  }
  return moves;
}

}  // namespace detail

/// Lloyd iterations from the given centroids. Assignment ties go to the lowest
/// cluster index. Stops on unchanged assignments, centroid movement below
/// tol, or max_iter; then, unless disabled, Hartigan transfer passes run until
/// no single point move lowers WSS. Throws InvariantError if WSS ever increases.
inline KMeansResult kmeans(const PointMatrix& points, PointMatrix centroids, const KMeansOptions& opts = {}) {
  const std::size_t k = centroids.rows();
  if (k < 1 || k > points.rows()) throw ConfigError("k must lie in [1, number of points]");
  if (centroids.cols() != points.cols()) throw DataError("centroid dimension mismatch");
  if (!(opts.tol > 0.0)) throw ConfigError("k-means tolerance must be positive");
  for (std::size_t i = 0; i < points.rows(); ++i) {
    for (double x : points.row(i)) {
      if (!std::isfinite(x)) throw DataError("non-finite value in k-means input");
    }
  }
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      if (squared_distance(centroids.row(a), centroids.row(b)) == 0.0) {
        throw DataError("initial centroids are not distinct");
      }
    }
  }

  KMeansResult res;
  detail::assign_nearest(points, centroids, res.assignments, opts.threads);
  res.wss_history.push_back(wss(points, res.assignments, centroids));
  // Floating-point slack for the monotonicity check only.
  auto check_monotone = [&](double next) {
    const double prev = res.wss_history.back();
    if (next > prev + 1e-12 * (1.0 + prev)) {
      throw InvariantError("k-means WSS increased between iterations");
    }
  };

  res.stop_reason = "max_iter";
  std::vector<std::size_t> next;
  for (std::size_t it = 1; it <= opts.max_iter; ++it) {
    detail::repair_empty_clusters(points, centroids, res.assignments);
    PointMatrix updated = detail::cluster_means(points, res.assignments, k);
    double movement = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      movement = std::max(movement, squared_distance(updated.row(c), centroids.row(c)));
    }
    centroids = std::move(updated);
    detail::assign_nearest(points, centroids, next, opts.threads);
    const double w = wss(points, next, centroids);
    check_monotone(w);
    res.wss_history.push_back(w);
    res.iterations = it;
    const bool stable = next == res.assignments;
    res.assignments.swap(next);
    if (stable) {
      res.stop_reason = "stable_assignments";
      break;
    }
    if (movement < opts.tol) {
      res.stop_reason = "tolerance";
      break;
    }
  }
  detail::repair_empty_clusters(points, centroids, res.assignments);
  res.centroids = detail::cluster_means(points, res.assignments, k);
  res.wss = wss(points, res.assignments, res.centroids);
  check_monotone(res.wss);
  if (opts.hartigan) {
    res.wss_history.push_back(res.wss);
    for (std::size_t pass = 0; pass < opts.max_iter; ++pass) {
      const std::size_t moved = detail::hartigan_pass(points, res.assignments, res.centroids);
      if (moved == 0) break;
      res.transfers += moved;
      res.centroids = detail::cluster_means(points, res.assignments, k);
      const double w = wss(points, res.assignments, res.centroids);
      check_monotone(w);
      res.wss_history.push_back(w);
      res.wss = w;
    }
  }
  return res;
}

struct ClusteringOptions {
  std::size_t cap = 10000;
  std::uint64_t seed = 0;
  std::size_t restarts = 10;  // extra k-means++ starts besides the hierarchical one
  KMeansOptions kmeans;
};

struct ClusteringResult {
  std::size_t k = 0;
  std::vector<std::size_t> assignments;
  PointMatrix centroids_normalized;
  PointMatrix centroids_raw;
  NormalizationParams normalization;
  double wss = 0.0;
  SilhouetteResult silhouette;
  std::size_t iterations = 0;
  std::string stop_reason;
  std::string start;           // which k-means start won
  std::size_t transfers = 0;   // Hartigan moves in the winning run
  std::uint64_t seed = 0;
  std::size_t hierarchical_sample = 0;
};

/// k-means++ centres drawn with `rng`, or nothing when fewer than k distinct points exist.
inline std::optional<PointMatrix> kmeanspp_centroids(const PointMatrix& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows();
  PointMatrix c(k, points.cols());
  std::size_t first = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1));
  std::copy(points.row(first).begin(), points.row(first).end(), c.row(0).begin());
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points.row(i), c.row(0));
  for (std::size_t m = 1; m < k; ++m) {
    double total = 0.0;
    for (double x : d2) total += x;
    if (!(total > 0.0)) return std::nullopt;
    const double target = rng.uniform() * total;
    std::size_t pick = n;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      acc += d2[i];
      pick = i;
      if (acc > target) break;
    }
    std::copy(points.row(pick).begin(), points.row(pick).end(), c.row(m).begin());
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(points.row(i), c.row(m)));
  }
  return c;
}

/// k-means from the centres of the dendrogram's k-cut, plus `restarts`
/// k-means++ starts drawn from substream (seed, k). The lowest WSS wins; the
/// hierarchical start wins ties, so restarts never make the result worse.
inline KMeansResult seeded_kmeans(const PointMatrix& normalized, const Dendrogram& dg, std::size_t k,
                                  const ClusteringOptions& opts = {}) {
  KMeansResult best = kmeans(normalized, cut_to_centroids(dg, k, normalized), opts.kmeans);
  Rng rng = Rng::substream(opts.seed, k);
  for (std::size_t r = 0; r < opts.restarts; ++r) {
    auto init = kmeanspp_centroids(normalized, k, rng);
    if (!init) break;
    auto candidate = kmeans(normalized, std::move(*init), opts.kmeans);
    if (candidate.wss < best.wss * (1.0 - 1e-12)) {
      candidate.start = "kmeans++ restart " + std::to_string(r + 1);
      best = std::move(candidate);
    }
  }
  return best;
}

/// Normalise, build the Ward dendrogram, seed k-means with its k-cut centres and score the result.
inline ClusteringResult cluster_volunteers(const PointMatrix& raw, std::size_t k, const ClusteringOptions& opts = {}) {
  if (k < 2) throw ConfigError("k must be at least 2");
  if (k > raw.rows()) {
    throw ConfigError("k=" + std::to_string(k) + " exceeds the number of volunteers (" + std::to_string(raw.rows()) + ")");
  }
  auto [normalized, params] = range_normalize(raw);
  const Dendrogram dg = hierarchical_cluster(normalized, {opts.cap, opts.seed});
  auto km = seeded_kmeans(normalized, dg, k, opts);
  ClusteringResult res;
  res.k = k;
  res.silhouette = avg_silhouette(normalized, km.assignments, k, opts.kmeans.threads);
  res.assignments = std::move(km.assignments);
  res.centroids_raw = denormalize(km.centroids, params);
  res.centroids_normalized = std::move(km.centroids);
  res.normalization = std::move(params);
  res.wss = km.wss;
  res.iterations = km.iterations;
  res.stop_reason = km.stop_reason;
  res.start = km.start;
  res.transfers = km.transfers;
  res.seed = opts.seed;
  res.hierarchical_sample = dg.leaves;
  return res;
}

struct KScanEntry {
  std::size_t k = 0;
  double wss = 0.0;
  double avg_silhouette = 0.0;
  Interpretation interpretation = Interpretation::kNone;
  std::size_t iterations = 0;
};

struct KScanReport {
  std::vector<KScanEntry> entries;
  std::size_t suggested_k = 0;  // argmax silhouette, ties to smaller k
  std::size_t elbow_k = 0;      // largest perpendicular distance to the WSS chord
  Interpretation interpretation = Interpretation::kNone;
};

/// Elbow of a WSS curve: the k farthest from the chord joining its endpoints,
/// with both axes rescaled to [0, 1].
inline std::size_t wss_elbow(std::span<const KScanEntry> entries) {
  if (entries.size() < 3) return entries.front().k;
  const double x0 = static_cast<double>(entries.front().k), x1 = static_cast<double>(entries.back().k);
  double ylo = entries.front().wss, yhi = entries.front().wss;
  for (const auto& e : entries) {
    ylo = std::min(ylo, e.wss);
    yhi = std::max(yhi, e.wss);
  }
  const double yr = yhi > ylo ? yhi - ylo : 1.0;
  auto px = [&](const KScanEntry& e) { return (static_cast<double>(e.k) - x0) / (x1 - x0); };
  auto py = [&](const KScanEntry& e) { return (e.wss - ylo) / yr; };
  const double ax = px(entries.front()), ay = py(entries.front());
  const double bx = px(entries.back()), by = py(entries.back());
  const double len = std::hypot(bx - ax, by - ay);
  std::size_t best = entries.front().k;
  double best_d = -1.0;
  for (const auto& e : entries) {
    const double dist = len > 0.0 ? std::fabs((by - ay) * px(e) - (bx - ax) * py(e) + bx * ay - by * ax) / len : 0.0;
    if (dist > best_d + 1e-15) {
      best_d = dist;
      best = e.k;
    }
  }
  return best;
}

/// For each k in [k_min, k_max]: cut the (shared) dendrogram, run k-means from
/// those centres and score WSS and average silhouette.
inline KScanReport scan_k(const PointMatrix& normalized, std::size_t k_min, std::size_t k_max,
                          const ClusteringOptions& opts = {}) {
  const std::size_t n = normalized.rows();
  if (k_min < 2 || k_max < k_min || n < 3 || k_max > n - 1) {
    throw ConfigError("k range [" + std::to_string(k_min) + ", " + std::to_string(k_max) +
                      "] must lie within [2, " + std::to_string(n > 0 ? n - 1 : 0) + "]");
  }
  const Dendrogram dg = hierarchical_cluster(normalized, {opts.cap, opts.seed});
  if (k_max > dg.leaves) throw ConfigError("k_max exceeds the hierarchical sample size");
  KScanReport report;
  for (std::size_t k = k_min; k <= k_max; ++k) {
    const auto km = seeded_kmeans(normalized, dg, k, opts);
    const auto sil = avg_silhouette(normalized, km.assignments, k, opts.kmeans.threads);
    report.entries.push_back({k, km.wss, sil.value, sil.interpretation, km.iterations});
  }
  const auto best = std::max_element(report.entries.begin(), report.entries.end(),
                                     [](const KScanEntry& l, const KScanEntry& r) { return l.avg_silhouette < r.avg_silhouette; });
  report.suggested_k = best->k;
  report.interpretation = best->interpretation;
  report.elbow_k = wss_elbow(report.entries);
  return report;
}

/// Adjusted Rand index between two labelings of the same items.
inline double adjusted_rand_index(std::span<const std::size_t> x, std::span<const std::size_t> y) {
  if (x.size() != y.size()) throw DataError("labelings differ in length");
  const double n = static_cast<double>(x.size());
  std::map<std::pair<std::size_t, std::size_t>, double> table;
  std::map<std::size_t, double> rows, cols;
  for (std::size_t i = 0; i < x.size(); ++i) {
    table[{x[i], y[i]}] += 1.0;
    rows[x[i]] += 1.0;
    cols[y[i]] += 1.0;
  }
  auto pairs = [](double m) { return m * (m - 1.0) / 2.0; };
  double index = 0.0, sum_rows = 0.0, sum_cols = 0.0;
  for (const auto& [key, m] : table) index += pairs(m);
  for (const auto& [key, m] : rows) sum_rows += pairs(m);
  for (const auto& [key, m] : cols) sum_cols += pairs(m);
  const double expected = sum_rows * sum_cols / pairs(n);
  const double maximum = 0.5 * (sum_rows + sum_cols);
  if (maximum == expected) return 1.0;
  return (index - expected) / (maximum - expected);
}

inline void to_json(nlohmann::ordered_json& j, const KScanReport& r) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& e : r.entries) {
    rows.push_back({{"k", e.k},
                    {"wss", e.wss},
                    {"avg_silhouette", e.avg_silhouette},
                    {"interpretation", to_string(e.interpretation)},
                    {"iterations", e.iterations}});
  }
  j = nlohmann::ordered_json{{"suggested_k", r.suggested_k},
                             {"elbow_k", r.elbow_k},
                             {"interpretation", to_string(r.interpretation)},
                             {"scan", rows}};
}

}  // namespace engage
