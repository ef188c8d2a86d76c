#pragma once

// Spearman correlation with average-rank ties, paired percentile bootstrap,
// and the win/tie/loss bookkeeping used to compare two assessors.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "assessor/error.hpp"
#include "assessor/seeding.hpp"

namespace assessor {

struct CorrelationResult {
  double rho = 0.0;
  std::size_t n = 0;
};

struct ConfidenceInterval {
  double lo = 0.0;
  double hi = 0.0;
  double level = 0.95;
  int n_resamples = 0;
};

struct BootstrapConfig {
  int n_resamples = 1000;
  double level = 0.95;
};

enum class Outcome { Win, Tie, Loss };

constexpr std::string_view outcome_name(Outcome o) {
  switch (o) {
    case Outcome::Win: return "win";
    case Outcome::Tie: return "tie";
    case Outcome::Loss: return "loss";
  }
  return "";
}

struct Verdict {
  Outcome outcome = Outcome::Tie;
  double margin = 0.0;  // rho_proxy - rho_target, zero on a tie
};

/// Fractional ranks starting at 1; tied values share the mean of their positions.
inline std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    // positions i+1 .. j share rank (i + 1 + j) / 2
    const double rank = static_cast<double>(i + 1 + j) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

namespace detail {

/// Pearson correlation of two rank vectors whose common mean is (n + 1) / 2.
inline double rank_pearson(std::span<const double> ra, std::span<const double> rb) {
  const double mean = static_cast<double>(ra.size() + 1) / 2.0;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double da = ra[i] - mean;
    const double db = rb[i] - mean;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (!(saa > 0.0) || !(sbb > 0.0))
    throw Error(ErrorKind::DegenerateInput, "zero rank variance");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

}  // namespace detail

inline CorrelationResult spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::DimensionMismatch, "spearman inputs differ in length");
  if (a.size() < 2) throw Error(ErrorKind::DegenerateInput, "spearman needs at least two points");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return {detail::rank_pearson(ra, rb), a.size()};
}

namespace detail {

/// Ranks of a fixed vector under arbitrary resampling multiplicities, in O(n).
class ResampleRanker {
 public:
  explicit ResampleRanker(std::span<const double> values) : n_(values.size()) {
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), 0);
    std::stable_sort(order_.begin(), order_.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    group_start_.push_back(0);
    for (std::size_t i = 1; i < n_; ++i)
      if (values[order_[i]] != values[order_[i - 1]]) group_start_.push_back(i);
    group_start_.push_back(n_);
  }

  /// Fills rank[i] for every index drawn at least once; returns the number of distinct groups hit.
  std::size_t rank(std::span<const std::uint32_t> counts, std::vector<double>& rank) const {
    double cumulative = 0.0;
    std::size_t groups_hit = 0;
    for (std::size_t g = 0; g + 1 < group_start_.size(); ++g) {
      double c = 0.0;
      for (std::size_t k = group_start_[g]; k < group_start_[g + 1]; ++k) c += counts[order_[k]];
      if (c == 0.0) continue;
      ++groups_hit;
      const double r = cumulative + (c + 1.0) / 2.0;
      for (std::size_t k = group_start_[g]; k < group_start_[g + 1]; ++k) rank[order_[k]] = r;
      cumulative += c;
    }
    return groups_hit;
  }

 private:
  std::size_t n_;
  std::vector<std::size_t> order_;
  std::vector<std::size_t> group_start_;
};

/// Spearman over a resample given as multiplicities of the original rows.
inline double weighted_rank_pearson(std::span<const std::uint32_t> counts,
                                    std::span<const double> ra, std::span<const double> rb,
                                    double mean) {
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] == 0) continue;
    const double w = counts[i];
    const double da = ra[i] - mean;
    const double db = rb[i] - mean;
    sab += w * da * db;
    saa += w * da * da;
    sbb += w * db * db;
  }
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

/// Row indices of bootstrap attempt `attempt`; depends only on (seed, attempt).
inline void draw_counts(std::uint64_t seed, std::uint64_t attempt, std::vector<std::uint32_t>& counts) {
  std::fill(counts.begin(), counts.end(), 0u);
  std::mt19937_64 rng(derive_seed(seed, {attempt}));
  std::uniform_int_distribution<std::size_t> pick(0, counts.size() - 1);
  for (std::size_t i = 0; i < counts.size(); ++i) ++counts[pick(rng)];
}

/// Linear interpolation between order statistics.
inline double percentile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline ConfidenceInterval interval_of(std::vector<double> rhos, const BootstrapConfig& cfg) {
  std::sort(rhos.begin(), rhos.end());
  const double alpha = 1.0 - cfg.level;
  ConfidenceInterval ci;
  ci.lo = std::clamp(percentile(rhos, alpha / 2.0), -1.0, 1.0);
  ci.hi = std::clamp(percentile(rhos, 1.0 - alpha / 2.0), -1.0, 1.0);
  ci.level = cfg.level;
  ci.n_resamples = cfg.n_resamples;
  return ci;
}

inline void check_bootstrap_inputs(std::size_t n, const BootstrapConfig& cfg) {
  if (n < 10) throw Error(ErrorKind::DegenerateInput, "bootstrap needs at least 10 rows");
  if (cfg.n_resamples < 1) throw Error(ErrorKind::InvalidSpec, "n_resamples must be >= 1");
  if (!(cfg.level > 0.0 && cfg.level < 1.0))
    throw Error(ErrorKind::InvalidSpec, "confidence level must be in (0, 1)");
}

}  // namespace detail

/// Percentile CIs for two predictors scored against the same truth, with both
/// evaluated on the same resampled rows. Resamples where any of the three
/// vectors has zero rank variance are redrawn, up to 10 * n_resamples attempts.
inline std::pair<ConfidenceInterval, ConfidenceInterval> paired_bootstrap_ci(
    std::span<const double> pred_a, std::span<const double> pred_b, std::span<const double> truth,
    const BootstrapConfig& cfg, std::uint64_t seed) {
  const std::size_t n = truth.size();
  if (pred_a.size() != n || pred_b.size() != n)
    throw Error(ErrorKind::DimensionMismatch, "bootstrap inputs differ in length");
  detail::check_bootstrap_inputs(n, cfg);
  // Fails fast on constant inputs.
  spearman(pred_a, truth);
  spearman(pred_b, truth);

  const detail::ResampleRanker rank_a(pred_a), rank_b(pred_b), rank_t(truth);
  std::vector<std::uint32_t> counts(n);
  std::vector<double> ra(n), rb(n), rt(n);
  std::vector<double> rhos_a, rhos_b;
  rhos_a.reserve(static_cast<std::size_t>(cfg.n_resamples));
  rhos_b.reserve(static_cast<std::size_t>(cfg.n_resamples));
  const double mean = static_cast<double>(n + 1) / 2.0;
  const std::uint64_t max_attempts = 10ULL * static_cast<std::uint64_t>(cfg.n_resamples);
  std::uint64_t attempt = 0;
  while (rhos_a.size() < static_cast<std::size_t>(cfg.n_resamples)) {
    if (attempt >= max_attempts)
      throw Error(ErrorKind::ResampleExhaustion, "too many degenerate bootstrap resamples");
    detail::draw_counts(seed, attempt++, counts);
    if (rank_t.rank(counts, rt) < 2 || rank_a.rank(counts, ra) < 2 || rank_b.rank(counts, rb) < 2)
      continue;
    rhos_a.push_back(detail::weighted_rank_pearson(counts, ra, rt, mean));
    rhos_b.push_back(detail::weighted_rank_pearson(counts, rb, rt, mean));
  }
  return {detail::interval_of(std::move(rhos_a), cfg), detail::interval_of(std::move(rhos_b), cfg)};
}

inline ConfidenceInterval bootstrap_ci(std::span<const double> pred, std::span<const double> truth,
                                       int n_resamples, double level, std::uint64_t seed) {
  return paired_bootstrap_ci(pred, pred, truth, BootstrapConfig{n_resamples, level}, seed).first;
}

inline ConfidenceInterval bootstrap_ci(std::span<const double> pred, std::span<const double> truth,
                                       std::uint64_t seed) {
  return bootstrap_ci(pred, truth, 1000, 0.95, seed);
}

/// Separated intervals decide the comparison; overlapping ones are a tie.
inline Verdict verdict(const ConfidenceInterval& proxy, const ConfidenceInterval& target,
                       double rho_proxy, double rho_target) {
  if (proxy.lo > target.hi) return {Outcome::Win, rho_proxy - rho_target};
  if (proxy.hi < target.lo) return {Outcome::Loss, rho_proxy - rho_target};
  return {Outcome::Tie, 0.0};
}

constexpr int points(Outcome o) {
  return o == Outcome::Win ? 1 : (o == Outcome::Loss ? -1 : 0);
}

inline int score_of(std::span<const Verdict> verdicts) {
  int total = 0;
  for (const auto& v : verdicts) total += points(v.outcome);
  return total;
}

}  // namespace assessor
