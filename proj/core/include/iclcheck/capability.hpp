#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include "iclcheck/model.hpp"
#include "iclcheck/random.hpp"
#include "iclcheck/types.hpp"

namespace iclcheck {

struct CapabilityDecision {
  double p = 1.0;
  double alpha = 0.05;
  bool out_of_capability = false;
};

/// Flags out-of-capability iff p < alpha (strict). alpha must lie in (0, 1).
CapabilityDecision decide(double p, double alpha);
inline CapabilityDecision decide(const PValueEstimate& p, double alpha) {
  return decide(p.value, alpha);
}

/// Confusion counts and ratios with out-of-capability as the positive
/// class. A ratio whose denominator is zero is left empty.
struct MetricsReport {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
  std::optional<double> fpr;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  std::optional<double> accuracy;
};

/// `labels[i]` is the ground truth "task i is out of capability".
MetricsReport compute_metrics(std::span<const CapabilityDecision> decisions,
                              std::span<const bool> labels);

inline constexpr std::size_t kRmseResponseSamples = 64;

/// RMSE between the model's predictive mean response (mean of 64 sampled
/// responses per query) and the true mean function over `query_count`
/// fresh uniform queries.
double response_rmse(const Cgm& cgm, const Explanation& f_true, const Dataset& observed,
                     const QueryDomain& domain, std::size_t query_count, Stream& rng);

/// Sum of RMSEs over tasks decided in-capability.
double compute_risk(std::span<const double> rmses, std::span<const CapabilityDecision> decisions);

/// Spearman rank correlation with average ranks for ties. Returns 0 when
/// either input is constant.
double spearman_correlation(std::span<const double> a, std::span<const double> b);

/// One-sided permutation test for a negative rank correlation:
/// (1 + #{rho_perm <= rho_obs}) / (1 + permutations).
double spearman_negative_permutation_pvalue(std::span<const double> a, std::span<const double> b,
                                            std::size_t permutations, Stream& rng);

}  // namespace iclcheck
