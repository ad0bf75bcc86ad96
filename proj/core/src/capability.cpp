#include "iclcheck/capability.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "iclcheck/errors.hpp"

namespace iclcheck {

namespace {

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

CapabilityDecision decide(double p, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ConfigurationError("significance level must lie in (0, 1)");
  }
  if (!(p >= 0.0 && p <= 1.0)) throw PreconditionError("p-value must lie in [0, 1]");
  return {p, alpha, p < alpha};
}

MetricsReport compute_metrics(std::span<const CapabilityDecision> decisions,
                              std::span<const bool> labels) {
  if (decisions.size() != labels.size()) {
    throw PreconditionError("decisions and labels differ in length");
  }
  if (decisions.empty()) throw PreconditionError("no decisions to score");
  MetricsReport r;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const bool predicted = decisions[i].out_of_capability;
    if (predicted && labels[i]) ++r.tp;
    else if (predicted) ++r.fp;
    else if (labels[i]) ++r.fn;
    else ++r.tn;
  }
  r.fpr = ratio(r.fp, r.fp + r.tn);
  r.precision = ratio(r.tp, r.tp + r.fp);
  r.recall = ratio(r.tp, r.tp + r.fn);
  if (r.precision && r.recall && *r.precision + *r.recall > 0.0) {
    r.f1 = 2.0 * *r.precision * *r.recall / (*r.precision + *r.recall);
  }
  r.accuracy = ratio(r.tp + r.tn, decisions.size());
  return r;
}

double response_rmse(const Cgm& cgm, const Explanation& f_true, const Dataset& observed,
                     const QueryDomain& domain, std::size_t query_count, Stream& rng) {
  if (query_count < 1) throw PreconditionError("rmse needs at least one query");
  double sq = 0.0;
  for (std::size_t q = 0; q < query_count; ++q) {
    const double z = rng.uniform(domain.lo, domain.hi);
    const std::vector<double> query{z};
    double mean = 0.0;
    for (std::size_t s = 0; s < kRmseResponseSamples; ++s) {
      mean += cgm.sample_response(observed, query, rng).y();
    }
    mean /= static_cast<double>(kRmseResponseSamples);
    const double err = mean - f_true.mean(z);
    sq += err * err;
  }
  return std::sqrt(sq / static_cast<double>(query_count));
}

double compute_risk(std::span<const double> rmses, std::span<const CapabilityDecision> decisions) {
  if (rmses.size() != decisions.size()) {
    throw PreconditionError("rmses and decisions differ in length");
  }
  double risk = 0.0;
  for (std::size_t i = 0; i < rmses.size(); ++i) {
    if (!decisions[i].out_of_capability) risk += rmses[i];
  }
  return risk;
}

double spearman_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw PreconditionError("spearman correlation needs two equal-length samples of size >= 2");
  }
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return pearson(ra, rb);
}

double spearman_negative_permutation_pvalue(std::span<const double> a, std::span<const double> b,
                                            std::size_t permutations, Stream& rng) {
  const double observed = spearman_correlation(a, b);
  const auto ra = average_ranks(a);
  auto rb = average_ranks(b);
  std::size_t at_least_as_negative = 0;
  for (std::size_t k = 0; k < permutations; ++k) {
    std::shuffle(rb.begin(), rb.end(), rng);
    if (pearson(ra, rb) <= observed) ++at_least_as_negative;
  }
  return static_cast<double>(1 + at_least_as_negative) / static_cast<double>(1 + permutations);
}

}  // namespace iclcheck
