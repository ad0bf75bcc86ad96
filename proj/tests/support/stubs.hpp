#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "iclcheck/model.hpp"

namespace iclcheck::testing {

/// Every example has log probability 0 under every context, so every
/// discrepancy built on it is the constant 0.
class ConstantCgm final : public Cgm {
 public:
  Example sample_with_seed(const Dataset&, std::uint64_t seed,
                           std::optional<std::span<const double>> query) const override {
    Stream s(seed);
    const double z = query ? query->front() : s.uniform(-2.0, 2.0);
    return Example({z}, {0.0});
  }
  LogProb logprob_example(const Example& x, const Dataset&) const override {
    return {0.0, x.coordinate_count()};
  }
};

/// Reference model whose likelihood and predictive are constant.
class ConstantReference final : public ReferenceModel {
 public:
  Explanation sample_posterior(const Dataset&, Stream& rng) const override {
    return Explanation(Polynomial{{rng.normal()}}, 1.0);
  }
  Dataset sample_likelihood(const Explanation&, std::size_t count, Stream& rng) const override {
    Dataset out(Provenance::replicate);
    for (std::size_t i = 0; i < count; ++i) out.push_back(Example({rng.uniform(-2, 2)}, {rng.normal()}));
    return out;
  }
  double log_likelihood(const Explanation&, const Example&) const override { return 0.0; }
  std::vector<LogProb> predictive_logprobs(std::span<const Example> xs,
                                           const Dataset&) const override {
    return std::vector<LogProb>(xs.size(), LogProb{0.0, 2});
  }
};

/// Standard normal CDF.
inline double phi_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace iclcheck::testing
