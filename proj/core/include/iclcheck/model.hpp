#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "iclcheck/random.hpp"
#include "iclcheck/types.hpp"

namespace iclcheck {

/// Conditional generative model: samples the next example given a context
/// and scores an example given a context.
///
/// Every sample consumes exactly one 64-bit seed from the caller's stream and
/// is a pure function of (context, seed, query), which is what lets a remote
/// model reproduce an in-process one when the seed is forwarded.
class Cgm {
 public:
  virtual ~Cgm() = default;

  Example sample_example(const Dataset& context, Stream& rng) const {
    return sample_with_seed(context, rng.next_u64(), std::nullopt);
  }

  /// `count` examples, each conditioned on `context` only.
  std::vector<Example> sample_independent(const Dataset& context, std::size_t count,
                                          Stream& rng) const;

  /// Samples a response at a fixed query.
  Example sample_response(const Dataset& context, std::span<const double> query,
                          Stream& rng) const {
    return sample_with_seed(context, rng.next_u64(), query);
  }

  virtual Example sample_with_seed(const Dataset& context, std::uint64_t seed,
                                   std::optional<std::span<const double>> query) const = 0;

  /// Must be deterministic and side-effect free.
  virtual LogProb logprob_example(const Example& x, const Dataset& context) const = 0;

  virtual std::vector<LogProb> logprob_examples(std::span<const Example> xs,
                                                const Dataset& context) const;

 protected:
  virtual std::vector<Example> sample_with_seeds(const Dataset& context,
                                                 std::span<const std::uint64_t> seeds) const;
};

/// Bayesian model with explicit posterior and likelihood, used by the
/// posterior predictive check.
class ReferenceModel {
 public:
  virtual ~ReferenceModel() = default;

  virtual Explanation sample_posterior(const Dataset& observed, Stream& rng) const = 0;
  virtual Dataset sample_likelihood(const Explanation& f, std::size_t count,
                                    Stream& rng) const = 0;
  /// log p(x | f), including the query density.
  virtual double log_likelihood(const Explanation& f, const Example& x) const = 0;
  /// log p(x | observed) for each x under the posterior predictive.
  virtual std::vector<LogProb> predictive_logprobs(std::span<const Example> xs,
                                                   const Dataset& observed) const = 0;
};

}  // namespace iclcheck
