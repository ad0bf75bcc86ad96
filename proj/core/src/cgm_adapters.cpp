#include "iclcheck/cgm_adapters.hpp"

#include <cmath>

#include "iclcheck/errors.hpp"

namespace iclcheck {

Example ExactBayesCgm::draw(const GaussianPosterior& posterior, std::uint64_t seed,
                            std::optional<std::span<const double>> query) const {
  Stream rng(seed);
  double z;
  if (query) {
    if (query->size() != 1) throw PreconditionError("exact-Bayes CGM takes scalar queries");
    z = query->front();
    if (!model_.domain().contains(z)) {
      throw DomainError("query " + std::to_string(z) + " outside the model domain");
    }
  } else {
    z = rng.uniform(model_.domain().lo, model_.domain().hi);
  }
  const auto m = predictive_moments(model_, posterior, z);
  const double y = m.mean + std::sqrt(m.variance) * rng.normal();
  return Example({z}, {y});
}

Example ExactBayesCgm::sample_with_seed(const Dataset& context, std::uint64_t seed,
                                        std::optional<std::span<const double>> query) const {
  return draw(fit_posterior(model_, context), seed, query);
}

std::vector<Example> ExactBayesCgm::sample_with_seeds(
    const Dataset& context, std::span<const std::uint64_t> seeds) const {
  const GaussianPosterior posterior = fit_posterior(model_, context);
  std::vector<Example> out;
  out.reserve(seeds.size());
  for (const auto seed : seeds) out.push_back(draw(posterior, seed, std::nullopt));
  return out;
}

LogProb ExactBayesCgm::logprob_example(const Example& x, const Dataset& context) const {
  return {posterior_predictive_logprob(model_, fit_posterior(model_, context), x),
          x.coordinate_count()};
}

std::vector<LogProb> ExactBayesCgm::logprob_examples(std::span<const Example> xs,
                                                     const Dataset& context) const {
  return model_.predictive_logprobs(xs, context);
}

ExactBayesCgm exact_bayes_cgm(const ConjugateModel& model) { return ExactBayesCgm(model); }

ExactBayesCgm misspecified_cgm(const ConjugateModel& model) { return ExactBayesCgm(model); }

}  // namespace iclcheck
