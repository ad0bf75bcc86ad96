#pragma once

#include "iclcheck/model.hpp"
#include "iclcheck/reference_models.hpp"

namespace iclcheck {

/// CGM whose predictive is the closed-form posterior predictive of a
/// conjugate model; the posterior is refit from the context on every call.
class ExactBayesCgm final : public Cgm {
 public:
  explicit ExactBayesCgm(ConjugateModel model) : model_(std::move(model)) {}

  const ConjugateModel& model() const noexcept { return model_; }

  Example sample_with_seed(const Dataset& context, std::uint64_t seed,
                           std::optional<std::span<const double>> query) const override;
  LogProb logprob_example(const Example& x, const Dataset& context) const override;
  std::vector<LogProb> logprob_examples(std::span<const Example> xs,
                                        const Dataset& context) const override;

 protected:
  std::vector<Example> sample_with_seeds(const Dataset& context,
                                         std::span<const std::uint64_t> seeds) const override;

 private:
  Example draw(const GaussianPosterior& posterior, std::uint64_t seed,
               std::optional<std::span<const double>> query) const;

  ConjugateModel model_;
};

ExactBayesCgm exact_bayes_cgm(const ConjugateModel& model);

/// Identical construction; the misspecification comes from scoring it on
/// data generated by a different task family or degree.
ExactBayesCgm misspecified_cgm(const ConjugateModel& model);

}  // namespace iclcheck
