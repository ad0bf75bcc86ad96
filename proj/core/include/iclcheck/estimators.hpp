#pragma once

#include <cstddef>
#include <cstdint>

#include "iclcheck/model.hpp"
#include "iclcheck/random.hpp"
#include "iclcheck/types.hpp"

namespace iclcheck {

struct EstimatorConfig {
  std::size_t replicates = 40;          // M
  std::size_t completion_budget = 200;  // N - n, used by GenerativeNLL only
  DiscrepancyKind discrepancy = DiscrepancyKind::generative_nll;
  SeedSpec seed{0};

  void validate() const;
};

/// Posterior predictive p-value with an explicit posterior and likelihood.
///
/// Replicate i draws f_i from the posterior, then |observed| examples from
/// the likelihood under f_i, and records 1{g(x_i, .) >= g(test, .)} where .
/// is f_i (ExactNLL) or the observed data (NLML).
PValueEstimate estimate_p_ppc(const ReferenceModel& ref, const Dataset& observed,
                              const Dataset& test, const EstimatorConfig& cfg);

/// Extends `observed` to length `target` by ancestral sampling from the
/// model; each new example is conditioned on everything before it.
Dataset predictive_resample(const Cgm& cgm, const Dataset& observed, std::size_t target,
                            Stream& rng);

/// Generative predictive p-value. Replicate i completes the observed data to
/// N = n + budget, draws n examples independently given that completion and
/// compares generative NLL discrepancies against the test set.
PValueEstimate estimate_p_gpc(const Cgm& cgm, const Dataset& observed, const Dataset& test,
                              const EstimatorConfig& cfg);

/// Lite variant: replicates are sampled ancestrally from the predictive
/// given the observed data, and scored with the NLML discrepancy.
PValueEstimate estimate_p_gpc_lite(const Cgm& cgm, const Dataset& observed,
                                   const Dataset& test, const EstimatorConfig& cfg);

/// One-dimensional Gaussian model with a fixed posterior N(post_mean, post_var)
/// over a location f and likelihood x | f ~ N(f, lik_var).
///
/// Observations are stored as examples with a constant query 0 that carries
/// no density, so the generic estimators apply unchanged.
class ScalarGaussianModel final : public ReferenceModel, public Cgm {
 public:
  ScalarGaussianModel(double posterior_mean, double posterior_variance,
                      double likelihood_variance);

  static Example observation(double x) { return Example({0.0}, {x}); }

  Explanation sample_posterior(const Dataset& observed, Stream& rng) const override;
  Dataset sample_likelihood(const Explanation& f, std::size_t count, Stream& rng) const override;
  double log_likelihood(const Explanation& f, const Example& x) const override;
  std::vector<LogProb> predictive_logprobs(std::span<const Example> xs,
                                           const Dataset& observed) const override;

  Example sample_with_seed(const Dataset& context, std::uint64_t seed,
                           std::optional<std::span<const double>> query) const override;
  LogProb logprob_example(const Example& x, const Dataset& context) const override;

 private:
  double posterior_mean_;
  double posterior_variance_;
  double likelihood_variance_;
};

/// The epistemic-vs-aleatoric worked example: model 1 has posterior N(0, 1)
/// and likelihood N(f, 1e-4); model 2 has posterior N(0, 1e-4) and
/// likelihood N(f, 1). Both are checked against the test point 0.5.
struct AppendixFResult {
  PValueEstimate model1_exact_nll;
  PValueEstimate model2_exact_nll;
  PValueEstimate model1_nlml;
  PValueEstimate model2_nlml;
};

inline constexpr double kAppendixFTestPoint = 0.5;

AppendixFResult appendix_f_pvalues(std::size_t replicates, std::uint64_t seed = 20250101);

}  // namespace iclcheck
