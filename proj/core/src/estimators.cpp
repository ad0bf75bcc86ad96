#include "iclcheck/estimators.hpp"

#include <cmath>
#include <string>

#include "iclcheck/discrepancy.hpp"
#include "iclcheck/errors.hpp"
#include "iclcheck/reference_models.hpp"

namespace iclcheck {

namespace {

// Stream labels below a replicate's seed.
constexpr std::uint64_t kCompletionStream = 0;
constexpr std::uint64_t kReplicateStream = 1;

template <class Indicator>
PValueEstimate run_replicates(const EstimatorConfig& cfg, Indicator&& indicator) {
  std::vector<std::uint8_t> draws(cfg.replicates);
  for (std::size_t i = 0; i < cfg.replicates; ++i) {
    draws[i] = indicator(cfg.seed.child(i)) ? 1 : 0;
  }
  return PValueEstimate::from_indicators(std::move(draws));
}

void require_inputs(const Dataset& observed, const Dataset& test) {
  if (test.empty()) throw PreconditionError("test dataset is empty");
  if (observed.empty()) {
    throw PreconditionError("observed dataset is empty; replicates have size |observed|");
  }
}

}  // namespace

void EstimatorConfig::validate() const {
  if (replicates < 1) throw ConfigurationError("estimator needs at least one replicate");
  if (discrepancy == DiscrepancyKind::generative_nll && completion_budget < 1) {
    throw ConfigurationError("generative NLL needs a completion budget N - n >= 1");
  }
}

PValueEstimate estimate_p_ppc(const ReferenceModel& ref, const Dataset& observed,
                              const Dataset& test, const EstimatorConfig& cfg) {
  cfg.validate();
  if (cfg.discrepancy == DiscrepancyKind::generative_nll) {
    throw ConfigurationError("the posterior predictive check takes ExactNLL or NLML");
  }
  require_inputs(observed, test);
  const std::size_t n = observed.size();

  if (cfg.discrepancy == DiscrepancyKind::nlml) {
    const double test_score =
        mean_per_coordinate_nll(ref.predictive_logprobs(test.examples(), observed));
    return run_replicates(cfg, [&](const SeedSpec& seed) {
      Stream rng = seed.stream();
      const Explanation f = ref.sample_posterior(observed, rng);
      const Dataset x = ref.sample_likelihood(f, n, rng);
      return mean_per_coordinate_nll(ref.predictive_logprobs(x.examples(), observed)) >=
             test_score;
    });
  }

  return run_replicates(cfg, [&](const SeedSpec& seed) {
    Stream rng = seed.stream();
    const Explanation f = ref.sample_posterior(observed, rng);
    const Dataset x = ref.sample_likelihood(f, n, rng);
    return exact_nll_discrepancy(x, f, ref) >= exact_nll_discrepancy(test, f, ref);
  });
}

Dataset predictive_resample(const Cgm& cgm, const Dataset& observed, std::size_t target,
                            Stream& rng) {
  if (target < observed.size()) {
    throw PreconditionError("completion length N must be >= |observed|");
  }
  Dataset completion = Dataset::completion_of(observed);
  for (std::size_t step = observed.size(); step < target; ++step) {
    try {
      completion.push_back(cgm.sample_example(completion, rng));
    } catch (const std::exception& e) {
      throw Error("predictive resampling failed at step " + std::to_string(step) + ": " +
                  e.what());
    }
  }
  return completion;
}

PValueEstimate estimate_p_gpc(const Cgm& cgm, const Dataset& observed, const Dataset& test,
                              const EstimatorConfig& cfg) {
  cfg.validate();
  if (cfg.discrepancy != DiscrepancyKind::generative_nll) {
    throw ConfigurationError("the generative predictive check takes the GenerativeNLL discrepancy");
  }
  require_inputs(observed, test);
  const std::size_t n = observed.size();
  const std::size_t total = n + cfg.completion_budget;

  return run_replicates(cfg, [&](const SeedSpec& seed) {
    Stream completion_rng = seed.child(kCompletionStream).stream();
    const Dataset completion = predictive_resample(cgm, observed, total, completion_rng);
    Stream replicate_rng = seed.child(kReplicateStream).stream();
    const Dataset x(Provenance::replicate, cgm.sample_independent(completion, n, replicate_rng));
    return generative_nll_discrepancy(x, completion, cgm) >=
           generative_nll_discrepancy(test, completion, cgm);
  });
}

PValueEstimate estimate_p_gpc_lite(const Cgm& cgm, const Dataset& observed,
                                   const Dataset& test, const EstimatorConfig& cfg) {
  cfg.validate();
  if (cfg.discrepancy != DiscrepancyKind::nlml) {
    throw ConfigurationError("the lite generative predictive check takes the NLML discrepancy");
  }
  require_inputs(observed, test);
  const std::size_t n = observed.size();
  const double test_score = nlml_discrepancy(test, observed, cgm);

  return run_replicates(cfg, [&](const SeedSpec& seed) {
    Stream rng = seed.child(kReplicateStream).stream();
    // Context is the observed data followed by the replicate drawn so far.
    Dataset context = observed;
    Dataset x(Provenance::replicate);
    for (std::size_t j = 0; j < n; ++j) {
      Example e = cgm.sample_example(context, rng);
      context.push_back(e);
      x.push_back(std::move(e));
    }
    return nlml_discrepancy(x, observed, cgm) >= test_score;
  });
}

ScalarGaussianModel::ScalarGaussianModel(double posterior_mean, double posterior_variance,
                                         double likelihood_variance)
    : posterior_mean_(posterior_mean),
      posterior_variance_(posterior_variance),
      likelihood_variance_(likelihood_variance) {
  if (!(posterior_variance_ > 0.0) || !(likelihood_variance_ > 0.0)) {
    throw ConfigurationError("scalar Gaussian model variances must be positive");
  }
}

Explanation ScalarGaussianModel::sample_posterior(const Dataset&, Stream& rng) const {
  const double f = posterior_mean_ + std::sqrt(posterior_variance_) * rng.normal();
  return Explanation(Polynomial{{f}}, std::sqrt(likelihood_variance_));
}

Dataset ScalarGaussianModel::sample_likelihood(const Explanation& f, std::size_t count,
                                               Stream& rng) const {
  Dataset out(Provenance::replicate);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(observation(f.mean(0.0) + f.sigma() * rng.normal()));
  }
  return out;
}

double ScalarGaussianModel::log_likelihood(const Explanation& f, const Example& x) const {
  return log_normal_pdf(x.y(), f.mean(0.0), f.sigma() * f.sigma());
}

std::vector<LogProb> ScalarGaussianModel::predictive_logprobs(std::span<const Example> xs,
                                                              const Dataset& observed) const {
  return logprob_examples(xs, observed);
}

Example ScalarGaussianModel::sample_with_seed(const Dataset&, std::uint64_t seed,
                                              std::optional<std::span<const double>>) const {
  Stream rng(seed);
  return observation(posterior_mean_ +
                     std::sqrt(posterior_variance_ + likelihood_variance_) * rng.normal());
}

LogProb ScalarGaussianModel::logprob_example(const Example& x, const Dataset&) const {
  return {log_normal_pdf(x.y(), posterior_mean_, posterior_variance_ + likelihood_variance_),
          x.coordinate_count()};
}

AppendixFResult appendix_f_pvalues(std::size_t replicates, std::uint64_t seed) {
  if (replicates < 1000) throw PreconditionError("two-model example needs M >= 1000");
  const ScalarGaussianModel model1(0.0, 1.0, 1e-4);
  const ScalarGaussianModel model2(0.0, 1e-4, 1.0);
  // The posteriors are given, so the observed set only fixes the replicate size.
  const Dataset observed(Provenance::observed, {ScalarGaussianModel::observation(0.0)});
  const Dataset test(Provenance::test, {ScalarGaussianModel::observation(kAppendixFTestPoint)});

  const SeedSpec root(seed);
  auto config = [&](DiscrepancyKind kind, std::uint64_t label) {
    EstimatorConfig cfg;
    cfg.replicates = replicates;
    cfg.discrepancy = kind;
    cfg.seed = root.child(label);
    return cfg;
  };
  AppendixFResult out;
  out.model1_exact_nll =
      estimate_p_ppc(model1, observed, test, config(DiscrepancyKind::exact_nll, 1));
  out.model2_exact_nll =
      estimate_p_ppc(model2, observed, test, config(DiscrepancyKind::exact_nll, 2));
  out.model1_nlml = estimate_p_gpc_lite(model1, observed, test, config(DiscrepancyKind::nlml, 3));
  out.model2_nlml = estimate_p_gpc_lite(model2, observed, test, config(DiscrepancyKind::nlml, 4));
  return out;
}

}  // namespace iclcheck
