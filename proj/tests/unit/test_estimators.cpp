#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "iclcheck/cgm_adapters.hpp"
#include "iclcheck/errors.hpp"
#include "iclcheck/estimators.hpp"
#include "iclcheck/reference_models.hpp"
#include "support/stubs.hpp"

namespace iclcheck {
namespace {

using testing::phi_cdf;

struct Task {
  Explanation f;
  Dataset observed;
  Dataset test;
};

Task make_task(const TaskSpec& spec, const SeedSpec& seed, std::size_t n, std::size_t test_size) {
  Stream task_rng = seed.child(0).stream();
  Explanation f = generate_task(spec, task_rng);
  Stream data_rng = seed.child(1).stream();
  Dataset observed = sample_dataset(spec, f, n, data_rng);
  Dataset test = sample_dataset(spec, f, test_size, data_rng).prefix(test_size, Provenance::test);
  return {std::move(f), std::move(observed), std::move(test)};
}

EstimatorConfig config(std::size_t m, DiscrepancyKind kind, const SeedSpec& seed,
                       std::size_t budget = 200) {
  EstimatorConfig c;
  c.replicates = m;
  c.discrepancy = kind;
  c.seed = seed;
  c.completion_budget = budget;
  return c;
}

bool on_grid(const PValueEstimate& p) {
  const double scaled = p.value * static_cast<double>(p.replicates);
  return p.value >= 0.0 && p.value <= 1.0 && scaled == std::round(scaled) &&
         p.indicators.size() == p.replicates;
}

// Throws on the k-th sample it is asked for.
class FailingCgm final : public Cgm {
 public:
  explicit FailingCgm(std::size_t fail_at) : fail_at_(fail_at) {}
  Example sample_with_seed(const Dataset& context, std::uint64_t,
                           std::optional<std::span<const double>>) const override {
    if (context.size() >= fail_at_) throw NumericError("boom");
    return Example({0.0}, {0.0});
  }
  LogProb logprob_example(const Example& x, const Dataset&) const override {
    return {0.0, x.coordinate_count()};
  }

 private:
  std::size_t fail_at_;
};

// p = E_f[2 Phi(-|x - f| / s)] with f ~ N(0, v), by composite Simpson.
double tail_oracle(double x, double posterior_var, double likelihood_sd) {
  const double sd = std::sqrt(posterior_var);
  const double lo = -10.0 * sd;
  const double hi = 10.0 * sd;
  const int intervals = 200000;
  const double h = (hi - lo) / intervals;
  double sum = 0.0;
  for (int i = 0; i <= intervals; ++i) {
    const double f = lo + h * i;
    const double w = (i == 0 || i == intervals) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    const double density = std::exp(-0.5 * f * f / posterior_var) / (sd * std::sqrt(2.0 * std::numbers::pi));
    sum += w * density * 2.0 * phi_cdf(-std::abs(x - f) / likelihood_sd);
  }
  return sum * h / 3.0;
}

TEST(EstimatorConfig, Validation) {
  EXPECT_THROW(config(0, DiscrepancyKind::nlml, SeedSpec(1)).validate(), ConfigurationError);
  EXPECT_THROW(config(4, DiscrepancyKind::generative_nll, SeedSpec(1), 0).validate(),
               ConfigurationError);
  EXPECT_NO_THROW(config(4, DiscrepancyKind::generative_nll, SeedSpec(1), 1).validate());
}

TEST(Estimators, ConstantDiscrepancyGivesOne) {
  const testing::ConstantCgm cgm;
  const testing::ConstantReference ref;
  const Dataset observed(Provenance::observed, {Example({0.1}, {1.0}), Example({0.5}, {-1.0})});
  const Dataset test(Provenance::test, {Example({1.0}, {5.0})});
  for (const auto kind : {DiscrepancyKind::exact_nll, DiscrepancyKind::nlml}) {
    const auto p = estimate_p_ppc(ref, observed, test, config(50, kind, SeedSpec(1)));
    EXPECT_EQ(p.value, 1.0);
    EXPECT_EQ(p.standard_error, 0.0);
  }
  EXPECT_EQ(estimate_p_gpc(cgm, observed, test, config(50, DiscrepancyKind::generative_nll, SeedSpec(2), 5)).value,
            1.0);
  EXPECT_EQ(estimate_p_gpc_lite(cgm, observed, test, config(50, DiscrepancyKind::nlml, SeedSpec(3))).value,
            1.0);
}

TEST(Estimators, WrongDiscrepancyIsConfigurationError) {
  const ConjugateModel model;
  const ExactBayesCgm cgm(model);
  const Task t = make_task(TaskSpec{}, SeedSpec(5), 10, 10);
  EXPECT_THROW(estimate_p_ppc(model, t.observed, t.test, config(4, DiscrepancyKind::generative_nll, SeedSpec(1))),
               ConfigurationError);
  EXPECT_THROW(estimate_p_gpc(cgm, t.observed, t.test, config(4, DiscrepancyKind::nlml, SeedSpec(1))),
               ConfigurationError);
  EXPECT_THROW(estimate_p_gpc_lite(cgm, t.observed, t.test, config(4, DiscrepancyKind::exact_nll, SeedSpec(1))),
               ConfigurationError);
}

TEST(Estimators, EmptyInputsArePreconditionErrors) {
  const ConjugateModel model;
  const ExactBayesCgm cgm(model);
  const Task t = make_task(TaskSpec{}, SeedSpec(5), 10, 10);
  const Dataset empty_test(Provenance::test);
  EXPECT_THROW(estimate_p_ppc(model, t.observed, empty_test, config(4, DiscrepancyKind::nlml, SeedSpec(1))),
               PreconditionError);
  EXPECT_THROW(estimate_p_gpc_lite(cgm, Dataset{}, t.test, config(4, DiscrepancyKind::nlml, SeedSpec(1))),
               PreconditionError);
}

TEST(Estimators, ValuesLieOnTheReplicateGrid) {
  const ConjugateModel model;
  const ExactBayesCgm cgm(model);
  TaskSpec ood;
  ood.kind = GpRbfTask{};
  for (std::uint64_t s = 0; s < 6; ++s) {
    const Task t = make_task(s % 2 ? ood : TaskSpec{}, SeedSpec(10).child(s), 15, 15);
    for (const std::size_t m : {1u, 7u, 30u}) {
      const SeedSpec seed = SeedSpec(11).child(s).child(m);
      const auto a = estimate_p_ppc(model, t.observed, t.test, config(m, DiscrepancyKind::exact_nll, seed));
      const auto b = estimate_p_ppc(model, t.observed, t.test, config(m, DiscrepancyKind::nlml, seed));
      const auto c = estimate_p_gpc(cgm, t.observed, t.test, config(m, DiscrepancyKind::generative_nll, seed, 5));
      const auto d = estimate_p_gpc_lite(cgm, t.observed, t.test, config(m, DiscrepancyKind::nlml, seed));
      for (const auto& p : {a, b, c, d}) {
        EXPECT_TRUE(on_grid(p)) << p.value << " M=" << m;
        if (m == 1) EXPECT_EQ(p.standard_error, 0.0);
      }
    }
  }
}

TEST(Estimators, SameSeedSameIndicators) {
  const ConjugateModel model;
  const ExactBayesCgm cgm(model);
  const Task t = make_task(TaskSpec{}, SeedSpec(12), 20, 20);
  const auto cfg_g = config(25, DiscrepancyKind::generative_nll, SeedSpec(99), 30);
  EXPECT_EQ(estimate_p_gpc(cgm, t.observed, t.test, cfg_g), estimate_p_gpc(cgm, t.observed, t.test, cfg_g));
  const auto cfg_l = config(25, DiscrepancyKind::nlml, SeedSpec(99));
  EXPECT_EQ(estimate_p_gpc_lite(cgm, t.observed, t.test, cfg_l),
            estimate_p_gpc_lite(cgm, t.observed, t.test, cfg_l));
  const auto cfg_p = config(25, DiscrepancyKind::exact_nll, SeedSpec(99));
  EXPECT_EQ(estimate_p_ppc(model, t.observed, t.test, cfg_p), estimate_p_ppc(model, t.observed, t.test, cfg_p));
}

TEST(PredictiveResample, ZeroStepsReturnsObserved) {
  const ExactBayesCgm cgm{ConjugateModel{}};
  const Task t = make_task(TaskSpec{}, SeedSpec(13), 12, 1);
  Stream rng(1);
  const Dataset completion = predictive_resample(cgm, t.observed, t.observed.size(), rng);
  EXPECT_EQ(completion.size(), t.observed.size());
  EXPECT_EQ(completion.prefix_length(), t.observed.size());
  for (std::size_t i = 0; i < completion.size(); ++i) EXPECT_EQ(completion[i], t.observed[i]);
  EXPECT_THROW(predictive_resample(cgm, t.observed, 5, rng), PreconditionError);
}

TEST(PredictiveResample, PosteriorContracts) {
  const ConjugateModel model;
  const ExactBayesCgm cgm(model);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Task t = make_task(TaskSpec{}, SeedSpec(14).child(s), 20, 1);
    Stream rng = SeedSpec(15).child(s).stream();
    const Dataset completion = predictive_resample(cgm, t.observed, 220, rng);
    ASSERT_EQ(completion.size(), 220u);
    EXPECT_EQ(completion.provenance(), Provenance::completion);
    for (std::size_t i = 0; i < t.observed.size(); ++i) EXPECT_EQ(completion[i], t.observed[i]);
    EXPECT_LT(fit_posterior(model, completion).covariance().trace(),
              fit_posterior(model, t.observed).covariance().trace());
  }
}

TEST(PredictiveResample, DistinctStreamsDiffer) {
  const ExactBayesCgm cgm{ConjugateModel{}};
  const Task t = make_task(TaskSpec{}, SeedSpec(16), 10, 1);
  Stream a = SeedSpec(17).child(0).stream();
  Stream b = SeedSpec(17).child(1).stream();
  const Dataset ca = predictive_resample(cgm, t.observed, 15, a);
  const Dataset cb = predictive_resample(cgm, t.observed, 15, b);
  for (std::size_t i = 10; i < 15; ++i) EXPECT_NE(ca[i], cb[i]);
}

TEST(PredictiveResample, FailureNamesTheStep) {
  const FailingCgm cgm(13);
  const Task t = make_task(TaskSpec{}, SeedSpec(18), 10, 1);
  Stream rng(1);
  try {
    predictive_resample(cgm, t.observed, 20, rng);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("step 13"), std::string::npos) << e.what();
  }
}

TEST(EstimatePGpc, TabularConfigurationIsFast) {
  const ExactBayesCgm cgm{ConjugateModel{}};
  const Task t = make_task(TaskSpec{}, SeedSpec(19), 200, 200);
  const auto start = std::chrono::steady_clock::now();
  const auto p = estimate_p_gpc(cgm, t.observed, t.test, config(40, DiscrepancyKind::generative_nll, SeedSpec(20), 200));
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_TRUE(on_grid(p));
  EXPECT_EQ(p.replicates, 40u);
  EXPECT_LT(seconds, 60.0);
}

TEST(EstimatePGpc, MinimalBudget) {
  const ExactBayesCgm cgm{ConjugateModel{}};
  const Task t = make_task(TaskSpec{}, SeedSpec(21), 10, 10);
  const auto p = estimate_p_gpc(cgm, t.observed, t.test, config(20, DiscrepancyKind::generative_nll, SeedSpec(22), 1));
  EXPECT_TRUE(on_grid(p));
}

TEST(EstimatePGpc, ApproachesExactNllPpcWithLargeBudget) {
  const ConjugateModel model;
  const ExactBayesCgm cgm(model);
  double gap = 0.0;
  constexpr int tasks = 20;
  for (int i = 0; i < tasks; ++i) {
    const SeedSpec seed = SeedSpec(23).child(static_cast<std::uint64_t>(i));
    const Task t = make_task(TaskSpec{}, seed, 50, 50);
    const double reference =
        estimate_p_ppc(model, t.observed, t.test, config(10000, DiscrepancyKind::exact_nll, seed.child(2))).value;
    const double gpc =
        estimate_p_gpc(cgm, t.observed, t.test, config(200, DiscrepancyKind::generative_nll, seed.child(3), 100)).value;
    gap += std::abs(gpc - reference);
  }
  EXPECT_LT(gap / tasks, 0.1);
}

TEST(EstimatePGpcLite, SingleReplicate) {
  const ExactBayesCgm cgm{ConjugateModel{}};
  const Task t = make_task(TaskSpec{}, SeedSpec(24), 10, 10);
  const auto p = estimate_p_gpc_lite(cgm, t.observed, t.test, config(1, DiscrepancyKind::nlml, SeedSpec(25)));
  EXPECT_TRUE(p.value == 0.0 || p.value == 1.0);
  EXPECT_EQ(p.standard_error, 0.0);
}

TEST(EstimatePGpcLite, AgreesWithNlmlPpc) {
  const ConjugateModel model;
  const ExactBayesCgm cgm(model);
  int agree = 0;
  constexpr int tasks = 20;
  for (int i = 0; i < tasks; ++i) {
    const SeedSpec seed = SeedSpec(26).child(static_cast<std::uint64_t>(i));
    const Task t = make_task(TaskSpec{}, seed, 30, 30);
    const auto lite = estimate_p_gpc_lite(cgm, t.observed, t.test, config(400, DiscrepancyKind::nlml, seed.child(2)));
    const auto ppc = estimate_p_ppc(model, t.observed, t.test, config(400, DiscrepancyKind::nlml, seed.child(3)));
    const double combined = std::hypot(lite.standard_error, ppc.standard_error);
    if (std::abs(lite.value - ppc.value) <= 2.0 * combined) ++agree;
  }
  EXPECT_GE(agree, 18);
}

TEST(EstimatePPpc, WellSpecifiedExactNllBand) {
  // Fixed from one run of the same 100 tasks at M = 1e5: central 90% of the
  // reference p-values is [0.013, 0.873], median 0.327.
  constexpr double kLow = 0.0;
  constexpr double kHigh = 0.9;
  constexpr double kReferenceMedian = 0.327;
  std::vector<double> values;
  const ConjugateModel model;
  int inside = 0;
  constexpr int runs = 100;
  for (int i = 0; i < runs; ++i) {
    const SeedSpec seed = SeedSpec(5000).child(static_cast<std::uint64_t>(i));
    Stream task_rng = seed.child(0).stream();
    const Explanation f = model.sample_posterior(Dataset{}, task_rng);
    Stream data_rng = seed.child(1).stream();
    const Dataset observed = model.sample_likelihood(f, 100, data_rng).prefix(100, Provenance::observed);
    const Dataset test = model.sample_likelihood(f, 100, data_rng).prefix(100, Provenance::test);
    const double p =
        estimate_p_ppc(model, observed, test, config(400, DiscrepancyKind::exact_nll, seed.child(3))).value;
    if (p >= kLow && p <= kHigh) ++inside;
    values.push_back(p);
  }
  EXPECT_GE(inside, 90);
  std::nth_element(values.begin(), values.begin() + runs / 2, values.end());
  EXPECT_NEAR(values[runs / 2], kReferenceMedian, 0.05);
}

TEST(EstimatePPpc, MisspecifiedDegreeIsDetected) {
  const ConjugateModel linear(1);
  int detected = 0;
  constexpr int tasks = 50;
  for (int i = 0; i < tasks; ++i) {
    const SeedSpec seed = SeedSpec(27).child(static_cast<std::uint64_t>(i));
    const Task t = make_task(TaskSpec{}, seed, 100, 100);
    const auto p = estimate_p_ppc(linear, t.observed, t.test, config(400, DiscrepancyKind::exact_nll, seed.child(2)));
    if (p.value < 0.05) ++detected;
  }
  EXPECT_GE(detected, 40);
}

TEST(TwoModelExample, ClosedFormOracles) {
  const AppendixFResult r = appendix_f_pvalues(100000);
  const double model1 = tail_oracle(kAppendixFTestPoint, 1.0, 0.01);
  const double model2 = tail_oracle(kAppendixFTestPoint, 1e-4, 1.0);
  EXPECT_NEAR(model1, 0.005618009, 1e-6);
  EXPECT_NEAR(model2, 2.0 * phi_cdf(-0.5), 1e-4);
  EXPECT_NEAR(r.model1_exact_nll.value, model1, 3.0 * r.model1_exact_nll.standard_error);
  EXPECT_NEAR(r.model2_exact_nll.value, model2, 3.0 * r.model2_exact_nll.standard_error);
  EXPECT_LT(r.model1_exact_nll.value, r.model2_exact_nll.value);

  const double nlml = 2.0 * phi_cdf(-0.5 / std::sqrt(1.0001));
  EXPECT_NEAR(r.model1_nlml.value, nlml, 3.0 * r.model1_nlml.standard_error);
  EXPECT_NEAR(r.model2_nlml.value, nlml, 3.0 * r.model2_nlml.standard_error);
}

TEST(TwoModelExample, ModerateReplicateCount) {
  const AppendixFResult r = appendix_f_pvalues(10000, 7);
  EXPECT_LT(r.model1_exact_nll.value, 0.05);
  const double combined = std::hypot(r.model1_nlml.standard_error, r.model2_nlml.standard_error);
  EXPECT_LE(std::abs(r.model1_nlml.value - r.model2_nlml.value), 3.0 * combined);
  EXPECT_THROW(appendix_f_pvalues(999), PreconditionError);
}

TEST(ScalarGaussianModel, LiteMatchesPpcUnderNlml) {
  const ScalarGaussianModel model(0.0, 1.0, 1e-4);
  const Dataset observed(Provenance::observed, {ScalarGaussianModel::observation(0.0)});
  const Dataset test(Provenance::test, {ScalarGaussianModel::observation(0.5)});
  const auto lite = estimate_p_gpc_lite(model, observed, test, config(10000, DiscrepancyKind::nlml, SeedSpec(28)));
  const auto ppc = estimate_p_ppc(model, observed, test, config(10000, DiscrepancyKind::nlml, SeedSpec(29)));
  EXPECT_LE(std::abs(lite.value - ppc.value), 3.0 * std::hypot(lite.standard_error, ppc.standard_error));
}

}  // namespace
}  // namespace iclcheck
