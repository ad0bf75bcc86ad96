#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include <Eigen/LU>
#include <gtest/gtest.h>

#include "iclcheck/cgm_adapters.hpp"
#include "iclcheck/discrepancy.hpp"
#include "iclcheck/errors.hpp"
#include "iclcheck/random.hpp"
#include "iclcheck/reference_models.hpp"
#include "iclcheck/types.hpp"
#include "support/stubs.hpp"

namespace iclcheck {
namespace {

// Returns fixed log probabilities in order, cycling.
class ScriptedCgm final : public Cgm {
 public:
  explicit ScriptedCgm(std::vector<double> totals) : totals_(std::move(totals)) {}
  Example sample_with_seed(const Dataset&, std::uint64_t,
                           std::optional<std::span<const double>>) const override {
    return Example({0.0}, {0.0});
  }
  LogProb logprob_example(const Example& x, const Dataset&) const override {
    return {totals_.at(static_cast<std::size_t>(x.z())), x.coordinate_count()};
  }

 private:
  std::vector<double> totals_;
};

TEST(Example, RejectsNonFiniteCoordinates) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_THROW(Example({nan}, {0.0}), PreconditionError);
  EXPECT_THROW(Example({0.0}, {inf}), PreconditionError);
  EXPECT_THROW(Example({}, {0.0}), PreconditionError);
  EXPECT_THROW(Example({0.0}, {}), PreconditionError);
  EXPECT_NO_THROW(Example({0.0, 1.0}, {2.0}));
}

TEST(Example, CoordinateCountIsQueryPlusResponse) {
  EXPECT_EQ(Example({0.0}, {1.0}).coordinate_count(), 2u);
  EXPECT_EQ(Example({0.0, 1.0, 2.0}, {1.0, 2.0}).coordinate_count(), 5u);
  EXPECT_THROW(Example::text("q", "r").coordinate_count(), PreconditionError);
}

TEST(Dataset, EnforcesHomogeneousDimensions) {
  Dataset d;
  d.push_back(Example({0.0}, {1.0}));
  EXPECT_THROW(d.push_back(Example({0.0, 1.0}, {1.0})), PreconditionError);
  EXPECT_THROW(d.push_back(Example::text("a", "b")), PreconditionError);
  EXPECT_EQ(d.size(), 1u);
}

TEST(Dataset, CompletionKeepsObservedPrefix) {
  Dataset observed(Provenance::observed, {Example({0.1}, {1.0}), Example({0.2}, {2.0})});
  Dataset completion = Dataset::completion_of(observed);
  EXPECT_EQ(completion.provenance(), Provenance::completion);
  EXPECT_EQ(completion.prefix_length(), 2u);
  completion.push_back(Example({0.3}, {3.0}));
  EXPECT_EQ(completion.size(), 3u);
  EXPECT_EQ(completion.prefix_length(), 2u);
  EXPECT_EQ(completion[0], observed[0]);
  EXPECT_EQ(completion[1], observed[1]);
}

TEST(Dataset, PrefixRetags) {
  Dataset d(Provenance::observed, {Example({0.1}, {1.0}), Example({0.2}, {2.0})});
  const Dataset p = d.prefix(1, Provenance::test);
  EXPECT_EQ(p.size(), 1u);
  EXPECT_EQ(p.provenance(), Provenance::test);
  EXPECT_THROW(d.prefix(3, Provenance::test), PreconditionError);
}

TEST(PValueEstimate, ValueAndStandardErrorFromIndicators) {
  const auto p = PValueEstimate::from_indicators({1, 0, 1, 1});
  EXPECT_EQ(p.replicates, 4u);
  EXPECT_EQ(p.value, 0.75);
  EXPECT_DOUBLE_EQ(p.standard_error, std::sqrt(0.75 * 0.25 / 4.0));
  const auto single = PValueEstimate::from_indicators({1});
  EXPECT_EQ(single.value, 1.0);
  EXPECT_EQ(single.standard_error, 0.0);
  EXPECT_THROW(PValueEstimate::from_indicators({}), PreconditionError);
  EXPECT_THROW(PValueEstimate::from_indicators({2}), PreconditionError);
}

TEST(Explanation, Invariants) {
  EXPECT_THROW(Explanation(Polynomial{{1.0}}, 0.0), PreconditionError);
  EXPECT_THROW(Explanation(GridFunction{{0.0, 0.0}, {1.0, 2.0}}, 1.0), PreconditionError);
  const Explanation g(GridFunction{{-2.0, 0.0, 2.0}, {0.0, 2.0, 0.0}}, 1.0);
  EXPECT_DOUBLE_EQ(g.mean(-1.0), 1.0);
  EXPECT_DOUBLE_EQ(g.mean(0.5), 1.5);
  EXPECT_THROW(g.mean(2.5), DomainError);
  const Explanation p(Polynomial{{1.0, 0.0, 2.0}}, 1.0);
  EXPECT_DOUBLE_EQ(p.mean(3.0), 19.0);
}

TEST(SeedSpec, PathsAreReproducibleAndDistinct) {
  const SeedSpec root(42);
  Stream a = root.child(1).child(2).stream();
  Stream b = root.child(1).child(2).stream();
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());

  std::set<std::uint64_t> keys;
  for (std::uint64_t i = 0; i < 64; ++i) {
    for (std::uint64_t j = 0; j < 64; ++j) keys.insert(root.child(i).child(j).key());
  }
  keys.insert(root.key());
  keys.insert(SeedSpec(43).child(1).child(2).key());
  EXPECT_EQ(keys.size(), 64u * 64u + 2u);
  // (1, 2) and (2, 1) are different paths.
  EXPECT_NE(root.child(1).child(2).key(), root.child(2).child(1).key());
}

TEST(Stream, UniformMomentsAndRange) {
  Stream s(7);
  double sum = 0.0;
  double sq = 0.0;
  constexpr int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = s.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    sq += u * u;
  }
  const double mean = sum / n;
  EXPECT_NEAR(mean, 0.5, 3.0 * std::sqrt(1.0 / 12.0 / n));
  EXPECT_NEAR(sq / n - mean * mean, 1.0 / 12.0, 0.002);
}

TEST(Stream, DifferentStreamsAreUncorrelated) {
  Stream a = SeedSpec(1).child(0).stream();
  Stream b = SeedSpec(1).child(1).stream();
  constexpr int n = 100000;
  double cross = 0.0;
  for (int i = 0; i < n; ++i) cross += (a.uniform01() - 0.5) * (b.uniform01() - 0.5);
  const double corr = cross / n * 12.0;
  EXPECT_LT(std::abs(corr), 4.0 / std::sqrt(static_cast<double>(n)));
}

TEST(MeanPerCoordinateNll, ErrorsNameTheExample) {
  EXPECT_THROW(mean_per_coordinate_nll({}), PreconditionError);
  const std::vector<LogProb> terms{{-1.0, 2}, {-std::numeric_limits<double>::infinity(), 2}};
  try {
    mean_per_coordinate_nll(terms);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("example 1"), std::string::npos);
  }
}

TEST(NlmlDiscrepancy, SingleExampleAverage) {
  const ScriptedCgm cgm({-2.0});
  const Dataset x(Provenance::replicate, {Example({0.0}, {0.0})});
  EXPECT_DOUBLE_EQ(nlml_discrepancy(x, Dataset{}, cgm), 1.0);
}

TEST(NlmlDiscrepancy, TwoIdenticalExamples) {
  const ScriptedCgm cgm({-1.0});
  const Dataset x(Provenance::replicate, {Example({0.0}, {0.0}), Example({0.0}, {0.0})});
  EXPECT_DOUBLE_EQ(nlml_discrepancy(x, Dataset{}, cgm), 0.5);
}

TEST(NlmlDiscrepancy, EmptyInputAndNonFiniteTerms) {
  const ScriptedCgm cgm({-1.0, std::numeric_limits<double>::quiet_NaN()});
  EXPECT_THROW(nlml_discrepancy(Dataset{}, Dataset{}, cgm), PreconditionError);
  const Dataset x(Provenance::replicate, {Example({0.0}, {0.0}), Example({1.0}, {0.0})});
  EXPECT_THROW(nlml_discrepancy(x, Dataset{}, cgm), NumericError);
}

TEST(NlmlDiscrepancy, MatchesClosedFormGaussianDensity) {
  const ConjugateModel model(3, 2.0, 0.25);
  const ExactBayesCgm cgm(model);
  Stream rng = SeedSpec(5).stream();
  const Explanation f(Polynomial{{0.3, -1.0, 0.2, 0.5}}, 0.25);
  const Dataset context = sample_likelihood(f, 20, model.domain(), rng);
  const Dataset x = sample_likelihood(f, 10, model.domain(), rng);

  // Oracle: normal equations solved directly, density written out by hand.
  Eigen::MatrixXd precision = Eigen::MatrixXd::Identity(4, 4) / 4.0;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(4);
  for (const auto& e : context) {
    Eigen::Vector4d phi(1.0, e.z(), e.z() * e.z(), e.z() * e.z() * e.z());
    precision += phi * phi.transpose() / 0.0625;
    rhs += phi * e.y() / 0.0625;
  }
  const Eigen::MatrixXd cov = precision.inverse();
  const Eigen::VectorXd mean = cov * rhs;
  double sum = 0.0;
  for (const auto& e : x) {
    Eigen::Vector4d phi(1.0, e.z(), e.z() * e.z(), e.z() * e.z() * e.z());
    const double m = phi.dot(mean);
    const double v = phi.dot(cov * phi) + 0.0625;
    const double logp = -std::log(4.0) - 0.5 * std::log(2.0 * std::numbers::pi * v) -
                        0.5 * (e.y() - m) * (e.y() - m) / v;
    sum += logp / 2.0;
  }
  EXPECT_NEAR(nlml_discrepancy(x, context, cgm), -sum / 10.0, 1e-10);
}

TEST(Discrepancies, DuplicatingExamplesLeavesValueUnchanged) {
  const ConjugateModel model;
  const ExactBayesCgm cgm(model);
  Stream rng = SeedSpec(6).stream();
  const Explanation f(Polynomial{{0.0, 1.0, 0.0, -0.3}}, 0.25);
  const Dataset context = sample_likelihood(f, 15, model.domain(), rng);
  const Dataset x = sample_likelihood(f, 5, model.domain(), rng);
  Dataset doubled(Provenance::replicate);
  for (const auto& e : x) {
    doubled.push_back(e);
    doubled.push_back(e);
  }
  EXPECT_NEAR(nlml_discrepancy(x, context, cgm), nlml_discrepancy(doubled, context, cgm), 1e-12);
  EXPECT_NEAR(exact_nll_discrepancy(x, f, model), exact_nll_discrepancy(doubled, f, model), 1e-12);
  Dataset completion = Dataset::completion_of(context);
  EXPECT_NEAR(generative_nll_discrepancy(x, completion, cgm),
              generative_nll_discrepancy(doubled, completion, cgm), 1e-12);
}

TEST(GenerativeNllDiscrepancy, DegenerateCompletionEqualsNlmlBitForBit) {
  const ConjugateModel model;
  const ExactBayesCgm cgm(model);
  Stream rng = SeedSpec(8).stream();
  const Explanation f(Polynomial{{1.0, 0.5, -0.5, 0.1}}, 0.25);
  const Dataset context = sample_likelihood(f, 12, model.domain(), rng);
  const Dataset x = sample_likelihood(f, 7, model.domain(), rng);
  const Dataset completion = Dataset::completion_of(context);
  EXPECT_EQ(generative_nll_discrepancy(x, completion, cgm), nlml_discrepancy(x, context, cgm));
  // Pure: repeated evaluation is identical.
  EXPECT_EQ(generative_nll_discrepancy(x, completion, cgm),
            generative_nll_discrepancy(x, completion, cgm));
}

TEST(GenerativeNllDiscrepancy, RequiresCompletion) {
  const testing::ConstantCgm cgm;
  const Dataset x(Provenance::replicate, {Example({0.0}, {0.0})});
  EXPECT_THROW(generative_nll_discrepancy(x, Dataset(Provenance::observed), cgm),
               PreconditionError);
  EXPECT_THROW(generative_nll_discrepancy(Dataset{}, Dataset::completion_of(Dataset{}), cgm),
               PreconditionError);
}

TEST(GenerativeNllDiscrepancy, LongCompletionApproachesExactNll) {
  const ConjugateModel model;
  const ExactBayesCgm cgm(model);
  const TaskSpec spec;
  double total_gap = 0.0;
  constexpr int tasks = 20;
  for (int t = 0; t < tasks; ++t) {
    const SeedSpec seed = SeedSpec(77).child(static_cast<std::uint64_t>(t));
    Stream task_rng = seed.child(0).stream();
    const Explanation f = generate_task(spec, task_rng);
    Stream data_rng = seed.child(1).stream();
    const Dataset observed = sample_dataset(spec, f, 100, data_rng);
    const Dataset x = sample_dataset(spec, f, 50, data_rng);
    Stream resample_rng = seed.child(2).stream();
    Dataset completion = Dataset::completion_of(observed);
    for (int i = 0; i < 100; ++i) completion.push_back(cgm.sample_example(completion, resample_rng));
    total_gap += generative_nll_discrepancy(x, completion, cgm) - exact_nll_discrepancy(x, f, model);
  }
  EXPECT_LT(std::abs(total_gap / tasks), 0.05);
}

TEST(ExactNllDiscrepancy, ModeDensity) {
  const ConjugateModel model(3, 2.0, 1.0);
  const double expected = 0.5 * (std::log(4.0) + 0.5 * std::log(2.0 * std::numbers::pi));
  const Explanation f(Polynomial{{0.5, 1.0}}, 1.0);
  const Dataset at_mode(Provenance::test, {Example({1.0}, {1.5})});
  EXPECT_NEAR(exact_nll_discrepancy(at_mode, f, model), expected, 1e-12);
  const Explanation zero(Polynomial{{0.0, 0.0, 0.0, 0.0}}, 1.0);
  const Dataset origin(Provenance::test, {Example({0.0}, {0.0})});
  EXPECT_NEAR(exact_nll_discrepancy(origin, zero, model), expected, 1e-12);
}

TEST(ExactNllDiscrepancy, OutsideDomain) {
  const ConjugateModel model;
  const Explanation f(Polynomial{{0.0}}, 1.0);
  const Dataset x(Provenance::test, {Example({2.5}, {0.0})});
  EXPECT_THROW(exact_nll_discrepancy(x, f, model), DomainError);
}

TEST(ExactNllDiscrepancy, ConvergesToAnalyticCrossEntropy) {
  for (const double sigma : {0.25, 1.0}) {
    const ConjugateModel model(3, 2.0, sigma);
    const Explanation f(Polynomial{{0.2, -0.4, 0.1, 0.3}}, sigma);
    const double analytic =
        0.5 * (2.0 * std::log(4.0) + std::log(2.0 * std::numbers::pi * sigma * sigma) + 1.0) / 2.0;

    // 100-example batch, and the spread of 1000 single-example values.
    Stream rng = SeedSpec(9).stream();
    const Dataset batch = sample_likelihood(f, 100, model.domain(), rng);
    // Per-example value is (log 4 + 0.5 log(2 pi sigma^2) + 0.5 chi2_1) / 2, whose sd is sqrt(0.5)/2.
    const double sd_single = std::sqrt(0.5) / 2.0;
    EXPECT_NEAR(exact_nll_discrepancy(batch, f, model), analytic, 3.0 * sd_single / 10.0);

    double sum = 0.0;
    double sq = 0.0;
    constexpr int draws = 1000;
    for (int i = 0; i < draws; ++i) {
      const Dataset one = sample_likelihood(f, 1, model.domain(), rng);
      const double g = exact_nll_discrepancy(one, f, model);
      sum += g;
      sq += g * g;
    }
    const double mean = sum / draws;
    const double se = std::sqrt((sq / draws - mean * mean) / draws);
    EXPECT_NEAR(mean, analytic, 3.0 * se);
  }
}

TEST(Discrepancies, ConstantStubGivesZero) {
  const testing::ConstantCgm cgm;
  const testing::ConstantReference ref;
  const Dataset x(Provenance::replicate, {Example({0.0}, {1.0}), Example({1.0}, {3.0})});
  EXPECT_EQ(nlml_discrepancy(x, Dataset{}, cgm), 0.0);
  EXPECT_EQ(exact_nll_discrepancy(x, Explanation(Polynomial{{0.0}}, 1.0), ref), 0.0);
}

}  // namespace
}  // namespace iclcheck
