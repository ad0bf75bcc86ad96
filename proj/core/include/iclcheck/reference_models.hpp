#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "iclcheck/model.hpp"
#include "iclcheck/random.hpp"
#include "iclcheck/types.hpp"

namespace iclcheck {

/// log N(y; mean, variance).
double log_normal_pdf(double y, double mean, double variance) noexcept;

/// Bayesian polynomial regression with known noise:
///   w ~ N(0, tau^2 I),  z ~ U[a, b],  y | z, w ~ N(phi(z)^T w, sigma^2)
/// with phi(z) = (1, z, ..., z^D).
class ConjugateModel final : public ReferenceModel {
 public:
  explicit ConjugateModel(int degree = 3, double tau = 2.0, double sigma = 0.25,
                          QueryDomain domain = {});

  int degree() const noexcept { return degree_; }
  Eigen::Index dimension() const noexcept { return degree_ + 1; }
  double tau() const noexcept { return tau_; }
  double sigma() const noexcept { return sigma_; }
  const QueryDomain& domain() const noexcept { return domain_; }

  Eigen::VectorXd features(double z) const;

  Explanation sample_posterior(const Dataset& observed, Stream& rng) const override;
  Dataset sample_likelihood(const Explanation& f, std::size_t count, Stream& rng) const override;
  double log_likelihood(const Explanation& f, const Example& x) const override;
  std::vector<LogProb> predictive_logprobs(std::span<const Example> xs,
                                           const Dataset& observed) const override;

  friend bool operator==(const ConjugateModel& a, const ConjugateModel& b) {
    return a.degree_ == b.degree_ && a.tau_ == b.tau_ && a.sigma_ == b.sigma_ &&
           a.domain_ == b.domain_;
  }

 private:
  int degree_;
  double tau_;
  double sigma_;
  QueryDomain domain_;
};

/// N(mean, covariance) over conjugate weights, tagged with the noise scale
/// of the model it came from.
class GaussianPosterior {
 public:
  GaussianPosterior(Eigen::VectorXd mean, Eigen::MatrixXd covariance, double noise_sigma);

  const Eigen::VectorXd& mean() const noexcept { return mean_; }
  const Eigen::MatrixXd& covariance() const noexcept { return covariance_; }
  /// Lower Cholesky factor of the covariance.
  const Eigen::MatrixXd& cholesky() const noexcept { return cholesky_; }
  double noise_sigma() const noexcept { return noise_sigma_; }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd covariance_;
  Eigen::MatrixXd cholesky_;
  double noise_sigma_;
};

GaussianPosterior prior_posterior(const ConjugateModel& model);

/// Sigma_n = (Phi^T Phi / sigma^2 + I / tau^2)^-1, mu_n = Sigma_n Phi^T y / sigma^2.
GaussianPosterior fit_posterior(const ConjugateModel& model, const Dataset& data);

/// Conditions an existing posterior on more data (precision-form update).
GaussianPosterior update_posterior(const ConjugateModel& model, const GaussianPosterior& prior,
                                   const Dataset& data);

Explanation sample_posterior(const GaussianPosterior& posterior, Stream& rng);

/// `count` examples with z ~ U(domain), y ~ N(mean_f(z), sigma_f^2).
Dataset sample_likelihood(const Explanation& f, std::size_t count, const QueryDomain& domain,
                          Stream& rng);

/// log(1/|domain|) + log N(y; mean_f(z), sigma_f^2).
double log_likelihood(const Explanation& f, const Example& x, const QueryDomain& domain);

struct PredictiveMoments {
  double mean = 0.0;
  double variance = 0.0;
};

/// Response mean and variance of the posterior predictive at query z.
PredictiveMoments predictive_moments(const ConjugateModel& model,
                                     const GaussianPosterior& posterior, double z);

/// log(1/|domain|) + log N(y; phi^T mu_n, phi^T Sigma_n phi + sigma^2).
double posterior_predictive_logprob(const ConjugateModel& model,
                                    const GaussianPosterior& posterior, const Example& x);

// Task generators.

struct PolynomialTask {
  int degree = 3;
};

struct ReluTask {
  std::vector<int> widths{16, 16};
};

struct GpRbfTask {
  double length_scale = 0.3;
  std::size_t grid_points = 256;
};

struct TaskSpec {
  std::variant<PolynomialTask, ReluTask, GpRbfTask> kind = PolynomialTask{};
  double sigma = 0.25;
  QueryDomain domain{};

  void validate() const;
  std::string kind_name() const;
};

/// Draws a random explanation:
///  - polynomial: coefficients iid N(0, 1)
///  - relu: weights and biases iid N(0, 2 / fan_in)
///  - gp-rbf: exact GP draw on a uniform grid, linearly interpolated
Explanation generate_task(const TaskSpec& spec, Stream& rng);

/// Exact draw of a zero-mean, unit-amplitude RBF-kernel GP at `points`
/// (in the order given). Retries once with 1e-8 jitter if the kernel matrix
/// is not numerically positive definite.
std::vector<double> sample_rbf_gp(std::span<const double> points, double length_scale,
                                  Stream& rng);

Dataset sample_dataset(const TaskSpec& spec, const Explanation& f, std::size_t n, Stream& rng);

}  // namespace iclcheck
