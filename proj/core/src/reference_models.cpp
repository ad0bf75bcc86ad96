#include "iclcheck/reference_models.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Cholesky>

#include "iclcheck/errors.hpp"

namespace iclcheck {

namespace {

void require_scalar(const Example& x) {
  if (x.is_text() || x.query().size() != 1 || x.response().size() != 1) {
    throw PreconditionError("reference models need scalar numeric queries and responses");
  }
}

void require_in_domain(double z, const QueryDomain& domain) {
  if (!domain.contains(z)) {
    throw DomainError("query " + std::to_string(z) + " outside domain [" +
                      std::to_string(domain.lo) + ", " + std::to_string(domain.hi) + "]");
  }
}

// Precision-form sufficient statistics: A = Phi^T Phi / sigma^2, b = Phi^T y / sigma^2.
void accumulate(const ConjugateModel& model, const Dataset& data, Eigen::MatrixXd& precision,
                Eigen::VectorXd& shift) {
  const double inv_var = 1.0 / (model.sigma() * model.sigma());
  Eigen::VectorXd phi(model.dimension());
  for (const auto& x : data) {
    require_scalar(x);
    double p = 1.0;
    for (Eigen::Index k = 0; k < phi.size(); ++k, p *= x.z()) phi(k) = p;
    precision.selfadjointView<Eigen::Lower>().rankUpdate(phi, inv_var);
    shift += phi * (x.y() * inv_var);
  }
  precision.triangularView<Eigen::StrictlyUpper>() =
      precision.triangularView<Eigen::StrictlyLower>().transpose();
}

GaussianPosterior solve(const Eigen::MatrixXd& precision, const Eigen::VectorXd& shift,
                        double sigma) {
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) {
    throw ConditioningError("posterior precision matrix is not positive definite");
  }
  const auto dim = precision.rows();
  Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(dim, dim));
  cov = 0.5 * (cov + cov.transpose()).eval();
  Eigen::VectorXd mean = llt.solve(shift);
  return GaussianPosterior(std::move(mean), std::move(cov), sigma);
}

}  // namespace

double log_normal_pdf(double y, double mean, double variance) noexcept {
  const double r = y - mean;
  return -0.5 * std::log(2.0 * std::numbers::pi * variance) - 0.5 * r * r / variance;
}

ConjugateModel::ConjugateModel(int degree, double tau, double sigma, QueryDomain domain)
    : degree_(degree), tau_(tau), sigma_(sigma), domain_(domain) {
  if (degree_ < 0) throw ConfigurationError("conjugate model degree must be >= 0");
  if (!(tau_ > 0.0) || !(sigma_ > 0.0)) {
    throw ConfigurationError("conjugate model needs tau > 0 and sigma > 0");
  }
  domain_.validate();
}

Eigen::VectorXd ConjugateModel::features(double z) const {
  Eigen::VectorXd phi(dimension());
  double p = 1.0;
  for (Eigen::Index k = 0; k < phi.size(); ++k, p *= z) phi(k) = p;
  return phi;
}

Explanation ConjugateModel::sample_posterior(const Dataset& observed, Stream& rng) const {
  return iclcheck::sample_posterior(fit_posterior(*this, observed), rng);
}

Dataset ConjugateModel::sample_likelihood(const Explanation& f, std::size_t count,
                                          Stream& rng) const {
  return iclcheck::sample_likelihood(f, count, domain_, rng);
}

double ConjugateModel::log_likelihood(const Explanation& f, const Example& x) const {
  return iclcheck::log_likelihood(f, x, domain_);
}

std::vector<LogProb> ConjugateModel::predictive_logprobs(std::span<const Example> xs,
                                                         const Dataset& observed) const {
  const GaussianPosterior posterior = fit_posterior(*this, observed);
  std::vector<LogProb> out;
  out.reserve(xs.size());
  for (const auto& x : xs) {
    out.push_back({posterior_predictive_logprob(*this, posterior, x), x.coordinate_count()});
  }
  return out;
}

GaussianPosterior::GaussianPosterior(Eigen::VectorXd mean, Eigen::MatrixXd covariance,
                                     double noise_sigma)
    : mean_(std::move(mean)), covariance_(std::move(covariance)), noise_sigma_(noise_sigma) {
  if (covariance_.rows() != covariance_.cols() || covariance_.rows() != mean_.size()) {
    throw PreconditionError("posterior mean and covariance shapes disagree");
  }
  if (!(noise_sigma_ > 0.0)) throw PreconditionError("posterior noise scale must be positive");
  if (!covariance_.isApprox(covariance_.transpose(), 1e-12)) {
    throw PreconditionError("posterior covariance is not symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(covariance_);
  if (llt.info() != Eigen::Success) {
    throw ConditioningError("posterior covariance is not positive definite");
  }
  cholesky_ = llt.matrixL();
}

GaussianPosterior prior_posterior(const ConjugateModel& model) {
  const auto dim = model.dimension();
  return GaussianPosterior(Eigen::VectorXd::Zero(dim),
                           model.tau() * model.tau() * Eigen::MatrixXd::Identity(dim, dim),
                           model.sigma());
}

GaussianPosterior fit_posterior(const ConjugateModel& model, const Dataset& data) {
  const auto dim = model.dimension();
  Eigen::MatrixXd precision =
      Eigen::MatrixXd::Identity(dim, dim) / (model.tau() * model.tau());
  Eigen::VectorXd shift = Eigen::VectorXd::Zero(dim);
  accumulate(model, data, precision, shift);
  return solve(precision, shift, model.sigma());
}

GaussianPosterior update_posterior(const ConjugateModel& model, const GaussianPosterior& prior,
                                   const Dataset& data) {
  Eigen::LLT<Eigen::MatrixXd> llt(prior.covariance());
  const auto dim = model.dimension();
  Eigen::MatrixXd precision = llt.solve(Eigen::MatrixXd::Identity(dim, dim));
  precision = 0.5 * (precision + precision.transpose()).eval();
  Eigen::VectorXd shift = precision * prior.mean();
  accumulate(model, data, precision, shift);
  return solve(precision, shift, model.sigma());
}

Explanation sample_posterior(const GaussianPosterior& posterior, Stream& rng) {
  Eigen::VectorXd eps(posterior.mean().size());
  for (auto& e : eps) e = rng.normal();
  const Eigen::VectorXd w = posterior.mean() + posterior.cholesky() * eps;
  return Explanation(ConjugateWeights{std::vector<double>(w.begin(), w.end())},
                     posterior.noise_sigma());
}

Dataset sample_likelihood(const Explanation& f, std::size_t count, const QueryDomain& domain,
                          Stream& rng) {
  std::vector<Example> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double z = rng.uniform(domain.lo, domain.hi);
    const double y = f.mean(z) + f.sigma() * rng.normal();
    out.emplace_back(std::vector<double>{z}, std::vector<double>{y});
  }
  return Dataset(Provenance::replicate, std::move(out));
}

double log_likelihood(const Explanation& f, const Example& x, const QueryDomain& domain) {
  require_scalar(x);
  require_in_domain(x.z(), domain);
  return domain.log_density() + log_normal_pdf(x.y(), f.mean(x.z()), f.sigma() * f.sigma());
}

PredictiveMoments predictive_moments(const ConjugateModel& model,
                                     const GaussianPosterior& posterior, double z) {
  const Eigen::VectorXd phi = model.features(z);
  return {phi.dot(posterior.mean()),
          phi.dot(posterior.covariance() * phi) + model.sigma() * model.sigma()};
}

double posterior_predictive_logprob(const ConjugateModel& model,
                                    const GaussianPosterior& posterior, const Example& x) {
  require_scalar(x);
  require_in_domain(x.z(), model.domain());
  const auto m = predictive_moments(model, posterior, x.z());
  return model.domain().log_density() + log_normal_pdf(x.y(), m.mean, m.variance);
}

void TaskSpec::validate() const {
  if (!(sigma > 0.0)) throw ConfigurationError("task noise scale must be positive");
  domain.validate();
  if (const auto* p = std::get_if<PolynomialTask>(&kind); p && p->degree < 0) {
    throw ConfigurationError("polynomial task degree must be >= 0");
  }
  if (const auto* r = std::get_if<ReluTask>(&kind)) {
    if (r->widths.empty()) throw ConfigurationError("relu task needs at least one hidden layer");
    for (const int w : r->widths) {
      if (w <= 0) throw ConfigurationError("relu task widths must be positive");
    }
  }
  if (const auto* g = std::get_if<GpRbfTask>(&kind)) {
    if (!(g->length_scale > 0.0)) throw ConfigurationError("gp-rbf length scale must be > 0");
    if (g->grid_points < 2) throw ConfigurationError("gp-rbf grid needs >= 2 points");
  }
}

std::string TaskSpec::kind_name() const {
  switch (kind.index()) {
    case 0: return "polynomial";
    case 1: return "relu";
    default: return "gp-rbf";
  }
}

std::vector<double> sample_rbf_gp(std::span<const double> points, double length_scale,
                                  Stream& rng) {
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd kernel(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = points[i] - points[j];
      kernel(i, j) = std::exp(-d * d / (2.0 * length_scale * length_scale));
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(kernel);
  if (llt.info() != Eigen::Success) {
    kernel.diagonal().array() += 1e-8;
    llt.compute(kernel);
    if (llt.info() != Eigen::Success) {
      throw ConditioningError("RBF kernel matrix not positive definite after jitter");
    }
  }
  Eigen::VectorXd eps(n);
  for (auto& e : eps) e = rng.normal();
  const Eigen::VectorXd values = llt.matrixL() * eps;
  return {values.begin(), values.end()};
}

Explanation generate_task(const TaskSpec& spec, Stream& rng) {
  spec.validate();
  if (const auto* p = std::get_if<PolynomialTask>(&spec.kind)) {
    std::vector<double> coeffs(static_cast<std::size_t>(p->degree) + 1);
    for (auto& c : coeffs) c = rng.normal();
    return Explanation(Polynomial{std::move(coeffs)}, spec.sigma);
  }
  if (const auto* r = std::get_if<ReluTask>(&spec.kind)) {
    ReluNetwork net;
    Eigen::Index fan_in = 1;
    std::vector<int> widths = r->widths;
    widths.push_back(1);
    for (const int width : widths) {
      const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
      ReluLayer layer{Eigen::MatrixXd(width, fan_in), Eigen::VectorXd(width)};
      for (auto& w : layer.weights.reshaped()) w = scale * rng.normal();
      for (auto& b : layer.bias) b = scale * rng.normal();
      net.layers.push_back(std::move(layer));
      fan_in = width;
    }
    return Explanation(std::move(net), spec.sigma);
  }
  const auto& g = std::get<GpRbfTask>(spec.kind);
  GridFunction grid;
  grid.grid.resize(g.grid_points);
  const double step = spec.domain.volume() / static_cast<double>(g.grid_points - 1);
  for (std::size_t i = 0; i < g.grid_points; ++i) {
    grid.grid[i] = spec.domain.lo + step * static_cast<double>(i);
  }
  grid.grid.back() = spec.domain.hi;
  grid.values = sample_rbf_gp(grid.grid, g.length_scale, rng);
  return Explanation(std::move(grid), spec.sigma);
}

Dataset sample_dataset(const TaskSpec& spec, const Explanation& f, std::size_t n, Stream& rng) {
  Dataset replicate = sample_likelihood(f, n, spec.domain, rng);
  return Dataset(Provenance::observed,
                 std::vector<Example>(replicate.begin(), replicate.end()));
}

}  // namespace iclcheck
