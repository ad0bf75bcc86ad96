#include "iclcheck/types.hpp"

#include <algorithm>
#include <cmath>

#include "iclcheck/errors.hpp"

namespace iclcheck {

namespace {

void check_finite(const std::vector<double>& values, const char* what) {
  if (values.empty()) {
    throw PreconditionError(std::string("example ") + what + " must have dimension >= 1");
  }
  for (const double v : values) {
    if (!std::isfinite(v)) {
      throw PreconditionError(std::string("example ") + what + " has a non-finite coordinate");
    }
  }
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

}  // namespace

Example::Example(std::vector<double> query, std::vector<double> response)
    : query_(std::move(query)), response_(std::move(response)) {
  check_finite(query_, "query");
  check_finite(response_, "response");
}

Example Example::text(std::string query, std::string response) {
  Example out;
  out.text_ = TextPayload{std::move(query), std::move(response)};
  return out;
}

const std::vector<double>& Example::query() const {
  if (text_) throw PreconditionError("numeric query requested from a text example");
  return query_;
}

const std::vector<double>& Example::response() const {
  if (text_) throw PreconditionError("numeric response requested from a text example");
  return response_;
}

const std::string& Example::query_text() const {
  if (!text_) throw PreconditionError("text query requested from a numeric example");
  return text_->query;
}

const std::string& Example::response_text() const {
  if (!text_) throw PreconditionError("text response requested from a numeric example");
  return text_->response;
}

std::size_t Example::coordinate_count() const {
  if (text_) throw PreconditionError("text examples have no coordinate count");
  return query_.size() + response_.size();
}

std::string_view to_string(Provenance p) noexcept {
  switch (p) {
    case Provenance::observed: return "observed";
    case Provenance::test: return "test";
    case Provenance::replicate: return "replicate";
    case Provenance::completion: return "completion";
  }
  return "unknown";
}

Dataset::Dataset(Provenance provenance, std::vector<Example> examples)
    : provenance_(provenance) {
  examples_.reserve(examples.size());
  for (auto& e : examples) push_back(std::move(e));
  prefix_length_ = examples_.size();
}

Dataset Dataset::completion_of(const Dataset& observed) {
  Dataset out(Provenance::completion);
  out.examples_ = observed.examples_;
  out.prefix_length_ = observed.size();
  return out;
}

void Dataset::check_compatible(const Example& example) const {
  if (examples_.empty()) return;
  const Example& first = examples_.front();
  if (first.is_text() != example.is_text()) {
    throw PreconditionError("dataset mixes text and numeric examples");
  }
  if (!example.is_text() && (first.query().size() != example.query().size() ||
                             first.response().size() != example.response().size())) {
    throw PreconditionError("dataset examples have inconsistent dimensions");
  }
}

void Dataset::push_back(Example example) {
  check_compatible(example);
  examples_.push_back(std::move(example));
}

Dataset Dataset::prefix(std::size_t k, Provenance provenance) const {
  if (k > size()) throw PreconditionError("prefix longer than dataset");
  return Dataset(provenance, std::vector<Example>(examples_.begin(), examples_.begin() + k));
}

void QueryDomain::validate() const {
  if (!(std::isfinite(lo) && std::isfinite(hi) && lo < hi)) {
    throw ConfigurationError("query domain requires finite lo < hi");
  }
}

double QueryDomain::log_density() const { return -std::log(volume()); }

double evaluate_polynomial(std::span<const double> coefficients, double z) noexcept {
  double acc = 0.0;
  for (auto it = coefficients.rbegin(); it != coefficients.rend(); ++it) acc = acc * z + *it;
  return acc;
}

Explanation::Explanation(MeanFunction mean, double sigma) : mean_(std::move(mean)), sigma_(sigma) {
  if (!(sigma_ > 0.0) || !std::isfinite(sigma_)) {
    throw PreconditionError("explanation noise scale must be positive and finite");
  }
  if (const auto* g = std::get_if<GridFunction>(&mean_)) {
    if (g->grid.size() < 2 || g->grid.size() != g->values.size()) {
      throw PreconditionError("grid function needs >= 2 points and matching values");
    }
    for (std::size_t i = 1; i < g->grid.size(); ++i) {
      if (!(g->grid[i] > g->grid[i - 1])) {
        throw PreconditionError("grid function points must be strictly increasing");
      }
    }
  }
  if (const auto* net = std::get_if<ReluNetwork>(&mean_)) {
    if (net->layers.empty()) throw PreconditionError("relu network has no layers");
    Eigen::Index width = 1;
    for (const auto& layer : net->layers) {
      if (layer.weights.cols() != width || layer.bias.size() != layer.weights.rows()) {
        throw PreconditionError("relu network layer shapes do not chain");
      }
      width = layer.weights.rows();
    }
    if (width != 1) throw PreconditionError("relu network must have a scalar output");
  }
}

double Explanation::mean(double z) const {
  return std::visit(
      Overloaded{
          [z](const Polynomial& p) { return evaluate_polynomial(p.coefficients, z); },
          [z](const ConjugateWeights& w) { return evaluate_polynomial(w.weights, z); },
          [z](const ReluNetwork& net) {
            Eigen::VectorXd h(1);
            h(0) = z;
            for (std::size_t l = 0; l < net.layers.size(); ++l) {
              h = net.layers[l].weights * h + net.layers[l].bias;
              if (l + 1 < net.layers.size()) h = h.cwiseMax(0.0);
            }
            return h(0);
          },
          [z](const GridFunction& g) {
            if (z < g.grid.front() || z > g.grid.back()) {
              throw DomainError("query " + std::to_string(z) + " outside grid function support");
            }
            auto it = std::upper_bound(g.grid.begin(), g.grid.end(), z);
            if (it == g.grid.end()) return g.values.back();
            const auto hi = static_cast<std::size_t>(it - g.grid.begin());
            const std::size_t lo = hi - 1;
            const double t = (z - g.grid[lo]) / (g.grid[hi] - g.grid[lo]);
            return (1.0 - t) * g.values[lo] + t * g.values[hi];
          },
      },
      mean_);
}

PValueEstimate PValueEstimate::from_indicators(std::vector<std::uint8_t> indicators) {
  if (indicators.empty()) throw PreconditionError("p-value estimate needs at least one replicate");
  PValueEstimate out;
  std::size_t hits = 0;
  for (const auto b : indicators) {
    if (b > 1) throw PreconditionError("indicator draws must be 0 or 1");
    hits += b;
  }
  out.replicates = indicators.size();
  out.value = static_cast<double>(hits) / static_cast<double>(out.replicates);
  out.standard_error =
      std::sqrt(out.value * (1.0 - out.value) / static_cast<double>(out.replicates));
  out.indicators = std::move(indicators);
  return out;
}

std::string_view to_string(DiscrepancyKind kind) noexcept {
  switch (kind) {
    case DiscrepancyKind::nlml: return "nlml";
    case DiscrepancyKind::generative_nll: return "generative_nll";
    case DiscrepancyKind::exact_nll: return "exact_nll";
  }
  return "unknown";
}

}  // namespace iclcheck
