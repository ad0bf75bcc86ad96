#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Core>

namespace iclcheck {

/// One query/response pair. Either numeric (vectors of finite reals) or
/// text (opaque strings scored by a remote model).
class Example {
 public:
  Example(std::vector<double> query, std::vector<double> response);

  static Example text(std::string query, std::string response);

  bool is_text() const noexcept { return text_.has_value(); }

  const std::vector<double>& query() const;
  const std::vector<double>& response() const;
  const std::string& query_text() const;
  const std::string& response_text() const;

  /// Scalar views for the one-dimensional tabular setting.
  double z() const { return query().front(); }
  double y() const { return response().front(); }

  /// d + r for numeric examples; text examples have no intrinsic count.
  std::size_t coordinate_count() const;

  friend bool operator==(const Example&, const Example&) = default;

 private:
  struct TextPayload {
    std::string query;
    std::string response;
    friend bool operator==(const TextPayload&, const TextPayload&) = default;
  };
  Example() = default;

  std::vector<double> query_;
  std::vector<double> response_;
  std::optional<TextPayload> text_;
};

enum class Provenance { observed, test, replicate, completion };

std::string_view to_string(Provenance p) noexcept;

/// Ordered, homogeneous sequence of examples.
///
/// A completion dataset remembers the length of the observed prefix it
/// extends.
class Dataset {
 public:
  explicit Dataset(Provenance provenance = Provenance::observed,
                   std::vector<Example> examples = {});

  /// Starts a completion whose first |observed| entries are `observed`.
  static Dataset completion_of(const Dataset& observed);

  void push_back(Example example);

  std::size_t size() const noexcept { return examples_.size(); }
  bool empty() const noexcept { return examples_.empty(); }
  const Example& operator[](std::size_t i) const { return examples_[i]; }
  auto begin() const noexcept { return examples_.begin(); }
  auto end() const noexcept { return examples_.end(); }
  std::span<const Example> examples() const noexcept { return examples_; }

  Provenance provenance() const noexcept { return provenance_; }
  /// Declared observed-prefix length n for completions; size() otherwise.
  std::size_t prefix_length() const noexcept {
    return provenance_ == Provenance::completion ? prefix_length_ : size();
  }

  /// First k examples, retagged.
  Dataset prefix(std::size_t k, Provenance provenance) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  void check_compatible(const Example& example) const;

  Provenance provenance_;
  std::vector<Example> examples_;
  std::size_t prefix_length_ = 0;
};

/// Closed query interval [lo, hi] with the uniform query density on it.
struct QueryDomain {
  double lo = -2.0;
  double hi = 2.0;

  void validate() const;
  bool contains(double z) const noexcept { return z >= lo && z <= hi; }
  double volume() const noexcept { return hi - lo; }
  double log_density() const;

  friend bool operator==(const QueryDomain&, const QueryDomain&) = default;
};

// Mean-function variants of an explanation.

/// c0 + c1 z + ... + cD z^D.
struct Polynomial {
  std::vector<double> coefficients;
};

/// Weight vector of the conjugate model, same basis as Polynomial.
struct ConjugateWeights {
  std::vector<double> weights;
};

struct ReluLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;     // out
};

/// Scalar-in, scalar-out feed-forward network; ReLU on all but the last layer.
struct ReluNetwork {
  std::vector<ReluLayer> layers;
};

/// Piecewise-linear interpolant through (grid[i], values[i]).
struct GridFunction {
  std::vector<double> grid;
  std::vector<double> values;
};

using MeanFunction =
    std::variant<Polynomial, ReluNetwork, GridFunction, ConjugateWeights>;

/// Latent task: a mean function plus Gaussian noise scale sigma > 0.
class Explanation {
 public:
  Explanation(MeanFunction mean, double sigma);

  double mean(double z) const;
  double sigma() const noexcept { return sigma_; }
  const MeanFunction& mean_function() const noexcept { return mean_; }

 private:
  MeanFunction mean_;
  double sigma_;
};

double evaluate_polynomial(std::span<const double> coefficients, double z) noexcept;

/// Monte Carlo p-value: value = sum(indicators) / M exactly.
struct PValueEstimate {
  double value = 0.0;
  std::size_t replicates = 0;
  std::vector<std::uint8_t> indicators;
  double standard_error = 0.0;

  static PValueEstimate from_indicators(std::vector<std::uint8_t> indicators);

  friend bool operator==(const PValueEstimate&, const PValueEstimate&) = default;
};

enum class DiscrepancyKind { nlml, generative_nll, exact_nll };

std::string_view to_string(DiscrepancyKind kind) noexcept;

/// Total log probability of one example plus the number of coordinates
/// (or tokens) it spans.
struct LogProb {
  double total = 0.0;
  std::size_t coords = 1;
};

}  // namespace iclcheck
