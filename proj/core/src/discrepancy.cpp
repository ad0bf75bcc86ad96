#include "iclcheck/discrepancy.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "iclcheck/errors.hpp"

namespace iclcheck {

double mean_per_coordinate_nll(std::span<const LogProb> terms) {
  if (terms.empty()) throw PreconditionError("discrepancy of an empty dataset");
  double acc = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const LogProb& t = terms[i];
    if (!std::isfinite(t.total)) {
      throw NumericError("non-finite log probability for example " + std::to_string(i));
    }
    if (t.coords == 0) {
      throw PreconditionError("zero coordinate count for example " + std::to_string(i));
    }
    acc += t.total / static_cast<double>(t.coords);
  }
  return -acc / static_cast<double>(terms.size());
}

double nlml_discrepancy(const Dataset& x, const Dataset& context, const Cgm& model) {
  if (x.empty()) throw PreconditionError("nlml discrepancy of an empty dataset");
  const auto terms = model.logprob_examples(x.examples(), context);
  return mean_per_coordinate_nll(terms);
}

double generative_nll_discrepancy(const Dataset& x, const Dataset& completion, const Cgm& model) {
  if (completion.provenance() != Provenance::completion) {
    throw PreconditionError("generative nll needs a completion dataset");
  }
  if (completion.size() < completion.prefix_length()) {
    throw PreconditionError("completion shorter than its declared observed prefix");
  }
  return nlml_discrepancy(x, completion, model);
}

double exact_nll_discrepancy(const Dataset& x, const Explanation& f, const ReferenceModel& ref) {
  if (x.empty()) throw PreconditionError("exact nll discrepancy of an empty dataset");
  std::vector<LogProb> terms;
  terms.reserve(x.size());
  for (const auto& e : x) terms.push_back({ref.log_likelihood(f, e), e.coordinate_count()});
  return mean_per_coordinate_nll(terms);
}

}  // namespace iclcheck
