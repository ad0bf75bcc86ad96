#pragma once

#include <span>

#include "iclcheck/model.hpp"
#include "iclcheck/types.hpp"

namespace iclcheck {

/// -(1/|x|) sum_i log p_i / c_i. Throws NumericError naming the example
/// index on a non-finite term, PreconditionError on empty input.
double mean_per_coordinate_nll(std::span<const LogProb> terms);

/// Per-coordinate negative log marginal likelihood g(x, context). Each
/// example is scored against the same context.
double nlml_discrepancy(const Dataset& x, const Dataset& context, const Cgm& model);

/// Same form as nlml_discrepancy, conditioned on a completion D^N.
double generative_nll_discrepancy(const Dataset& x, const Dataset& completion,
                                  const Cgm& model);

/// Per-coordinate negative log likelihood g(x, f) under a reference model.
double exact_nll_discrepancy(const Dataset& x, const Explanation& f, const ReferenceModel& ref);

}  // namespace iclcheck
