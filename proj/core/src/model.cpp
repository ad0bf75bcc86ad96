#include "iclcheck/model.hpp"

namespace iclcheck {

std::vector<Example> Cgm::sample_independent(const Dataset& context, std::size_t count,
                                             Stream& rng) const {
  std::vector<std::uint64_t> seeds(count);
  for (auto& s : seeds) s = rng.next_u64();
  return sample_with_seeds(context, seeds);
}

std::vector<Example> Cgm::sample_with_seeds(const Dataset& context,
                                            std::span<const std::uint64_t> seeds) const {
  std::vector<Example> out;
  out.reserve(seeds.size());
  for (const auto seed : seeds) out.push_back(sample_with_seed(context, seed, std::nullopt));
  return out;
}

std::vector<LogProb> Cgm::logprob_examples(std::span<const Example> xs,
                                           const Dataset& context) const {
  std::vector<LogProb> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(logprob_example(x, context));
  return out;
}

}  // namespace iclcheck
