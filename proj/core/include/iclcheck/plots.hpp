#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "iclcheck/experiment.hpp"

namespace iclcheck {

/// A results table read back from a run directory.
struct LoadedResults {
  ResultsTable table;
  std::string config_hash;
};

/// Parses results.csv, metrics.csv and metadata.json written by run_experiment.
LoadedResults load_results(const std::filesystem::path& results_dir);

/// Writes SVG plots into `plot_dir` and returns the written paths:
///   metrics_<method>_a<alpha>_b<N-n>_m<M>.svg  metric vs n, one per cell family
///   scatter_<method>_b<N-n>_m<M>.svg           RMSE vs p, colored by n
///   interpolation.svg                          p histograms per N-n, only when
///                                              nll rows and a ppc reference exist
/// Every plot carries the config hash in its footer.
std::vector<std::filesystem::path> emit_plots(const ResultsTable& table,
                                              const std::string& config_hash,
                                              const std::filesystem::path& plot_dir);

/// load_results followed by emit_plots into `<results_dir>/plots`.
std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& results_dir);

}  // namespace iclcheck
