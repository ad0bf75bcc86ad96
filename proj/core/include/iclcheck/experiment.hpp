#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "iclcheck/capability.hpp"
#include "iclcheck/reference_models.hpp"
#include "iclcheck/remote.hpp"

namespace iclcheck {

/// One family of generated tasks in a battery.
struct TaskGroup {
  TaskSpec spec;
  std::size_t count = 40;
  bool out_of_capability = false;  // ground-truth label, by construction
};

struct ExactBayesSelection {
  ConjugateModel model;
};

struct RemoteSelection {
  RemoteEndpoint endpoint;
};

using CgmSelection = std::variant<ExactBayesSelection, RemoteSelection>;

/// Which p-value a grid cell computes.
///  nll       generative predictive p-value, GenerativeNLL discrepancy
///  nlml      lite generative predictive p-value, NLML discrepancy
///  ppc-nll   posterior predictive p-value, ExactNLL (exact-Bayes CGM only)
///  ppc-nlml  posterior predictive p-value, NLML (exact-Bayes CGM only)
enum class PValueMethod { nll, nlml, ppc_nll, ppc_nlml };

std::string to_string(PValueMethod m);
PValueMethod parse_method(const std::string& s);

struct SweepGrid {
  std::vector<std::size_t> n{2, 10, 50, 200};
  std::vector<std::size_t> completion_budget{200};
  std::vector<std::size_t> replicates{40};
  std::vector<double> alpha{0.01, 0.05, 0.1, 0.2, 0.5};
  std::vector<PValueMethod> methods{PValueMethod::nll, PValueMethod::nlml};
};

struct ExperimentConfig {
  std::vector<TaskGroup> battery;
  CgmSelection cgm = ExactBayesSelection{ConjugateModel{}};
  SweepGrid grid;
  /// Replicates for ppc-* methods; the replicate grid is used when unset.
  std::optional<std::size_t> ppc_replicates;
  /// Test-set size; defaults to n for each cell.
  std::optional<std::size_t> test_size;
  std::size_t rmse_queries = 100;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  std::filesystem::path output_dir = "results";
  /// Raises every task group to full battery size (200 tasks per group).
  bool full = false;

  /// Default desk-scale battery: 40 cubic tasks (in) and 40 GP tasks (OOD).
  static ExperimentConfig desk_default();

  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& file);
  /// FNV-1a of the canonical JSON form, as 16 hex digits.
  std::string hash() const;
};

inline constexpr std::size_t kFullScaleTasksPerGroup = 200;

struct ResultRow {
  std::size_t task_id = 0;
  std::string kind;
  bool out_of_capability = false;
  std::size_t n = 0;
  std::size_t completion_budget = 0;
  std::size_t replicates = 0;
  double alpha = 0.0;
  PValueMethod method = PValueMethod::nll;
  double p = 0.0;
  double se = 0.0;
  bool decision = false;
  double rmse = 0.0;
  std::string seed;  // "master/label/label/..."
};

struct MetricsRow {
  std::size_t n = 0;
  std::size_t completion_budget = 0;
  std::size_t replicates = 0;
  double alpha = 0.0;
  PValueMethod method = PValueMethod::nll;
  std::size_t tasks = 0;
  MetricsReport report;
  double risk = 0.0;
};

struct TaskFailure {
  std::size_t task_id = 0;
  std::string message;
};

struct ResultsTable {
  std::vector<ResultRow> rows;
  std::vector<MetricsRow> metrics;
  std::vector<TaskFailure> failures;
  std::vector<double> task_seconds;
};

/// Column header of results.csv; stable across runs.
extern const char* const kResultsHeader;
extern const char* const kMetricsHeader;

/// Runs every (task, grid cell), writes results.csv, metrics.csv,
/// errors.jsonl, timings.csv and metadata.json into the output directory,
/// and returns the table. results.csv and metrics.csv depend only on the
/// config (not on the worker count or timing).
ResultsTable run_experiment(const ExperimentConfig& config);

/// Same computation without touching the filesystem.
ResultsTable compute_experiment(const ExperimentConfig& config);

/// Deterministic CSV renderings.
std::string render_results_csv(const ResultsTable& table);
std::string render_metrics_csv(const ResultsTable& table);

/// Shortest round-trip decimal form of a double.
std::string format_number(double v);

}  // namespace iclcheck
