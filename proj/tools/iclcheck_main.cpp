#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "iclcheck/capability.hpp"
#include "iclcheck/cgm_adapters.hpp"
#include "iclcheck/errors.hpp"
#include "iclcheck/estimators.hpp"
#include "iclcheck/experiment.hpp"
#include "iclcheck/plots.hpp"
#include "iclcheck/remote.hpp"

namespace {

using namespace iclcheck;
using nlohmann::json;

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

/// Usage problems detected after flag parsing (bad --cgm spec, bad data file layout, ...).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Dataset read_numeric_dataset(const std::string& path, std::size_t query_dim, Provenance tag) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  Dataset out(tag);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::vector<double> values;
    std::string token;
    while (fields >> token) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(token, &used));
        if (used != token.size()) throw std::invalid_argument(token);
      } catch (const std::exception&) {
        throw UsageError(path + ":" + std::to_string(line_no) + ": not a number: " + token);
      }
    }
    if (values.empty()) continue;
    if (values.size() <= query_dim) {
      throw UsageError(path + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(query_dim) + " query values and at least one response");
    }
    std::vector<double> q(values.begin(), values.begin() + static_cast<long>(query_dim));
    std::vector<double> r(values.begin() + static_cast<long>(query_dim), values.end());
    try {
      out.push_back(Example(std::move(q), std::move(r)));
    } catch (const Error& e) {
      throw UsageError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

Dataset read_dataset(const std::string& path, std::size_t query_dim, Provenance tag) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  char first = 0;
  while (in.get(first) && std::isspace(static_cast<unsigned char>(first))) {
  }
  if (first == '[') {
    in.seekg(0);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw UsageError(path + ": invalid JSON: " + e.what());
    }
    try {
      return wire::dataset_from_json(j, path, tag);
    } catch (const ProtocolError& e) {
      throw UsageError(e.what());
    }
  }
  return read_numeric_dataset(path, query_dim, tag);
}

struct CgmChoice {
  std::optional<ConjugateModel> model;  // set for exact[:D]
  std::unique_ptr<Cgm> cgm;
};

CgmChoice parse_cgm(const std::string& spec, double tau, double sigma) {
  CgmChoice out;
  if (spec == "exact" || spec.rfind("exact:", 0) == 0) {
    int degree = 3;
    if (spec.size() > 6) {
      try {
        std::size_t used = 0;
        degree = std::stoi(spec.substr(6), &used);
        if (used != spec.size() - 6) throw std::invalid_argument(spec);
      } catch (const std::exception&) {
        throw UsageError("bad --cgm degree in '" + spec + "'");
      }
    }
    try {
      out.model.emplace(degree, tau, sigma);
    } catch (const ConfigurationError& e) {
      throw UsageError(e.what());
    }
    out.cgm = std::make_unique<ExactBayesCgm>(*out.model);
    return out;
  }
  if (spec.rfind("remote:", 0) == 0) {
    RemoteEndpoint ep;
    ep.base_address = spec.substr(7);
    if (ep.base_address.empty()) throw UsageError("--cgm remote: needs an address");
    if (const char* token = std::getenv(kTokenEnvVar)) ep.token = token;
    out.cgm = std::make_unique<RemoteCgm>(ep);
    return out;
  }
  throw UsageError("--cgm must be exact[:degree] or remote:<url>, got '" + spec + "'");
}

struct PValueArgs {
  std::string cgm = "exact:3";
  std::string data;
  std::string test;
  std::string alg = "gpc";
  std::string discrepancy = "nll";
  std::size_t replicates = 40;
  std::optional<std::size_t> total_length;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  std::size_t query_dim = 1;
  double tau = 2.0;
  double sigma = 0.25;
};

int cmd_pvalue(const PValueArgs& a) {
  const Dataset observed = read_dataset(a.data, a.query_dim, Provenance::observed);
  const Dataset test = read_dataset(a.test, a.query_dim, Provenance::test);
  if (observed.empty()) throw UsageError("--data has no examples");
  if (test.empty()) throw UsageError("--test has no examples");
  CgmChoice choice = parse_cgm(a.cgm, a.tau, a.sigma);

  EstimatorConfig cfg;
  cfg.replicates = a.replicates;
  cfg.seed = SeedSpec(a.seed);
  PValueEstimate p;
  if (a.alg == "ppc") {
    if (!choice.model) throw UsageError("--alg ppc needs an exact CGM");
    cfg.discrepancy = a.discrepancy == "nll" ? DiscrepancyKind::exact_nll : DiscrepancyKind::nlml;
    p = estimate_p_ppc(*choice.model, observed, test, cfg);
  } else if (a.alg == "gpc") {
    if (a.discrepancy != "nll") throw UsageError("--alg gpc takes --discrepancy nll");
    const std::size_t n = observed.size();
    const std::size_t total = a.total_length.value_or(n + 200);
    if (total <= n) throw UsageError("--N must exceed the number of observed examples");
    cfg.discrepancy = DiscrepancyKind::generative_nll;
    cfg.completion_budget = total - n;
    p = estimate_p_gpc(*choice.cgm, observed, test, cfg);
  } else {
    if (a.discrepancy != "nlml") throw UsageError("--alg gpc-lite takes --discrepancy nlml");
    cfg.discrepancy = DiscrepancyKind::nlml;
    p = estimate_p_gpc_lite(*choice.cgm, observed, test, cfg);
  }
  const CapabilityDecision d = decide(p, a.alpha);
  const json out = {{"p", p.value},
                    {"se", p.standard_error},
                    {"M", p.replicates},
                    {"alpha", a.alpha},
                    {"decision", d.out_of_capability ? "out-of-capability" : "in-capability"},
                    {"alg", a.alg},
                    {"discrepancy", a.discrepancy},
                    {"seed", a.seed}};
  std::cout << out.dump() << '\n';
  return 0;
}

int cmd_run(const std::string& config_path, std::optional<std::size_t> workers, bool full,
            const std::optional<std::string>& output) {
  ExperimentConfig config;
  try {
    config = ExperimentConfig::load(config_path);
  } catch (const ConfigurationError& e) {
    throw UsageError(e.what());
  }
  if (workers) config.workers = *workers;
  if (full) config.full = true;
  if (output) config.output_dir = *output;
  const ResultsTable table = run_experiment(config);
  const json out = {{"output_dir", config.output_dir.string()},
                    {"config_hash", config.hash()},
                    {"rows", table.rows.size()},
                    {"cells", table.metrics.size()},
                    {"failed_tasks", table.failures.size()}};
  std::cout << out.dump() << '\n';
  return table.failures.empty() ? 0 : kExitRuntime;
}

int cmd_plot(const std::string& dir) {
  for (const auto& path : emit_plots(dir)) std::cout << path.string() << '\n';
  return 0;
}

int cmd_mock_serve(int degree, double tau, double sigma, const std::string& bind) {
  // Block the stop signals before the server threads start so only sigwait sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  ConjugateModel model(degree, tau, sigma);
  MockServer server(model, bind);
  std::cout << json{{"address", server.base_address()}, {"degree", degree}}.dump() << std::endl;
  int received = 0;
  sigwait(&signals, &received);
  server.stop();
  return 0;
}

int cmd_appendix_f(std::size_t replicates, std::uint64_t seed) {
  if (replicates < 1000) throw UsageError("--M must be at least 1000");
  const AppendixFResult r = appendix_f_pvalues(replicates, seed);
  auto entry = [](const PValueEstimate& p) { return json{{"p", p.value}, {"se", p.standard_error}}; };
  const json out = {{"M", replicates},
                    {"test_point", kAppendixFTestPoint},
                    {"model1", {{"exact_nll", entry(r.model1_exact_nll)}, {"nlml", entry(r.model1_nlml)}}},
                    {"model2", {{"exact_nll", entry(r.model2_exact_nll)}, {"nlml", entry(r.model2_nlml)}}}};
  std::cout << out.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generative predictive p-values and in-context capability checks"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run an experiment sweep from a JSON config");
  std::string config_path;
  std::optional<std::size_t> workers;
  bool full = false;
  std::optional<std::string> output;
  run->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  run->add_option("--workers", workers, "Worker threads (does not change results)")
      ->check(CLI::PositiveNumber);
  run->add_flag("--full", full, "Full-size battery (200 tasks per group)");
  run->add_option("--output", output, "Override the output directory");

  auto* plot = app.add_subcommand("plot", "Emit SVG plots for a results directory");
  std::string results_dir;
  plot->add_option("dir", results_dir, "Results directory")->required()->check(CLI::ExistingDirectory);

  auto* pvalue = app.add_subcommand("pvalue", "Estimate one p-value and print it as JSON");
  PValueArgs pa;
  pvalue->add_option("--cgm", pa.cgm, "exact[:degree] or remote:<url>")->capture_default_str();
  pvalue->add_option("--data", pa.data, "Observed dataset file")->required()->check(CLI::ExistingFile);
  pvalue->add_option("--test", pa.test, "Test dataset file")->required()->check(CLI::ExistingFile);
  pvalue->add_option("--alg", pa.alg)->check(CLI::IsMember({"ppc", "gpc", "gpc-lite"}))->capture_default_str();
  pvalue->add_option("--discrepancy", pa.discrepancy)->check(CLI::IsMember({"nlml", "nll"}))->capture_default_str();
  pvalue->add_option("--M", pa.replicates, "Replicates")->check(CLI::PositiveNumber)->capture_default_str();
  pvalue->add_option("--N", pa.total_length, "Completion length N (> n); default n + 200");
  pvalue->add_option("--alpha", pa.alpha)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  pvalue->add_option("--seed", pa.seed)->capture_default_str();
  pvalue->add_option("--query-dim", pa.query_dim, "Leading query coordinates per line")
      ->check(CLI::PositiveNumber)->capture_default_str();
  pvalue->add_option("--tau", pa.tau, "Prior weight scale of the exact CGM")->capture_default_str();
  pvalue->add_option("--sigma", pa.sigma, "Noise scale of the exact CGM")->capture_default_str();

  auto* mock = app.add_subcommand("mock-serve", "Serve an exact-Bayes model over HTTP");
  int degree = 3;
  double tau = 2.0;
  double sigma = 0.25;
  std::string bind = "127.0.0.1:8080";
  mock->add_option("--degree", degree)->check(CLI::NonNegativeNumber)->capture_default_str();
  mock->add_option("--tau", tau)->capture_default_str();
  mock->add_option("--sigma", sigma)->capture_default_str();
  mock->add_option("--bind", bind, "host:port")->capture_default_str();

  auto* appf = app.add_subcommand("appendix-f", "Epistemic vs aleatoric worked example");
  std::size_t appf_m = 100000;
  std::uint64_t appf_seed = 20250101;
  appf->add_option("--M", appf_m)->capture_default_str();
  appf->add_option("--seed", appf_seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*run) return cmd_run(config_path, workers, full, output);
    if (*plot) return cmd_plot(results_dir);
    if (*pvalue) return cmd_pvalue(pa);
    if (*mock) return cmd_mock_serve(degree, tau, sigma, bind);
    if (*appf) return cmd_appendix_f(appf_m, appf_seed);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigurationError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
