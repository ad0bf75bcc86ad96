#include "iclcheck/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <thread>

#include "iclcheck/cgm_adapters.hpp"
#include "iclcheck/errors.hpp"
#include "iclcheck/estimators.hpp"

#ifndef ICLCHECK_VERSION
#define ICLCHECK_VERSION "unknown"
#endif

namespace iclcheck {

using nlohmann::json;

const char* const kResultsHeader =
    "task_id,kind,label,n,N_minus_n,M,alpha,discrepancy,p,se,decision,rmse,seed";
const char* const kMetricsHeader =
    "n,N_minus_n,M,alpha,discrepancy,tasks,tp,fp,tn,fn,fpr,precision,recall,f1,accuracy,risk";

namespace {

// Stream labels below a task seed.
constexpr std::uint64_t kTaskStream = 0;
constexpr std::uint64_t kObservedStream = 1;
constexpr std::uint64_t kTestStream = 2;
constexpr std::uint64_t kRmseStream = 3;
constexpr std::uint64_t kEstimatorStream = 4;

void require_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigurationError(where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!ok.contains(key)) throw ConfigurationError("unknown key '" + key + "' in " + where);
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigurationError(std::string("invalid value for '") + key + "': " + e.what());
  }
}

QueryDomain domain_from_json(const json& j, const QueryDomain& fallback) {
  if (!j.contains("domain")) return fallback;
  const auto& d = j["domain"];
  if (!d.is_array() || d.size() != 2 || !d[0].is_number() || !d[1].is_number()) {
    throw ConfigurationError("domain must be [lo, hi]");
  }
  QueryDomain out{d[0].get<double>(), d[1].get<double>()};
  out.validate();
  return out;
}

json domain_to_json(const QueryDomain& d) { return json::array({d.lo, d.hi}); }

json group_to_json(const TaskGroup& g) {
  json j = {{"count", g.count},
            {"label", g.out_of_capability ? "ood" : "in"},
            {"noise", g.spec.sigma},
            {"domain", domain_to_json(g.spec.domain)},
            {"kind", g.spec.kind_name()}};
  if (const auto* p = std::get_if<PolynomialTask>(&g.spec.kind)) j["degree"] = p->degree;
  if (const auto* r = std::get_if<ReluTask>(&g.spec.kind)) j["widths"] = r->widths;
  if (const auto* gp = std::get_if<GpRbfTask>(&g.spec.kind)) {
    j["length_scale"] = gp->length_scale;
    j["grid_points"] = gp->grid_points;
  }
  return j;
}

TaskGroup group_from_json(const json& j) {
  require_keys(j, "battery entry",
               {"kind", "count", "label", "noise", "domain", "degree", "widths", "length_scale",
                "grid_points"});
  TaskGroup g;
  const auto kind = get_or<std::string>(j, "kind", "polynomial");
  if (kind == "polynomial") {
    g.spec.kind = PolynomialTask{get_or<int>(j, "degree", 3)};
  } else if (kind == "relu") {
    g.spec.kind = ReluTask{get_or<std::vector<int>>(j, "widths", {16, 16})};
  } else if (kind == "gp-rbf") {
    g.spec.kind = GpRbfTask{get_or<double>(j, "length_scale", 0.3),
                            get_or<std::size_t>(j, "grid_points", 256)};
  } else {
    throw ConfigurationError("unknown task kind '" + kind + "'");
  }
  g.count = get_or<std::size_t>(j, "count", 40);
  const auto label = get_or<std::string>(j, "label", "in");
  if (label != "in" && label != "ood") throw ConfigurationError("label must be 'in' or 'ood'");
  g.out_of_capability = label == "ood";
  g.spec.sigma = get_or<double>(j, "noise", 0.25);
  g.spec.domain = domain_from_json(j, QueryDomain{});
  return g;
}

json cgm_to_json(const CgmSelection& sel) {
  if (const auto* e = std::get_if<ExactBayesSelection>(&sel)) {
    return {{"type", "exact-bayes"},
            {"degree", e->model.degree()},
            {"tau", e->model.tau()},
            {"sigma", e->model.sigma()},
            {"domain", domain_to_json(e->model.domain())}};
  }
  const auto& r = std::get<RemoteSelection>(sel);
  return {{"type", "remote"},
          {"address", r.endpoint.base_address},
          {"timeout_ms", r.endpoint.timeout.count()},
          {"retries", r.endpoint.retry_budget}};
}

CgmSelection cgm_from_json(const json& j) {
  require_keys(j, "cgm", {"type", "degree", "tau", "sigma", "domain", "address", "timeout_ms", "retries"});
  const auto type = get_or<std::string>(j, "type", "exact-bayes");
  if (type == "exact-bayes" || type == "misspecified") {
    return ExactBayesSelection{ConjugateModel(get_or<int>(j, "degree", 3), get_or<double>(j, "tau", 2.0),
                                              get_or<double>(j, "sigma", 0.25),
                                              domain_from_json(j, QueryDomain{}))};
  }
  if (type == "remote") {
    RemoteEndpoint ep;
    ep.base_address = get_or<std::string>(j, "address", "");
    ep.timeout = std::chrono::milliseconds(get_or<std::int64_t>(j, "timeout_ms", 10000));
    ep.retry_budget = get_or<unsigned>(j, "retries", 3);
    ep.validate();
    return RemoteSelection{ep};
  }
  throw ConfigurationError("unknown cgm type '" + type + "'");
}

std::unique_ptr<Cgm> make_cgm(const CgmSelection& sel) {
  if (const auto* e = std::get_if<ExactBayesSelection>(&sel)) {
    return std::make_unique<ExactBayesCgm>(e->model);
  }
  RemoteEndpoint ep = std::get<RemoteSelection>(sel).endpoint;
  if (const char* token = std::getenv(kTokenEnvVar)) ep.token = token;
  return std::make_unique<RemoteCgm>(ep);
}

bool uses_completion(PValueMethod m) { return m == PValueMethod::nll; }
bool is_ppc(PValueMethod m) { return m == PValueMethod::ppc_nll || m == PValueMethod::ppc_nlml; }

std::string seed_label(const SeedSpec& s) {
  std::string out = std::to_string(s.master());
  for (const auto label : s.path()) out += "/" + std::to_string(label);
  return out;
}

struct TaskPlan {
  std::size_t task_id;
  const TaskGroup* group;
};

struct TaskOutput {
  std::vector<ResultRow> rows;
  std::optional<std::string> failure;
  double seconds = 0.0;
};

struct Cell {
  std::size_t n;
  std::size_t budget;
  std::size_t replicates;
  double alpha;
  PValueMethod method;
  auto operator<=>(const Cell&) const = default;
};

std::vector<TaskPlan> plan_tasks(const ExperimentConfig& config) {
  std::vector<TaskPlan> plan;
  std::size_t id = 0;
  for (const auto& g : config.battery) {
    const std::size_t count = config.full ? kFullScaleTasksPerGroup : g.count;
    for (std::size_t k = 0; k < count; ++k) plan.push_back({id++, &g});
  }
  return plan;
}

TaskOutput run_task(const ExperimentConfig& config, const Cgm& cgm, const TaskPlan& task) {
  TaskOutput out;
  const SeedSpec task_seed = SeedSpec(config.seed).child(task.task_id);
  const TaskSpec& spec = task.group->spec;

  Stream task_rng = task_seed.child(kTaskStream).stream();
  const Explanation f = generate_task(spec, task_rng);
  const std::size_t max_n = *std::max_element(config.grid.n.begin(), config.grid.n.end());
  const std::size_t max_test = config.test_size.value_or(max_n);
  Stream observed_rng = task_seed.child(kObservedStream).stream();
  const Dataset observed_full = sample_dataset(spec, f, max_n, observed_rng);
  Stream test_rng = task_seed.child(kTestStream).stream();
  const Dataset test_full = sample_dataset(spec, f, max_test, test_rng);

  const ConjugateModel* reference = nullptr;
  if (const auto* e = std::get_if<ExactBayesSelection>(&config.cgm)) reference = &e->model;

  for (const std::size_t n : config.grid.n) {
    const Dataset observed = observed_full.prefix(n, Provenance::observed);
    const Dataset test = test_full.prefix(config.test_size.value_or(n), Provenance::test);
    Stream rmse_rng = task_seed.child(kRmseStream).child(n).stream();
    const double rmse = response_rmse(cgm, f, observed, spec.domain, config.rmse_queries, rmse_rng);

    for (const PValueMethod method : config.grid.methods) {
      const std::vector<std::size_t> budgets =
          uses_completion(method) ? config.grid.completion_budget : std::vector<std::size_t>{0};
      const std::vector<std::size_t> replicate_grid =
          is_ppc(method) && config.ppc_replicates
              ? std::vector<std::size_t>{*config.ppc_replicates}
              : config.grid.replicates;
      for (const std::size_t budget : budgets) {
        for (const std::size_t m : replicate_grid) {
          EstimatorConfig cfg;
          cfg.replicates = m;
          cfg.completion_budget = budget;
          cfg.seed = task_seed.child(kEstimatorStream)
                         .child(n)
                         .child(static_cast<std::uint64_t>(method))
                         .child(budget)
                         .child(m);
          PValueEstimate p;
          switch (method) {
            case PValueMethod::nll:
              cfg.discrepancy = DiscrepancyKind::generative_nll;
              p = estimate_p_gpc(cgm, observed, test, cfg);
              break;
            case PValueMethod::nlml:
              cfg.discrepancy = DiscrepancyKind::nlml;
              p = estimate_p_gpc_lite(cgm, observed, test, cfg);
              break;
            case PValueMethod::ppc_nll:
              cfg.discrepancy = DiscrepancyKind::exact_nll;
              p = estimate_p_ppc(*reference, observed, test, cfg);
              break;
            case PValueMethod::ppc_nlml:
              cfg.discrepancy = DiscrepancyKind::nlml;
              p = estimate_p_ppc(*reference, observed, test, cfg);
              break;
          }
          for (const double alpha : config.grid.alpha) {
            ResultRow row;
            row.task_id = task.task_id;
            row.kind = spec.kind_name();
            row.out_of_capability = task.group->out_of_capability;
            row.n = n;
            row.completion_budget = budget;
            row.replicates = m;
            row.alpha = alpha;
            row.method = method;
            row.p = p.value;
            row.se = p.standard_error;
            row.decision = decide(p, alpha).out_of_capability;
            row.rmse = rmse;
            row.seed = seed_label(cfg.seed);
            out.rows.push_back(std::move(row));
          }
        }
      }
    }
  }
  return out;
}

void aggregate(ResultsTable& table) {
  std::map<Cell, std::vector<const ResultRow*>> cells;
  for (const auto& row : table.rows) {
    cells[{row.n, row.completion_budget, row.replicates, row.alpha, row.method}].push_back(&row);
  }
  for (const auto& [cell, rows] : cells) {
    std::vector<CapabilityDecision> decisions;
    std::vector<double> rmses;
    auto labels = std::make_unique<bool[]>(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      decisions.push_back(decide(rows[i]->p, rows[i]->alpha));
      rmses.push_back(rows[i]->rmse);
      labels[i] = rows[i]->out_of_capability;
    }
    MetricsRow m;
    m.n = cell.n;
    m.completion_budget = cell.budget;
    m.replicates = cell.replicates;
    m.alpha = cell.alpha;
    m.method = cell.method;
    m.tasks = rows.size();
    m.report = compute_metrics(decisions, std::span<const bool>(labels.get(), rows.size()));
    m.risk = compute_risk(rmses, decisions);
    table.metrics.push_back(m);
  }
}

std::string opt(const std::optional<double>& v) { return v ? format_number(*v) : "NA"; }

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

std::string to_string(PValueMethod m) {
  switch (m) {
    case PValueMethod::nll: return "nll";
    case PValueMethod::nlml: return "nlml";
    case PValueMethod::ppc_nll: return "ppc-nll";
    case PValueMethod::ppc_nlml: return "ppc-nlml";
  }
  return "unknown";
}

PValueMethod parse_method(const std::string& s) {
  if (s == "nll") return PValueMethod::nll;
  if (s == "nlml") return PValueMethod::nlml;
  if (s == "ppc-nll") return PValueMethod::ppc_nll;
  if (s == "ppc-nlml") return PValueMethod::ppc_nlml;
  throw ConfigurationError("unknown discrepancy '" + s + "'");
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

ExperimentConfig ExperimentConfig::desk_default() {
  ExperimentConfig c;
  TaskGroup in;
  in.spec.kind = PolynomialTask{3};
  in.count = 40;
  TaskGroup ood;
  ood.spec.kind = GpRbfTask{};
  ood.count = 40;
  ood.out_of_capability = true;
  c.battery = {in, ood};
  return c;
}

void ExperimentConfig::validate() const {
  if (battery.empty()) throw ConfigurationError("battery is empty");
  for (const auto& g : battery) {
    g.spec.validate();
    if (g.count == 0) throw ConfigurationError("battery group count must be positive");
  }
  auto positive = [](const auto& values, const char* name) {
    if (values.empty()) throw ConfigurationError(std::string(name) + " grid is empty");
    for (const auto v : values) {
      if (!(v > 0)) throw ConfigurationError(std::string(name) + " grid values must be positive");
    }
  };
  positive(grid.n, "n");
  positive(grid.replicates, "M");
  positive(grid.alpha, "alpha");
  if (grid.methods.empty()) throw ConfigurationError("discrepancy grid is empty");
  for (const double a : grid.alpha) {
    if (!(a < 1.0)) throw ConfigurationError("alpha grid values must lie in (0, 1)");
  }
  const bool any_nll = std::find(grid.methods.begin(), grid.methods.end(), PValueMethod::nll) !=
                       grid.methods.end();
  if (any_nll) positive(grid.completion_budget, "N_minus_n");
  const bool any_ppc = std::any_of(grid.methods.begin(), grid.methods.end(), is_ppc);
  if (any_ppc && !std::holds_alternative<ExactBayesSelection>(cgm)) {
    throw ConfigurationError("ppc discrepancies need an exact-Bayes CGM");
  }
  if (ppc_replicates && *ppc_replicates == 0) throw ConfigurationError("ppc_replicates must be positive");
  if (test_size && *test_size == 0) throw ConfigurationError("test_size must be positive");
  if (rmse_queries == 0) throw ConfigurationError("rmse_queries must be positive");
  if (workers == 0) throw ConfigurationError("workers must be positive");
  for (const auto& g : battery) {
    const QueryDomain* model_domain = nullptr;
    if (const auto* e = std::get_if<ExactBayesSelection>(&cgm)) model_domain = &e->model.domain();
    if (model_domain && !(g.spec.domain == *model_domain)) {
      throw ConfigurationError("task domain differs from the CGM query domain");
    }
  }
}

json ExperimentConfig::to_json() const {
  json j;
  j["battery"] = json::array();
  for (const auto& g : battery) j["battery"].push_back(group_to_json(g));
  j["cgm"] = cgm_to_json(cgm);
  std::vector<std::string> methods;
  for (const auto m : grid.methods) methods.push_back(iclcheck::to_string(m));
  j["grid"] = {{"n", grid.n},
               {"N_minus_n", grid.completion_budget},
               {"M", grid.replicates},
               {"alpha", grid.alpha},
               {"discrepancy", methods}};
  j["ppc_replicates"] = ppc_replicates ? json(*ppc_replicates) : json(nullptr);
  j["test_size"] = test_size ? json(*test_size) : json(nullptr);
  j["rmse_queries"] = rmse_queries;
  j["seed"] = seed;
  j["workers"] = workers;
  j["output_dir"] = output_dir.string();
  j["full"] = full;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  require_keys(j, "config",
               {"battery", "cgm", "grid", "ppc_replicates", "test_size", "rmse_queries", "seed",
                "workers", "output_dir", "full"});
  ExperimentConfig c = desk_default();
  if (j.contains("battery")) {
    if (!j["battery"].is_array()) throw ConfigurationError("battery must be an array");
    c.battery.clear();
    for (const auto& g : j["battery"]) c.battery.push_back(group_from_json(g));
  }
  if (j.contains("cgm")) c.cgm = cgm_from_json(j["cgm"]);
  if (j.contains("grid")) {
    const auto& g = j["grid"];
    require_keys(g, "grid", {"n", "N_minus_n", "M", "alpha", "discrepancy"});
    c.grid.n = get_or(g, "n", c.grid.n);
    c.grid.completion_budget = get_or(g, "N_minus_n", c.grid.completion_budget);
    c.grid.replicates = get_or(g, "M", c.grid.replicates);
    c.grid.alpha = get_or(g, "alpha", c.grid.alpha);
    if (g.contains("discrepancy")) {
      c.grid.methods.clear();
      for (const auto& s : get_or<std::vector<std::string>>(g, "discrepancy", {})) {
        c.grid.methods.push_back(parse_method(s));
      }
    }
  }
  auto optional_size = [&](const char* key) -> std::optional<std::size_t> {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return get_or<std::size_t>(j, key, 0);
  };
  c.ppc_replicates = optional_size("ppc_replicates");
  c.test_size = optional_size("test_size");
  c.rmse_queries = get_or<std::size_t>(j, "rmse_queries", c.rmse_queries);
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
  c.workers = get_or<std::size_t>(j, "workers", c.workers);
  c.output_dir = get_or<std::string>(j, "output_dir", c.output_dir.string());
  c.full = get_or<bool>(j, "full", c.full);
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read config " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigurationError("config " + file.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

std::string ExperimentConfig::hash() const {
  // Worker count and output location do not affect any recorded value.
  json j = to_json();
  j.erase("workers");
  j.erase("output_dir");
  const std::string canonical = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ResultsTable compute_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto cgm = make_cgm(config.cgm);
  const auto plan = plan_tasks(config);
  std::vector<TaskOutput> outputs(plan.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < plan.size(); i = next++) {
      const auto start = std::chrono::steady_clock::now();
      try {
        outputs[i] = run_task(config, *cgm, plan[i]);
      } catch (const std::exception& e) {
        outputs[i] = TaskOutput{};
        outputs[i].failure = e.what();
      }
      outputs[i].seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
  };
  const std::size_t threads = std::min(config.workers, std::max<std::size_t>(plan.size(), 1));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  ResultsTable table;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    auto& o = outputs[i];
    if (o.failure) table.failures.push_back({plan[i].task_id, *o.failure});
    table.rows.insert(table.rows.end(), std::make_move_iterator(o.rows.begin()),
                      std::make_move_iterator(o.rows.end()));
    table.task_seconds.push_back(o.seconds);
  }
  aggregate(table);
  return table;
}

std::string render_results_csv(const ResultsTable& table) {
  std::ostringstream out;
  out << kResultsHeader << '\n';
  for (const auto& r : table.rows) {
    out << r.task_id << ',' << r.kind << ',' << (r.out_of_capability ? "ood" : "in") << ','
        << r.n << ',' << r.completion_budget << ',' << r.replicates << ','
        << format_number(r.alpha) << ',' << to_string(r.method) << ',' << format_number(r.p)
        << ',' << format_number(r.se) << ',' << (r.decision ? "out" : "in") << ','
        << format_number(r.rmse) << ',' << r.seed << '\n';
  }
  return out.str();
}

std::string render_metrics_csv(const ResultsTable& table) {
  std::ostringstream out;
  out << kMetricsHeader << '\n';
  for (const auto& m : table.metrics) {
    const auto& r = m.report;
    out << m.n << ',' << m.completion_budget << ',' << m.replicates << ','
        << format_number(m.alpha) << ',' << to_string(m.method) << ',' << m.tasks << ',' << r.tp
        << ',' << r.fp << ',' << r.tn << ',' << r.fn << ',' << opt(r.fpr) << ','
        << opt(r.precision) << ',' << opt(r.recall) << ',' << opt(r.f1) << ','
        << opt(r.accuracy) << ',' << format_number(m.risk) << '\n';
  }
  return out.str();
}

ResultsTable run_experiment(const ExperimentConfig& config) {
  config.validate();
  std::error_code ec;
  std::filesystem::create_directories(config.output_dir, ec);
  const auto probe = config.output_dir / ".write_probe";
  {
    std::ofstream test(probe);
    if (ec || !test) throw IoError("output directory not writable: " + config.output_dir.string());
  }
  std::filesystem::remove(probe, ec);

  const auto start = std::chrono::steady_clock::now();
  ResultsTable table = compute_experiment(config);
  const double total =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  write_file(config.output_dir / "results.csv", render_results_csv(table));
  write_file(config.output_dir / "metrics.csv", render_metrics_csv(table));

  std::string errors;
  for (const auto& f : table.failures) {
    errors += json{{"task_id", f.task_id}, {"message", f.message}}.dump() + "\n";
  }
  write_file(config.output_dir / "errors.jsonl", errors);

  std::string timings = "task_id,wall_seconds\n";
  for (std::size_t i = 0; i < table.task_seconds.size(); ++i) {
    timings += std::to_string(i) + "," + format_number(table.task_seconds[i]) + "\n";
  }
  write_file(config.output_dir / "timings.csv", timings);

  const json meta = {{"config", config.to_json()},
                     {"config_hash", config.hash()},
                     {"code_version", ICLCHECK_VERSION},
                     {"master_seed", config.seed},
                     {"tasks", table.task_seconds.size()},
                     {"failed_tasks", table.failures.size()},
                     {"wall_seconds", total}};
  write_file(config.output_dir / "metadata.json", meta.dump(2) + "\n");
  return table;
}

}  // namespace iclcheck
