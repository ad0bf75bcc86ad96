#include "iclcheck/plots.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "iclcheck/errors.hpp"

namespace iclcheck {

namespace {

constexpr double kWidth = 640;
constexpr double kHeight = 420;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
constexpr std::size_t kPaletteSize = std::size(kPalette);

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

/// Axis-aligned plotting area with data-to-pixel mapping.
struct Frame {
  double left, top, width, height;
  double xmin, xmax, ymin, ymax;
  bool log_x = false;

  double px(double x) const {
    double t;
    if (log_x) {
      t = (std::log(x) - std::log(xmin)) / (std::log(xmax) - std::log(xmin));
    } else {
      t = (x - xmin) / (xmax - xmin);
    }
    return left + t * width;
  }
  double py(double y) const { return top + height - (y - ymin) / (ymax - ymin) * height; }
};

class Svg {
 public:
  Svg(double w, double h) : w_(w), h_(h) {}

  void line(double x1, double y1, double x2, double y2, const std::string& stroke,
            double width = 1.0, const std::string& dash = "") {
    body_ << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2)
          << "\" y2=\"" << num(y2) << "\" stroke=\"" << stroke << "\" stroke-width=\""
          << num(width) << "\"";
    if (!dash.empty()) body_ << " stroke-dasharray=\"" << dash << "\"";
    body_ << "/>\n";
  }
  void rect(double x, double y, double w, double h, const std::string& fill,
            double opacity = 1.0) {
    body_ << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(w)
          << "\" height=\"" << num(h) << "\" fill=\"" << fill << "\" fill-opacity=\""
          << num(opacity) << "\"/>\n";
  }
  void circle(double x, double y, double r, const std::string& fill) {
    body_ << "<circle cx=\"" << num(x) << "\" cy=\"" << num(y) << "\" r=\"" << num(r)
          << "\" fill=\"" << fill << "\" fill-opacity=\"0.7\"/>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke,
                const std::string& dash = "") {
    body_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\"";
    if (!dash.empty()) body_ << " stroke-dasharray=\"" << dash << "\"";
    body_ << " points=\"";
    for (const auto& [x, y] : pts) body_ << num(x) << ',' << num(y) << ' ';
    body_ << "\"/>\n";
  }
  void text(double x, double y, const std::string& s, double size = 11,
            const std::string& anchor = "start", const std::string& fill = "#222") {
    body_ << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-size=\"" << num(size)
          << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\" fill=\"" << fill
          << "\">" << escape(s) << "</text>\n";
  }

  void axes(const Frame& f, const std::vector<double>& xticks, const std::string& xlabel,
            const std::string& ylabel) {
    line(f.left, f.top + f.height, f.left + f.width, f.top + f.height, "#000");
    line(f.left, f.top, f.left, f.top + f.height, "#000");
    for (const double x : xticks) {
      const double p = f.px(x);
      line(p, f.top + f.height, p, f.top + f.height + 4, "#000");
      text(p, f.top + f.height + 15, tick(x), 10, "middle");
    }
    for (int i = 0; i <= 4; ++i) {
      const double y = f.ymin + (f.ymax - f.ymin) * i / 4.0;
      const double p = f.py(y);
      line(f.left - 4, p, f.left, p, "#000");
      line(f.left, p, f.left + f.width, p, "#e5e5e5", 0.5);
      text(f.left - 6, p + 3, tick(y), 10, "end");
    }
    text(f.left + f.width / 2, f.top + f.height + 30, xlabel, 11, "middle");
    body_ << "<text x=\"" << num(f.left - 38) << "\" y=\"" << num(f.top + f.height / 2)
          << "\" font-size=\"11\" font-family=\"sans-serif\" text-anchor=\"middle\" "
          << "transform=\"rotate(-90 " << num(f.left - 38) << ' ' << num(f.top + f.height / 2)
          << ")\">" << escape(ylabel) << "</text>\n";
  }

  void open_group(const std::string& attributes) { body_ << "<g " << attributes << ">\n"; }
  void close_group() { body_ << "</g>\n"; }

  void write(const std::filesystem::path& path, const std::string& title,
             const std::string& footer) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w_) << "\" height=\""
        << num(h_) << "\" viewBox=\"0 0 " << num(w_) << ' ' << num(h_) << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << num(w_ / 2) << "\" y=\"20\" font-size=\"13\" font-family=\"sans-serif\" "
        << "text-anchor=\"middle\">" << escape(title) << "</text>\n"
        << body_.str()
        << "<text x=\"" << num(w_ - 8) << "\" y=\"" << num(h_ - 6)
        << "\" font-size=\"9\" font-family=\"monospace\" text-anchor=\"end\" fill=\"#666\">"
        << escape(footer) << "</text>\n"
        << "</svg>\n";
    if (!out) throw IoError("failed writing " + path.string());
  }

 private:
  double w_, h_;
  std::ostringstream body_;
};

std::string footer(const std::string& hash) { return "config " + hash; }

std::string slug(double v) {
  std::string s = format_number(v);
  std::replace(s.begin(), s.end(), '.', 'p');
  return s;
}

std::vector<double> sorted_unique(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

std::filesystem::path plot_metric_lines(const std::vector<const MetricsRow*>& cells,
                                        const std::string& hash,
                                        const std::filesystem::path& dir) {
  const MetricsRow& head = *cells.front();
  std::vector<double> ns;
  for (const auto* c : cells) ns.push_back(static_cast<double>(c->n));
  ns = sorted_unique(ns);

  Frame f{70, 40, 420, 320, ns.front(), ns.back(), 0.0, 1.0};
  if (ns.size() == 1) {
    f.xmin = ns.front() * 0.5;
    f.xmax = ns.front() * 2.0;
  }
  f.log_x = true;
  Svg svg(kWidth, kHeight);
  svg.axes(f, ns, "context length n", "metric value");

  using Getter = std::optional<double> (*)(const MetricsReport&);
  const std::pair<const char*, Getter> series[] = {
      {"precision", [](const MetricsReport& r) { return r.precision; }},
      {"recall", [](const MetricsReport& r) { return r.recall; }},
      {"f1", [](const MetricsReport& r) { return r.f1; }},
      {"accuracy", [](const MetricsReport& r) { return r.accuracy; }},
      {"fpr", [](const MetricsReport& r) { return r.fpr; }},
  };
  for (std::size_t s = 0; s < std::size(series); ++s) {
    const std::string color = kPalette[s % kPaletteSize];
    std::vector<std::pair<double, double>> pts;
    for (const auto* c : cells) {
      if (const auto v = series[s].second(c->report)) {
        pts.emplace_back(f.px(static_cast<double>(c->n)), f.py(*v));
      }
    }
    std::sort(pts.begin(), pts.end());
    if (pts.size() > 1) svg.polyline(pts, color, s == 4 ? "4 3" : "");
    for (const auto& [x, y] : pts) svg.circle(x, y, 3, color);
    svg.line(510, 60 + 18.0 * s, 530, 60 + 18.0 * s, color, 2, s == 4 ? "4 3" : "");
    svg.text(536, 64 + 18.0 * s, series[s].first);
  }
  if (head.alpha >= 0 && head.alpha <= 1) {
    svg.line(f.left, f.py(head.alpha), f.left + f.width, f.py(head.alpha), "#999", 1, "2 2");
    svg.text(510, 64 + 18.0 * 5, "alpha = " + format_number(head.alpha), 10);
  }

  const std::string name = "metrics_" + to_string(head.method) + "_a" + slug(head.alpha) + "_b" +
                           std::to_string(head.completion_budget) + "_m" +
                           std::to_string(head.replicates) + ".svg";
  const std::string title = to_string(head.method) + ", alpha " + format_number(head.alpha) +
                            ", N-n " + std::to_string(head.completion_budget) + ", M " +
                            std::to_string(head.replicates);
  svg.write(dir / name, title, footer(hash));
  return dir / name;
}

std::filesystem::path plot_scatter(const std::vector<const ResultRow*>& rows,
                                   const std::string& hash, const std::filesystem::path& dir) {
  const ResultRow& head = *rows.front();
  double rmax = 0.0;
  std::vector<double> ns;
  for (const auto* r : rows) {
    rmax = std::max(rmax, r->rmse);
    ns.push_back(static_cast<double>(r->n));
  }
  ns = sorted_unique(ns);
  if (!(rmax > 0.0)) rmax = 1.0;

  // The p axis is always [0, 1].
  Frame f{70, 40, 420, 320, 0.0, 1.0, 0.0, rmax * 1.05};
  Svg svg(kWidth, kHeight);
  svg.axes(f, {0.0, 0.25, 0.5, 0.75, 1.0}, "p-value", "response RMSE");
  svg.open_group("class=\"points\" data-x-domain=\"0,1\"");
  for (const auto* r : rows) {
    const auto k = static_cast<std::size_t>(
        std::lower_bound(ns.begin(), ns.end(), static_cast<double>(r->n)) - ns.begin());
    svg.circle(f.px(r->p), f.py(r->rmse), r->out_of_capability ? 2.5 : 3.5,
               kPalette[k % kPaletteSize]);
  }
  svg.close_group();
  for (std::size_t k = 0; k < ns.size(); ++k) {
    svg.circle(516, 60 + 18.0 * k, 4, kPalette[k % kPaletteSize]);
    svg.text(526, 64 + 18.0 * k, "n = " + tick(ns[k]));
  }

  const std::string name = "scatter_" + to_string(head.method) + "_b" +
                           std::to_string(head.completion_budget) + "_m" +
                           std::to_string(head.replicates) + ".svg";
  const std::string title = "RMSE vs p, " + to_string(head.method) + ", N-n " +
                            std::to_string(head.completion_budget) + ", M " +
                            std::to_string(head.replicates);
  svg.write(dir / name, title, footer(hash));
  return dir / name;
}

std::vector<double> histogram(const std::vector<double>& ps, std::size_t bins) {
  std::vector<double> h(bins, 0.0);
  for (const double p : ps) {
    const auto b = std::min(bins - 1, static_cast<std::size_t>(p * static_cast<double>(bins)));
    h[b] += 1.0;
  }
  for (auto& v : h) v /= static_cast<double>(std::max<std::size_t>(ps.size(), 1));
  return h;
}

std::optional<std::filesystem::path> plot_interpolation(const std::vector<ResultRow>& rows,
                                                        double alpha, const std::string& hash,
                                                        const std::filesystem::path& dir) {
  std::size_t n_max = 0;
  for (const auto& r : rows) n_max = std::max(n_max, r.n);
  std::map<std::size_t, std::vector<double>> by_budget;
  std::vector<double> ppc_nll;
  std::vector<double> ppc_nlml;
  std::optional<std::size_t> m_used;
  for (const auto& r : rows) {
    if (r.alpha != alpha || r.n != n_max) continue;
    if (r.method == PValueMethod::nll) {
      if (!m_used) m_used = r.replicates;
      if (r.replicates == *m_used) by_budget[r.completion_budget].push_back(r.p);
    } else if (r.method == PValueMethod::ppc_nll) {
      ppc_nll.push_back(r.p);
    } else if (r.method == PValueMethod::ppc_nlml) {
      ppc_nlml.push_back(r.p);
    }
  }
  if (by_budget.empty() || (ppc_nll.empty() && ppc_nlml.empty())) return std::nullopt;

  constexpr std::size_t kBins = 10;
  const double panel_w = 200;
  const double panel_h = 220;
  const double w = 60 + panel_w * static_cast<double>(by_budget.size()) + 40.0 *
                   static_cast<double>(by_budget.size() - 1) + 40;
  Svg svg(std::max(w, 480.0), 360);

  const auto ref_nll = histogram(ppc_nll, kBins);
  const auto ref_nlml = histogram(ppc_nlml, kBins);
  double ymax = 0.0;
  for (const auto& [_, ps] : by_budget) {
    for (const double v : histogram(ps, kBins)) ymax = std::max(ymax, v);
  }
  for (const double v : ref_nll) ymax = std::max(ymax, v);
  for (const double v : ref_nlml) ymax = std::max(ymax, v);
  ymax = std::max(ymax * 1.1, 0.05);

  auto outline = [&](const Frame& f, const std::vector<double>& h) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t b = 0; b < kBins; ++b) {
      const double x0 = static_cast<double>(b) / kBins;
      const double x1 = static_cast<double>(b + 1) / kBins;
      pts.emplace_back(f.px(x0), f.py(h[b]));
      pts.emplace_back(f.px(x1), f.py(h[b]));
    }
    return pts;
  };

  double left = 60;
  for (const auto& [budget, ps] : by_budget) {
    Frame f{left, 50, panel_w, panel_h, 0.0, 1.0, 0.0, ymax};
    svg.axes(f, {0.0, 0.5, 1.0}, "p-value", left == 60 ? "fraction of tasks" : "");
    const auto h = histogram(ps, kBins);
    for (std::size_t b = 0; b < kBins; ++b) {
      const double x0 = f.px(static_cast<double>(b) / kBins);
      const double x1 = f.px(static_cast<double>(b + 1) / kBins);
      svg.rect(x0 + 1, f.py(h[b]), x1 - x0 - 2, f.py(0) - f.py(h[b]), kPalette[0], 0.6);
    }
    if (!ppc_nll.empty()) svg.polyline(outline(f, ref_nll), kPalette[1]);
    if (!ppc_nlml.empty()) svg.polyline(outline(f, ref_nlml), kPalette[2], "4 3");
    svg.text(left + panel_w / 2, 44, "N-n = " + std::to_string(budget), 11, "middle");
    left += panel_w + 40;
  }
  svg.rect(60, 318, 12, 8, kPalette[0], 0.6);
  svg.text(76, 326, "generative p (NLL)", 10);
  svg.line(200, 322, 220, 322, kPalette[1], 2);
  svg.text(224, 326, "ppc exact NLL", 10);
  svg.line(320, 322, 340, 322, kPalette[2], 2, "4 3");
  svg.text(344, 326, "ppc NLML", 10);

  const auto path = dir / "interpolation.svg";
  svg.write(path, "p-value distribution vs completion size, n = " + std::to_string(n_max),
            footer(hash));
  return path;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double to_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("bad number '" + s + "' in " + where);
  }
}

std::size_t to_size(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("bad integer '" + s + "' in " + where);
  }
}

std::optional<double> to_optional(const std::string& s, const std::string& where) {
  if (s == "NA") return std::nullopt;
  return to_double(s, where);
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path,
                                               const std::string& header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != header) {
    throw DataError(path.string() + " has an unexpected header");
  }
  const std::size_t columns = split(header).size();
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != columns) {
      throw DataError(path.string() + " line " + std::to_string(rows.size() + 2) +
                      " has the wrong number of columns");
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace

LoadedResults load_results(const std::filesystem::path& dir) {
  LoadedResults out;
  const auto results_path = dir / "results.csv";
  for (const auto& c : read_csv(results_path, kResultsHeader)) {
    const std::string where = results_path.string();
    ResultRow r;
    r.task_id = to_size(c[0], where);
    r.kind = c[1];
    r.out_of_capability = c[2] == "ood";
    r.n = to_size(c[3], where);
    r.completion_budget = to_size(c[4], where);
    r.replicates = to_size(c[5], where);
    r.alpha = to_double(c[6], where);
    r.method = parse_method(c[7]);
    r.p = to_double(c[8], where);
    r.se = to_double(c[9], where);
    r.decision = c[10] == "out";
    r.rmse = to_double(c[11], where);
    r.seed = c[12];
    out.table.rows.push_back(std::move(r));
  }
  const auto metrics_path = dir / "metrics.csv";
  for (const auto& c : read_csv(metrics_path, kMetricsHeader)) {
    const std::string where = metrics_path.string();
    MetricsRow m;
    m.n = to_size(c[0], where);
    m.completion_budget = to_size(c[1], where);
    m.replicates = to_size(c[2], where);
    m.alpha = to_double(c[3], where);
    m.method = parse_method(c[4]);
    m.tasks = to_size(c[5], where);
    m.report.tp = to_size(c[6], where);
    m.report.fp = to_size(c[7], where);
    m.report.tn = to_size(c[8], where);
    m.report.fn = to_size(c[9], where);
    m.report.fpr = to_optional(c[10], where);
    m.report.precision = to_optional(c[11], where);
    m.report.recall = to_optional(c[12], where);
    m.report.f1 = to_optional(c[13], where);
    m.report.accuracy = to_optional(c[14], where);
    m.risk = to_double(c[15], where);
    out.table.metrics.push_back(m);
  }
  std::ifstream meta(dir / "metadata.json");
  if (meta) {
    try {
      out.config_hash = nlohmann::json::parse(meta).value("config_hash", "");
    } catch (const nlohmann::json::exception& e) {
      throw DataError("metadata.json is not valid JSON: " + std::string(e.what()));
    }
  }
  if (out.config_hash.empty()) out.config_hash = "unknown";
  return out;
}

std::vector<std::filesystem::path> emit_plots(const ResultsTable& table,
                                              const std::string& config_hash,
                                              const std::filesystem::path& plot_dir) {
  if (table.metrics.empty()) throw PreconditionError("results table has no aggregated cells");
  std::error_code ec;
  std::filesystem::create_directories(plot_dir, ec);
  if (ec) throw IoError("cannot create " + plot_dir.string() + ": " + ec.message());

  std::vector<std::filesystem::path> written;

  std::map<std::tuple<PValueMethod, double, std::size_t, std::size_t>,
           std::vector<const MetricsRow*>>
      families;
  for (const auto& m : table.metrics) {
    families[{m.method, m.alpha, m.completion_budget, m.replicates}].push_back(&m);
  }
  for (const auto& [_, cells] : families) {
    written.push_back(plot_metric_lines(cells, config_hash, plot_dir));
  }

  if (!table.rows.empty()) {
    // Rows repeat per alpha with identical p and RMSE; keep one alpha.
    const double alpha = table.rows.front().alpha;
    std::map<std::tuple<PValueMethod, std::size_t, std::size_t>, std::vector<const ResultRow*>>
        scatters;
    for (const auto& r : table.rows) {
      if (r.alpha == alpha) scatters[{r.method, r.completion_budget, r.replicates}].push_back(&r);
    }
    for (const auto& [_, rows] : scatters) {
      written.push_back(plot_scatter(rows, config_hash, plot_dir));
    }
    if (auto p = plot_interpolation(table.rows, alpha, config_hash, plot_dir)) {
      written.push_back(*p);
    }
  }
  return written;
}

std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& results_dir) {
  const LoadedResults loaded = load_results(results_dir);
  return emit_plots(loaded.table, loaded.config_hash, results_dir / "plots");
}

}  // namespace iclcheck
