#include "pfscale/report.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace pfscale {

namespace {

std::string fmt(double v, const char* spec = "%.6f") {
  std::array<char, 64> buf{};
  std::snprintf(buf.data(), buf.size(), spec, v);
  return buf.data();
}

std::string escape_xml(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr std::array<const char*, 8> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                                 "#9467bd", "#8c564b", "#e377c2", "#17becf"};

}  // namespace

std::string curve_csv(std::span<const CurveRow> rows) {
  std::string out = "method,budget,questions,correct,accuracy,ci_low,ci_high,symbolic_golds\n";
  for (const auto& r : rows) {
    out += r.method + "," + std::to_string(r.budget) + "," + std::to_string(r.questions) + "," +
           std::to_string(r.correct) + "," + fmt(r.accuracy) + "," + fmt(r.ci_low) + "," +
           fmt(r.ci_high) + "," + std::to_string(r.symbolic_golds) + "\n";
  }
  return out;
}

std::string curve_svg(std::span<const CurveRow> rows, const std::string& title) {
  constexpr double W = 640, H = 420, left = 60, right = 150, top = 40, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;
  double xmin = 0, xmax = 1;
  if (!rows.empty()) {
    xmin = xmax = std::log2(static_cast<double>(std::max<long long>(1, rows.front().budget)));
    for (const auto& r : rows) {
      const double x = std::log2(static_cast<double>(std::max<long long>(1, r.budget)));
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
    }
  }
  if (xmax - xmin < 1e-9) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  auto px = [&](long long budget) {
    const double x = std::log2(static_cast<double>(std::max<long long>(1, budget)));
    return left + (x - xmin) / (xmax - xmin) * pw;
  };
  auto py = [&](double acc) { return top + (1.0 - acc) * ph; };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" viewBox=\"0 0 " << W << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
    << escape_xml(title) << "</text>\n";
  // Axes and y grid.
  for (int k = 0; k <= 5; ++k) {
    const double acc = k / 5.0;
    s << "<line x1=\"" << left << "\" y1=\"" << fmt(py(acc), "%.2f") << "\" x2=\"" << left + pw
      << "\" y2=\"" << fmt(py(acc), "%.2f") << "\" stroke=\"#ddd\"/>\n";
    s << "<text x=\"" << left - 6 << "\" y=\"" << fmt(py(acc) + 4, "%.2f")
      << "\" text-anchor=\"end\">" << fmt(acc, "%.1f") << "</text>\n";
  }
  std::set<long long> budgets;
  for (const auto& r : rows) budgets.insert(r.budget);
  for (long long b : budgets)
    s << "<text x=\"" << fmt(px(b), "%.2f") << "\" y=\"" << top + ph + 18
      << "\" text-anchor=\"middle\">" << b << "</text>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\""
    << top + ph << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
    << "\" stroke=\"black\"/>\n";
  s << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 10
    << "\" text-anchor=\"middle\">budget (generations, log scale)</text>\n";
  s << "<text x=\"16\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << top + ph / 2 << ")\">accuracy</text>\n";

  std::map<std::string, std::vector<CurveRow>> series;
  for (const auto& r : rows) series[r.method].push_back(r);
  std::size_t color = 0;
  for (auto& [method, pts] : series) {
    std::sort(pts.begin(), pts.end(),
              [](const CurveRow& a, const CurveRow& b) { return a.budget < b.budget; });
    const char* c = kPalette[color % kPalette.size()];
    s << "<g>\n<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\" points=\"";
    for (const auto& p : pts) s << fmt(px(p.budget), "%.2f") << ',' << fmt(py(p.accuracy), "%.2f") << ' ';
    s << "\"/>\n";
    for (const auto& p : pts) {
      s << "<line x1=\"" << fmt(px(p.budget), "%.2f") << "\" y1=\"" << fmt(py(p.ci_low), "%.2f")
        << "\" x2=\"" << fmt(px(p.budget), "%.2f") << "\" y2=\"" << fmt(py(p.ci_high), "%.2f")
        << "\" stroke=\"" << c << "\" stroke-opacity=\"0.5\"/>\n";
      s << "<circle cx=\"" << fmt(px(p.budget), "%.2f") << "\" cy=\"" << fmt(py(p.accuracy), "%.2f")
        << "\" r=\"3\" fill=\"" << c << "\"/>\n";
    }
    const double ly = top + 10 + 18.0 * static_cast<double>(color);
    s << "<line x1=\"" << left + pw + 15 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 35
      << "\" y2=\"" << ly << "\" stroke=\"" << c << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << left + pw + 40 << "\" y=\"" << ly + 4 << "\">" << escape_xml(method)
      << "</text>\n</g>\n";
    ++color;
  }
  s << "</svg>\n";
  return s.str();
}

std::vector<CurveRow> aggregate_records(std::span<const std::filesystem::path> files) {
  std::map<std::pair<std::string, long long>, CurveRow> groups;
  std::optional<std::string> dataset;
  std::size_t total = 0;
  for (const auto& path : files) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open records " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      RunRecord r;
      try {
        r = RunRecord::from_json(nlohmann::json::parse(line));
      } catch (const std::exception& e) {
        throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
      if (dataset && *dataset != r.dataset)
        throw std::invalid_argument("records mix datasets '" + *dataset + "' and '" + r.dataset + "'");
      dataset = r.dataset;
      auto& g = groups[{std::string(to_string(r.method)), r.budget}];
      g.method = std::string(to_string(r.method));
      g.budget = r.budget;
      ++g.questions;
      if (r.correct) ++g.correct;
      if (r.symbolic_gold) ++g.symbolic_golds;
      ++total;
    }
  }
  if (total == 0) throw std::invalid_argument("no records to report");
  std::vector<CurveRow> rows;
  for (auto& [_, g] : groups) {
    g.accuracy = static_cast<double>(g.correct) / static_cast<double>(g.questions);
    std::tie(g.ci_low, g.ci_high) = wilson_interval(g.correct, g.questions);
    rows.push_back(g);
  }
  return rows;
}

std::vector<CurveRow> emit_report(std::span<const std::filesystem::path> files,
                                  const std::filesystem::path& prefix) {
  auto rows = aggregate_records(files);
  std::string dataset;
  {
    std::ifstream in(files.front());
    std::string line;
    while (std::getline(in, line))
      if (line.find_first_not_of(" \t\r") != std::string::npos) {
        dataset = nlohmann::json::parse(line).at("dataset").get<std::string>();
        break;
      }
  }
  if (prefix.has_parent_path()) std::filesystem::create_directories(prefix.parent_path());
  auto csv = prefix;
  csv += ".csv";
  auto svg = prefix;
  svg += ".svg";
  std::ofstream(csv) << curve_csv(rows);
  std::ofstream(svg) << curve_svg(rows, dataset);
  return rows;
}

}  // namespace pfscale
