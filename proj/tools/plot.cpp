#include "plot.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

namespace tod::tools {

namespace {

constexpr double kWidth = 720, kHeight = 420;
constexpr double kLeft = 60, kRight = 180, kTop = 40, kBottom = 50;
const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string history_svg(const std::vector<train::EpochRecord>& history, const std::string& title) {
  std::map<std::string, std::vector<std::pair<int, const train::Metrics*>>> series;
  int max_epoch = 1;
  for (const auto& r : history) {
    series["dev"].push_back({r.epoch, &r.dev});
    for (const auto& [name, m] : r.monitors) series[name].push_back({r.epoch, &m});
    max_epoch = std::max(max_epoch, r.epoch);
  }
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto x = [&](int epoch) { return kLeft + pw * double(epoch) / double(max_epoch); };
  auto y = [&](double v) { return kTop + ph * (1.0 - std::clamp(v, 0.0, 1.0)); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kLeft << "\" y=\"24\" font-size=\"15\">" << escape(title) << "</text>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    svg << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft + pw << "\" y1=\"" << fmt(y(v)) << "\" y2=\"" << fmt(y(v))
        << "\" stroke=\"#ddd\"/>\n";
    svg << "<text x=\"" << kLeft - 8 << "\" y=\"" << fmt(y(v) + 4) << "\" text-anchor=\"end\">" << fmt(v)
        << "</text>\n";
  }
  const int step = std::max(1, max_epoch / 10);
  for (int e = 0; e <= max_epoch; e += step) {
    svg << "<text x=\"" << fmt(x(e)) << "\" y=\"" << kTop + ph + 18 << "\" text-anchor=\"middle\">" << e
        << "</text>\n";
  }
  svg << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">epoch</text>\n";
  svg << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#333\"/>\n";

  std::size_t color = 0;
  double legend_y = kTop + 10;
  for (const auto& [name, points] : series) {
    const char* c = kColors[color++ % std::size(kColors)];
    std::string r1, mrr;
    for (const auto& [epoch, m] : points) {
      const auto it = m->recall_at.find(1);
      if (it != m->recall_at.end()) r1 += fmt(x(epoch)) + "," + fmt(y(it->second)) + " ";
      mrr += fmt(x(epoch)) + "," + fmt(y(m->mrr)) + " ";
    }
    svg << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\" points=\"" << r1 << "\"/>\n";
    svg << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" stroke-dasharray=\"5,4\" points=\""
        << mrr << "\"/>\n";
    const double lx = kLeft + pw + 14;
    svg << "<line x1=\"" << lx << "\" x2=\"" << lx + 22 << "\" y1=\"" << legend_y << "\" y2=\"" << legend_y
        << "\" stroke=\"" << c << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << lx + 28 << "\" y=\"" << legend_y + 4 << "\">" << escape(name) << " R@1</text>\n";
    legend_y += 18;
    svg << "<line x1=\"" << lx << "\" x2=\"" << lx + 22 << "\" y1=\"" << legend_y << "\" y2=\"" << legend_y
        << "\" stroke=\"" << c << "\" stroke-width=\"1.5\" stroke-dasharray=\"5,4\"/>\n";
    svg << "<text x=\"" << lx + 28 << "\" y=\"" << legend_y + 4 << "\">" << escape(name) << " MRR</text>\n";
    legend_y += 22;
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace tod::tools
