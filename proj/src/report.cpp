#include "dcae/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "dcae/error.hpp"

namespace dcae::report {

namespace {

std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

std::string num(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.2f", v);
  return b;
}

std::string fmt(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.6f", v);
  return b;
}

std::string polyline(const std::vector<double>& xs, const std::vector<double>& ys, double x0, double y0, double w,
                     double h, double xmin, double xmax, double ymin, double ymax, const char* color) {
  const double xr = xmax > xmin ? xmax - xmin : 1.0, yr = ymax > ymin ? ymax - ymin : 1.0;
  std::string pts;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!pts.empty()) pts += ' ';
    pts += num(x0 + (xs[i] - xmin) / xr * w) + ',' + num(y0 + h - (ys[i] - ymin) / yr * h);
  }
  return "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1\" points=\"" + pts + "\"/>\n";
}

}  // namespace

std::string svg_bar_chart(const std::string& title, const std::vector<std::pair<std::string, double>>& bars) {
  const double W = 640, H = 360, left = 60, bottom = 50, top = 40;
  const double plot_w = W - left - 20, plot_h = H - top - bottom;
  double vmax = 0.0;
  for (const auto& [_, v] : bars) vmax = std::max(vmax, v);
  if (vmax <= 0.0) vmax = 1.0;

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  o << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << escape(title) << "</text>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w << "\" y2=\"" << top + plot_h
    << "\" stroke=\"black\"/>\n";
  const double slot = bars.empty() ? plot_w : plot_w / static_cast<double>(bars.size());
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double h = bars[i].second / vmax * plot_h;
    const double x = left + slot * static_cast<double>(i) + slot * 0.15;
    o << "<rect class=\"bar\" x=\"" << num(x) << "\" y=\"" << num(top + plot_h - h) << "\" width=\"" << num(slot * 0.7)
      << "\" height=\"" << num(h) << "\" fill=\"steelblue\" data-label=\"" << escape(bars[i].first)
      << "\" data-value=\"" << bars[i].second << "\"/>\n";
    o << "<text x=\"" << num(x + slot * 0.35) << "\" y=\"" << num(top + plot_h + 18)
      << "\" text-anchor=\"middle\" font-size=\"12\">" << escape(bars[i].first) << "</text>\n";
    o << "<text x=\"" << num(x + slot * 0.35) << "\" y=\"" << num(top + plot_h - h - 4)
      << "\" text-anchor=\"middle\" font-size=\"11\">" << bars[i].second << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string svg_overlay(const std::string& title, const std::vector<Panel>& panels) {
  const double W = 800, ph = 160, gap = 40, left = 50, top = 40;
  const double H = top + static_cast<double>(panels.size()) * (ph + gap);
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  o << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << escape(title) << "</text>\n";
  for (std::size_t i = 0; i < panels.size(); ++i) {
    const auto& p = panels[i];
    require(p.x.size() == p.original.size() && p.x.size() == p.reconstruction.size() && !p.x.empty(),
            ErrorCode::ShapeMismatch, "panel series must be nonempty and of equal length");
    const double y0 = top + static_cast<double>(i) * (ph + gap) + 16;
    double ymin = std::numeric_limits<double>::infinity(), ymax = -ymin;
    for (double v : p.original) ymin = std::min(ymin, v), ymax = std::max(ymax, v);
    for (double v : p.reconstruction) ymin = std::min(ymin, v), ymax = std::max(ymax, v);
    const auto [xmin, xmax] = std::minmax_element(p.x.begin(), p.x.end());
    o << "<g class=\"panel\">\n";
    o << "<text x=\"" << left << "\" y=\"" << num(y0 - 4) << "\" font-size=\"13\">" << escape(p.title) << "</text>\n";
    o << "<rect x=\"" << left << "\" y=\"" << num(y0) << "\" width=\"" << W - left - 20 << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#888\"/>\n";
    o << polyline(p.x, p.original, left, y0, W - left - 20, ph, *xmin, *xmax, ymin, ymax, "black");
    o << polyline(p.x, p.reconstruction, left, y0, W - left - 20, ph, *xmin, *xmax, ymin, ymax, "crimson");
    o << "</g>\n";
  }
  o << "</svg>\n";
  return o.str();
}

Verdict judge(const SeedResult& r, double margin) {
  const ModelResult *ts = nullptr, *ft = nullptr, *stft = nullptr;
  for (const auto& m : r.models) {
    if (m.mode == LossMode::TS) ts = &m;
    if (m.mode == LossMode::TS_FT) ft = &m;
    if (m.mode == LossMode::TS_STFT) stft = &m;
  }
  Verdict v;
  if (!ts || !ft || !stft) return v;
  double best_time = std::numeric_limits<double>::infinity(), best_freq = best_time;
  for (const auto& m : r.models) {
    best_time = std::min(best_time, m.metrics.mae_time);
    best_freq = std::min(best_freq, m.metrics.mae_frequency);
  }
  v.ts_best_time = ts->metrics.mae_time == best_time;
  v.ft_best_frequency = ft->metrics.mae_frequency == best_freq;
  v.stft_within_margin = stft->metrics.mae_time <= (1.0 + margin) * best_time &&
                         stft->metrics.mae_frequency <= (1.0 + margin) * best_freq;
  return v;
}

std::string comparison_csv(const SeedResult& r) {
  std::string s = "metric";
  for (const auto& m : r.models) s += "," + model_name(m.mode);
  s += "\nMAE time (TS)";
  for (const auto& m : r.models) s += "," + fmt(m.metrics.mae_time);
  s += "\nMAE frequency (FT)";
  for (const auto& m : r.models) s += "," + fmt(m.metrics.mae_frequency);
  return s + "\n";
}

std::string comparison_markdown(const std::vector<SeedResult>& seeds, std::size_t required_seeds) {
  std::ostringstream o;
  o << "# Loss comparison\n\nseeds:";
  for (const auto& s : seeds) o << ' ' << s.seed;
  o << "\n\n";
  std::size_t passing = 0;
  for (const auto& s : seeds) {
    o << "## seed " << s.seed << "\n\n| metric |";
    for (const auto& m : s.models) o << ' ' << model_name(m.mode) << " |";
    o << "\n|---|";
    for (std::size_t i = 0; i < s.models.size(); ++i) o << "---|";
    o << "\n| MAE time (TS) |";
    for (const auto& m : s.models) o << ' ' << fmt(m.metrics.mae_time) << " |";
    o << "\n| MAE frequency (FT) |";
    for (const auto& m : s.models) o << ' ' << fmt(m.metrics.mae_frequency) << " |";
    const auto v = judge(s);
    passing += v.all();
    o << "\n\n- ts_best_time: " << verdict_word(v.ts_best_time) << "\n- ts_ft_best_frequency: "
      << verdict_word(v.ft_best_frequency) << "\n- ts_stft_within_15pct: " << verdict_word(v.stft_within_margin)
      << "\n\n";
  }
  o << "verdict: " << verdict_word(passing >= required_seeds) << " (" << passing << " of " << seeds.size()
    << " seeds satisfy every ordering property; " << required_seeds << " required)\n";
  return o.str();
}

}  // namespace dcae::report
