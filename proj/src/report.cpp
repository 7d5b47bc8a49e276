#include "tgcfa/report.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "binary_io.hpp"

namespace tgcfa::report {

namespace fs = std::filesystem;

namespace {

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

struct Series {
  std::string name;
  std::vector<double> y;
  std::string color;
  bool dashed = false;
};

class Svg {
 public:
  Svg(int width, int height, const std::string& title) : width_(width), height_(height) {
    out_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
         << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
         << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
         << "<text x=\"" << width / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" << title
         << "</text>\n";
  }
  void raw(const std::string& s) { out_ << s; }
  void text(double x, double y, const std::string& s, const char* anchor = "middle") {
    out_ << "<text x=\"" << x << "\" y=\"" << y << "\" text-anchor=\"" << anchor << "\">" << s << "</text>\n";
  }
  void line(double x0, double y0, double x1, double y1, const std::string& color, bool dashed = false) {
    out_ << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y1
         << "\" stroke=\"" << color << "\"" << (dashed ? " stroke-dasharray=\"4,3\"" : "") << "/>\n";
  }
  void rect(double x, double y, double w, double h, const std::string& color) {
    out_ << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w << "\" height=\"" << h
         << "\" fill=\"" << color << "\"/>\n";
  }
  std::string finish() {
    out_ << "</svg>\n";
    return out_.str();
  }
  int width() const { return width_; }
  int height() const { return height_; }

 private:
  int width_, height_;
  std::ostringstream out_;
};

constexpr double kLeft = 60, kRight = 150, kTop = 32, kBottom = 40;

std::string line_chart(const std::string& title, const std::string& x_label, const std::vector<Series>& series) {
  Svg svg(720, 360, title);
  double lo = 0, hi = 1e-12;
  std::size_t len = 1;
  for (const auto& s : series) {
    for (double v : s.y) hi = std::max(hi, v), lo = std::min(lo, v);
    len = std::max(len, s.y.size());
  }
  const double pw = svg.width() - kLeft - kRight, ph = svg.height() - kTop - kBottom;
  auto px = [&](double i) { return kLeft + (len > 1 ? i / (len - 1) : 0.5) * pw; };
  auto py = [&](double v) { return kTop + ph - (v - lo) / (hi - lo) * ph; };
  svg.line(kLeft, kTop + ph, kLeft + pw, kTop + ph, "black");
  svg.line(kLeft, kTop, kLeft, kTop + ph, "black");
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4;
    svg.text(kLeft - 6, py(v) + 4, fmt("%.3g", v), "end");
  }
  svg.text(kLeft + pw / 2, svg.height() - 8, x_label);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    std::ostringstream pts;
    for (std::size_t i = 0; i < s.y.size(); ++i) pts << px(static_cast<double>(i)) << "," << py(s.y[i]) << " ";
    svg.raw("<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"1.5\"" +
            (s.dashed ? " stroke-dasharray=\"5,3\"" : "") + " points=\"" + pts.str() + "\"/>\n");
    const double ly = kTop + 14.0 * static_cast<double>(k);
    svg.line(kLeft + pw + 10, ly, kLeft + pw + 30, ly, s.color, s.dashed);
    svg.text(kLeft + pw + 34, ly + 4, s.name, "start");
  }
  return svg.finish();
}

// Grouped bars; groups along x, one bar per series within a group.
std::string bar_chart(const std::string& title, const std::vector<std::string>& groups,
                      const std::vector<Series>& series) {
  Svg svg(720, 360, title);
  double lo = 0, hi = 1e-12;
  for (const auto& s : series) {
    for (double v : s.y) hi = std::max(hi, v), lo = std::min(lo, v);
  }
  const double pw = svg.width() - kLeft - kRight, ph = svg.height() - kTop - kBottom;
  auto py = [&](double v) { return kTop + ph - (v - lo) / (hi - lo) * ph; };
  svg.line(kLeft, py(0), kLeft + pw, py(0), "black");
  svg.line(kLeft, kTop, kLeft, kTop + ph, "black");
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4;
    svg.text(kLeft - 6, py(v) + 4, fmt("%.3g", v), "end");
  }
  const double group_w = pw / std::max<std::size_t>(1, groups.size());
  const double bar_w = group_w * 0.8 / std::max<std::size_t>(1, series.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double gx = kLeft + g * group_w + group_w * 0.1;
    for (std::size_t k = 0; k < series.size(); ++k) {
      const double v = g < series[k].y.size() ? series[k].y[g] : 0.0;
      const double top = std::min(py(v), py(0));
      svg.rect(gx + k * bar_w, top, bar_w * 0.9, std::abs(py(v) - py(0)), series[k].color);
    }
    svg.text(gx + group_w * 0.4, svg.height() - 22, groups[g]);
  }
  for (std::size_t k = 0; k < series.size(); ++k) {
    const double ly = kTop + 14.0 * static_cast<double>(k);
    svg.rect(kLeft + pw + 10, ly - 5, 18, 9, series[k].color);
    svg.text(kLeft + pw + 34, ly + 4, series[k].name, "start");
  }
  return svg.finish();
}

std::vector<double> loss_series(const harness::RunRecord& run, double segcore::LossBundle::*field) {
  std::vector<double> out;
  for (const auto& e : run.epochs) out.push_back(e.mean_loss.*field);
  return out;
}

std::string write(const std::string& dir, const std::string& name, const std::string& content) {
  fs::create_directories(dir);
  const auto path = (fs::path(dir) / name).string();
  detail::write_file_atomic(path, content);
  return path;
}

}  // namespace

std::vector<TableRow> trend_rows(const harness::TrendSummary& summary) {
  std::vector<TableRow> rows;
  for (const auto& s : summary.seeds) {
    for (const auto& d : summary.domains) {
      rows.push_back({std::to_string(s.seed), d, s.baseline.domain_dice.at(d), s.tgcfa.domain_dice.at(d),
                      s.difference.at(d)});
    }
  }
  for (const auto& d : summary.domains) {
    double b = 0, t = 0;
    for (const auto& s : summary.seeds) {
      b += s.baseline.domain_dice.at(d);
      t += s.tgcfa.domain_dice.at(d);
    }
    const double n = std::max<std::size_t>(1, summary.seeds.size());
    rows.push_back({"mean", d, b / n, t / n, summary.mean_difference.at(d)});
  }
  return rows;
}

std::string format_text(const harness::TrendSummary& summary) {
  std::ostringstream out;
  out << "Paired trend study (source domain: " << summary.source_domain << ")\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-22s %-10s %10s %10s %10s\n", "seed", "domain", "baseline", "tgcfa", "diff");
  out << line << std::string(66, '-') << "\n";
  for (const auto& r : trend_rows(summary)) {
    std::snprintf(line, sizeof line, "%-22s %-10s %10s %10s %10s\n", r.seed.c_str(), r.domain.c_str(),
                  fixed2(r.baseline).c_str(), fixed2(r.tgcfa).c_str(), fixed2(r.difference).c_str());
    out << line;
  }
  out << "\n";
  for (const auto& d : summary.domains) {
    const bool best_tgcfa = summary.mean_difference.at(d) > 0;
    out << d << (d == summary.source_domain ? " (source)" : " (target)") << ": "
        << summary.positive_count.at(d) << "/" << summary.seeds.size()
        << " seeds improved; higher mean: " << (best_tgcfa ? "tgcfa" : "baseline") << "\n";
  }
  return out.str();
}

std::string format_csv(const harness::TrendSummary& summary) {
  std::ostringstream out;
  out << "seed,domain,baseline,tgcfa,diff\n";
  for (const auto& r : trend_rows(summary)) {
    out << r.seed << ',' << r.domain << ',' << fixed2(r.baseline) << ',' << fixed2(r.tgcfa) << ','
        << fixed2(r.difference) << '\n';
  }
  return out.str();
}

std::vector<std::string> write_trend_plots(const harness::TrendSummary& summary, const std::string& dir) {
  std::vector<Series> curves;
  for (std::size_t i = 0; i < summary.seeds.size(); ++i) {
    const auto& s = summary.seeds[i];
    const std::string color = kPalette[i % 6];
    curves.push_back({"baseline " + std::to_string(s.seed),
                      loss_series(s.baseline.run, &segcore::LossBundle::l_total), color, true});
    curves.push_back({"tgcfa " + std::to_string(s.seed),
                      loss_series(s.tgcfa.run, &segcore::LossBundle::l_total), color, false});
  }

  Series base{"baseline", {}, kPalette[0]}, aligned{"tgcfa", {}, kPalette[1]};
  std::vector<std::string> domain_labels;
  for (const auto& r : trend_rows(summary)) {
    if (r.seed != "mean") continue;
    base.y.push_back(r.baseline);
    aligned.y.push_back(r.tgcfa);
    domain_labels.push_back(r.domain);
  }

  std::vector<std::string> seed_labels;
  std::vector<Series> diffs;
  for (std::size_t d = 0; d < summary.domains.size(); ++d) diffs.push_back({summary.domains[d], {}, kPalette[d % 6]});
  for (const auto& s : summary.seeds) {
    seed_labels.push_back(std::to_string(s.seed));
    for (std::size_t d = 0; d < summary.domains.size(); ++d) diffs[d].y.push_back(s.difference.at(summary.domains[d]));
  }

  return {write(dir, "loss_curves.svg", line_chart("Training loss (L_total)", "epoch", curves)),
          write(dir, "domain_dice.svg", bar_chart("Mean foreground Dice per domain", domain_labels, {base, aligned})),
          write(dir, "paired_differences.svg",
                bar_chart("Dice difference (tgcfa - baseline) per seed", seed_labels, diffs))};
}

std::string format_run_text(const harness::RunRecord& run) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%6s %10s %10s %10s %10s %10s\n", "epoch", "l_seg", "l_pos", "l_neg", "l_total",
                "val_dice");
  out << line;
  for (const auto& e : run.epochs) {
    std::snprintf(line, sizeof line, "%6d %10.4f %10.4f %10.4f %10.4f %10.2f\n", e.epoch, e.mean_loss.l_seg,
                  e.mean_loss.l_pos, e.mean_loss.l_neg, e.mean_loss.l_total, e.val_dice);
    out << line;
  }
  out << "best epoch " << run.best_epoch << ", val dice " << fixed2(run.best_val_dice) << "\n";
  for (const auto& [domain, r] : run.final_reports) {
    out << domain << ": mean foreground " << fixed2(r.mean_foreground) << "\n";
  }
  return out.str();
}

std::string format_run_csv(const harness::RunRecord& run) {
  std::ostringstream out;
  out << "epoch,l_seg,l_pos,l_neg,l_total,val_dice\n";
  for (const auto& e : run.epochs) {
    out << e.epoch << ',' << fmt("%.4f", e.mean_loss.l_seg) << ',' << fmt("%.4f", e.mean_loss.l_pos) << ','
        << fmt("%.4f", e.mean_loss.l_neg) << ',' << fmt("%.4f", e.mean_loss.l_total) << ','
        << fixed2(e.val_dice) << '\n';
  }
  return out.str();
}

std::vector<std::string> write_run_plots(const harness::RunRecord& run, const std::string& dir) {
  return {write(dir, "loss_curves.svg",
                line_chart("Training loss", "epoch",
                           {{"l_seg", loss_series(run, &segcore::LossBundle::l_seg), kPalette[0]},
                            {"l_pos", loss_series(run, &segcore::LossBundle::l_pos), kPalette[1]},
                            {"l_neg", loss_series(run, &segcore::LossBundle::l_neg), kPalette[2]},
                            {"l_total", loss_series(run, &segcore::LossBundle::l_total), kPalette[3]}}))};
}

}  // namespace tgcfa::report
