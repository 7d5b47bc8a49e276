#pragma once

// Reference implementations written as plain loops over std::vector, kept
// independent of the library code paths they check.

#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

namespace oracle {

using Rows = std::vector<std::vector<double>>;

inline std::vector<double> mean_rows(const Rows& rows) {
  std::vector<double> out(rows.at(0).size(), 0.0);
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size(); ++i) out[i] += r[i];
  for (auto& v : out) v /= static_cast<double>(rows.size());
  return out;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

struct Loss {
  double pos = 0;
  double neg = 0;
};

// presence[j][r] marks label r in cell j.
inline Loss alignment(const Rows& features, const Rows& table,
                      const std::vector<std::vector<int>>& presence, double margin,
                      bool mean_over_cells) {
  Loss out;
  const std::size_t p = features.size();
  for (std::size_t j = 0; j < p; ++j) {
    double pos_sum = 0, neg_sum = 0;
    int pos_count = 0, neg_count = 0;
    for (std::size_t r = 0; r < table.size(); ++r) {
      const double c = cosine(features[j], table[r]);
      if (presence[j][r]) {
        pos_sum += std::max(0.0, 1.0 - c);
        ++pos_count;
      } else {
        neg_sum += std::max(0.0, c - margin);
        ++neg_count;
      }
    }
    if (pos_count) out.pos += pos_sum / pos_count;
    if (neg_count) out.neg += neg_sum / neg_count;
  }
  if (mean_over_cells) {
    out.pos /= static_cast<double>(p);
    out.neg /= static_cast<double>(p);
  }
  return out;
}

// Brute force: visit every pixel, find the cell whose patch holds it.
inline std::vector<std::vector<int>> presence_scan(const std::vector<std::vector<int>>& labels,
                                                   int gh, int gw, int n) {
  const int h = static_cast<int>(labels.size());
  const int w = static_cast<int>(labels[0].size());
  std::vector<std::vector<int>> out(static_cast<std::size_t>(gh * gw), std::vector<int>(n, 0));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int cy = -1, cx = -1;
      for (int i = 0; i < gh; ++i)
        if (i * h / gh <= y && y < (i + 1) * h / gh) cy = i;
      for (int i = 0; i < gw; ++i)
        if (i * w / gw <= x && x < (i + 1) * w / gw) cx = i;
      out[static_cast<std::size_t>(cy * gw + cx)][labels[y][x]] = 1;
    }
  }
  return out;
}

// Dice of one class from pixel index sets.
inline double dice_sets(const std::vector<std::vector<int>>& a, const std::vector<std::vector<int>>& b,
                        int label) {
  std::set<std::size_t> sa, sb;
  std::size_t idx = 0;
  for (std::size_t y = 0; y < a.size(); ++y)
    for (std::size_t x = 0; x < a[y].size(); ++x, ++idx) {
      if (a[y][x] == label) sa.insert(idx);
      if (b[y][x] == label) sb.insert(idx);
    }
  if (sa.empty() && sb.empty()) return 100.0;
  std::size_t inter = 0;
  for (auto i : sa) inter += sb.count(i);
  return 100.0 * 2.0 * static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size());
}

}  // namespace oracle
