#include "tgcfa/segcore.hpp"

namespace tgcfa::segcore {

DiceReport dice_score(const LabelMap& prediction, const LabelMap& truth, int num_labels,
                      std::optional<int> background_id) {
  if (prediction.rows() != truth.rows() || prediction.cols() != truth.cols()) {
    throw ValidationError("dice: prediction " + std::to_string(prediction.rows()) + "x" +
                          std::to_string(prediction.cols()) + " vs truth " +
                          std::to_string(truth.rows()) + "x" + std::to_string(truth.cols()));
  }
  std::vector<long long> inter(num_labels, 0), pred_count(num_labels, 0), truth_count(num_labels, 0);
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    const int p = prediction.data()[i];
    const int t = truth.data()[i];
    if (p < 0 || p >= num_labels || t < 0 || t >= num_labels) {
      throw ValidationError("dice: label outside [0, " + std::to_string(num_labels) + ")");
    }
    ++pred_count[p];
    ++truth_count[t];
    if (p == t) ++inter[p];
  }
  DiceReport report;
  report.per_class.resize(num_labels);
  report.present.resize(num_labels);
  double fg_sum = 0;
  int fg_count = 0;
  for (int r = 0; r < num_labels; ++r) {
    const long long denom = pred_count[r] + truth_count[r];
    report.present[r] = denom > 0;
    report.per_class[r] = denom == 0 ? 100.0 : 100.0 * 2.0 * static_cast<double>(inter[r]) / denom;
    if (background_id && r == *background_id) continue;
    if (denom > 0) {
      fg_sum += report.per_class[r];
      ++fg_count;
    }
  }
  report.mean_foreground = fg_count ? fg_sum / fg_count : 100.0;
  return report;
}

DiceReport mean_dice(const std::vector<DiceReport>& reports, int num_labels) {
  DiceReport out;
  out.per_class.assign(num_labels, 100.0);
  out.present.assign(num_labels, false);
  std::vector<double> sum(num_labels, 0);
  std::vector<int> count(num_labels, 0);
  double fg = 0;
  for (const auto& r : reports) {
    for (int c = 0; c < num_labels; ++c) {
      if (!r.present[c]) continue;
      sum[c] += r.per_class[c];
      ++count[c];
    }
    fg += r.mean_foreground;
  }
  for (int c = 0; c < num_labels; ++c) {
    if (count[c]) {
      out.per_class[c] = sum[c] / count[c];
      out.present[c] = true;
    }
  }
  out.mean_foreground = reports.empty() ? 0.0 : fg / static_cast<double>(reports.size());
  return out;
}

}  // namespace tgcfa::segcore
