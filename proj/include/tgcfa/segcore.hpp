#pragma once

#include <optional>
#include <type_traits>
#include <string>
#include <vector>

#include "tgcfa/alignhead.hpp"
#include "tgcfa/nn.hpp"

namespace tgcfa::segcore {

using nn::Activation;
using nn::Param;
using nn::Tensor;

struct BackboneConfig {
  int in_channels = 1;
  int num_classes = 5;
  int base_width = 16;
  int levels = 4;  // number of resolution levels; levels-1 downsamplings

  int bottleneck_channels() const { return base_width << (levels - 1); }
  int downsample_factor() const { return 1 << (levels - 1); }
  void validate() const {
    if (in_channels <= 0 || num_classes <= 1 || base_width <= 0 || levels < 1 || levels > 6) {
      throw ValidationError("invalid backbone configuration");
    }
  }
};

template <typename Scalar>
struct ForwardResult {
  Activation<Scalar> bottleneck;  // z x (B*h_f*w_f)
  Activation<Scalar> scores;      // n x (B*H*W)
};

// Plain U-Net: a DoubleConv per level, max-pool down, transposed-conv up,
// skip concatenation, 1x1 classifier.
template <typename Scalar>
class UNet {
 public:
  UNet() = default;
  UNet(const BackboneConfig& config, std::uint64_t seed) : config_(config) {
    config.validate();
    Rng rng(seed);
    const int L = config.levels;
    int ch = config.in_channels;
    for (int l = 0; l < L; ++l) {
      const int out = config.base_width << l;
      encoders_.emplace_back("enc" + std::to_string(l), ch, out, rng);
      ch = out;
    }
    pools_.resize(L - 1);
    for (int l = L - 2; l >= 0; --l) {
      const int out = config.base_width << l;
      ups_.emplace_back("up" + std::to_string(l), ch, out, rng);
      decoders_.emplace_back("dec" + std::to_string(l), 2 * out, out, rng);
      ch = out;
    }
    head_ = nn::Conv1x1<Scalar>("head", ch, config.num_classes, rng);
  }

  const BackboneConfig& config() const { return config_; }

  std::pair<int, int> feature_grid(int height, int width) const {
    const int f = config_.downsample_factor();
    return {height / f, width / f};
  }

  void check_input(const Activation<Scalar>& images) const {
    const int f = config_.downsample_factor();
    if (images.channels() != config_.in_channels) {
      throw ValidationError("model expects " + std::to_string(config_.in_channels) +
                            " input channels, got " + std::to_string(images.channels()));
    }
    if (images.height <= 0 || images.width <= 0 || images.height % f || images.width % f) {
      throw ValidationError("input " + std::to_string(images.height) + "x" +
                            std::to_string(images.width) + " is not divisible by " +
                            std::to_string(f));
    }
    if (images.data.cols() != static_cast<Eigen::Index>(images.batch) * images.plane()) {
      throw ValidationError("image batch has inconsistent shape");
    }
  }

  ForwardResult<Scalar> forward(const Activation<Scalar>& images) {
    check_input(images);
    const int L = config_.levels;
    skips_.clear();
    Activation<Scalar> x = images;
    for (int l = 0; l < L; ++l) {
      if (l > 0) x = pools_[l - 1].forward(x);
      x = encoders_[l].forward(x);
      if (l < L - 1) skips_.push_back(x);
    }
    ForwardResult<Scalar> out;
    out.bottleneck = x;
    for (int i = 0; i < L - 1; ++i) {
      x = ups_[i].forward(x);
      x = decoders_[i].forward(nn::concat_channels(x, skips_[L - 2 - i]));
    }
    out.scores = head_.forward(x);
    return out;
  }

  // Accumulates parameter gradients. `d_bottleneck` may be empty when no loss
  // taps the bottleneck.
  void backward(const Activation<Scalar>& d_scores, const Activation<Scalar>* d_bottleneck) {
    const int L = config_.levels;
    std::vector<Tensor<Scalar>> d_skips(L - 1);
    Activation<Scalar> d = head_.backward(d_scores);
    for (int i = L - 2; i >= 0; --i) {
      Activation<Scalar> dcat = decoders_[i].backward(d);
      const int up_ch = static_cast<int>(dcat.data.rows()) / 2;
      d_skips[L - 2 - i] = dcat.data.bottomRows(up_ch);
      dcat.data = Tensor<Scalar>(dcat.data.topRows(up_ch));
      d = ups_[i].backward(dcat);
    }
    if (d_bottleneck && d_bottleneck->data.size() > 0) d.data += d_bottleneck->data;
    for (int l = L - 1; l >= 0; --l) {
      if (l < L - 1) d.data += d_skips[l];
      d = encoders_[l].backward(d);
      if (l > 0) d = pools_[l - 1].backward(d);
    }
  }

  std::vector<Param<Scalar>*> parameters() {
    std::vector<Param<Scalar>*> out;
    for (auto& e : encoders_) e.collect(out);
    for (std::size_t i = 0; i < ups_.size(); ++i) {
      ups_[i].collect(out);
      decoders_[i].collect(out);
    }
    head_.collect(out);
    return out;
  }

 private:
  BackboneConfig config_;
  std::vector<nn::DoubleConv<Scalar>> encoders_;
  std::vector<nn::MaxPool2<Scalar>> pools_;
  std::vector<nn::UpConv2<Scalar>> ups_;
  std::vector<nn::DoubleConv<Scalar>> decoders_;
  nn::Conv1x1<Scalar> head_;
  std::vector<Activation<Scalar>> skips_;
};

// Rows of cell features for sample `b` (p x z), cells in row-major order.
template <typename Scalar>
alignhead::FeatureGrid<Scalar> feature_grid_of(const Activation<Scalar>& bottleneck, int b) {
  alignhead::FeatureGrid<Scalar> grid;
  grid.height = bottleneck.height;
  grid.width = bottleneck.width;
  grid.features = bottleneck.data.middleCols(static_cast<Eigen::Index>(b) * bottleneck.plane(),
                                             bottleneck.plane())
                      .transpose();
  return grid;
}

// Per-pixel class scores for one sample, arg-maxed into a label map.
template <typename Scalar>
LabelMap predict_labels(const Activation<Scalar>& scores, int b) {
  LabelMap out(scores.height, scores.width);
  const Eigen::Index off = static_cast<Eigen::Index>(b) * scores.plane();
  for (int i = 0; i < scores.plane(); ++i) {
    Eigen::Index best;
    scores.data.col(off + i).maxCoeff(&best);
    out.data()[i] = static_cast<int>(best);
  }
  return out;
}

struct SegLossOptions {
  bool use_ce = true;
  bool use_dice = true;
  double dice_smooth = 1.0;
};

struct SegLossTerms {
  double cross_entropy = 0;
  double soft_dice = 0;
  double total = 0;
};

// Cross-entropy averaged over all pixels of all samples plus soft-Dice loss
// 1 - mean_{b,r} (2 sum p g + s) / (sum p + sum g + s). `labels` holds one
// class per column of `scores`. When `d_scores` is non-null it receives the
// gradient with respect to the logits.
template <typename Scalar>
SegLossTerms segmentation_loss(const Activation<Scalar>& scores, const Eigen::VectorXi& labels,
                               const SegLossOptions& options,
                               std::type_identity_t<Activation<Scalar>>* d_scores) {
  const int n = scores.channels();
  const Eigen::Index cols = scores.data.cols();
  if (labels.size() != cols) throw ValidationError("label count does not match score columns");
  for (Eigen::Index i = 0; i < cols; ++i) {
    if (labels[i] < 0 || labels[i] >= n) {
      throw ValidationError("label " + std::to_string(labels[i]) + " outside [0, " +
                            std::to_string(n) + ")");
    }
  }
  Tensor<Scalar> probs(n, cols);
  for (Eigen::Index i = 0; i < cols; ++i) {
    const Scalar m = scores.data.col(i).maxCoeff();
    probs.col(i) = (scores.data.col(i).array() - m).exp();
    probs.col(i) /= probs.col(i).sum();
  }

  SegLossTerms terms;
  Tensor<Scalar> d_probs;
  Tensor<Scalar> d_logits = Tensor<Scalar>::Zero(n, cols);
  if (options.use_ce) {
    double ce = 0;
    for (Eigen::Index i = 0; i < cols; ++i) {
      const int y = labels[i];
      const Scalar m = scores.data.col(i).maxCoeff();
      const double lse = m + std::log((scores.data.col(i).array() - m).exp().sum());
      ce += lse - scores.data(y, i);
    }
    terms.cross_entropy = ce / static_cast<double>(cols);
    if (d_scores) {
      d_logits = probs / static_cast<Scalar>(cols);
      for (Eigen::Index i = 0; i < cols; ++i) d_logits(labels[i], i) -= Scalar(1) / cols;
    }
  }
  if (options.use_dice) {
    const int batch = scores.batch;
    const int hw = scores.plane();
    const double s = options.dice_smooth;
    const double scale = 1.0 / (static_cast<double>(batch) * n);
    double dice_sum = 0;
    if (d_scores) d_probs = Tensor<Scalar>::Zero(n, cols);
    for (int b = 0; b < batch; ++b) {
      const Eigen::Index off = static_cast<Eigen::Index>(b) * hw;
      for (int r = 0; r < n; ++r) {
        double inter = 0, psum = 0, gsum = 0;
        for (int i = 0; i < hw; ++i) {
          const double p = probs(r, off + i);
          const double g = labels[off + i] == r ? 1.0 : 0.0;
          inter += p * g;
          psum += p;
          gsum += g;
        }
        const double num = 2 * inter + s;
        const double den = psum + gsum + s;
        dice_sum += num / den;
        if (d_scores) {
          // d(1 - num/den)/dp_i = -(2 g_i den - num) / den^2, scaled by 1/(B n)
          for (int i = 0; i < hw; ++i) {
            const double g = labels[off + i] == r ? 1.0 : 0.0;
            d_probs(r, off + i) = static_cast<Scalar>(-scale * (2 * g * den - num) / (den * den));
          }
        }
      }
    }
    terms.soft_dice = 1.0 - dice_sum * scale;
    if (d_scores) {
      // Softmax Jacobian: dz = p * (dp - sum_c p_c dp_c)
      for (Eigen::Index i = 0; i < cols; ++i) {
        const Scalar dot = probs.col(i).dot(d_probs.col(i));
        d_logits.col(i).array() += probs.col(i).array() * (d_probs.col(i).array() - dot);
      }
    }
  }
  terms.total = terms.cross_entropy + terms.soft_dice;
  if (d_scores) *d_scores = Activation<Scalar>{std::move(d_logits), scores.batch, scores.height,
                                               scores.width};
  return terms;
}

struct LossBundle {
  double l_seg = 0;
  double l_pos = 0;
  double l_neg = 0;
  double l_align = 0;
  double l_total = 0;
  std::optional<double> align_weight;  // recorded only when != 1

  // Exact reconstruction of the composite terms.
  bool consistent() const {
    const double w = align_weight.value_or(1.0);
    return l_align == l_pos + l_neg && l_total == l_seg + w * l_align;
  }
};

inline LossBundle total_loss(double l_seg, double l_pos, double l_neg, double align_weight = 1.0) {
  auto check = [](double v, const char* name) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite loss term ") + name);
  };
  check(l_seg, "l_seg");
  check(l_pos, "l_pos");
  check(l_neg, "l_neg");
  check(align_weight, "align_weight");
  LossBundle bundle;
  bundle.l_seg = l_seg;
  bundle.l_pos = l_pos;
  bundle.l_neg = l_neg;
  bundle.l_align = l_pos + l_neg;
  if (align_weight == 1.0) {
    bundle.l_total = l_seg + bundle.l_align;
  } else {
    bundle.align_weight = align_weight;
    bundle.l_total = l_seg + align_weight * bundle.l_align;
  }
  return bundle;
}

template <typename Scalar>
LossBundle total_loss(double l_seg, const alignhead::AlignmentLoss<Scalar>& align,
                      double align_weight = 1.0) {
  return total_loss(l_seg, static_cast<double>(align.l_pos), static_cast<double>(align.l_neg),
                    align_weight);
}

struct DiceReport {
  std::vector<double> per_class;  // percent, 100 when a class is absent from both maps
  std::vector<bool> present;      // class occurs in prediction or truth
  double mean_foreground = 0;     // over non-background classes present in either map
};

DiceReport dice_score(const LabelMap& prediction, const LabelMap& truth, int num_labels,
                      std::optional<int> background_id = 0);

// Averages per-class Dice over several images. Classes absent from every
// image keep the 100 convention.
DiceReport mean_dice(const std::vector<DiceReport>& reports, int num_labels);

}  // namespace tgcfa::segcore
