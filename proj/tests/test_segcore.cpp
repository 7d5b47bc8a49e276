#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "tgcfa/segcore.hpp"

using namespace tgcfa;
using namespace tgcfa::segcore;

namespace {

template <typename S>
Activation<S> random_images(Rng& rng, int batch, int channels, int h, int w) {
  Activation<S> a;
  a.batch = batch;
  a.height = h;
  a.width = w;
  a.data.resize(channels, static_cast<Eigen::Index>(batch) * h * w);
  for (Eigen::Index i = 0; i < a.data.size(); ++i) a.data.data()[i] = static_cast<S>(uniform01(rng));
  return a;
}

Eigen::VectorXi random_labels(Rng& rng, Eigen::Index count, int n) {
  Eigen::VectorXi y(count);
  for (Eigen::Index i = 0; i < count; ++i) y[i] = static_cast<int>(uniform_int(rng, 0, n - 1));
  return y;
}

std::vector<std::vector<int>> plain(const LabelMap& m) {
  std::vector<std::vector<int>> out(m.rows(), std::vector<int>(m.cols()));
  for (Eigen::Index y = 0; y < m.rows(); ++y)
    for (Eigen::Index x = 0; x < m.cols(); ++x) out[y][x] = m(y, x);
  return out;
}

}  // namespace

TEST_CASE("backbone shapes") {
  BackboneConfig cfg;
  cfg.num_classes = 4;
  UNet<float> net(cfg, 1);
  Rng rng(1);
  const auto images = random_images<float>(rng, 1, 1, 64, 64);
  const auto out = net.forward(images);
  CHECK(out.scores.channels() == 4);
  CHECK(out.scores.height == 64);
  CHECK(out.scores.width == 64);
  CHECK(out.bottleneck.channels() == 128);
  CHECK(out.bottleneck.height == 8);
  CHECK(out.bottleneck.width == 8);
  CHECK(net.feature_grid(64, 64) == std::pair<int, int>{8, 8});
  const auto grid = feature_grid_of(out.bottleneck, 0);
  CHECK(grid.cells() == 64);
  CHECK(grid.channels() == 128);

  for (int size : {16, 32, 48}) {
    const auto o = net.forward(random_images<float>(rng, 2, 1, size, size));
    CHECK(o.scores.height == size);
    CHECK(o.scores.width == size);
    CHECK(o.scores.data.cols() == 2 * size * size);
  }
}

TEST_CASE("backbone rejects bad input") {
  UNet<float> net(BackboneConfig{}, 1);
  Rng rng(1);
  CHECK_THROWS_AS(net.forward(random_images<float>(rng, 1, 2, 64, 64)), ValidationError);
  CHECK_THROWS_AS(net.forward(random_images<float>(rng, 1, 1, 60, 64)), ValidationError);
  BackboneConfig bad;
  bad.levels = 0;
  CHECK_THROWS_AS(UNet<float>(bad, 1), ValidationError);
}

TEST_CASE("equal logits give cross-entropy ln 2") {
  Activation<double> scores{Tensor<double>::Zero(2, 6), 1, 2, 3};
  const Eigen::VectorXi y = Eigen::VectorXi::Zero(6);
  SegLossOptions ce_only;
  ce_only.use_dice = false;
  CHECK(segmentation_loss(scores, y, ce_only, nullptr).cross_entropy == doctest::Approx(std::log(2.0)));
}

TEST_CASE("confident correct logits give near-zero loss") {
  Rng rng(2);
  const int n = 4;
  Eigen::VectorXi y = random_labels(rng, 2 * 16, n);
  // every class occurs in every image so the Dice term has no empty classes
  for (int b = 0; b < 2; ++b)
    for (int r = 0; r < n; ++r) y[b * 16 + r] = r;
  Activation<double> scores{Tensor<double>::Zero(n, 32), 2, 4, 4};
  for (int i = 0; i < 32; ++i) scores.data(y[i], i) = 20;
  CHECK(segmentation_loss(scores, y, SegLossOptions{}, nullptr).total < 1e-6);
}

TEST_CASE("segmentation loss equals a loop computation") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 3, batch = 2, h = 3, w = 4, hw = h * w;
    Activation<double> scores{Tensor<double>(n, batch * hw), batch, h, w};
    for (Eigen::Index i = 0; i < scores.data.size(); ++i) scores.data.data()[i] = 3 * normal(rng);
    const auto y = random_labels(rng, batch * hw, n);

    double ce = 0;
    std::vector<std::vector<double>> prob(batch * hw, std::vector<double>(n));
    for (int i = 0; i < batch * hw; ++i) {
      double z = 0;
      for (int r = 0; r < n; ++r) z += std::exp(scores.data(r, i));
      for (int r = 0; r < n; ++r) prob[i][r] = std::exp(scores.data(r, i)) / z;
      ce -= std::log(prob[i][y[i]]);
    }
    ce /= batch * hw;
    double dice = 0;
    for (int b = 0; b < batch; ++b) {
      for (int r = 0; r < n; ++r) {
        double inter = 0, ps = 0, gs = 0;
        for (int i = b * hw; i < (b + 1) * hw; ++i) {
          const double g = y[i] == r;
          inter += prob[i][r] * g;
          ps += prob[i][r];
          gs += g;
        }
        dice += (2 * inter + 1) / (ps + gs + 1);
      }
    }
    const double soft_dice = 1 - dice / (batch * n);
    const auto terms = segmentation_loss(scores, y, SegLossOptions{}, nullptr);
    CHECK(terms.cross_entropy == doctest::Approx(ce).epsilon(1e-12));
    CHECK(terms.soft_dice == doctest::Approx(soft_dice).epsilon(1e-12));
    CHECK(terms.total == doctest::Approx(ce + soft_dice).epsilon(1e-12));
  }
}

TEST_CASE("segmentation loss gradient matches central differences") {
  Rng rng(4);
  const int n = 3, batch = 2, h = 2, w = 3;
  Activation<double> scores{Tensor<double>(n, batch * h * w), batch, h, w};
  for (Eigen::Index i = 0; i < scores.data.size(); ++i) scores.data.data()[i] = normal(rng);
  const auto y = random_labels(rng, batch * h * w, n);
  for (bool ce : {true, false}) {
    for (bool dice : {true, false}) {
      if (!ce && !dice) continue;
      SegLossOptions opts;
      opts.use_ce = ce;
      opts.use_dice = dice;
      Activation<double> grad;
      segmentation_loss(scores, y, opts, &grad);
      for (Eigen::Index i = 0; i < scores.data.size(); ++i) {
        auto plus = scores, minus = scores;
        plus.data.data()[i] += 1e-5;
        minus.data.data()[i] -= 1e-5;
        const double fd = (segmentation_loss(plus, y, opts, nullptr).total -
                           segmentation_loss(minus, y, opts, nullptr).total) / 2e-5;
        CHECK(grad.data.data()[i] == doctest::Approx(fd).epsilon(1e-6).scale(1e-3));
      }
    }
  }
}

TEST_CASE("network gradients with segmentation and alignment losses match central differences") {
  BackboneConfig cfg{1, 3, 6, 2};
  UNet<double> net(cfg, 7);
  Rng rng(7);
  const auto images = random_images<double>(rng, 2, 1, 8, 8);
  const auto y = random_labels(rng, 2 * 64, 3);
  Matrix<double> table(3, 4);
  for (Eigen::Index i = 0; i < table.size(); ++i) table.data()[i] = normal(rng);
  auto proj = alignhead::ProjectionParams<double>::initialized(cfg.bottleneck_channels(), 4, rng);
  alignhead::AlignOptions<double> align;
  align.strict = false;  // a ReLU bottleneck cell can be all zero in a net this small
  std::vector<alignhead::FeatureLevelMask> masks;
  for (int b = 0; b < 2; ++b) {
    LabelMap truth(8, 8);
    for (int i = 0; i < 64; ++i) truth.data()[i] = y[b * 64 + i];
    masks.push_back(alignhead::derive_feature_masks(truth, 4, 4, 3));
  }

  auto objective = [&](bool backprop) {
    const auto out = net.forward(images);
    Activation<double> d_scores;
    double loss = segmentation_loss(out.scores, y, SegLossOptions{}, backprop ? &d_scores : nullptr).total;
    Activation<double> d_bottleneck{Tensor<double>::Zero(out.bottleneck.channels(), out.bottleneck.data.cols()),
                                    2, out.bottleneck.height, out.bottleneck.width};
    for (int b = 0; b < 2; ++b) {
      const auto grid = feature_grid_of(out.bottleneck, b);
      const auto projected = alignhead::project_features(grid, proj);
      alignhead::AlignmentGradients<double> g;
      loss += alignhead::alignment_loss_with_grad(projected, table, masks[b], align, g).l_align;
      if (backprop) {
        alignhead::ProjectionGradients<double> pg;
        const Matrix<double> d_grid = alignhead::project_features_backward(grid, proj, g.d_projected, pg);
        d_bottleneck.data.middleCols(b * grid.cells(), grid.cells()) = d_grid.transpose();
      }
    }
    if (backprop) net.backward(d_scores, &d_bottleneck);
    return loss;
  };

  for (auto* p : net.parameters()) p->zero_grad();
  objective(true);
  int checked = 0, nonzero = 0;
  for (auto* p : net.parameters()) {
    for (int s = 0; s < 3; ++s) {
      const auto i = static_cast<Eigen::Index>(uniform_int(rng, 0, p->value.size() - 1));
      const double orig = p->value.data()[i];
      p->value.data()[i] = orig + 1e-6;
      const double up = objective(false);
      p->value.data()[i] = orig - 1e-6;
      const double down = objective(false);
      p->value.data()[i] = orig;
      const double fd = (up - down) / 2e-6;
      const double an = p->grad.data()[i];
      INFO(p->name << "[" << i << "] analytic " << an << " numeric " << fd);
      CHECK(std::abs(an - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
      ++checked;
      if (an != 0) ++nonzero;
    }
  }
  CHECK(checked > 20);
  CHECK(nonzero > checked / 2);
}

TEST_CASE("predict_labels takes the arg-max per pixel") {
  Activation<float> scores{Tensor<float>::Zero(3, 4), 1, 2, 2};
  scores.data(2, 0) = 1;
  scores.data(1, 1) = 1;
  scores.data(0, 2) = 1;
  scores.data(2, 3) = 5;
  scores.data(1, 3) = 4;
  const auto m = predict_labels(scores, 0);
  CHECK(m(0, 0) == 2);
  CHECK(m(0, 1) == 1);
  CHECK(m(1, 0) == 0);
  CHECK(m(1, 1) == 2);
}

TEST_CASE("total loss composition") {
  const auto b = total_loss(1.0, 0.25, 0.5);
  CHECK(b.l_align == 0.75);
  CHECK(b.l_total == 1.75);
  CHECK_FALSE(b.align_weight.has_value());
  CHECK(b.consistent());

  const auto w = total_loss(1.0, 0.25, 0.5, 0.5);
  CHECK(w.l_total == 1.375);
  CHECK(w.align_weight == 0.5);
  CHECK(w.consistent());

  const auto zero = total_loss(2.0, 0.0, 0.0);
  CHECK(zero.l_total == 2.0);

  try {
    total_loss(1.0, std::nan(""), 0.0);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("l_pos") != std::string::npos);
  }
  CHECK_THROWS_AS(total_loss(INFINITY, 0, 0), NumericError);

  alignhead::AlignmentLoss<float> a;
  a.l_pos = 0.5f;
  a.l_neg = 0.25f;
  CHECK(total_loss(1.0, a).l_total == 1.75);
}

TEST_CASE("dice on hand-built maps") {
  LabelMap truth(2, 2), pred(2, 2);
  truth << 1, 1, 0, 0;
  pred = truth;
  auto r = dice_score(pred, truth, 3);
  CHECK(r.per_class[1] == 100);
  CHECK(r.per_class[2] == 100);
  CHECK_FALSE(r.present[2]);
  CHECK(r.mean_foreground == 100);

  pred << 0, 0, 1, 1;
  r = dice_score(pred, truth, 3);
  CHECK(r.per_class[1] == 0);
  CHECK(r.mean_foreground == 0);

  pred << 1, 0, 0, 0;
  r = dice_score(pred, truth, 3);
  CHECK(r.per_class[1] == doctest::Approx(66.67).epsilon(0.0001));
  CHECK(std::abs(r.per_class[1] - 66.67) < 0.01);

  // a class predicted where the truth has none counts as 0 in the mean
  pred << 1, 1, 2, 0;
  r = dice_score(pred, truth, 3);
  CHECK(r.per_class[2] == 0);
  CHECK(r.mean_foreground == 50);

  CHECK(dice_score(pred, truth, 3, std::nullopt).mean_foreground == doctest::Approx((200.0 / 3 + 100 + 0) / 3));
  LabelMap wide(2, 3);
  wide.setZero();
  CHECK_THROWS_AS(dice_score(wide, truth, 3), ValidationError);
}

TEST_CASE("dice is symmetric and matches set arithmetic") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const int h = static_cast<int>(uniform_int(rng, 1, 12));
    const int w = static_cast<int>(uniform_int(rng, 1, 12));
    const int n = static_cast<int>(uniform_int(rng, 2, 5));
    LabelMap a(h, w), b(h, w);
    for (int i = 0; i < h * w; ++i) {
      a.data()[i] = static_cast<int>(uniform_int(rng, 0, n - 1));
      b.data()[i] = static_cast<int>(uniform_int(rng, 0, n - 1));
    }
    const auto ab = dice_score(a, b, n);
    const auto ba = dice_score(b, a, n);
    for (int r = 0; r < n; ++r) {
      CHECK(ab.per_class[r] == ba.per_class[r]);
      CHECK(ab.per_class[r] >= 0);
      CHECK(ab.per_class[r] <= 100);
      CHECK(std::abs(ab.per_class[r] - oracle::dice_sets(plain(a), plain(b), r)) < 1e-9);
    }
    CHECK(ab.mean_foreground == doctest::Approx(ba.mean_foreground));
  }
}

TEST_CASE("mean dice over several images") {
  LabelMap t1(1, 2), t2(1, 2);
  t1 << 1, 0;
  t2 << 0, 0;
  const auto r1 = dice_score(t1, t1, 2);
  LabelMap p2(1, 2);
  p2 << 1, 0;
  const auto r2 = dice_score(p2, t2, 2);
  const auto m = mean_dice({r1, r2}, 2);
  CHECK(m.per_class[1] == 50);
  CHECK(m.mean_foreground == 50);
}
