#pragma once

// Feature-level text alignment: projection of encoder cells into the text
// embedding space, ground-truth pooling to the feature grid, and the hinge
// cosine attraction/repulsion losses with their analytic gradients.

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <type_traits>
#include <vector>

#include "tgcfa/common.hpp"

namespace tgcfa::alignhead {

inline constexpr double kDegenerateNorm = 1e-12;

// Encoder features, one row per grid cell in row-major cell order.
template <typename Scalar>
struct FeatureGrid {
  Matrix<Scalar> features;  // p x z
  int height = 0;
  int width = 0;

  int cells() const { return static_cast<int>(features.rows()); }
  int channels() const { return static_cast<int>(features.cols()); }

  void validate() const {
    if (height <= 0 || width <= 0) throw ValidationError("feature grid needs positive extent");
    if (features.rows() != static_cast<Eigen::Index>(height) * width) {
      throw ValidationError("feature grid has " + std::to_string(features.rows()) +
                            " rows for a " + std::to_string(height) + "x" +
                            std::to_string(width) + " grid");
    }
    if (!features.allFinite()) throw NumericError("feature grid contains non-finite values");
  }
};

template <typename Scalar>
struct ProjectedFeatureGrid {
  Matrix<Scalar> features;  // p x k
  int height = 0;
  int width = 0;

  int cells() const { return static_cast<int>(features.rows()); }
  int dimension() const { return static_cast<int>(features.cols()); }
};

// Affine map z -> k applied to every cell.
template <typename Scalar>
struct ProjectionParams {
  Matrix<Scalar> weight;  // k x z
  Vector<Scalar> bias;    // k
  bool trainable = true;

  int in_dim() const { return static_cast<int>(weight.cols()); }
  int out_dim() const { return static_cast<int>(weight.rows()); }

  // Uniform(-1/sqrt(z), 1/sqrt(z)) weights, zero bias.
  static ProjectionParams initialized(int z, int k, Rng& rng) {
    ProjectionParams p;
    p.weight.resize(k, z);
    const double bound = 1.0 / std::sqrt(static_cast<double>(z));
    for (Eigen::Index c = 0; c < p.weight.cols(); ++c) {
      for (Eigen::Index r = 0; r < p.weight.rows(); ++r) {
        p.weight(r, c) = static_cast<Scalar>(uniform(rng, -bound, bound));
      }
    }
    p.bias = Vector<Scalar>::Zero(k);
    return p;
  }
};

template <typename Scalar>
struct ProjectionGradients {
  Matrix<Scalar> weight;
  Vector<Scalar> bias;
};

// presence(j, r) == 1 iff label r occurs anywhere in the pixel patch of cell j.
struct FeatureLevelMask {
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> presence;  // p x n
  int height = 0;
  int width = 0;

  int cells() const { return static_cast<int>(presence.rows()); }
  int labels() const { return static_cast<int>(presence.cols()); }
};

// Pixel rows covered by cell row `i` of a grid with `cells` rows over `extent`
// pixels: [floor(i*extent/cells), floor((i+1)*extent/cells)).
inline std::pair<int, int> patch_range(int i, int cells, int extent) {
  return {static_cast<int>(static_cast<long long>(i) * extent / cells),
          static_cast<int>(static_cast<long long>(i + 1) * extent / cells)};
}

inline FeatureLevelMask derive_feature_masks(const LabelMap& truth, int grid_height,
                                             int grid_width, int num_labels) {
  const int h = static_cast<int>(truth.rows());
  const int w = static_cast<int>(truth.cols());
  if (grid_height <= 0 || grid_width <= 0 || grid_height > h || grid_width > w) {
    throw ValidationError("feature grid " + std::to_string(grid_height) + "x" +
                          std::to_string(grid_width) + " does not fit a " + std::to_string(h) +
                          "x" + std::to_string(w) + " label map");
  }
  FeatureLevelMask mask;
  mask.height = grid_height;
  mask.width = grid_width;
  mask.presence.setZero(static_cast<Eigen::Index>(grid_height) * grid_width, num_labels);
  for (int gy = 0; gy < grid_height; ++gy) {
    const auto [y0, y1] = patch_range(gy, grid_height, h);
    for (int gx = 0; gx < grid_width; ++gx) {
      const auto [x0, x1] = patch_range(gx, grid_width, w);
      const int cell = gy * grid_width + gx;
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          const int label = truth(y, x);
          if (label < 0 || label >= num_labels) {
            throw ValidationError("label value " + std::to_string(label) + " at (" +
                                  std::to_string(y) + "," + std::to_string(x) +
                                  ") outside [0, " + std::to_string(num_labels) + ")");
          }
          mask.presence(cell, label) = 1;
        }
      }
    }
  }
  return mask;
}

struct LabelSets {
  std::vector<int> positive;
  std::vector<int> negative;
};

inline LabelSets positive_negative_sets(const FeatureLevelMask& mask, int cell) {
  if (cell < 0 || cell >= mask.cells()) {
    throw IndexError("cell index " + std::to_string(cell) + " outside [0, " +
                     std::to_string(mask.cells()) + ")");
  }
  LabelSets sets;
  for (int r = 0; r < mask.labels(); ++r) {
    (mask.presence(cell, r) ? sets.positive : sets.negative).push_back(r);
  }
  return sets;
}

template <typename Scalar>
ProjectedFeatureGrid<Scalar> project_features(const FeatureGrid<Scalar>& grid,
                                              const ProjectionParams<Scalar>& params) {
  if (params.weight.cols() != grid.features.cols() || params.bias.size() != params.weight.rows()) {
    throw ValidationError("projection expects z=" + std::to_string(params.weight.cols()) +
                          ", grid has z=" + std::to_string(grid.features.cols()));
  }
  ProjectedFeatureGrid<Scalar> out;
  out.height = grid.height;
  out.width = grid.width;
  out.features = grid.features * params.weight.transpose();
  out.features.rowwise() += params.bias.transpose();
  return out;
}

// Back-propagates d(loss)/d(projected) into the projection parameters
// (accumulated into `grads`) and returns d(loss)/d(features).
template <typename Scalar>
Matrix<Scalar> project_features_backward(const FeatureGrid<Scalar>& grid,
                                         const ProjectionParams<Scalar>& params,
                                         const Matrix<Scalar>& d_projected,
                                         ProjectionGradients<Scalar>& grads) {
  if (grads.weight.size() == 0) {
    grads.weight.setZero(params.weight.rows(), params.weight.cols());
    grads.bias.setZero(params.bias.size());
  }
  grads.weight.noalias() += d_projected.transpose() * grid.features;
  grads.bias += d_projected.colwise().sum().transpose();
  return d_projected * params.weight;
}

template <typename Derived1, typename Derived2>
typename Derived1::Scalar cosine_similarity(const Eigen::MatrixBase<Derived1>& a,
                                            const Eigen::MatrixBase<Derived2>& b) {
  using Scalar = typename Derived1::Scalar;
  if (a.size() != b.size()) throw ValidationError("cosine similarity dimension mismatch");
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  if (na < kDegenerateNorm || nb < kDegenerateNorm) {
    throw DegenerateVectorError("cosine similarity of a near-zero vector");
  }
  const Scalar c = a.dot(b) / (na * nb);
  return std::clamp(c, Scalar(-1), Scalar(1));
}

template <typename Scalar>
struct AlignOptions {
  Scalar neg_margin = Scalar(0);  // 1.0 reproduces the as-written repulsion term
  bool mean_over_cells = true;
  // Strict mode raises on degenerate vectors; otherwise the affected terms are
  // skipped and counted in AlignmentLoss::skipped_terms.
  bool strict = true;
};

template <typename Scalar>
struct AlignmentLoss {
  Scalar l_pos = 0;
  Scalar l_neg = 0;
  Scalar l_align = 0;
  Vector<Scalar> per_cell;  // cell contributions, sums to l_align
  int skipped_terms = 0;
  int empty_positive_cells = 0;
};

namespace detail {

template <typename Scalar>
void check_shapes(const ProjectedFeatureGrid<Scalar>& proj, const Matrix<Scalar>& table,
                  const FeatureLevelMask& mask) {
  if (proj.features.cols() != table.cols()) {
    throw ValidationError("projected dimension " + std::to_string(proj.features.cols()) +
                          " != text dimension " + std::to_string(table.cols()));
  }
  if (mask.cells() != proj.cells()) {
    throw ValidationError("mask has " + std::to_string(mask.cells()) + " cells, features have " +
                          std::to_string(proj.cells()));
  }
  if (mask.labels() != table.rows()) {
    throw ValidationError("mask has " + std::to_string(mask.labels()) + " labels, table has " +
                          std::to_string(table.rows()));
  }
}

enum class Term { kPositive, kNegative, kBoth };

// One pass over the cells. `d_proj` (if non-null) receives the gradient of the
// returned l_align with respect to the projected features; the table is a
// constant on this path.
template <typename Scalar>
AlignmentLoss<Scalar> evaluate(const ProjectedFeatureGrid<Scalar>& proj,
                               const Matrix<Scalar>& table, const FeatureLevelMask& mask,
                               const AlignOptions<Scalar>& options, Term terms,
                               std::type_identity_t<Matrix<Scalar>>* d_proj) {
  check_shapes(proj, table, mask);
  const int p = proj.cells();
  const int n = static_cast<int>(table.rows());
  const Scalar cell_scale = options.mean_over_cells ? Scalar(1) / Scalar(p) : Scalar(1);

  Vector<Scalar> table_norms = table.rowwise().norm();
  std::vector<bool> table_ok(n);
  for (int r = 0; r < n; ++r) {
    table_ok[r] = table_norms[r] >= kDegenerateNorm;
    if (!table_ok[r] && options.strict) {
      throw DegenerateVectorError("text embedding for label " + std::to_string(r) +
                                  " has near-zero norm");
    }
  }
  Matrix<Scalar> table_unit = table;
  for (int r = 0; r < n; ++r) {
    if (table_ok[r]) table_unit.row(r) /= table_norms[r];
  }

  AlignmentLoss<Scalar> out;
  out.per_cell = Vector<Scalar>::Zero(p);
  if (d_proj) d_proj->setZero(p, proj.features.cols());

  const bool want_pos = terms != Term::kNegative;
  const bool want_neg = terms != Term::kPositive;
  std::vector<int> positive;
  std::vector<int> negative;
  for (int j = 0; j < p; ++j) {
    positive.clear();
    negative.clear();
    for (int r = 0; r < n; ++r) (mask.presence(j, r) ? positive : negative).push_back(r);
    if (positive.empty()) ++out.empty_positive_cells;

    const auto f = proj.features.row(j);
    const Scalar f_norm = f.norm();
    if (f_norm < kDegenerateNorm) {
      if (options.strict) {
        throw DegenerateVectorError("projected feature of cell " + std::to_string(j) +
                                    " has near-zero norm");
      }
      out.skipped_terms += (want_pos ? static_cast<int>(positive.size()) : 0) +
                           (want_neg ? static_cast<int>(negative.size()) : 0);
      continue;
    }
    const RowVector<Scalar> f_unit = f / f_norm;

    // d cos / d f = (t_unit - cos * f_unit) / |f|
    auto accumulate = [&](int r, Scalar weight) {
      if (!d_proj) return;
      const Scalar c = f_unit.dot(table_unit.row(r));
      d_proj->row(j) += weight * (table_unit.row(r) - c * f_unit) / f_norm;
    };

    Scalar cell_pos = 0;
    if (want_pos && !positive.empty()) {
      const Scalar inv = Scalar(1) / Scalar(positive.size());
      for (int m : positive) {
        if (!table_ok[m]) { ++out.skipped_terms; continue; }
        const Scalar c = std::clamp(f_unit.dot(table_unit.row(m)), Scalar(-1), Scalar(1));
        const Scalar hinge = Scalar(1) - c;
        if (hinge > 0) {
          cell_pos += inv * hinge;
          accumulate(m, -inv * cell_scale);
        }
      }
    }
    Scalar cell_neg = 0;
    if (want_neg && !negative.empty()) {
      const Scalar inv = Scalar(1) / Scalar(negative.size());
      for (int q : negative) {
        if (!table_ok[q]) { ++out.skipped_terms; continue; }
        const Scalar c = std::clamp(f_unit.dot(table_unit.row(q)), Scalar(-1), Scalar(1));
        const Scalar hinge = c - options.neg_margin;
        if (hinge > 0) {
          cell_neg += inv * hinge;
          accumulate(q, inv * cell_scale);
        }
      }
    }
    out.l_pos += cell_scale * cell_pos;
    out.l_neg += cell_scale * cell_neg;
    out.per_cell[j] = cell_scale * (cell_pos + cell_neg);
  }
  out.l_align = out.l_pos + out.l_neg;
  return out;
}

}  // namespace detail

template <typename Scalar>
Scalar positive_alignment_loss(const ProjectedFeatureGrid<Scalar>& proj, const Matrix<Scalar>& table,
                               const FeatureLevelMask& mask, const AlignOptions<Scalar>& options = {}) {
  return detail::evaluate(proj, table, mask, options, detail::Term::kPositive, nullptr).l_pos;
}

template <typename Scalar>
Scalar negative_alignment_loss(const ProjectedFeatureGrid<Scalar>& proj, const Matrix<Scalar>& table,
                               const FeatureLevelMask& mask, const AlignOptions<Scalar>& options = {}) {
  return detail::evaluate(proj, table, mask, options, detail::Term::kNegative, nullptr).l_neg;
}

template <typename Scalar>
AlignmentLoss<Scalar> alignment_loss(const ProjectedFeatureGrid<Scalar>& proj,
                                     const Matrix<Scalar>& table, const FeatureLevelMask& mask,
                                     const AlignOptions<Scalar>& options = {}) {
  return detail::evaluate(proj, table, mask, options, detail::Term::kBoth, nullptr);
}

template <typename Scalar>
struct AlignmentGradients {
  Matrix<Scalar> d_projected;  // p x k
  Matrix<Scalar> d_table;      // n x k; identically zero, the text path is frozen
};

template <typename Scalar>
AlignmentLoss<Scalar> alignment_loss_with_grad(const ProjectedFeatureGrid<Scalar>& proj,
                                               const Matrix<Scalar>& table,
                                               const FeatureLevelMask& mask,
                                               const AlignOptions<Scalar>& options,
                                               AlignmentGradients<Scalar>& grads) {
  auto loss = detail::evaluate(proj, table, mask, options, detail::Term::kBoth, &grads.d_projected);
  grads.d_table.setZero(table.rows(), table.cols());
  return loss;
}

}  // namespace tgcfa::alignhead
