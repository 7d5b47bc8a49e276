#pragma once

// Minimal layer library for the U-shaped segmentation backbone. Activations
// are (channels x batch*height*width) row-major matrices so that every
// channel plane of every sample is contiguous. Each layer caches what its
// backward pass needs; layers are therefore not re-entrant.

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "tgcfa/common.hpp"

namespace tgcfa::nn {

template <typename Scalar>
using Tensor = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
struct Activation {
  Tensor<Scalar> data;  // C x (B*H*W)
  int batch = 0;
  int height = 0;
  int width = 0;

  int channels() const { return static_cast<int>(data.rows()); }
  int plane() const { return height * width; }
};

template <typename Scalar>
struct Param {
  std::string name;
  Tensor<Scalar> value;
  Tensor<Scalar> grad;

  Param() = default;
  Param(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Tensor<Scalar>::Zero(rows, cols)),
        grad(Tensor<Scalar>::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename Scalar>
void he_init(Param<Scalar>& p, int fan_in, Rng& rng) {
  const double stddev = std::sqrt(2.0 / fan_in);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) {
    p.value.data()[i] = static_cast<Scalar>(stddev * normal(rng));
  }
}

// 3x3 convolution, stride 1, zero padding 1, via im2col + GEMM.
template <typename Scalar>
class Conv3x3 {
 public:
  Conv3x3() = default;
  Conv3x3(const std::string& name, int in_ch, int out_ch, Rng& rng)
      : in_ch_(in_ch), weight_(name + ".weight", out_ch, in_ch * 9),
        bias_(name + ".bias", out_ch, 1) {
    he_init(weight_, in_ch * 9, rng);
  }

  Activation<Scalar> forward(const Activation<Scalar>& x) {
    if (x.channels() != in_ch_) {
      throw ValidationError("conv expects " + std::to_string(in_ch_) + " channels, got " +
                            std::to_string(x.channels()));
    }
    shape_ = x;
    shape_.data.resize(0, 0);
    im2col(x, cols_);
    Activation<Scalar> y{Tensor<Scalar>(weight_.value.rows(), cols_.cols()), x.batch, x.height,
                         x.width};
    y.data.noalias() = weight_.value * cols_;
    y.data.colwise() += bias_.value.col(0);
    return y;
  }

  Activation<Scalar> backward(const Activation<Scalar>& dy) {
    weight_.grad.noalias() += dy.data * cols_.transpose();
    bias_.grad.col(0) += dy.data.rowwise().sum();
    Tensor<Scalar> dcols(cols_.rows(), cols_.cols());
    dcols.noalias() = weight_.value.transpose() * dy.data;
    Activation<Scalar> dx{Tensor<Scalar>::Zero(in_ch_, dy.data.cols()), shape_.batch,
                          shape_.height, shape_.width};
    col2im(dcols, dx);
    return dx;
  }

  void collect(std::vector<Param<Scalar>*>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  static void im2col(const Activation<Scalar>& x, Tensor<Scalar>& cols) {
    const int h = x.height, w = x.width, hw = h * w;
    cols.resize(static_cast<Eigen::Index>(x.channels()) * 9, x.data.cols());
    for (int c = 0; c < x.channels(); ++c) {
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const int dy = ky - 1, dx = kx - 1;
          Scalar* dst = cols.row(c * 9 + ky * 3 + kx).data();
          const Scalar* src = x.data.row(c).data();
          for (int b = 0; b < x.batch; ++b) {
            const Scalar* s = src + static_cast<std::ptrdiff_t>(b) * hw;
            Scalar* d = dst + static_cast<std::ptrdiff_t>(b) * hw;
            for (int y = 0; y < h; ++y) {
              const int sy = y + dy;
              Scalar* drow = d + y * w;
              if (sy < 0 || sy >= h) {
                std::fill(drow, drow + w, Scalar(0));
                continue;
              }
              const Scalar* srow = s + sy * w;
              const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
              for (int xx = 0; xx < x0; ++xx) drow[xx] = 0;
              for (int xx = x0; xx < x1; ++xx) drow[xx] = srow[xx + dx];
              for (int xx = x1; xx < w; ++xx) drow[xx] = 0;
            }
          }
        }
      }
    }
  }

  static void col2im(const Tensor<Scalar>& cols, Activation<Scalar>& dx) {
    const int h = dx.height, w = dx.width, hw = h * w;
    for (int c = 0; c < dx.channels(); ++c) {
      Scalar* dst = dx.data.row(c).data();
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const int oy = ky - 1, ox = kx - 1;
          const Scalar* src = cols.row(c * 9 + ky * 3 + kx).data();
          for (int b = 0; b < dx.batch; ++b) {
            const Scalar* s = src + static_cast<std::ptrdiff_t>(b) * hw;
            Scalar* d = dst + static_cast<std::ptrdiff_t>(b) * hw;
            for (int y = 0; y < h; ++y) {
              const int sy = y + oy;
              if (sy < 0 || sy >= h) continue;
              const Scalar* srow = s + y * w;
              Scalar* drow = d + sy * w;
              const int x0 = std::max(0, -ox), x1 = std::min(w, w - ox);
              for (int xx = x0; xx < x1; ++xx) drow[xx + ox] += srow[xx];
            }
          }
        }
      }
    }
  }

  int in_ch_ = 0;
  Param<Scalar> weight_;
  Param<Scalar> bias_;
  Activation<Scalar> shape_;
  Tensor<Scalar> cols_;
};

// Per-sample, per-channel normalization with learned affine, fused with ReLU.
template <typename Scalar>
class InstanceNormReLU {
 public:
  InstanceNormReLU() = default;
  InstanceNormReLU(const std::string& name, int channels)
      : gamma_(name + ".gamma", channels, 1), beta_(name + ".beta", channels, 1) {
    gamma_.value.setOnes();
  }

  Activation<Scalar> forward(const Activation<Scalar>& x) {
    const int hw = x.plane();
    normalized_.resize(x.data.rows(), x.data.cols());
    inv_std_.resize(x.channels(), x.batch);
    Activation<Scalar> y{Tensor<Scalar>(x.data.rows(), x.data.cols()), x.batch, x.height, x.width};
    for (int c = 0; c < x.channels(); ++c) {
      for (int b = 0; b < x.batch; ++b) {
        const auto seg = x.data.row(c).segment(static_cast<Eigen::Index>(b) * hw, hw);
        const Scalar mean = seg.mean();
        const Scalar var = (seg.array() - mean).square().mean();
        const Scalar inv = Scalar(1) / std::sqrt(var + Scalar(kEps));
        inv_std_(c, b) = inv;
        auto xhat = normalized_.row(c).segment(static_cast<Eigen::Index>(b) * hw, hw);
        xhat = (seg.array() - mean) * inv;
        y.data.row(c).segment(static_cast<Eigen::Index>(b) * hw, hw) =
            (xhat.array() * gamma_.value(c, 0) + beta_.value(c, 0)).cwiseMax(Scalar(0));
      }
    }
    output_ = y.data;
    return y;
  }

  Activation<Scalar> backward(const Activation<Scalar>& dy) {
    const int hw = dy.plane();
    Activation<Scalar> dx{Tensor<Scalar>(dy.data.rows(), dy.data.cols()), dy.batch, dy.height,
                          dy.width};
    for (int c = 0; c < dy.channels(); ++c) {
      for (int b = 0; b < dy.batch; ++b) {
        const Eigen::Index off = static_cast<Eigen::Index>(b) * hw;
        const auto out = output_.row(c).segment(off, hw).array();
        const auto xhat = normalized_.row(c).segment(off, hw).array();
        const Eigen::Array<Scalar, 1, Eigen::Dynamic> g =
            (out > Scalar(0)).select(dy.data.row(c).segment(off, hw).array(), Scalar(0));
        gamma_.grad(c, 0) += (g * xhat).sum();
        beta_.grad(c, 0) += g.sum();
        const Eigen::Array<Scalar, 1, Eigen::Dynamic> dxhat = g * gamma_.value(c, 0);
        const Scalar mean_d = dxhat.mean();
        const Scalar mean_dx = (dxhat * xhat).mean();
        dx.data.row(c).segment(off, hw) = inv_std_(c, b) * (dxhat - mean_d - xhat * mean_dx);
      }
    }
    return dx;
  }

  void collect(std::vector<Param<Scalar>*>& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }

 private:
  static constexpr double kEps = 1e-5;
  Param<Scalar> gamma_;
  Param<Scalar> beta_;
  Tensor<Scalar> normalized_;
  Tensor<Scalar> output_;
  Tensor<Scalar> inv_std_;
};

// conv3x3 -> norm -> relu -> conv3x3 -> norm -> relu
template <typename Scalar>
class DoubleConv {
 public:
  DoubleConv() = default;
  DoubleConv(const std::string& name, int in_ch, int out_ch, Rng& rng)
      : conv1_(name + ".conv1", in_ch, out_ch, rng), norm1_(name + ".norm1", out_ch),
        conv2_(name + ".conv2", out_ch, out_ch, rng), norm2_(name + ".norm2", out_ch) {}

  Activation<Scalar> forward(const Activation<Scalar>& x) {
    return norm2_.forward(conv2_.forward(norm1_.forward(conv1_.forward(x))));
  }
  Activation<Scalar> backward(const Activation<Scalar>& dy) {
    return conv1_.backward(norm1_.backward(conv2_.backward(norm2_.backward(dy))));
  }
  void collect(std::vector<Param<Scalar>*>& out) {
    conv1_.collect(out);
    norm1_.collect(out);
    conv2_.collect(out);
    norm2_.collect(out);
  }

 private:
  Conv3x3<Scalar> conv1_;
  InstanceNormReLU<Scalar> norm1_;
  Conv3x3<Scalar> conv2_;
  InstanceNormReLU<Scalar> norm2_;
};

template <typename Scalar>
class MaxPool2 {
 public:
  Activation<Scalar> forward(const Activation<Scalar>& x) {
    const int h = x.height / 2, w = x.width / 2;
    in_height_ = x.height;
    in_width_ = x.width;
    Activation<Scalar> y{Tensor<Scalar>(x.data.rows(), static_cast<Eigen::Index>(x.batch) * h * w),
                         x.batch, h, w};
    argmax_.resize(x.data.rows(), y.data.cols());
    for (int c = 0; c < x.channels(); ++c) {
      const Scalar* src = x.data.row(c).data();
      for (int b = 0; b < x.batch; ++b) {
        for (int yy = 0; yy < h; ++yy) {
          for (int xx = 0; xx < w; ++xx) {
            const Eigen::Index base = static_cast<Eigen::Index>(b) * x.plane() +
                                      2 * yy * x.width + 2 * xx;
            Eigen::Index best = base;
            for (Eigen::Index cand : {base + 1, base + x.width, base + x.width + 1}) {
              if (src[cand] > src[best]) best = cand;
            }
            const Eigen::Index o = static_cast<Eigen::Index>(b) * h * w + yy * w + xx;
            y.data(c, o) = src[best];
            argmax_(c, o) = best;
          }
        }
      }
    }
    return y;
  }

  Activation<Scalar> backward(const Activation<Scalar>& dy) {
    Activation<Scalar> dx{Tensor<Scalar>::Zero(dy.data.rows(), static_cast<Eigen::Index>(dy.batch) *
                                                                   in_height_ * in_width_),
                          dy.batch, in_height_, in_width_};
    for (Eigen::Index c = 0; c < dy.data.rows(); ++c) {
      for (Eigen::Index o = 0; o < dy.data.cols(); ++o) dx.data(c, argmax_(c, o)) += dy.data(c, o);
    }
    return dx;
  }

 private:
  int in_height_ = 0;
  int in_width_ = 0;
  Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> argmax_;
};

// 2x2 transposed convolution with stride 2.
template <typename Scalar>
class UpConv2 {
 public:
  UpConv2() = default;
  UpConv2(const std::string& name, int in_ch, int out_ch, Rng& rng)
      : out_ch_(out_ch), weight_(name + ".weight", out_ch * 4, in_ch),
        bias_(name + ".bias", out_ch, 1) {
    he_init(weight_, in_ch, rng);
  }

  Activation<Scalar> forward(const Activation<Scalar>& x) {
    input_ = x;
    Tensor<Scalar> z(weight_.value.rows(), x.data.cols());
    z.noalias() = weight_.value * x.data;
    const int h = x.height * 2, w = x.width * 2;
    Activation<Scalar> y{Tensor<Scalar>(out_ch_, static_cast<Eigen::Index>(x.batch) * h * w),
                         x.batch, h, w};
    for (int c = 0; c < out_ch_; ++c) {
      for (int k = 0; k < 4; ++k) {
        const int oy = k / 2, ox = k % 2;
        const Scalar* src = z.row(c * 4 + k).data();
        Scalar* dst = y.data.row(c).data();
        for (int b = 0; b < x.batch; ++b) {
          for (int yy = 0; yy < x.height; ++yy) {
            for (int xx = 0; xx < x.width; ++xx) {
              dst[static_cast<Eigen::Index>(b) * h * w + (2 * yy + oy) * w + 2 * xx + ox] =
                  src[static_cast<Eigen::Index>(b) * x.plane() + yy * x.width + xx] +
                  bias_.value(c, 0);
            }
          }
        }
      }
    }
    return y;
  }

  Activation<Scalar> backward(const Activation<Scalar>& dy) {
    const Activation<Scalar>& x = input_;
    Tensor<Scalar> dz(weight_.value.rows(), x.data.cols());
    const int h = dy.height, w = dy.width;
    for (int c = 0; c < out_ch_; ++c) {
      bias_.grad(c, 0) += dy.data.row(c).sum();
      for (int k = 0; k < 4; ++k) {
        const int oy = k / 2, ox = k % 2;
        Scalar* dst = dz.row(c * 4 + k).data();
        const Scalar* src = dy.data.row(c).data();
        for (int b = 0; b < x.batch; ++b) {
          for (int yy = 0; yy < x.height; ++yy) {
            for (int xx = 0; xx < x.width; ++xx) {
              dst[static_cast<Eigen::Index>(b) * x.plane() + yy * x.width + xx] =
                  src[static_cast<Eigen::Index>(b) * h * w + (2 * yy + oy) * w + 2 * xx + ox];
            }
          }
        }
      }
    }
    weight_.grad.noalias() += dz * x.data.transpose();
    Activation<Scalar> dx{Tensor<Scalar>(x.data.rows(), x.data.cols()), x.batch, x.height, x.width};
    dx.data.noalias() = weight_.value.transpose() * dz;
    return dx;
  }

  void collect(std::vector<Param<Scalar>*>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  int out_ch_ = 0;
  Param<Scalar> weight_;
  Param<Scalar> bias_;
  Activation<Scalar> input_;
};

// Pointwise linear map over channels.
template <typename Scalar>
class Conv1x1 {
 public:
  Conv1x1() = default;
  Conv1x1(const std::string& name, int in_ch, int out_ch, Rng& rng)
      : weight_(name + ".weight", out_ch, in_ch), bias_(name + ".bias", out_ch, 1) {
    he_init(weight_, in_ch, rng);
  }

  Activation<Scalar> forward(const Activation<Scalar>& x) {
    input_ = x;
    Activation<Scalar> y{Tensor<Scalar>(weight_.value.rows(), x.data.cols()), x.batch, x.height,
                         x.width};
    y.data.noalias() = weight_.value * x.data;
    y.data.colwise() += bias_.value.col(0);
    return y;
  }

  Activation<Scalar> backward(const Activation<Scalar>& dy) {
    weight_.grad.noalias() += dy.data * input_.data.transpose();
    bias_.grad.col(0) += dy.data.rowwise().sum();
    Activation<Scalar> dx{Tensor<Scalar>(input_.data.rows(), dy.data.cols()), dy.batch, dy.height,
                          dy.width};
    dx.data.noalias() = weight_.value.transpose() * dy.data;
    return dx;
  }

  void collect(std::vector<Param<Scalar>*>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  Param<Scalar> weight_;
  Param<Scalar> bias_;
  Activation<Scalar> input_;
};

template <typename Scalar>
Activation<Scalar> concat_channels(const Activation<Scalar>& a, const Activation<Scalar>& b) {
  Activation<Scalar> out{Tensor<Scalar>(a.data.rows() + b.data.rows(), a.data.cols()), a.batch,
                         a.height, a.width};
  out.data.topRows(a.data.rows()) = a.data;
  out.data.bottomRows(b.data.rows()) = b.data;
  return out;
}

}  // namespace tgcfa::nn
