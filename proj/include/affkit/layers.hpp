// Copyright 2026 The affkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "affkit/autodiff.hpp"
#include "affkit/rng.hpp"

namespace affkit::nn {

enum class Mode { Train, Eval };

/// Convolution geometry. Layout: input [C x H x W], weights [F x C x kh x kw].
struct Conv2DParams {
  std::size_t filters = 1;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t stride = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
  /// Atrous rate; 1 is an ordinary convolution.
  std::size_t dilation = 1;
};

/// floor((extent + 2 pad - dilated_kernel) / stride) + 1. Throws DimensionError
/// when the dilated kernel does not fit the padded extent.
std::size_t conv_output_extent(std::size_t extent, std::size_t kernel, std::size_t stride, std::size_t pad,
                               std::size_t dilation);

Var conv2d(Var x, Var weights, Var bias, const Conv2DParams& p);

/// Transposed-convolution output extent: s (S_i - 1) + S_f - 2d.
std::size_t deconv2d_size(std::size_t input, std::size_t stride, std::size_t kernel, std::size_t pad);

/// Transposed convolution. Input [C x h x w], weights [C x F x k x k], bias [F].
/// Without bias this is the exact linear adjoint of conv2d with the same
/// weight array, stride and padding.
Var deconv2d(Var x, Var weights, Var bias, std::size_t stride, std::size_t pad);

/// Flat input index of each pooled maximum.
struct PoolIndices {
  Shape input_shape;
  Shape output_shape;
  std::vector<std::size_t> argmax;
};

struct PoolOutput {
  Var values;
  PoolIndices indices;
};

/// Non-overlapping 2x2 max pooling on [C x H x W]. Odd extents behave as if
/// padded right/bottom with -inf. Ties go to the first cell in row-major order.
PoolOutput maxpool2d(Var x);

/// Places each pooled value back at its recorded input position, zeros elsewhere.
Var maxunpool2d(Var pooled, const PoolIndices& indices);

/// True when every stored index lies inside the 2x2 window of its output cell.
bool indices_within_windows(const PoolIndices& indices);

/// Window-2 stride-2 max pooling along the last axis, floor(T / 2) outputs.
Var maxpool_time(Var x);

/// Inverted dropout: survivors are scaled by 1 / (1 - rate) in Train mode,
/// identity in Eval mode.
Var dropout(Var x, double rate, Mode mode, Rng& rng);

struct BatchNormResult {
  Var y;
  Tensor mean;
  Tensor var;  ///< biased (population) batch variance
};

inline constexpr double kBatchNormEps = 1e-5;

/// Per-feature normalization of x [B x F] with batch statistics.
BatchNormResult batchnorm_train(Var x, Var gamma, Var beta, double eps = kBatchNormEps);
/// Normalization with fixed statistics (inference).
Var batchnorm_eval(Var x, Var gamma, Var beta, const Tensor& mean, const Tensor& var, double eps = kBatchNormEps);

/// Batch-norm layer with running statistics (momentum 0.9).
class BatchNorm {
 public:
  BatchNorm(ParameterSet& params, const std::string& name, std::size_t features, double eps = kBatchNormEps,
            double momentum = 0.9);

  Var forward(Tape& tape, Var x, Mode mode);

  const Tensor& running_mean() const { return running_mean_; }
  const Tensor& running_var() const { return running_var_; }

 private:
  Parameter* gamma_;
  Parameter* beta_;
  double eps_;
  double momentum_;
  Tensor running_mean_;
  Tensor running_var_;
};

/// Softmax across the channel axis of [C x H x W]: one distribution per pixel.
Var softmax_channels(Var x);

/// Convolution weights/bias registered in a ParameterSet.
struct ConvLayer {
  Conv2DParams geometry;
  Parameter* weights = nullptr;
  Parameter* bias = nullptr;

  ConvLayer() = default;
  ConvLayer(ParameterSet& params, const std::string& name, std::size_t in_channels, Conv2DParams p, Rng& rng);
  Var forward(Tape& tape, Var x) const;
};

struct DeconvLayer {
  std::size_t stride = 2;
  std::size_t pad = 1;
  Parameter* weights = nullptr;
  Parameter* bias = nullptr;

  DeconvLayer() = default;
  DeconvLayer(ParameterSet& params, const std::string& name, std::size_t in_channels, std::size_t out_channels,
              std::size_t kernel, std::size_t stride, std::size_t pad, Rng& rng);
  Var forward(Tape& tape, Var x) const;
};

struct DenseLayer {
  Parameter* weights = nullptr;  ///< [out x in]
  Parameter* bias = nullptr;

  DenseLayer() = default;
  DenseLayer(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng);
  Var forward(Tape& tape, Var x) const;
};

}  // namespace affkit::nn
