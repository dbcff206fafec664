// Copyright 2026 The affkit Authors
// SPDX-License-Identifier: Apache-2.0

// Desk-scale substitutes for pretrained backbones and real datasets: a small
// convolutional encoder, synthetic affordance scenes, synthetic video
// features, and a toy AffordanceNet built from them.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "affkit/affordance_mask.hpp"
#include "affkit/autodiff.hpp"
#include "affkit/geometry.hpp"
#include "affkit/image.hpp"
#include "affkit/label_grid.hpp"
#include "affkit/layers.hpp"
#include "affkit/optim.hpp"
#include "affkit/v2c.hpp"

namespace affkit::toy {

/// [3 x H x W] with values rgb / 255 - 0.5.
Tensor image_to_tensor(const RgbImage& image);

struct ToyEncoderConfig {
  std::size_t in_channels = 3;
  /// One conv3x3 + ReLU + 2x2 max-pool stage per entry; stride is 2^stages.
  std::vector<std::size_t> channels{8, 16, 16};
};

class ToyEncoder {
 public:
  ToyEncoder() = default;
  ToyEncoder(ParameterSet& params, const std::string& name, const ToyEncoderConfig& config, Rng& rng);

  /// [C_in x H x W] -> [C_out x H/stride x W/stride]. Throws DimensionError
  /// when H or W is not divisible by the stride.
  Var forward(Tape& tape, Var image) const;

  std::size_t stride() const { return std::size_t{1} << stages_.size(); }
  std::size_t out_channels() const { return out_channels_; }
  const std::vector<nn::ConvLayer>& stages() const { return stages_; }

 private:
  std::vector<nn::ConvLayer> stages_;
  std::size_t out_channels_ = 0;
};

// --- Synthetic affordance scenes -------------------------------------------

inline constexpr int kBackground = 0;
inline constexpr int kGrasp = 1;
inline constexpr int kContain = 2;
inline constexpr std::size_t kNumAffordances = 3;  ///< including background

enum class ObjectClass : int {
  Bowl = 1,  ///< disk, all contain
  Mug = 2,   ///< contain body with a grasp handle on its right
  Tool = 3,  ///< bar, all grasp
};
inline constexpr std::size_t kNumObjectClasses = 4;  ///< including background

struct SceneObject {
  ObjectClass object_class = ObjectClass::Bowl;
  det::BoundingBox box;  ///< integer pixel-edge coordinates, tight around the labels
  double grasp_area = 0;    ///< analytic area of the grasp part
  double contain_area = 0;  ///< analytic area of the contain part
};

struct SyntheticScene {
  RgbImage image;
  std::vector<SceneObject> objects;
  LabelGrid affordances;
};

struct SceneConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t max_objects = 3;
  std::size_t min_extent = 16;
  std::size_t max_extent = 28;
};

std::vector<SyntheticScene> make_affordance_toyset(std::uint64_t seed, std::size_t count,
                                                   const SceneConfig& config = {});

/// Ground-truth labels inside `box` (rounded outward), resized to size x size
/// with the multi-threshold rule.
LabelGrid mask_target(const LabelGrid& labels, const det::BoundingBox& box, std::size_t size);

// --- Toy AffordanceNet ---------------------------------------------------------

struct AffordanceNetConfig {
  ToyEncoderConfig encoder;
  std::size_t head_channels = 16;
  std::size_t roi_size = 7;
  /// 28 for a roi_size of 7 (two stride-2 deconvolutions).
  std::size_t mask_size() const { return 4 * roi_size; }
};

struct RoiOutputs {
  Var class_probs;  ///< [kNumObjectClasses]
  Var box_offsets;  ///< [kNumObjectClasses * 4]
  Var mask_probs;   ///< [kNumAffordances x mask x mask]
};

class ToyAffordanceNet {
 public:
  ToyAffordanceNet(const AffordanceNetConfig& config, std::uint64_t seed);

  ToyAffordanceNet(const ToyAffordanceNet&) = delete;
  ToyAffordanceNet& operator=(const ToyAffordanceNet&) = delete;

  const AffordanceNetConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const ToyEncoder& encoder() const { return encoder_; }

  Var features(Tape& tape, const RgbImage& image) const;
  /// RoIAlign on the feature map followed by the class, box and mask heads.
  /// With `with_mask` false the mask handle is left invalid.
  RoiOutputs roi_forward(Tape& tape, Var features, const det::BoundingBox& roi, bool with_mask = true) const;

  /// Per-object label masks for the given RoIs, sized to each RoI.
  std::vector<aff::MaskedDetection> predict_masks(const RgbImage& image, std::span<const det::Detection> rois) const;

 private:
  AffordanceNetConfig config_;
  ParameterSet params_;
  ToyEncoder encoder_;
  nn::DenseLayer cls_;
  nn::DenseLayer box_;
  nn::ConvLayer mask_conv_;
  nn::DeconvLayer deconv0_;
  nn::DeconvLayer deconv1_;
};

struct AffordanceTrainConfig {
  std::size_t steps = 500;
  std::size_t scenes_per_step = 4;
  double learning_rate = 2e-3;
  std::uint64_t seed = 0;
  /// Background RoIs per ground-truth object (1:3 positive:negative by default).
  std::size_t negatives_per_object = 3;
  /// Uniform jitter (pixels) applied to each edge of the positive RoIs.
  double roi_jitter = 0.0;
};

using StepCallback = std::function<void(std::size_t step, double loss)>;

/// Adam on the mean detection_joint_loss over the ground-truth RoIs of each
/// scene batch, plus classification-only terms for sampled background RoIs.
std::vector<double> train_affordance(ToyAffordanceNet& net, Adam& optimizer, std::span<const SyntheticScene> scenes,
                                     const AffordanceTrainConfig& config, std::size_t first_step = 0,
                                     const StepCallback& on_step = {});

/// Fraction of mask pixels labelled correctly on ground-truth RoIs, compared
/// at mask resolution against mask_target.
double roi_pixel_accuracy(const ToyAffordanceNet& net, std::span<const SyntheticScene> scenes);

/// Full-image labels from ground-truth RoIs pasted with the affordance priority.
aff::MergeResult predict_scene(const ToyAffordanceNet& net, const SyntheticScene& scene);

// --- Synthetic video features --------------------------------------------------

struct V2CToyConfig {
  std::size_t classes = 4;
  std::size_t feature_dim = 16;
  std::size_t frames = v2c::kDefaultFrames;
  std::size_t min_length = 20;
  std::size_t max_length = 60;
  double noise = 0.05;
};

struct V2CToySet {
  v2c::Vocabulary vocab;
  Tensor mean_feature;                ///< feature of the mean frame colour
  std::vector<v2c::Example> examples;  ///< features already padded
  std::vector<Tensor> raw_features;    ///< [length x d] before padding
  std::vector<std::string> commands;   ///< command text per example
  std::vector<std::string> verbs;      ///< verb per action class
};

/// Fixed map from a pixel colour to a toy frame feature.
Tensor frame_feature_of_colour(double r, double g, double b, std::size_t feature_dim);

/// Noise-free feature of action class `c` performed with hand `hand` at
/// normalized time tau in [0, 1].
Tensor action_signature(std::size_t c, std::size_t hand, double tau, std::size_t feature_dim);

V2CToySet make_v2c_toyset(std::uint64_t seed, std::size_t count, const V2CToyConfig& config = {});

}  // namespace affkit::toy
