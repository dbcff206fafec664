// Copyright 2026 The affkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "affkit/toy.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>

#include "affkit/error.hpp"
#include "affkit/losses.hpp"
#include "affkit/metrics.hpp"
#include "affkit/rng.hpp"

namespace affkit::toy {

Tensor image_to_tensor(const RgbImage& image) {
  const std::size_t H = image.height, W = image.width;
  Tensor t({3, H, W});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) t(c, y, x) = image.at(y, x, c) / 255.0 - 0.5;
  return t;
}

ToyEncoder::ToyEncoder(ParameterSet& params, const std::string& name, const ToyEncoderConfig& config, Rng& rng) {
  if (config.channels.empty()) throw ParameterError("toy encoder needs at least one stage");
  std::size_t in = config.in_channels;
  for (std::size_t i = 0; i < config.channels.size(); ++i) {
    nn::Conv2DParams p;
    p.filters = config.channels[i];
    p.kernel_h = p.kernel_w = 3;
    p.pad_h = p.pad_w = 1;
    stages_.emplace_back(params, name + ".conv" + std::to_string(i), in, p, rng);
    in = config.channels[i];
  }
  out_channels_ = in;
}

Var ToyEncoder::forward(Tape& tape, Var image) const {
  if (stages_.empty()) throw ContractViolation("toy encoder used before construction");
  const Shape& s = image.shape();
  if (s.size() != 3) throw DimensionError("toy encoder expects [C x H x W], got " + to_string(s));
  if (s[1] % stride() != 0 || s[2] % stride() != 0)
    throw DimensionError("image extents " + std::to_string(s[1]) + "x" + std::to_string(s[2]) +
                         " not divisible by encoder stride " + std::to_string(stride()));
  Var h = image;
  for (const auto& stage : stages_) h = nn::maxpool2d(relu(stage.forward(tape, h))).values;
  return h;
}

// --- scenes -----------------------------------------------------------------

namespace {

struct Colour {
  int r, g, b;
};

constexpr Colour kGraspColour{200, 60, 40};
constexpr Colour kContainColour{40, 90, 200};
constexpr int kBackgroundGrey = 128;

std::uint8_t clamp_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

Colour jitter_colour(Colour c, Rng& rng) {
  const auto j = [&](int v) { return v + static_cast<int>(rng.below(31)) - 15; };
  return {j(c.r), j(c.g), j(c.b)};
}

bool separated(const det::BoundingBox& a, const det::BoundingBox& b, double gap) {
  return a.x2 + gap <= b.x1 || b.x2 + gap <= a.x1 || a.y2 + gap <= b.y1 || b.y2 + gap <= a.y1;
}

}  // namespace

std::vector<SyntheticScene> make_affordance_toyset(std::uint64_t seed, std::size_t count, const SceneConfig& cfg) {
  if (count == 0) throw ParameterError("make_affordance_toyset: count must be positive");
  if (cfg.min_extent < 6 || cfg.max_extent < cfg.min_extent || cfg.max_extent + 2 > std::min(cfg.height, cfg.width))
    throw ParameterError("make_affordance_toyset: object extents do not fit the scene");
  std::vector<SyntheticScene> scenes;
  scenes.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    Rng rng = Rng(seed).fork(s);
    SyntheticScene scene;
    scene.image = RgbImage(cfg.height, cfg.width);
    scene.affordances = LabelGrid(cfg.height, cfg.width);
    for (auto& v : scene.image.rgb) v = clamp_byte(kBackgroundGrey + 10.0 * (rng.uniform() - 0.5) * 2.0);

    const std::size_t wanted = 1 + rng.below(cfg.max_objects);
    for (std::size_t attempt = 0; attempt < 200 && scene.objects.size() < wanted; ++attempt) {
      const auto cls = static_cast<ObjectClass>(1 + rng.below(3));
      const std::size_t span = cfg.max_extent - cfg.min_extent + 1;
      std::size_t w = cfg.min_extent + rng.below(span);
      std::size_t h = cfg.min_extent + rng.below(span);
      if (cls == ObjectClass::Bowl) h = w;
      if (cls == ObjectClass::Tool) h = std::max<std::size_t>(4, h / 3);
      const std::size_t x0 = 1 + rng.below(cfg.width - w - 1);
      const std::size_t y0 = 1 + rng.below(cfg.height - h - 1);
      const det::BoundingBox box{static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x0 + w),
                                 static_cast<double>(y0 + h)};
      if (!std::all_of(scene.objects.begin(), scene.objects.end(),
                       [&](const SceneObject& o) { return separated(o.box, box, 2.0); }))
        continue;

      SceneObject obj;
      obj.object_class = cls;
      obj.box = box;
      const Colour grasp = jitter_colour(kGraspColour, rng);
      const Colour contain = jitter_colour(kContainColour, rng);
      const auto paint = [&](std::size_t y, std::size_t x, int label) {
        const Colour c = label == kGrasp ? grasp : contain;
        scene.affordances.at(y, x) = label;
        scene.image.at(y, x, 0) = clamp_byte(c.r);
        scene.image.at(y, x, 1) = clamp_byte(c.g);
        scene.image.at(y, x, 2) = clamp_byte(c.b);
      };
      switch (cls) {
        case ObjectClass::Bowl: {
          const double r = 0.5 * static_cast<double>(w);
          const double cx = x0 + r, cy = y0 + r;
          for (std::size_t y = y0; y < y0 + h; ++y)
            for (std::size_t x = x0; x < x0 + w; ++x) {
              const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
              if (dx * dx + dy * dy <= r * r) paint(y, x, kContain);
            }
          obj.contain_area = std::numbers::pi * r * r;
          break;
        }
        case ObjectClass::Mug: {
          const std::size_t handle_w = std::max<std::size_t>(3, w / 5);
          const std::size_t body_w = w - handle_w;
          const std::size_t handle_y0 = y0 + h / 4, handle_h = h / 2;
          for (std::size_t y = y0; y < y0 + h; ++y)
            for (std::size_t x = x0; x < x0 + body_w; ++x) paint(y, x, kContain);
          for (std::size_t y = handle_y0; y < handle_y0 + handle_h; ++y)
            for (std::size_t x = x0 + body_w; x < x0 + w; ++x) paint(y, x, kGrasp);
          obj.contain_area = static_cast<double>(body_w * h);
          obj.grasp_area = static_cast<double>(handle_w * handle_h);
          break;
        }
        case ObjectClass::Tool:
          for (std::size_t y = y0; y < y0 + h; ++y)
            for (std::size_t x = x0; x < x0 + w; ++x) paint(y, x, kGrasp);
          obj.grasp_area = static_cast<double>(w * h);
          break;
      }
      scene.objects.push_back(obj);
    }
    if (scene.objects.empty()) throw ContractViolation("make_affordance_toyset: could not place any object");
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

LabelGrid mask_target(const LabelGrid& labels, const det::BoundingBox& box, std::size_t size) {
  const auto x0 = static_cast<long>(std::floor(box.x1)), y0 = static_cast<long>(std::floor(box.y1));
  const auto x1 = static_cast<long>(std::ceil(box.x2)), y1 = static_cast<long>(std::ceil(box.y2));
  if (x1 <= x0 || y1 <= y0) throw ContractViolation("mask_target: empty box");
  LabelGrid crop(static_cast<std::size_t>(y1 - y0), static_cast<std::size_t>(x1 - x0));
  for (long y = y0; y < y1; ++y)
    for (long x = x0; x < x1; ++x)
      if (y >= 0 && x >= 0 && y < static_cast<long>(labels.height) && x < static_cast<long>(labels.width))
        crop.at(static_cast<std::size_t>(y - y0), static_cast<std::size_t>(x - x0)) =
            labels.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
  return aff::resize_mask_multithreshold(crop, size, size);
}

// --- AffordanceNet -------------------------------------------------------------

ToyAffordanceNet::ToyAffordanceNet(const AffordanceNetConfig& config, std::uint64_t seed) : config_(config) {
  if (config_.roi_size == 0 || config_.head_channels == 0) throw ParameterError("AffordanceNet sizes must be positive");
  Rng rng(seed);
  encoder_ = ToyEncoder(params_, "encoder", config_.encoder, rng);
  const std::size_t C = encoder_.out_channels();
  const std::size_t flat = C * config_.roi_size * config_.roi_size;
  cls_ = nn::DenseLayer(params_, "head.cls", flat, kNumObjectClasses, rng);
  box_ = nn::DenseLayer(params_, "head.box", flat, kNumObjectClasses * 4, rng);
  nn::Conv2DParams p;
  p.filters = config_.head_channels;
  p.kernel_h = p.kernel_w = 3;
  p.pad_h = p.pad_w = 1;
  mask_conv_ = nn::ConvLayer(params_, "mask.conv", C, p, rng);
  deconv0_ = nn::DeconvLayer(params_, "mask.deconv0", config_.head_channels, config_.head_channels, 4, 2, 1, rng);
  deconv1_ = nn::DeconvLayer(params_, "mask.deconv1", config_.head_channels, kNumAffordances, 4, 2, 1, rng);
}

Var ToyAffordanceNet::features(Tape& tape, const RgbImage& image) const {
  return encoder_.forward(tape, tape.leaf(image_to_tensor(image)));
}

RoiOutputs ToyAffordanceNet::roi_forward(Tape& tape, Var features, const det::BoundingBox& roi, bool with_mask) const {
  det::RoiAlignConfig rc;
  rc.out_h = rc.out_w = config_.roi_size;
  rc.spatial_scale = 1.0 / static_cast<double>(encoder_.stride());
  const Var r = det::roi_align(features, roi, rc);
  const Var flat = reshape(r, {r.size()});
  RoiOutputs out;
  out.class_probs = softmax(cls_.forward(tape, flat));
  out.box_offsets = box_.forward(tape, flat);
  if (with_mask) {
    Var m = relu(mask_conv_.forward(tape, r));
    m = relu(deconv0_.forward(tape, m));
    out.mask_probs = nn::softmax_channels(deconv1_.forward(tape, m));
  }
  return out;
}

std::vector<aff::MaskedDetection> ToyAffordanceNet::predict_masks(const RgbImage& image,
                                                                  std::span<const det::Detection> rois) const {
  Tape tape;
  const Var f = features(tape, image);
  std::vector<aff::MaskedDetection> out;
  for (const auto& d : rois) {
    const auto x0 = std::floor(d.box.x1), y0 = std::floor(d.box.y1);
    const auto w = static_cast<std::size_t>(std::ceil(d.box.x2) - x0);
    const auto h = static_cast<std::size_t>(std::ceil(d.box.y2) - y0);
    if (w == 0 || h == 0) throw ContractViolation("predict_masks: empty RoI");
    const Tensor& probs = roi_forward(tape, f, d.box).mask_probs.value();
    out.push_back({d, aff::argmax_labels(aff::bilinear_resize(probs, h, w))});
  }
  return out;
}

namespace {

det::BoundingBox sample_background_roi(const SyntheticScene& scene, Rng& rng) {
  const double H = static_cast<double>(scene.image.height), W = static_cast<double>(scene.image.width);
  det::BoundingBox best;
  double best_iou = 2.0;
  for (int attempt = 0; attempt < 20; ++attempt) {
    const double w = rng.uniform(8.0, 28.0), h = rng.uniform(8.0, 28.0);
    const double x = rng.uniform(0.0, W - w), y = rng.uniform(0.0, H - h);
    const det::BoundingBox b{x, y, x + w, y + h};
    double worst = 0.0;
    for (const auto& o : scene.objects) worst = std::max(worst, det::iou(b, o.box));
    if (worst < best_iou) {
      best = b;
      best_iou = worst;
    }
    if (worst < 0.3) break;
  }
  return best;
}

det::BoundingBox jitter_box(const det::BoundingBox& b, double amount, double H, double W, Rng& rng) {
  if (amount <= 0.0) return b;
  det::BoundingBox j{b.x1 + rng.uniform(-amount, amount), b.y1 + rng.uniform(-amount, amount),
                     b.x2 + rng.uniform(-amount, amount), b.y2 + rng.uniform(-amount, amount)};
  j.x1 = std::clamp(j.x1, 0.0, W - 1.0);
  j.y1 = std::clamp(j.y1, 0.0, H - 1.0);
  j.x2 = std::clamp(j.x2, j.x1 + 1.0, W);
  j.y2 = std::clamp(j.y2, j.y1 + 1.0, H);
  return j;
}

double scene_loss(const ToyAffordanceNet& net, const SyntheticScene& scene, const AffordanceTrainConfig& cfg, Rng& rng,
                  std::size_t step) {
  Tape tape;
  const Var f = net.features(tape, scene.image);
  const std::size_t mask = net.config().mask_size();
  const double H = static_cast<double>(scene.image.height), W = static_cast<double>(scene.image.width);
  Var total;
  const auto accumulate = [&](Var term) { total = total.valid() ? total + term : term; };
  for (const auto& obj : scene.objects) {
    const det::BoundingBox roi = jitter_box(obj.box, cfg.roi_jitter, H, W, rng);
    const RoiOutputs out = net.roi_forward(tape, f, roi);
    loss::DetectionTarget target;
    target.u = static_cast<std::size_t>(obj.object_class);
    target.v = det::encode_offset(obj.box, roi);
    target.s = mask_target(scene.affordances, roi, mask);
    accumulate(loss::detection_joint_loss(out.class_probs, slice(out.box_offsets, target.u * 4, 4), out.mask_probs,
                                          target));
    for (std::size_t k = 0; k < cfg.negatives_per_object; ++k) {
      const RoiOutputs neg = net.roi_forward(tape, f, sample_background_roi(scene, rng), false);
      accumulate(loss::ce_class(neg.class_probs, 0));
    }
  }
  const Var l = affine(total, 1.0 / static_cast<double>(scene.objects.size()), 0.0);
  const double value = l.value().item();
  if (!std::isfinite(value)) throw TrainingError("non-finite affordance loss", step);
  tape.backward(l);
  return value;
}

}  // namespace

std::vector<double> train_affordance(ToyAffordanceNet& net, Adam& optimizer, std::span<const SyntheticScene> scenes,
                                     const AffordanceTrainConfig& config, std::size_t first_step,
                                     const StepCallback& on_step) {
  if (scenes.empty()) throw ContractViolation("training on an empty scene set");
  if (config.scenes_per_step == 0) throw ParameterError("scenes per step must be positive");
  ParameterSet& params = net.params();
  std::vector<double> losses;
  const std::size_t n = scenes.size();
  for (std::size_t step = first_step; step < config.steps; ++step) {
    params.zero_grad();
    Rng rng = Rng(config.seed).fork(step);
    double loss = 0.0;
    for (std::size_t b = 0; b < config.scenes_per_step; ++b) {
      // Visit scenes in a fresh seeded order each pass over the data.
      const std::size_t flat = step * config.scenes_per_step + b;
      const std::size_t pass = flat / n;
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng order_rng = Rng(config.seed ^ 0x5ce2e5ULL).fork(pass);
      shuffle(order, order_rng);
      loss += scene_loss(net, scenes[order[flat % n]], config, rng, step + 1);
    }
    const double inv = 1.0 / static_cast<double>(config.scenes_per_step);
    for (auto& p : params) {
      for (double& g : p->grad.data()) g *= inv;
      if (!p->grad.all_finite()) throw TrainingError("non-finite gradient in " + p->name, step + 1);
    }
    optimizer.step();
    losses.push_back(loss * inv);
    if (on_step) on_step(step, loss * inv);
  }
  return losses;
}

double roi_pixel_accuracy(const ToyAffordanceNet& net, std::span<const SyntheticScene> scenes) {
  std::size_t correct = 0, total = 0;
  const std::size_t mask = net.config().mask_size();
  for (const auto& scene : scenes) {
    Tape tape;
    const Var f = net.features(tape, scene.image);
    for (const auto& obj : scene.objects) {
      const LabelGrid pred = aff::argmax_labels(net.roi_forward(tape, f, obj.box).mask_probs.value());
      const LabelGrid gt = mask_target(scene.affordances, obj.box, mask);
      for (std::size_t i = 0; i < gt.size(); ++i) correct += pred.labels[i] == gt.labels[i];
      total += gt.size();
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

aff::MergeResult predict_scene(const ToyAffordanceNet& net, const SyntheticScene& scene) {
  std::vector<det::Detection> rois;
  for (const auto& o : scene.objects) rois.push_back({o.box, static_cast<int>(o.object_class), 1.0});
  const auto masks = net.predict_masks(scene.image, rois);
  return aff::merge_detections(masks, aff::default_priority(2, kContain), scene.image.height, scene.image.width);
}

// --- video features ---------------------------------------------------------------

namespace {

struct ActionWords {
  const char* verb;
  const char* object;
};

constexpr std::array<ActionWords, 8> kActions{{{"pour", "water"},
                                               {"cut", "apple"},
                                               {"carry", "salt box"},
                                               {"stir", "coffee"},
                                               {"pick", "cup"},
                                               {"place", "knife"},
                                               {"wipe", "table"},
                                               {"open", "bottle"}}};
constexpr std::array<const char*, 3> kHands{"righthand", "lefthand", "bothhand"};
constexpr std::size_t kHandDims = kHands.size();

}  // namespace

Tensor frame_feature_of_colour(double r, double g, double b, std::size_t feature_dim) {
  Rng rng(0xC0105ULL);
  Tensor f({feature_dim});
  const std::array<double, 3> rgb{r / 255.0 - 0.5, g / 255.0 - 0.5, b / 255.0 - 0.5};
  for (std::size_t k = 0; k < feature_dim; ++k)
    for (double c : rgb) f[k] += rng.uniform(-1.0, 1.0) * c;
  return f;
}

Tensor action_signature(std::size_t c, std::size_t hand, double tau, std::size_t feature_dim) {
  if (feature_dim <= kHandDims) throw ParameterError("toy feature width must exceed the hand code width");
  if (hand >= kHands.size()) throw ContractViolation("hand index out of range");
  Tensor f({feature_dim});
  f[hand] = 1.0;
  Rng rng = Rng(0x5167A7E5ULL).fork(c);
  const double freq = 1.0 + static_cast<double>(c % 3);
  for (std::size_t k = kHandDims; k < feature_dim; ++k) {
    const double base = rng.uniform(-1.0, 1.0);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    f[k] = base + 0.5 * std::sin(2.0 * std::numbers::pi * freq * tau + phase);
  }
  return f;
}

V2CToySet make_v2c_toyset(std::uint64_t seed, std::size_t count, const V2CToyConfig& cfg) {
  if (count == 0) throw ParameterError("make_v2c_toyset: count must be positive");
  if (cfg.classes == 0 || cfg.classes > kActions.size())
    throw ParameterError("make_v2c_toyset: between 1 and " + std::to_string(kActions.size()) + " classes supported");
  if (cfg.min_length == 0 || cfg.max_length < cfg.min_length) throw ParameterError("make_v2c_toyset: bad lengths");

  V2CToySet set;
  for (const char* h : kHands) set.vocab.add(h);
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    set.vocab.add(kActions[c].verb);
    for (const auto& w : metrics::tokenize(kActions[c].object)) set.vocab.add(w);
    set.verbs.emplace_back(kActions[c].verb);
  }
  set.mean_feature =
      frame_feature_of_colour(v2c::kMeanFrameRgb[0], v2c::kMeanFrameRgb[1], v2c::kMeanFrameRgb[2], cfg.feature_dim);

  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = Rng(seed).fork(i);
    const std::size_t c = i % cfg.classes;
    const std::size_t hand = rng.below(kHands.size());
    const std::size_t len = cfg.min_length + rng.below(cfg.max_length - cfg.min_length + 1);
    Tensor raw({len, cfg.feature_dim});
    for (std::size_t t = 0; t < len; ++t) {
      const double tau = len == 1 ? 0.0 : static_cast<double>(t) / static_cast<double>(len - 1);
      const Tensor sig = action_signature(c, hand, tau, cfg.feature_dim);
      for (std::size_t k = 0; k < cfg.feature_dim; ++k) raw(t, k) = sig[k] + cfg.noise * rng.normal();
    }
    const std::string text = std::string(kHands[hand]) + " " + kActions[c].verb + " " + kActions[c].object;
    v2c::Example ex;
    ex.id = "v" + std::to_string(i);
    ex.features = v2c::pad_frames(raw, cfg.frames, set.mean_feature);
    ex.command = v2c::encode_command(text, set.vocab);
    ex.action = c;
    set.examples.push_back(std::move(ex));
    set.raw_features.push_back(std::move(raw));
    set.commands.push_back(text);
  }
  return set;
}

}  // namespace affkit::toy
