// Copyright 2026 The affkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "affkit/v2c.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "affkit/error.hpp"
#include "affkit/metrics.hpp"
#include "affkit/rng.hpp"

namespace affkit::v2c {

Vocabulary::Vocabulary() : tokens_{kPadToken, kEocToken} {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 2 || tokens_[kPadId] != kPadToken || tokens_[kEocId] != kEocToken)
    throw ContractViolation(std::string("vocabulary must start with ") + kPadToken + " and " + kEocToken);
  std::unordered_set<std::string> seen;
  for (const auto& t : tokens_) {
    if (t.empty()) throw ContractViolation("vocabulary contains an empty token");
    if (!seen.insert(t).second) throw ContractViolation("vocabulary token repeated: " + t);
  }
}

std::size_t Vocabulary::add(const std::string& token) {
  auto it = std::find(tokens_.begin(), tokens_.end(), token);
  if (it != tokens_.end()) return static_cast<std::size_t>(it - tokens_.begin());
  if (token.empty()) throw ContractViolation("vocabulary: empty token");
  tokens_.push_back(token);
  return tokens_.size() - 1;
}

std::size_t Vocabulary::index(const std::string& token) const {
  auto it = std::find(tokens_.begin(), tokens_.end(), token);
  if (it == tokens_.end()) throw ContractViolation("word not in vocabulary: " + token);
  return static_cast<std::size_t>(it - tokens_.begin());
}

bool Vocabulary::contains(const std::string& token) const {
  return std::find(tokens_.begin(), tokens_.end(), token) != tokens_.end();
}

const std::string& Vocabulary::token(std::size_t i) const {
  if (i >= tokens_.size()) throw ContractViolation("word index " + std::to_string(i) + " outside vocabulary");
  return tokens_[i];
}

CommandSequence encode_command(const std::string& text, const Vocabulary& vocab) {
  CommandSequence out;
  for (const auto& tok : metrics::tokenize(text)) {
    const std::size_t id = vocab.index(tok);
    if (id == kPadId || id == kEocId) throw ContractViolation("command contains a reserved token");
    out.push_back(id);
  }
  return out;
}

std::string decode_command(const CommandSequence& words, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t w : words) {
    if (!out.empty()) out += ' ';
    out += vocab.token(w);
  }
  return out;
}

Tensor one_hot(std::size_t index, std::size_t size) {
  if (index >= size) throw ContractViolation("one_hot: index outside range");
  Tensor t({size});
  t[index] = 1.0;
  return t;
}

std::vector<std::size_t> sample_frame_indices(std::size_t length, std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i * length / n;
  return idx;
}

Tensor pad_frames(const Tensor& frames, std::size_t n, const Tensor& mean_feature) {
  if (frames.rank() != 2) throw DimensionError("pad_frames: expected [len x d] features");
  if (n == 0) throw ParameterError("pad_frames: n must be positive");
  const std::size_t len = frames.dim(0), d = frames.dim(1);
  if (mean_feature.size() != d)
    throw DimensionError("pad_frames: mean feature has " + std::to_string(mean_feature.size()) +
                         " entries, frames have " + std::to_string(d));
  Tensor out({n, d});
  if (len >= n) {
    const auto idx = sample_frame_indices(len, n);
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(frames.data().begin() + idx[i] * d, d, out.data().begin() + i * d);
  } else {
    std::copy(frames.data().begin(), frames.data().end(), out.data().begin());
    for (std::size_t i = len; i < n; ++i)
      std::copy(mean_feature.data().begin(), mean_feature.data().end(), out.data().begin() + i * d);
  }
  return out;
}

Tensor pad_frames(std::span<const Tensor> frames, std::size_t n, const Tensor& mean_feature) {
  if (frames.empty()) throw ContractViolation("pad_frames: no frames");
  const std::size_t d = frames.front().size();
  Tensor stacked({frames.size(), d});
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].size() != d) throw DimensionError("pad_frames: frames differ in width");
    std::copy(frames[i].data().begin(), frames[i].data().end(), stacked.data().begin() + i * d);
  }
  return pad_frames(stacked, n, mean_feature);
}

PaddedCommand pad_command(const CommandSequence& words, std::size_t n) {
  if (words.size() + 1 > n)
    throw ContractViolation("command of " + std::to_string(words.size()) + " words does not fit " +
                            std::to_string(n) + " positions with its end marker");
  PaddedCommand out;
  out.targets.assign(n, kPadId);
  out.real.assign(n, false);
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (words[i] == kPadId || words[i] == kEocId) throw ContractViolation("command contains a reserved token");
    out.targets[i] = words[i];
    out.real[i] = true;
  }
  out.targets[words.size()] = kEocId;
  out.real[words.size()] = true;
  return out;
}

std::string extract_verb(const CommandSequence& command, const Vocabulary& vocab) {
  if (command.empty()) throw ContractViolation("extract_verb: empty command");
  return vocab.token(command.size() >= 2 ? command[1] : command[0]);
}

CommandSequence project_first_last(const CommandSequence& command) {
  if (command.size() <= 2) return command;
  return {command.front(), command.back()};
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw ContractViolation("argmax of an empty range");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

std::size_t tcn_output_length(std::size_t frames) { return frames / 2 / 2; }

namespace {

nn::Conv2DParams temporal_conv(std::size_t filters, std::size_t kernel) {
  nn::Conv2DParams p;
  p.filters = filters;
  p.kernel_h = 1;
  p.kernel_w = kernel;
  p.pad_w = kernel / 2;
  return p;
}

void validate(const V2CConfig& c) {
  if (c.feature_dim == 0 || c.hidden == 0 || c.num_actions == 0 || c.fc_units == 0)
    throw ParameterError("V2C sizes must be positive");
  if (c.vocab_size < 3) throw ParameterError("V2C vocabulary needs at least one word besides PAD and EOC");
  if (c.frames < 4) throw ParameterError("V2C needs at least 4 frames for two pooling stages");
  if (c.tcn_kernel % 2 == 0) throw ParameterError("temporal kernel must be odd");
  for (std::size_t f : c.tcn_filters)
    if (f == 0) throw ParameterError("temporal filter counts must be positive");
}

}  // namespace

V2CNet::V2CNet(const V2CConfig& config, std::uint64_t seed) : config_(config) {
  validate(config_);
  Rng rng(seed);
  const std::size_t H = config_.hidden, V = config_.vocab_size;
  encoder_ = nn::make_cell(config_.cell, params_, "encoder", config_.feature_dim, H, rng);
  decoder_ = nn::make_cell(config_.cell, params_, "decoder", H + V, H, rng);
  encoder_h0_ = &params_.add("encoder.h0", Tensor::uniform({H}, -0.1, 0.1, rng), false);
  decoder_h0_ = &params_.add("decoder.h0", Tensor::uniform({H}, -0.1, 0.1, rng), false);
  word_out_ = nn::DenseLayer(params_, "word_out", H, V, rng);

  std::size_t in = config_.feature_dim;
  for (std::size_t i = 0; i < 3; ++i) {
    tcn_[i] = nn::ConvLayer(params_, "tcn.c" + std::to_string(i), in,
                            temporal_conv(config_.tcn_filters[i], config_.tcn_kernel), rng);
    in = config_.tcn_filters[i];
  }
  fc0_ = nn::DenseLayer(params_, "tcn.fc0", in * tcn_output_length(config_.frames), config_.fc_units, rng);
  fc1_ = nn::DenseLayer(params_, "tcn.fc1", config_.fc_units, config_.num_actions, rng);
}

void V2CNet::check_features(const Tensor& features) const {
  if (features.rank() != 2 || features.dim(0) != config_.frames || features.dim(1) != config_.feature_dim)
    throw DimensionError("V2C features " + to_string(features.shape()) + ", expected [" +
                         std::to_string(config_.frames) + " x " + std::to_string(config_.feature_dim) + "]");
}

std::vector<nn::CellState> V2CNet::encode(Tape& tape, const Tensor& features) const {
  const std::size_t n = config_.frames, d = config_.feature_dim;
  std::vector<Var> inputs;
  inputs.reserve(n);
  for (std::size_t t = 0; t < n; ++t)
    inputs.push_back(tape.leaf(Tensor({d}, std::vector<double>(features.data().begin() + t * d,
                                                               features.data().begin() + (t + 1) * d))));
  return nn::run_sequence(*encoder_, tape, inputs, encoder_->initial_state(tape, tape.parameter(*encoder_h0_)));
}

Var V2CNet::decoder_logits(Tape& tape, Var h) const { return word_out_.forward(tape, h); }

Var V2CNet::word_distributions(Tape& tape, const Tensor& features,
                               std::span<const std::size_t> previous_words) const {
  check_features(features);
  const std::size_t n = config_.frames, V = config_.vocab_size;
  if (previous_words.size() + 1 != n)
    throw DimensionError("word_distributions: expected " + std::to_string(n - 1) + " previous words");
  const auto enc = encode(tape, features);
  nn::CellState state = decoder_->initial_state(tape, tape.parameter(*decoder_h0_));
  std::vector<Var> dists;
  dists.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    const Tensor prev = t == 0 ? Tensor({V}) : one_hot(previous_words[t - 1], V);
    state = decoder_->step(tape, concat({enc[t].h, tape.leaf(prev)}), state);
    dists.push_back(softmax(decoder_logits(tape, state.h)));
  }
  return reshape(concat(dists), {n, V});
}

Var V2CNet::translation_loss(Tape& tape, const Tensor& features, const CommandSequence& command) const {
  const PaddedCommand padded = pad_command(command, config_.frames);
  for (std::size_t w : padded.targets)
    if (w >= config_.vocab_size) throw ContractViolation("command word outside vocabulary");
  const std::span<const std::size_t> prev(padded.targets.data(), padded.targets.size() - 1);
  const Var probs = word_distributions(tape, features, prev);
  const std::vector<bool>& real = padded.real;
  std::unique_ptr<bool[]> mask(new bool[real.size()]);
  for (std::size_t i = 0; i < real.size(); ++i) mask[i] = real[i];
  return loss::seq_nll(probs, padded.targets, std::span<const bool>(mask.get(), real.size()));
}

CommandSequence V2CNet::greedy_decode(const Tensor& features) const {
  check_features(features);
  const std::size_t n = config_.frames, V = config_.vocab_size;
  Tape tape;
  const auto enc = encode(tape, features);
  nn::CellState state = decoder_->initial_state(tape, tape.parameter(*decoder_h0_));
  CommandSequence out;
  Tensor prev({V});
  for (std::size_t t = 0; t < n; ++t) {
    state = decoder_->step(tape, concat({enc[t].h, tape.leaf(prev)}), state);
    const Tensor& logits = decoder_logits(tape, state.h).value();
    const std::size_t w = kEocId + argmax(logits.data().subspan(kEocId));
    if (w == kEocId) break;
    out.push_back(w);
    prev = one_hot(w, V);
  }
  return out;
}

Var V2CNet::action_scores(Tape& tape, const Tensor& features) const {
  check_features(features);
  const std::size_t n = config_.frames, d = config_.feature_dim;
  Tensor x({d, 1, n});
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t k = 0; k < d; ++k) x[k * n + t] = features(t, k);
  Var h = tape.leaf(std::move(x));
  for (std::size_t i = 0; i < 3; ++i) {
    h = relu(tcn_[i].forward(tape, h));
    if (i < 2) h = nn::maxpool_time(h);
  }
  h = reshape(h, {h.size()});
  h = relu(fc0_.forward(tape, h));
  return fc1_.forward(tape, h);
}

Tensor V2CNet::action_scores(const Tensor& features) const {
  Tape tape;
  return action_scores(tape, features).value();
}

std::size_t V2CNet::predict_action(const Tensor& features) const {
  const Tensor s = action_scores(features);
  return argmax(s.data());
}

Tensor V2CNet::classify_action(const Tensor& features) const {
  return one_hot(predict_action(features), config_.num_actions);
}

V2CLosses V2CNet::losses(Tape& tape, const Example& example) const {
  if (example.action >= config_.num_actions) throw ContractViolation("action label outside class range");
  V2CLosses out;
  out.translation = translation_loss(tape, example.features, example.command);
  out.action = loss::action_sigmoid_ce(action_scores(tape, example.features),
                                       one_hot(example.action, config_.num_actions), config_.action_loss);
  out.joint = loss::v2c_joint_loss(out.translation, out.action);
  return out;
}

StepLosses v2c_train_step(V2CNet& net, Adam& optimizer, std::span<const Example> batch) {
  if (batch.empty()) throw ContractViolation("training step on an empty batch");
  const std::size_t step = optimizer.step_count() + 1;
  ParameterSet& params = net.params();
  params.zero_grad();
  StepLosses sum;
  for (const Example& ex : batch) {
    Tape tape;
    const V2CLosses l = net.losses(tape, ex);
    const double joint = l.joint.value().item();
    if (!std::isfinite(joint)) throw TrainingError("non-finite loss on example " + ex.id, step);
    tape.backward(l.joint);
    sum.joint += joint;
    sum.translation += l.translation.value().item();
    sum.action += l.action.value().item();
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (auto& p : params) {
    for (double& g : p->grad.data()) g *= inv;
    if (!p->grad.all_finite()) throw TrainingError("non-finite gradient in " + p->name, step);
  }
  optimizer.step();
  return {sum.joint * inv, sum.translation * inv, sum.action * inv};
}

TrainingAccuracy evaluate_accuracy(const V2CNet& net, std::span<const Example> examples) {
  TrainingAccuracy acc;
  if (examples.empty()) return acc;
  for (const Example& ex : examples) {
    if (net.greedy_decode(ex.features) == ex.command) acc.command_exact += 1;
    if (net.predict_action(ex.features) == ex.action) acc.action += 1;
  }
  acc.command_exact /= static_cast<double>(examples.size());
  acc.action /= static_cast<double>(examples.size());
  return acc;
}

std::vector<EpochStats> train(V2CNet& net, Adam& optimizer, std::span<const Example> examples,
                              const TrainConfig& config, std::size_t first_epoch, const EpochCallback& on_epoch) {
  if (examples.empty()) throw ContractViolation("training on an empty dataset");
  if (config.batch_size == 0) throw ParameterError("batch size must be positive");
  std::vector<EpochStats> history;
  std::vector<std::size_t> order(examples.size());
  std::vector<Example> batch;
  for (std::size_t epoch = first_epoch; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = Rng(config.seed).fork(epoch);
    shuffle(order, rng);
    EpochStats stats;
    stats.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + config.batch_size); ++i)
        batch.push_back(examples[order[i]]);
      const StepLosses l = v2c_train_step(net, optimizer, batch);
      stats.mean.joint += l.joint;
      stats.mean.translation += l.translation;
      stats.mean.action += l.action;
      ++batches;
    }
    stats.mean.joint /= static_cast<double>(batches);
    stats.mean.translation /= static_cast<double>(batches);
    stats.mean.action /= static_cast<double>(batches);
    history.push_back(stats);
    if (on_epoch) on_epoch(stats);
    if (config.stop_when_perfect) {
      const TrainingAccuracy acc = evaluate_accuracy(net, examples);
      if (acc.command_exact == 1.0 && acc.action == 1.0) break;
    }
  }
  return history;
}

}  // namespace affkit::v2c
