// Copyright 2026 The affkit Authors
// SPDX-License-Identifier: Apache-2.0

// Video-to-command network: an encoder-decoder translation branch and a
// temporal-convolution action branch trained from one joint loss.
//
// Translation: the encoder cell reads frame features x_1..x_n into hidden
// states h^e_1..h^e_n. Decoder step t consumes [h^e_t ; onehot(y_{t-1})]
// (a zero vector at t = 1) and predicts y_t through a linear layer and a
// softmax. Training feeds the ground-truth previous word; decoding feeds
// the previous argmax.
//
// Action: conv(k) -> relu -> pool -> conv -> relu -> pool -> conv -> relu ->
// fc -> relu -> fc, all convolutions along the time axis.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "affkit/autodiff.hpp"
#include "affkit/layers.hpp"
#include "affkit/losses.hpp"
#include "affkit/optim.hpp"
#include "affkit/recurrent.hpp"

namespace affkit::v2c {

inline constexpr std::size_t kPadId = 0;
inline constexpr std::size_t kEocId = 1;
inline constexpr std::size_t kDefaultFrames = 30;
inline constexpr std::size_t kMaxCommandWords = 30;
/// ImageNet mean colour used for padding frames.
inline constexpr std::array<double, 3> kMeanFrameRgb{104.0, 117.0, 124.0};

class Vocabulary {
 public:
  static constexpr const char* kPadToken = "<pad>";
  static constexpr const char* kEocToken = "<eoc>";

  /// Just the reserved tokens.
  Vocabulary();
  /// Validates that index 0 is PAD, index 1 is EOC, and tokens are unique.
  explicit Vocabulary(std::vector<std::string> tokens);

  /// Index of `token`, appending it if new.
  std::size_t add(const std::string& token);
  std::size_t index(const std::string& token) const;
  bool contains(const std::string& token) const;
  const std::string& token(std::size_t i) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
};

/// Word indices, without EOC or padding.
using CommandSequence = std::vector<std::size_t>;

CommandSequence encode_command(const std::string& text, const Vocabulary& vocab);
std::string decode_command(const CommandSequence& words, const Vocabulary& vocab);

Tensor one_hot(std::size_t index, std::size_t size);

/// Frame indices kept when `length` frames are reduced to `n`: floor(i * length / n).
std::vector<std::size_t> sample_frame_indices(std::size_t length, std::size_t n);

/// [len x d] -> [n x d]: uniform subsampling when longer, mean-feature rows
/// appended when shorter.
Tensor pad_frames(const Tensor& frames, std::size_t n, const Tensor& mean_feature);
/// Same, from a list of per-frame vectors. Throws ContractViolation when empty.
Tensor pad_frames(std::span<const Tensor> frames, std::size_t n, const Tensor& mean_feature);

struct PaddedCommand {
  std::vector<std::size_t> targets;  ///< words, EOC, then PAD up to n
  std::vector<bool> real;            ///< false at PAD positions
};

PaddedCommand pad_command(const CommandSequence& words, std::size_t n);

/// Token at position 1 of "hand verb object..."; a one-word command is its own
/// verb. Throws ContractViolation on an empty command.
std::string extract_verb(const CommandSequence& command, const Vocabulary& vocab);

/// Keeps the first and last generated word.
CommandSequence project_first_last(const CommandSequence& command);

/// Index of the maximum; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> values);

struct V2CConfig {
  nn::CellKind cell = nn::CellKind::Lstm;
  std::size_t feature_dim = 2048;
  std::size_t hidden = 512;
  std::size_t vocab_size = 2;
  std::size_t num_actions = 46;
  std::size_t frames = kDefaultFrames;
  std::array<std::size_t, 3> tcn_filters{2048, 1024, 512};
  std::size_t tcn_kernel = 3;
  std::size_t fc_units = 256;
  loss::ActionLossForm action_loss = loss::ActionLossForm::TwoTerm;
};

/// Temporal extent after the two pooling stages: floor(floor(n / 2) / 2).
std::size_t tcn_output_length(std::size_t frames);

struct Example {
  std::string id;
  Tensor features;  ///< [frames x feature_dim], already padded
  CommandSequence command;
  std::size_t action = 0;
};

struct V2CLosses {
  Var joint;
  Var translation;
  Var action;
};

class V2CNet {
 public:
  V2CNet(const V2CConfig& config, std::uint64_t seed);

  V2CNet(const V2CNet&) = delete;
  V2CNet& operator=(const V2CNet&) = delete;

  const V2CConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  /// Teacher-forced word distributions [n x V]. `previous_words[t]` is the
  /// word fed at step t + 1; it has n - 1 entries.
  Var word_distributions(Tape& tape, const Tensor& features, std::span<const std::size_t> previous_words) const;

  /// Masked negative log-likelihood of the padded command.
  Var translation_loss(Tape& tape, const Tensor& features, const CommandSequence& command) const;

  /// Greedy decoding until EOC or n steps. PAD is never emitted.
  CommandSequence greedy_decode(const Tensor& features) const;

  /// Unnormalized action scores [C].
  Var action_scores(Tape& tape, const Tensor& features) const;
  Tensor action_scores(const Tensor& features) const;

  /// Highest-scoring action class, ties to the lowest id.
  std::size_t predict_action(const Tensor& features) const;
  /// predict_action as a one-hot label.
  Tensor classify_action(const Tensor& features) const;

  V2CLosses losses(Tape& tape, const Example& example) const;

 private:
  void check_features(const Tensor& features) const;
  std::vector<nn::CellState> encode(Tape& tape, const Tensor& features) const;
  Var decoder_logits(Tape& tape, Var h) const;

  V2CConfig config_;
  ParameterSet params_;
  std::unique_ptr<nn::RecurrentCell> encoder_;
  std::unique_ptr<nn::RecurrentCell> decoder_;
  Parameter* encoder_h0_;
  Parameter* decoder_h0_;
  nn::DenseLayer word_out_;
  std::array<nn::ConvLayer, 3> tcn_;
  nn::DenseLayer fc0_;
  nn::DenseLayer fc1_;
};

struct StepLosses {
  double joint = 0;
  double translation = 0;
  double action = 0;
};

/// One optimizer step on the batch-mean joint loss. Throws TrainingError on a
/// non-finite loss or gradient.
StepLosses v2c_train_step(V2CNet& net, Adam& optimizer, std::span<const Example> batch);

struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  /// Stop early once every example is reproduced and classified (checked
  /// after each epoch). Off by default.
  bool stop_when_perfect = false;
};

struct EpochStats {
  std::size_t epoch = 0;
  StepLosses mean;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Epoch loop with a per-epoch shuffle derived from (seed, epoch). Returns the
/// per-epoch mean losses.
std::vector<EpochStats> train(V2CNet& net, Adam& optimizer, std::span<const Example> examples,
                              const TrainConfig& config, std::size_t first_epoch = 0,
                              const EpochCallback& on_epoch = {});

struct TrainingAccuracy {
  double command_exact = 0;  ///< fraction of commands reproduced exactly
  double action = 0;         ///< fraction of actions classified correctly
};

TrainingAccuracy evaluate_accuracy(const V2CNet& net, std::span<const Example> examples);

}  // namespace affkit::v2c
