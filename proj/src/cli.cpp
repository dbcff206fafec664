// Copyright 2026 The affkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "affkit/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "affkit/affordance_mask.hpp"
#include "affkit/dense_crf.hpp"
#include "affkit/error.hpp"
#include "affkit/gradcheck.hpp"
#include "affkit/io.hpp"
#include "affkit/metrics.hpp"
#include "affkit/optim.hpp"
#include "affkit/toy.hpp"
#include "affkit/v2c.hpp"

namespace affkit::cli {

namespace {

namespace fs = std::filesystem;

// --config FILE expands into leading "--key value" arguments so that flags
// given on the command line, which come later, take precedence.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> rest;
  std::optional<std::string> path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw CLI::ArgumentMismatch("--config needs a file argument");
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (!path) return rest;
  std::ifstream in(*path);
  if (!in) throw DataError("cannot open config file " + *path);
  std::vector<std::string> from_file;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError(*path + ":" + std::to_string(n) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw DataError(*path + ":" + std::to_string(n) + ": empty key");
    if (value == "true") {
      from_file.push_back("--" + key);
    } else if (value != "false") {
      from_file.push_back("--" + key);
      from_file.push_back(value);
    }
  }
  // The subcommand name must stay first.
  if (rest.empty()) return rest;
  std::vector<std::string> out{rest.front()};
  out.insert(out.end(), from_file.begin(), from_file.end());
  out.insert(out.end(), rest.begin() + 1, rest.end());
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& text, const char* what) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || v == 0) throw ParameterError(std::string("bad ") + what + ": " + text);
    out.push_back(v);
  }
  return out;
}

std::string join_sizes(std::span<const std::size_t> v) {
  std::string s;
  for (std::size_t x : v) s += (s.empty() ? "" : ",") + std::to_string(x);
  return s;
}

const std::string& meta(const std::map<std::string, std::string>& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw DataError("checkpoint metadata lacks '" + key + "'");
  return it->second;
}

std::size_t meta_size(const std::map<std::string, std::string>& m, const std::string& key) {
  try {
    return std::stoull(meta(m, key));
  } catch (const std::logic_error&) {
    throw DataError("checkpoint metadata '" + key + "' is not a count");
  }
}

std::map<std::string, std::string> v2c_metadata(const v2c::V2CConfig& c) {
  return {{"model", "v2c"},
          {"cell", nn::to_string(c.cell)},
          {"feature_dim", std::to_string(c.feature_dim)},
          {"hidden", std::to_string(c.hidden)},
          {"vocab_size", std::to_string(c.vocab_size)},
          {"num_actions", std::to_string(c.num_actions)},
          {"frames", std::to_string(c.frames)},
          {"tcn_filters", join_sizes(c.tcn_filters)},
          {"tcn_kernel", std::to_string(c.tcn_kernel)},
          {"fc_units", std::to_string(c.fc_units)},
          {"action_loss", c.action_loss == loss::ActionLossForm::TwoTerm ? "two-term" : "positive-only"}};
}

v2c::V2CConfig v2c_config_from(const std::map<std::string, std::string>& m) {
  if (meta(m, "model") != "v2c") throw DataError("checkpoint does not hold a video-to-command model");
  v2c::V2CConfig c;
  try {
    c.cell = nn::parse_cell_kind(meta(m, "cell"));
  } catch (const ParameterError& e) {
    throw DataError(e.what());
  }
  c.feature_dim = meta_size(m, "feature_dim");
  c.hidden = meta_size(m, "hidden");
  c.vocab_size = meta_size(m, "vocab_size");
  c.num_actions = meta_size(m, "num_actions");
  c.frames = meta_size(m, "frames");
  const auto f = parse_sizes(meta(m, "tcn_filters"), "tcn_filters");
  if (f.size() != 3) throw DataError("checkpoint tcn_filters must list three counts");
  std::copy(f.begin(), f.end(), c.tcn_filters.begin());
  c.tcn_kernel = meta_size(m, "tcn_kernel");
  c.fc_units = meta_size(m, "fc_units");
  c.action_loss = meta(m, "action_loss") == "two-term" ? loss::ActionLossForm::TwoTerm
                                                       : loss::ActionLossForm::PositiveOnly;
  return c;
}

std::map<std::string, std::string> aff_metadata(const toy::AffordanceNetConfig& c) {
  return {{"model", "affordance"},
          {"encoder_channels", join_sizes(c.encoder.channels)},
          {"head_channels", std::to_string(c.head_channels)},
          {"roi_size", std::to_string(c.roi_size)}};
}

toy::AffordanceNetConfig aff_config_from(const std::map<std::string, std::string>& m) {
  if (meta(m, "model") != "affordance") throw DataError("checkpoint does not hold an affordance model");
  toy::AffordanceNetConfig c;
  c.encoder.channels = parse_sizes(meta(m, "encoder_channels"), "encoder_channels");
  c.head_channels = meta_size(m, "head_channels");
  c.roi_size = meta_size(m, "roi_size");
  return c;
}

Tensor load_mean_feature(const fs::path& path) {
  const Tensor t = io::load_feature_file(path);
  if (t.dim(0) != 1) throw DataError(path.string() + ": mean feature must have exactly one row");
  return t.reshaped({t.dim(1)});
}

fs::path default_beside(const fs::path& manifest, const char* name) { return manifest.parent_path() / name; }

void write_report(const metrics::MetricReport& report, const std::string& json_path, std::ostream& out) {
  out << report.to_text();
  if (!json_path.empty()) {
    const std::string j = report.to_json() + "\n";
    io::write_bytes(json_path, std::span(reinterpret_cast<const std::uint8_t*>(j.data()), j.size()));
  }
}

struct V2CModelArgs {
  std::string checkpoint;
  std::string vocab;
  std::string manifest;
  std::string mean_feature;
};

struct LoadedV2C {
  std::unique_ptr<v2c::V2CNet> net;
  v2c::Vocabulary vocab;
  io::Manifest manifest;
  std::vector<v2c::Example> examples;
};

LoadedV2C load_v2c(const V2CModelArgs& a) {
  LoadedV2C l;
  const io::Checkpoint ck = io::load_checkpoint(a.checkpoint);
  const v2c::V2CConfig cfg = v2c_config_from(ck.metadata);
  l.net = std::make_unique<v2c::V2CNet>(cfg, ck.seed);
  io::restore(ck, l.net->params(), nullptr);
  l.vocab = io::load_vocabulary(a.vocab.empty() ? default_beside(a.manifest, "vocab.txt") : fs::path(a.vocab));
  if (l.vocab.size() != cfg.vocab_size) throw DataError("vocabulary size differs from the checkpoint");
  l.manifest = io::load_manifest(a.manifest);
  const Tensor mean =
      load_mean_feature(a.mean_feature.empty() ? default_beside(a.manifest, "mean_feature.afk") : fs::path(a.mean_feature));
  l.examples = io::load_v2c_examples(l.manifest, l.vocab, cfg.frames, mean);
  return l;
}

void add_v2c_model_options(CLI::App* sub, V2CModelArgs& a) {
  sub->add_option("--checkpoint", a.checkpoint, "Trained checkpoint")->required();
  sub->add_option("--manifest", a.manifest, "Dataset manifest")->required();
  sub->add_option("--vocab", a.vocab, "Vocabulary file (default: vocab.txt beside the manifest)");
  sub->add_option("--mean-feature", a.mean_feature, "Padding feature (default: mean_feature.afk beside the manifest)");
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Affordance detection and video-to-command toolkit", "affkit"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1, 1);
  app.footer(
      "Every subcommand accepts --config FILE with key=value lines; command-line flags override it.\n"
      "Exit codes: 0 success, 1 usage error, 2 data error, 3 failed check or diverged training.");

  // gradcheck
  std::uint64_t seed = 0;
  auto* gradcheck = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  gradcheck->add_option("--seed", seed, "Random seed")->capture_default_str();

  // make-toy-data
  std::string out_dir;
  std::string kind = "both";
  std::size_t v2c_count = 50, aff_count = 50, classes = 4, feature_dim = 16;
  auto* make = app.add_subcommand("make-toy-data", "Write deterministic synthetic datasets");
  make->add_option("--seed", seed, "Random seed")->capture_default_str();
  make->add_option("--out", out_dir, "Output directory")->required();
  make->add_option("--kind", kind, "v2c, aff or both")->check(CLI::IsMember({"v2c", "aff", "both"}))->capture_default_str();
  make->add_option("--v2c-count", v2c_count, "Video examples")->capture_default_str();
  make->add_option("--aff-count", aff_count, "Affordance scenes")->capture_default_str();
  make->add_option("--classes", classes, "Action classes")->capture_default_str();
  make->add_option("--feature-dim", feature_dim, "Frame feature width")->capture_default_str();

  // train-v2c
  std::string checkpoint_in, refined_out;
  std::string manifest, vocab_path, mean_path, checkpoint_out, resume, cell = "lstm", tcn_filters = "32,16,8";
  std::size_t epochs = 300, batch = 1, hidden = 32, fc_units = 32, frames = v2c::kDefaultFrames, num_actions = 0;
  double lr = 1e-4;
  bool float64 = false, quiet = false, stop_when_perfect = false, positive_only = false;
  auto* train_v2c = app.add_subcommand("train-v2c", "Train the video-to-command network");
  train_v2c->add_option("--manifest", manifest, "Training manifest")->required();
  train_v2c->add_option("--vocab", vocab_path, "Vocabulary (default: vocab.txt beside the manifest)");
  train_v2c->add_option("--mean-feature", mean_path, "Padding feature (default: mean_feature.afk beside the manifest)");
  train_v2c->add_option("--out", checkpoint_out, "Checkpoint to write")->required();
  train_v2c->add_option("--resume", resume, "Continue from this checkpoint");
  train_v2c->add_option("--cell", cell, "lstm or gru")->check(CLI::IsMember({"lstm", "gru"}))->capture_default_str();
  train_v2c->add_option("--epochs", epochs, "Total epochs")->capture_default_str();
  train_v2c->add_option("--batch", batch, "Batch size")->capture_default_str();
  train_v2c->add_option("--lr", lr, "Adam learning rate")->capture_default_str();
  train_v2c->add_option("--hidden", hidden, "Recurrent hidden size")->capture_default_str();
  train_v2c->add_option("--tcn-filters", tcn_filters, "Three temporal filter counts")->capture_default_str();
  train_v2c->add_option("--fc-units", fc_units, "Hidden fully connected units")->capture_default_str();
  train_v2c->add_option("--frames", frames, "Frames per video after padding")->capture_default_str();
  train_v2c->add_option("--num-actions", num_actions, "Action classes (default: largest label + 1)");
  train_v2c->add_option("--seed", seed, "Random seed")->capture_default_str();
  train_v2c->add_flag("--positive-only", positive_only, "Use the positive-only sigmoid cross-entropy");
  train_v2c->add_flag("--stop-when-perfect", stop_when_perfect, "Stop once the training set is reproduced");
  train_v2c->add_flag("--float64", float64, "Store checkpoint values as float64");
  train_v2c->add_flag("--quiet", quiet, "No per-epoch output");

  // decode-v2c / classify-action / eval-v2c
  V2CModelArgs model_args;
  bool first_last = false;
  auto* decode = app.add_subcommand("decode-v2c", "Greedy-decode commands");
  add_v2c_model_options(decode, model_args);
  decode->add_flag("--first-last", first_last, "Keep only the first and last generated word");
  auto* classify = app.add_subcommand("classify-action", "Predict action classes");
  add_v2c_model_options(classify, model_args);
  std::string json_path;
  auto* eval_v2c = app.add_subcommand("eval-v2c", "BLEU, ROUGE-L and action metrics");
  add_v2c_model_options(eval_v2c, model_args);
  eval_v2c->add_flag("--first-last", first_last, "Score the first+last projection");
  eval_v2c->add_option("--json", json_path, "Also write the report as JSON");

  // train-aff
  std::size_t steps = 500, scenes_per_step = 4, negatives = 3;
  double aff_lr = 2e-3, roi_jitter = 0.0;
  std::string encoder_channels = "8,16,16";
  std::size_t head_channels = 16;
  auto* train_aff = app.add_subcommand("train-aff", "Train the toy affordance network");
  train_aff->add_option("--manifest", manifest, "Scene manifest")->required();
  train_aff->add_option("--out", checkpoint_out, "Checkpoint to write")->required();
  train_aff->add_option("--resume", resume, "Continue from this checkpoint");
  train_aff->add_option("--steps", steps, "Total optimizer steps")->capture_default_str();
  train_aff->add_option("--scenes-per-step", scenes_per_step, "Scenes per step")->capture_default_str();
  train_aff->add_option("--negatives", negatives, "Background RoIs per object")->capture_default_str();
  train_aff->add_option("--roi-jitter", roi_jitter, "Positive RoI jitter in pixels")->capture_default_str();
  train_aff->add_option("--lr", aff_lr, "Adam learning rate")->capture_default_str();
  train_aff->add_option("--encoder-channels", encoder_channels, "Channels per encoder stage")->capture_default_str();
  train_aff->add_option("--head-channels", head_channels, "Mask head channels")->capture_default_str();
  train_aff->add_option("--seed", seed, "Random seed")->capture_default_str();
  train_aff->add_flag("--float64", float64, "Store checkpoint values as float64");
  train_aff->add_flag("--quiet", quiet, "No per-step output");

  // eval-aff
  bool weighted = false, use_crf = false;
  double beta = 1.0, sigma = 5.0;
  auto* eval_aff = app.add_subcommand("eval-aff", "Affordance F-measure on ground-truth boxes");
  eval_aff->add_option("--checkpoint", checkpoint_in, "Trained checkpoint")->required();
  eval_aff->add_option("--manifest", manifest, "Scene manifest")->required();
  eval_aff->add_option("--json", json_path, "Also write the report as JSON");
  eval_aff->add_option("--beta", beta, "F-measure beta")->capture_default_str();
  eval_aff->add_option("--sigma", sigma, "Proximity weighting bandwidth (pixels)")->capture_default_str();
  eval_aff->add_flag("--weighted", weighted, "Distance-weighted errors");
  eval_aff->add_flag("--crf", use_crf, "Refine predictions with the dense CRF first");

  // crf-refine
  std::string image_path, mask_path;
  double confidence = 0.7;
  crf::CRFConfig crf_cfg;
  auto* refine = app.add_subcommand("crf-refine", "Refine a label mask with the dense CRF");
  refine->add_option("--image", image_path, "PPM image")->required();
  refine->add_option("--mask", mask_path, "PGM label mask")->required();
  refine->add_option("--out", refined_out, "Refined PGM mask")->required();
  refine->add_option("--confidence", confidence, "Probability given to the input label")->capture_default_str();
  refine->add_option("--iterations", crf_cfg.iterations, "Mean-field iterations")->capture_default_str();
  refine->add_option("--w1", crf_cfg.w1, "Appearance kernel weight")->capture_default_str();
  refine->add_option("--w2", crf_cfg.w2, "Smoothness kernel weight")->capture_default_str();
  refine->add_option("--sigma-alpha", crf_cfg.sigma_alpha, "Appearance position bandwidth")->capture_default_str();
  refine->add_option("--sigma-beta", crf_cfg.sigma_beta, "Appearance colour bandwidth")->capture_default_str();
  refine->add_option("--sigma-gamma", crf_cfg.sigma_gamma, "Smoothness bandwidth")->capture_default_str();

  std::vector<std::string> args;
  try {
    args = expand_config(raw_args);
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return kExitOk;
    err << app.help();
    return kExitUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }

  try {
    if (*gradcheck) {
      const auto results = run_gradcheck_suite(seed);
      double worst = 0.0;
      out << std::scientific << std::setprecision(3);
      for (const auto& r : results) {
        out << r.name << " max_rel_error=" << r.max_rel_error << " coordinates=" << r.coordinates << "\n";
        worst = std::max(worst, r.max_rel_error);
      }
      const bool ok = worst < kGradcheckTolerance;
      out << "checks=" << results.size() << " worst=" << worst << " tolerance=" << kGradcheckTolerance
          << (ok ? " PASS" : " FAIL") << "\n";
      return ok ? kExitOk : kExitFailed;
    }

    if (*make) {
      const fs::path dir(out_dir);
      if (kind != "aff") {
        toy::V2CToyConfig c;
        c.classes = classes;
        c.feature_dim = feature_dim;
        io::write_v2c_toyset(dir / "v2c", toy::make_v2c_toyset(seed, v2c_count, c));
      }
      if (kind != "v2c") {
        const auto scenes = toy::make_affordance_toyset(seed, aff_count);
        io::write_affordance_toyset(dir / "aff", scenes);
      }
      out << "wrote " << dir.string() << "\n";
      return kExitOk;
    }

    if (*train_v2c) {
      const io::Manifest m = io::load_manifest(manifest);
      const v2c::Vocabulary vocab =
          io::load_vocabulary(vocab_path.empty() ? default_beside(manifest, "vocab.txt") : fs::path(vocab_path));
      const Tensor mean =
          load_mean_feature(mean_path.empty() ? default_beside(manifest, "mean_feature.afk") : fs::path(mean_path));

      std::optional<io::Checkpoint> resumed;
      v2c::V2CConfig cfg;
      std::size_t first_epoch = 0;
      if (!resume.empty()) {
        resumed = io::load_checkpoint(resume);
        cfg = v2c_config_from(resumed->metadata);
        first_epoch = meta_size(resumed->metadata, "epoch");
        seed = resumed->seed;
      } else {
        cfg.cell = nn::parse_cell_kind(cell);
        cfg.feature_dim = mean.size();
        cfg.hidden = hidden;
        cfg.vocab_size = vocab.size();
        cfg.frames = frames;
        const auto f = parse_sizes(tcn_filters, "--tcn-filters");
        if (f.size() != 3) throw ParameterError("--tcn-filters needs three counts");
        std::copy(f.begin(), f.end(), cfg.tcn_filters.begin());
        cfg.fc_units = fc_units;
        cfg.action_loss = positive_only ? loss::ActionLossForm::PositiveOnly : loss::ActionLossForm::TwoTerm;
        std::size_t max_action = 0;
        for (const auto& r : m.records)
          if (r.action) max_action = std::max(max_action, *r.action);
        cfg.num_actions = num_actions ? num_actions : max_action + 1;
      }
      const auto examples = io::load_v2c_examples(m, vocab, cfg.frames, mean);
      v2c::V2CNet net(cfg, seed);
      AdamConfig ac;
      ac.learning_rate = lr;
      Adam adam(net.params(), ac);
      if (resumed) io::restore(*resumed, net.params(), &adam);

      v2c::TrainConfig tc;
      tc.epochs = epochs;
      tc.batch_size = batch;
      tc.seed = seed;
      tc.stop_when_perfect = stop_when_perfect;
      std::size_t last_epoch = first_epoch;
      const auto history = v2c::train(net, adam, examples, tc, first_epoch, [&](const v2c::EpochStats& s) {
        last_epoch = s.epoch + 1;
        if (!quiet)
          out << "epoch " << s.epoch + 1 << " joint=" << s.mean.joint << " translation=" << s.mean.translation
              << " action=" << s.mean.action << "\n";
      });
      const v2c::TrainingAccuracy acc = v2c::evaluate_accuracy(net, examples);
      auto md = v2c_metadata(cfg);
      md["epoch"] = std::to_string(last_epoch);
      io::save_checkpoint(checkpoint_out, io::capture(net.params(), &adam, seed, md),
                          float64 ? io::BlobType::F64 : io::BlobType::F32);
      out << "epochs=" << last_epoch << " trained=" << history.size() << " command_exact=" << acc.command_exact
          << " action_accuracy=" << acc.action << "\n";
      return kExitOk;
    }

    if (*decode || *classify || *eval_v2c) {
      const LoadedV2C l = load_v2c(model_args);
      if (*decode) {
        for (const auto& ex : l.examples) {
          v2c::CommandSequence c = l.net->greedy_decode(ex.features);
          if (first_last) c = v2c::project_first_last(c);
          out << ex.id << "\t" << v2c::decode_command(c, l.vocab) << "\n";
        }
        return kExitOk;
      }
      if (*classify) {
        for (const auto& ex : l.examples) out << ex.id << "\t" << l.net->predict_action(ex.features) << "\n";
        return kExitOk;
      }
      std::array<double, 4> bleu_sum{};
      double rouge_sum = 0.0;
      std::size_t correct_class = 0;
      std::vector<std::string> predicted_verbs, true_verbs;
      for (const auto& ex : l.examples) {
        v2c::CommandSequence c = l.net->greedy_decode(ex.features);
        if (first_last) c = v2c::project_first_last(c);
        const metrics::Tokens cand = metrics::tokenize(v2c::decode_command(c, l.vocab));
        const metrics::Tokens ref = metrics::tokenize(v2c::decode_command(ex.command, l.vocab));
        const std::vector<metrics::Tokens> refs{ref};
        const auto b = metrics::bleu(cand, refs);
        for (std::size_t k = 0; k < 4; ++k) bleu_sum[k] += b[k];
        rouge_sum += metrics::rouge_l(cand, ref);
        predicted_verbs.push_back(c.empty() ? std::string() : v2c::extract_verb(c, l.vocab));
        true_verbs.push_back(v2c::extract_verb(ex.command, l.vocab));
        correct_class += l.net->predict_action(ex.features) == ex.action;
      }
      const double n = static_cast<double>(l.examples.size());
      metrics::MetricReport report;
      for (std::size_t k = 0; k < 4; ++k) report.set("bleu_" + std::to_string(k + 1), bleu_sum[k] / n);
      report.set("rouge_l", rouge_sum / n);
      report.set("action_success_rate", metrics::action_success_rate(predicted_verbs, true_verbs));
      report.set("classification_accuracy", 100.0 * static_cast<double>(correct_class) / n);
      report.set("examples", n);
      write_report(report, json_path, out);
      return kExitOk;
    }

    if (*train_aff) {
      const io::Manifest m = io::load_manifest(manifest);
      const auto scenes = io::load_affordance_scenes(m);
      std::optional<io::Checkpoint> resumed;
      toy::AffordanceNetConfig cfg;
      std::size_t first_step = 0;
      if (!resume.empty()) {
        resumed = io::load_checkpoint(resume);
        cfg = aff_config_from(resumed->metadata);
        first_step = meta_size(resumed->metadata, "step");
        seed = resumed->seed;
      } else {
        cfg.encoder.channels = parse_sizes(encoder_channels, "--encoder-channels");
        cfg.head_channels = head_channels;
      }
      toy::ToyAffordanceNet net(cfg, seed);
      AdamConfig ac;
      ac.learning_rate = aff_lr;
      Adam adam(net.params(), ac);
      if (resumed) io::restore(*resumed, net.params(), &adam);
      toy::AffordanceTrainConfig tc;
      tc.steps = steps;
      tc.scenes_per_step = scenes_per_step;
      tc.learning_rate = aff_lr;
      tc.seed = seed;
      tc.negatives_per_object = negatives;
      tc.roi_jitter = roi_jitter;
      toy::train_affordance(net, adam, scenes, tc, first_step, [&](std::size_t step, double l) {
        if (!quiet && ((step + 1) % 50 == 0 || step + 1 == steps)) out << "step " << step + 1 << " loss=" << l << "\n";
      });
      auto md = aff_metadata(cfg);
      md["step"] = std::to_string(std::max(first_step, steps));
      io::save_checkpoint(checkpoint_out, io::capture(net.params(), &adam, seed, md),
                          float64 ? io::BlobType::F64 : io::BlobType::F32);
      out << "steps=" << std::max(first_step, steps) << " roi_pixel_accuracy=" << toy::roi_pixel_accuracy(net, scenes)
          << "\n";
      return kExitOk;
    }

    if (*eval_aff) {
      const io::Checkpoint ck = io::load_checkpoint(checkpoint_in);
      toy::ToyAffordanceNet net(aff_config_from(ck.metadata), ck.seed);
      io::restore(ck, net.params(), nullptr);
      const io::Manifest m = io::load_manifest(manifest);
      const auto scenes = io::load_affordance_scenes(m);
      metrics::FBetaOptions fo;
      fo.beta = beta;
      fo.weighted = weighted;
      fo.sigma = sigma;
      std::array<double, toy::kNumAffordances> f_sum{};
      std::array<std::size_t, toy::kNumAffordances> f_count{};
      for (const auto& scene : scenes) {
        LabelGrid pred = toy::predict_scene(net, scene).labels;
        if (use_crf) {
          Tensor probs({pred.height, pred.width, toy::kNumAffordances}, (1.0 - confidence) / (toy::kNumAffordances - 1));
          for (std::size_t i = 0; i < pred.size(); ++i)
            probs[i * toy::kNumAffordances + static_cast<std::size_t>(pred.labels[i])] = confidence;
          pred = crf::map_labeling(crf::mean_field(crf::unary_from_probabilities(probs), scene.image, crf_cfg));
        }
        for (int a = 1; a < static_cast<int>(toy::kNumAffordances); ++a) {
          if (std::find(scene.affordances.labels.begin(), scene.affordances.labels.end(), a) ==
              scene.affordances.labels.end())
            continue;
          f_sum[a] += metrics::f_beta_w(pred, scene.affordances, a, fo);
          ++f_count[a];
        }
      }
      metrics::MetricReport report;
      const char* names[] = {"background", "grasp", "contain"};
      double avg = 0.0;
      std::size_t classes_seen = 0;
      for (std::size_t a = 1; a < toy::kNumAffordances; ++a) {
        if (f_count[a] == 0) continue;
        const double f = f_sum[a] / static_cast<double>(f_count[a]);
        report.set(std::string("f_") + names[a], f);
        avg += f;
        ++classes_seen;
      }
      report.set("f_average", classes_seen ? avg / static_cast<double>(classes_seen) : 0.0);
      report.set("roi_pixel_accuracy", toy::roi_pixel_accuracy(net, scenes));
      report.set("scenes", static_cast<double>(scenes.size()));
      write_report(report, json_path, out);
      return kExitOk;
    }

    if (*refine) {
      crf_cfg.validate();
      if (!(confidence > 0.0 && confidence < 1.0)) throw ParameterError("--confidence must be in (0, 1)");
      const RgbImage image = io::load_image(image_path);
      const LabelGrid mask = io::load_mask(mask_path);
      if (mask.height != image.height || mask.width != image.width) throw DataError("image and mask sizes differ");
      const int max_label = *std::max_element(mask.labels.begin(), mask.labels.end());
      const std::size_t L = static_cast<std::size_t>(std::max(1, max_label)) + 1;
      Tensor probs({mask.height, mask.width, L}, (1.0 - confidence) / static_cast<double>(L - 1));
      for (std::size_t i = 0; i < mask.size(); ++i) probs[i * L + static_cast<std::size_t>(mask.labels[i])] = confidence;
      const LabelGrid refined = crf::map_labeling(crf::mean_field(crf::unary_from_probabilities(probs), image, crf_cfg));
      io::save_mask(refined_out, refined);
      std::size_t changed = 0;
      for (std::size_t i = 0; i < mask.size(); ++i) changed += mask.labels[i] != refined.labels[i];
      out << "pixels=" << mask.size() << " changed=" << changed << "\n";
      return kExitOk;
    }
  } catch (const ParameterError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const TrainingError& e) {
    err << "training failed: " << e.what() << "\n";
    return kExitFailed;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace affkit::cli
