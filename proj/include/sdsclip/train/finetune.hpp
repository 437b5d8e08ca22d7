#pragma once

#include <chrono>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdsclip/core/optimizer.hpp"
#include "sdsclip/data/task_io.hpp"
#include "sdsclip/train/losses.hpp"

namespace sdsclip::train {

enum class RunMode : int { None = 0, ClipOnly = 1, ClipSds = 2, ClipFeatureDistill = 3 };

inline const char* run_mode_name(RunMode m) {
  switch (m) {
    case RunMode::None: return "none";
    case RunMode::ClipOnly: return "clip-only";
    case RunMode::ClipSds: return "clip+sds";
    default: return "clip+feature-distill";
  }
}

inline RunMode parse_run_mode(const std::string& s) {
  if (s == "none") return RunMode::None;
  if (s == "clip-only") return RunMode::ClipOnly;
  if (s == "clip+sds") return RunMode::ClipSds;
  if (s == "clip+feature-distill") return RunMode::ClipFeatureDistill;
  throw std::invalid_argument("unknown mode '" + s + "'");
}

enum class MaskPolicy : int { LayerNormBridge = 0, Full = 1 };

inline const char* mask_policy_name(MaskPolicy p) {
  return p == MaskPolicy::LayerNormBridge ? "layernorm+bridge" : "full";
}

inline MaskPolicy parse_mask_policy(const std::string& s) {
  if (s == "layernorm+bridge") return MaskPolicy::LayerNormBridge;
  if (s == "full") return MaskPolicy::Full;
  throw std::invalid_argument("unknown mask policy '" + s + "'");
}

struct TrainConfig {
  long epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 5e-5;
  double lambda = 0.001;
  RunMode mode = RunMode::ClipSds;
  std::uint64_t seed = 1;
  MaskPolicy mask_policy = MaskPolicy::LayerNormBridge;
  bool sds_noising = true;

  nlohmann::json to_json() const {
    return nlohmann::json{{"epochs", epochs},
                          {"batch-size", batch_size},
                          {"learning-rate", learning_rate},
                          {"lambda", lambda},
                          {"mode", run_mode_name(mode)},
                          {"seed", seed},
                          {"mask-policy", mask_policy_name(mask_policy)},
                          {"sds-noising", sds_noising}};
  }
};

// Trainable-name set under a masking policy. "layernorm+bridge" selects
// exactly the clip.*.ln*.{gain,bias} parameters plus the whole bridge;
// "full" selects all of clip.* plus the bridge. teacher.* is never included.
inline std::set<std::string> build_mask(const ParamStore& store, MaskPolicy policy) {
  for (const char* prefix : {"clip.", "bridge.", "teacher."}) {
    if (store.names(prefix).empty())
      throw std::invalid_argument(std::string("build_mask: store is missing the ") + prefix + "* subtree");
  }
  std::set<std::string> mask;
  for (const auto& name : store.names("bridge.")) mask.insert(name);
  for (const auto& name : store.names("clip.")) {
    if (policy == MaskPolicy::Full) {
      mask.insert(name);
      continue;
    }
    const auto last_dot = name.rfind('.');
    if (last_dot == std::string::npos) continue;
    const std::string leaf = name.substr(last_dot + 1);
    if (leaf != "gain" && leaf != "bias") continue;
    const auto prev_dot = name.rfind('.', last_dot - 1);
    const std::string parent = name.substr(prev_dot + 1, last_dot - prev_dot - 1);
    if (parent.rfind("ln", 0) == 0) mask.insert(name);
  }
  if (mask.empty()) throw std::runtime_error("build_mask: empty mask");
  return mask;
}

struct StepRecord {
  double clip_loss = 0.0;
  double reg_loss = 0.0;
  double total_loss = 0.0;
  double wall_seconds = 0.0;
};

struct TrainReport {
  std::vector<StepRecord> steps;
  std::size_t trainable_params = 0;
  std::size_t frozen_params = 0;
  nlohmann::json config_echo;

  nlohmann::json to_json() const {
    nlohmann::json per_step = nlohmann::json::array();
    for (const auto& s : steps)
      per_step.push_back({{"clip", s.clip_loss}, {"reg", s.reg_loss}, {"total", s.total_loss},
                          {"wall_seconds", s.wall_seconds}});
    return nlohmann::json{{"steps", per_step},
                          {"trainable_params", trainable_params},
                          {"frozen_params", frozen_params},
                          {"config", config_echo}};
  }
};

// The fine-tuning loop: sample a batch, draw (t, eps) per element, assemble
// L_CLIP (+ regularizer), backward, masked optimizer step. The (t, eps)
// draws happen in every mode so that runs with the same seed consume
// identical random streams; a lambda = 0 run therefore matches clip-only
// bit for bit.
inline TrainReport finetune(ParamStore& store, const EncoderConfig& ecfg, const model::Teacher& teacher,
                            const DiffusionSchedule& sched, const std::vector<data::CorpusPair>& corpus,
                            const TrainConfig& cfg) {
  if (corpus.empty()) throw std::invalid_argument("finetune: empty corpus");
  if (cfg.batch_size > corpus.size())
    throw std::invalid_argument("finetune: batch size exceeds corpus size");
  if (cfg.epochs < 1) throw std::invalid_argument("finetune: epochs must be >= 1");
  if (cfg.mode == RunMode::None) throw std::invalid_argument("finetune: mode 'none' skips training");
  for (const auto& name : store.names("teacher."))
    if (store.entry(name).trainable) throw std::invalid_argument("finetune: teacher subtree must be frozen");

  // lambda = 0 makes the regularizer term vanish; the bridge then gets no
  // gradient, so it drops out of the mask exactly as in clip-only mode
  const bool regularized = cfg.mode != RunMode::ClipOnly && cfg.lambda != 0.0;

  auto mask = build_mask(store, cfg.mask_policy);
  if (!regularized) {
    for (auto it = mask.begin(); it != mask.end();) {
      if (it->rfind("bridge.", 0) == 0) it = mask.erase(it);
      else ++it;
    }
  }
  for (const auto& name : store.names()) {
    if (name.rfind("teacher.", 0) == 0) continue;
    store.set_trainable(name, mask.count(name) != 0);
  }

  LossConfig loss_cfg;
  loss_cfg.lambda = cfg.lambda;
  loss_cfg.mode = cfg.mode == RunMode::ClipFeatureDistill ? LossMode::ClipFeatureDistill
                  : cfg.mode == RunMode::ClipSds          ? LossMode::ClipSds
                                                          : LossMode::ClipOnly;
  loss_cfg.sds_noising = cfg.sds_noising;

  OptimState opt;
  opt.lr = cfg.learning_rate;
  Rng rng = Rng(cfg.seed).fork(71);
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainReport report;
  report.config_echo = cfg.to_json();
  const std::size_t steps_per_epoch = corpus.size() / cfg.batch_size;
  const bool tau_trainable = mask.count("clip.logit_scale") != 0;

  for (long epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      const auto t0 = std::chrono::steady_clock::now();
      std::vector<Tensor> images;
      std::vector<std::vector<int>> captions;
      std::vector<NoiseDraw> draws;
      for (std::size_t b = 0; b < cfg.batch_size; ++b) {
        const auto& pair = corpus[order[step * cfg.batch_size + b]];
        images.push_back(pair.image);
        captions.push_back(pair.caption.token_ids);
        draws.push_back(model::sample_draw(sched, rng, teacher.cfg.latent_shape()));
      }
      Tape tape;
      ParamView pv{store, &tape};
      const Tensor clip_part = contrastive_loss(pv, ecfg, images, captions);
      Tensor reg_part;
      if (regularized) {
        reg_part = cfg.mode == RunMode::ClipSds
                       ? sds_loss(pv, ecfg, teacher, sched, images, captions, draws, cfg.sds_noising)
                       : feature_distill_loss(pv, ecfg, teacher, sched, images, captions, draws);
      }
      const Tensor loss = total_loss(loss_cfg, clip_part, reg_part);
      StepRecord rec;
      rec.clip_loss = clip_part.scalar_value();
      rec.reg_loss = reg_part.empty() ? 0.0 : reg_part.scalar_value();
      rec.total_loss = loss.scalar_value();
      if (!std::isfinite(rec.total_loss))
        throw std::runtime_error("finetune: non-finite loss at step " + std::to_string(report.steps.size()));
      backward(loss, store);
      optimizer_step(store, opt);
      if (tau_trainable) model::clamp_logit_scale(store);
      rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      report.steps.push_back(rec);
    }
  }

  for (const auto& [name, entry] : store) {
    if (entry.trainable) report.trainable_params += entry.tensor.numel();
    else report.frozen_params += entry.tensor.numel();
  }
  return report;
}

}  // namespace sdsclip::train
