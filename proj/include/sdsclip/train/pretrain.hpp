#pragma once

#include <string>
#include <vector>

#include "sdsclip/core/optimizer.hpp"
#include "sdsclip/data/task_io.hpp"
#include "sdsclip/train/losses.hpp"

namespace sdsclip::train {

struct PretrainConfig {
  long epochs = 30;
  std::size_t batch = 32;
  double lr = 3e-4;
  std::uint64_t seed = 1;
};

struct PretrainReport {
  std::vector<double> epoch_losses;
  long steps = 0;
};

// Plain contrastive pretraining of the dual encoder on the synthetic corpus;
// stands in for the public checkpoint the fine-tuning experiments start from.
inline PretrainReport pretrain_clip(ParamStore& store, const EncoderConfig& cfg,
                                    const std::vector<data::CorpusPair>& corpus, const PretrainConfig& pc) {
  if (corpus.empty()) throw std::invalid_argument("pretrain_clip: empty corpus");
  const std::size_t batch = std::min(pc.batch, corpus.size());
  if (batch < 2) throw std::invalid_argument("pretrain_clip: batch must be >= 2");
  OptimState opt;
  opt.lr = pc.lr;
  Rng rng = Rng(pc.seed).fork(67);
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  PretrainReport report;
  const std::size_t steps_per_epoch = corpus.size() / batch;

  for (long epoch = 0; epoch < pc.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      std::vector<Tensor> images;
      std::vector<std::vector<int>> captions;
      for (std::size_t b = 0; b < batch; ++b) {
        const auto& pair = corpus[order[step * batch + b]];
        images.push_back(pair.image);
        captions.push_back(pair.caption.token_ids);
      }
      Tape tape;
      ParamView pv{store, &tape};
      Tensor loss = contrastive_loss(pv, cfg, images, captions);
      const double v = loss.scalar_value();
      if (!std::isfinite(v)) throw std::runtime_error("pretrain_clip: loss diverged at step " +
                                                      std::to_string(report.steps));
      epoch_loss += v;
      backward(loss, store);
      optimizer_step(store, opt);
      model::clamp_logit_scale(store);
      ++report.steps;
    }
    report.epoch_losses.push_back(epoch_loss / static_cast<double>(steps_per_epoch));
  }
  return report;
}

// Top-1 image-to-text retrieval over matched pairs; strict argmax, ties fail.
inline double retrieval_top1(ParamStore& store, const EncoderConfig& cfg,
                             const std::vector<data::CorpusPair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("retrieval_top1: empty evaluation set");
  ParamView pv{store};
  std::vector<Tensor> img_emb, txt_emb;
  for (const auto& p : pairs) {
    img_emb.push_back(model::encode_image(pv, cfg, p.image));
    txt_emb.push_back(model::encode_text(pv, cfg, p.caption.token_ids));
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double own = model::cosine(img_emb[i], txt_emb[i]);
    bool best = true;
    for (std::size_t j = 0; j < pairs.size(); ++j) {
      if (j != i && model::cosine(img_emb[i], txt_emb[j]) >= own) {
        best = false;
        break;
      }
    }
    if (best) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

}  // namespace sdsclip::train
