#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "sdsclip/core/ops.hpp"
#include "sdsclip/model/encoder.hpp"
#include "sdsclip/model/teacher.hpp"

namespace sdsclip::train {

using model::DiffusionSchedule;
using model::EncoderConfig;
using model::NoiseDraw;
using model::ParamView;
using model::TeacherConfig;

enum class LossMode : int { ClipOnly = 0, ClipSds = 1, ClipFeatureDistill = 2 };

inline const char* loss_mode_name(LossMode m) {
  switch (m) {
    case LossMode::ClipOnly: return "clip-only";
    case LossMode::ClipSds: return "clip+sds";
    default: return "clip+feature-distill";
  }
}

struct LossConfig {
  double lambda = 0.001;
  LossMode mode = LossMode::ClipSds;
  // when false, the bridge output goes into the denoiser without forward
  // noising while the target stays eps; kept behind a flag for comparison
  bool sds_noising = true;

  void validate() const {
    if (lambda < 0.0) throw std::invalid_argument("loss config: lambda must be >= 0");
  }
};

// ---------------------------------------------------------------------------
// bridge map: image embedding -> teacher latent space
// ---------------------------------------------------------------------------

inline void init_bridge(ParamStore& store, std::size_t embed_dim, const TeacherConfig& tcfg, Rng& rng) {
  const std::size_t out = shape_numel(tcfg.latent_shape());
  store.insert("bridge.w.weight", Tensor::randn({embed_dim, out}, rng, 0.02));
  store.insert("bridge.w.bias", Tensor::zeros({out}));
}

inline Tensor bridge_latent(const ParamView& pv, const TeacherConfig& tcfg, const Tensor& embedding) {
  const std::size_t d = embedding.numel();
  Tensor z = add(matmul(reshape(embedding, {1, d}), pv("bridge.w.weight")), pv("bridge.w.bias"));
  return reshape(z, tcfg.latent_shape());
}

// ---------------------------------------------------------------------------
// objectives
// ---------------------------------------------------------------------------

// Bidirectional contrastive loss: both softmax cross-entropy sums, each
// scaled by 1/(2N), sharing one similarity matrix.
inline Tensor contrastive_loss(const ParamView& pv, const EncoderConfig& cfg, const std::vector<Tensor>& images,
                               const std::vector<std::vector<int>>& captions) {
  const std::size_t n = images.size();
  if (n < 2) throw std::invalid_argument("contrastive_loss: need at least 2 pairs, got " + std::to_string(n));
  Tensor logits = model::similarity_matrix(pv, cfg, images, captions);
  std::vector<double> eye(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) eye[i * n + i] = 1.0;
  const Tensor diag({n, n}, std::move(eye));
  Tensor image_to_text = sum(mul(log_softmax(logits, 1), diag));
  Tensor text_to_image = sum(mul(log_softmax(logits, 0), diag));
  return scale(add(image_to_text, text_to_image), -1.0 / (2.0 * static_cast<double>(n)));
}

// Score-distillation regularizer: the bridge output is treated as a clean
// latent, forward-noised with the per-element draw, and pushed through the
// frozen denoiser; gradients flow through the denoiser into the bridge and
// the image encoder.
template <typename TeacherLike>
Tensor sds_loss(const ParamView& pv, const EncoderConfig& ecfg, const TeacherLike& teacher,
                const DiffusionSchedule& sched, const std::vector<Tensor>& images,
                const std::vector<std::vector<int>>& captions, const std::vector<NoiseDraw>& draws,
                bool noised_input = true) {
  if (images.size() != captions.size() || images.size() != draws.size() || images.empty())
    throw std::invalid_argument("sds_loss: images, captions and draws must have equal nonzero sizes");
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Tensor e = model::encode_image(pv, ecfg, images[i]);
    const Tensor z0 = bridge_latent(pv, teacher.cfg, e);
    const Tensor z_in = noised_input ? model::forward_noise(sched, z0, draws[i]) : z0;
    const Tensor pred = teacher.predict(z_in, draws[i].t, captions[i], pv.tape);
    total = add(total, squared_error_sum(pred, draws[i].eps));
  }
  return scale(total, 1.0 / static_cast<double>(images.size()));
}

// Negative baseline: regress the bridge output directly onto the frozen
// denoiser's noise-prediction features of the true latent. No gradient
// reaches the teacher; the target is computed off-tape.
template <typename TeacherLike>
Tensor feature_distill_loss(const ParamView& pv, const EncoderConfig& ecfg, const TeacherLike& teacher,
                            const DiffusionSchedule& sched, const std::vector<Tensor>& images,
                            const std::vector<std::vector<int>>& captions, const std::vector<NoiseDraw>& draws) {
  if (images.size() != captions.size() || images.size() != draws.size() || images.empty())
    throw std::invalid_argument("feature_distill_loss: images, captions and draws must have equal nonzero sizes");
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Tensor e = model::encode_image(pv, ecfg, images[i]);
    const Tensor z0 = bridge_latent(pv, teacher.cfg, e);
    const Tensor true_latent = teacher.latent(images[i]);
    const Tensor noisy = model::forward_noise(sched, true_latent, draws[i]);
    const Tensor target = teacher.predict(noisy, draws[i].t, captions[i], nullptr);  // detached
    total = add(total, squared_error_sum(z0, target.detached()));
  }
  return scale(total, 1.0 / static_cast<double>(images.size()));
}

// L_total = L_CLIP + lambda * regularizer. lambda = 0 short-circuits to the
// contrastive part so that a lambda = 0 run is bit-identical to clip-only.
inline Tensor total_loss(const LossConfig& cfg, const Tensor& clip_part, const Tensor& reg_part) {
  cfg.validate();
  if (cfg.mode == LossMode::ClipOnly || cfg.lambda == 0.0) return clip_part;
  if (reg_part.empty()) throw std::invalid_argument("total_loss: regularizer term missing for mode");
  return add(clip_part, scale(reg_part, cfg.lambda));
}

}  // namespace sdsclip::train
