#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdsclip/core/ops.hpp"
#include "sdsclip/core/optimizer.hpp"
#include "sdsclip/core/param_store.hpp"
#include "sdsclip/core/rng.hpp"
#include "sdsclip/core/tape.hpp"
#include "sdsclip/data/vocab.hpp"

namespace sdsclip::model {

using json = nlohmann::json;

// Resolves parameters either straight from the store (inference) or lifted
// onto a tape (training). All model forwards are written against this.
struct ParamView {
  ParamStore& store;
  Tape* tape = nullptr;

  Tensor operator()(const std::string& name) const {
    return tape ? tape->param(store, name) : store.tensor(name);
  }
};

struct EncoderConfig {
  std::size_t embed_dim = 64;
  std::size_t image_size = 32;
  std::size_t patch_size = 8;
  std::size_t text_max_len = 16;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t vocab_size = data::Vocabulary::standard().size();

  void validate() const {
    if (embed_dim % heads != 0)
      throw std::invalid_argument("encoder config: embed_dim must be divisible by heads");
    if (image_size % patch_size != 0)
      throw std::invalid_argument("encoder config: patch_size must divide image_size");
  }

  std::size_t patches_per_side() const { return image_size / patch_size; }
  std::size_t n_patches() const { return patches_per_side() * patches_per_side(); }
  std::size_t patch_dim() const { return 3 * patch_size * patch_size; }

  json to_json() const {
    return json{{"embed_dim", embed_dim}, {"image_size", image_size},   {"patch_size", patch_size},
                {"text_max_len", text_max_len}, {"layers", layers},     {"heads", heads},
                {"mlp_ratio", mlp_ratio},       {"vocab_size", vocab_size}};
  }

  static EncoderConfig from_json(const json& j) {
    EncoderConfig c;
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.image_size = j.at("image_size").get<std::size_t>();
    c.patch_size = j.at("patch_size").get<std::size_t>();
    c.text_max_len = j.at("text_max_len").get<std::size_t>();
    c.layers = j.at("layers").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.mlp_ratio = j.at("mlp_ratio").get<std::size_t>();
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.validate();
    return c;
  }
};

inline constexpr double kMaxInverseTemperature = 100.0;  // clamp so 1/tau <= 100

namespace encdetail {

inline void init_linear(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng,
                        bool bias = true) {
  const double stddev = 1.0 / std::sqrt(static_cast<double>(in));
  store.insert(prefix + ".weight", Tensor::randn({in, out}, rng, stddev));
  if (bias) store.insert(prefix + ".bias", Tensor::zeros({out}));
}

inline void init_layer_norm(ParamStore& store, const std::string& prefix, std::size_t d) {
  store.insert(prefix + ".gain", Tensor::ones({d}));
  store.insert(prefix + ".bias", Tensor::zeros({d}));
}

inline void init_block(ParamStore& store, const std::string& prefix, const EncoderConfig& cfg, Rng& rng) {
  const std::size_t d = cfg.embed_dim;
  init_layer_norm(store, prefix + ".ln1", d);
  init_linear(store, prefix + ".attn.q", d, d, rng);
  init_linear(store, prefix + ".attn.k", d, d, rng);
  init_linear(store, prefix + ".attn.v", d, d, rng);
  init_linear(store, prefix + ".attn.o", d, d, rng);
  init_layer_norm(store, prefix + ".ln2", d);
  init_linear(store, prefix + ".mlp.fc1", d, d * cfg.mlp_ratio, rng);
  init_linear(store, prefix + ".mlp.fc2", d * cfg.mlp_ratio, d, rng);
}

inline Tensor linear(const ParamView& pv, const std::string& prefix, const Tensor& x) {
  return add(matmul(x, pv(prefix + ".weight")), pv(prefix + ".bias"));
}

inline Tensor block_forward(const ParamView& pv, const std::string& prefix, Tensor x, const EncoderConfig& cfg,
                            bool causal) {
  const std::size_t d = cfg.embed_dim;
  const std::size_t hd = d / cfg.heads;
  Tensor h = layer_norm(x, pv(prefix + ".ln1.gain"), pv(prefix + ".ln1.bias"), 1);
  Tensor q = linear(pv, prefix + ".attn.q", h);
  Tensor k = linear(pv, prefix + ".attn.k", h);
  Tensor v = linear(pv, prefix + ".attn.v", h);
  std::vector<Tensor> heads_out;
  for (std::size_t head = 0; head < cfg.heads; ++head) {
    Tensor qh = slice(q, 1, head * hd, hd);
    Tensor kh = slice(k, 1, head * hd, hd);
    Tensor vh = slice(v, 1, head * hd, hd);
    heads_out.push_back(attention(qh, kh, vh, causal));
  }
  Tensor attn = linear(pv, prefix + ".attn.o", concat(heads_out, 1));
  x = add(x, attn);
  Tensor h2 = layer_norm(x, pv(prefix + ".ln2.gain"), pv(prefix + ".ln2.bias"), 1);
  Tensor m = linear(pv, prefix + ".mlp.fc2", gelu(linear(pv, prefix + ".mlp.fc1", h2)));
  return add(x, m);
}

// image -> [n_patches, 3*p*p], channel-major inside each patch
inline Tensor patchify(const Tensor& image, const EncoderConfig& cfg) {
  const std::size_t p = cfg.patch_size, side = cfg.patches_per_side(), r = cfg.image_size;
  std::vector<double> out(cfg.n_patches() * cfg.patch_dim());
  const auto& d = image.data();
  std::size_t at = 0;
  for (std::size_t pr = 0; pr < side; ++pr) {
    for (std::size_t pc = 0; pc < side; ++pc) {
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t y = 0; y < p; ++y) {
          for (std::size_t x = 0; x < p; ++x) {
            out[at++] = d[(c * r + pr * p + y) * r + pc * p + x];
          }
        }
      }
    }
  }
  return Tensor({cfg.n_patches(), cfg.patch_dim()}, std::move(out));
}

}  // namespace encdetail

// Creates all clip.* parameters: transformer towers, projections and the
// learned log-scale temperature.
inline void init_dual_encoder(ParamStore& store, const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  using namespace encdetail;
  const std::size_t d = cfg.embed_dim;
  init_linear(store, "clip.image.patch_proj", cfg.patch_dim(), d, rng);
  store.insert("clip.image.cls", Tensor::randn({1, d}, rng, 0.1));
  store.insert("clip.image.pos", Tensor::randn({cfg.n_patches() + 1, d}, rng, 0.1));
  for (std::size_t l = 0; l < cfg.layers; ++l)
    init_block(store, "clip.image.block" + std::to_string(l), cfg, rng);
  init_layer_norm(store, "clip.image.lnf", d);
  store.insert("clip.image.proj.weight", Tensor::randn({d, d}, rng, 1.0 / std::sqrt(static_cast<double>(d))));

  store.insert("clip.text.tok_emb", Tensor::randn({cfg.vocab_size, d}, rng, 0.1));
  store.insert("clip.text.pos", Tensor::randn({cfg.text_max_len, d}, rng, 0.1));
  for (std::size_t l = 0; l < cfg.layers; ++l)
    init_block(store, "clip.text.block" + std::to_string(l), cfg, rng);
  init_layer_norm(store, "clip.text.lnf", d);
  store.insert("clip.text.proj.weight", Tensor::randn({d, d}, rng, 1.0 / std::sqrt(static_cast<double>(d))));

  store.insert("clip.logit_scale", Tensor::scalar(std::log(1.0 / 0.07)));
}

// Projected, unit-norm CLS embedding of a 3 x R x R image.
inline Tensor encode_image(const ParamView& pv, const EncoderConfig& cfg, const Tensor& image) {
  if (image.shape() != Shape{3, cfg.image_size, cfg.image_size})
    throw std::invalid_argument("encode_image: expected shape [3x" + std::to_string(cfg.image_size) + "x" +
                                std::to_string(cfg.image_size) + "], got " + shape_str(image.shape()));
  using namespace encdetail;
  Tensor x = add(matmul(patchify(image, cfg), pv("clip.image.patch_proj.weight")),
                 pv("clip.image.patch_proj.bias"));
  x = concat<double>({pv("clip.image.cls"), x}, 0);
  x = add(x, pv("clip.image.pos"));
  for (std::size_t l = 0; l < cfg.layers; ++l)
    x = block_forward(pv, "clip.image.block" + std::to_string(l), x, cfg, false);
  x = layer_norm(x, pv("clip.image.lnf.gain"), pv("clip.image.lnf.bias"), 1);
  Tensor cls = slice(x, 0, 0, 1);
  Tensor e = matmul(cls, pv("clip.image.proj.weight"));
  return l2_normalize(reshape(e, {cfg.embed_dim}));
}

// Projected, unit-norm embedding read at the EOS position, causal masking.
inline Tensor encode_text(const ParamView& pv, const EncoderConfig& cfg, const std::vector<int>& ids) {
  if (ids.size() > cfg.text_max_len)
    throw std::invalid_argument("encode_text: " + std::to_string(ids.size()) + " ids exceed max length " +
                                std::to_string(cfg.text_max_len));
  std::size_t eos_pos = ids.size();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == data::Vocabulary::kEos) {
      eos_pos = i;
      break;
    }
  }
  if (eos_pos == ids.size()) throw std::invalid_argument("encode_text: missing EOS token");
  using namespace encdetail;
  Tensor x = embedding(pv("clip.text.tok_emb"), ids);
  x = add(x, slice(pv("clip.text.pos"), 0, 0, ids.size()));
  for (std::size_t l = 0; l < cfg.layers; ++l)
    x = block_forward(pv, "clip.text.block" + std::to_string(l), x, cfg, true);
  x = layer_norm(x, pv("clip.text.lnf.gain"), pv("clip.text.lnf.bias"), 1);
  Tensor eos = slice(x, 0, eos_pos, 1);
  Tensor e = matmul(eos, pv("clip.text.proj.weight"));
  return l2_normalize(reshape(e, {cfg.embed_dim}));
}

// Pairwise scaled similarities: entry (j, k) = e_img(x_j) . e_text(c_k) / tau
// with 1/tau = exp(logit_scale).
inline Tensor similarity_matrix(const ParamView& pv, const EncoderConfig& cfg, const std::vector<Tensor>& images,
                                const std::vector<std::vector<int>>& captions) {
  if (images.size() != captions.size() || images.empty())
    throw std::invalid_argument("similarity_matrix: need equal nonzero counts of images and captions");
  const std::size_t n = images.size();
  std::vector<Tensor> img_rows, txt_rows;
  for (std::size_t i = 0; i < n; ++i) {
    img_rows.push_back(reshape(encode_image(pv, cfg, images[i]), {1, cfg.embed_dim}));
    txt_rows.push_back(reshape(encode_text(pv, cfg, captions[i]), {1, cfg.embed_dim}));
  }
  Tensor ei = concat(img_rows, 0);
  Tensor et = concat(txt_rows, 0);
  Tensor logits = matmul(ei, transpose(et));
  return mul(logits, exp(pv("clip.logit_scale")));
}

inline void clamp_logit_scale(ParamStore& store) {
  const double cap = std::log(kMaxInverseTemperature);
  if (store.tensor("clip.logit_scale")[0] > cap) store.set_tensor("clip.logit_scale", Tensor::scalar(cap));
}

// cosine similarity of two unit-norm embeddings, inference-side
inline double cosine(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace sdsclip::model
