#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdsclip/core/ops.hpp"
#include "sdsclip/core/optimizer.hpp"
#include "sdsclip/core/param_store.hpp"
#include "sdsclip/core/rng.hpp"
#include "sdsclip/data/task_io.hpp"
#include "sdsclip/data/vocab.hpp"
#include "sdsclip/model/encoder.hpp"

namespace sdsclip::model {

// ---------------------------------------------------------------------------
// DDPM noise schedule
// ---------------------------------------------------------------------------

struct DiffusionSchedule {
  std::size_t T = 100;
  double beta_min = 0.0;
  double beta_max = 0.0;
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;  // cumulative products, index t-1 for step t

  static DiffusionSchedule linear(std::size_t T, double beta_min, double beta_max) {
    DiffusionSchedule s;
    s.T = T;
    s.beta_min = beta_min;
    s.beta_max = beta_max;
    s.betas.resize(T);
    s.alphas.resize(T);
    s.alpha_bars.resize(T);
    double bar = 1.0;
    for (std::size_t i = 0; i < T; ++i) {
      s.betas[i] = beta_min + (beta_max - beta_min) * static_cast<double>(i) / static_cast<double>(T - 1);
      s.alphas[i] = 1.0 - s.betas[i];
      bar *= s.alphas[i];
      s.alpha_bars[i] = bar;
    }
    s.validate();
    return s;
  }

  // the usual 1000-step 1e-4..0.02 range, rescaled to T steps
  static DiffusionSchedule default_schedule(std::size_t T = 100) {
    const double scale = 1000.0 / static_cast<double>(T);
    return linear(T, 1e-4 * scale, 0.02 * scale);
  }

  void validate() const {
    if (T < 2) throw std::invalid_argument("schedule: need at least 2 steps");
    for (std::size_t i = 0; i < T; ++i) {
      if (!(betas[i] > 0.0 && betas[i] < 1.0)) throw std::invalid_argument("schedule: betas must lie in (0, 1)");
      if (i > 0 && betas[i] <= betas[i - 1])
        throw std::invalid_argument("schedule: betas must be strictly increasing");
      if (i > 0 && alpha_bars[i] >= alpha_bars[i - 1])
        throw std::invalid_argument("schedule: alpha-bars must be strictly decreasing");
    }
    if (alpha_bars.front() <= 0.99) throw std::invalid_argument("schedule: alpha-bar at t=1 must exceed 0.99");
  }

  double alpha_bar(int t) const {
    if (t < 1 || static_cast<std::size_t>(t) > T)
      throw std::invalid_argument("schedule: t = " + std::to_string(t) + " outside [1, " + std::to_string(T) + "]");
    return alpha_bars[static_cast<std::size_t>(t - 1)];
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"T", T}, {"beta_min", beta_min}, {"beta_max", beta_max}};
  }

  static DiffusionSchedule from_json(const nlohmann::json& j) {
    return linear(j.at("T").get<std::size_t>(), j.at("beta_min").get<double>(), j.at("beta_max").get<double>());
  }
};

struct NoiseDraw {
  int t = 1;
  Tensor eps;
};

inline NoiseDraw sample_draw(const DiffusionSchedule& sched, Rng& rng, const Shape& latent_shape) {
  NoiseDraw d;
  d.t = static_cast<int>(rng.uniform_int(1, static_cast<std::int64_t>(sched.T)));
  d.eps = Tensor::randn(latent_shape, rng);
  return d;
}

inline std::vector<NoiseDraw> make_draws(const DiffusionSchedule& sched, const Shape& latent_shape, std::size_t n,
                                         Rng rng) {
  std::vector<NoiseDraw> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample_draw(sched, rng, latent_shape));
  return out;
}

// sqrt(abar_t) * latent + sqrt(1 - abar_t) * eps; differentiable through the
// latent when it sits on a tape
inline Tensor forward_noise(const DiffusionSchedule& sched, const Tensor& latent, const NoiseDraw& draw) {
  if (latent.shape() != draw.eps.shape())
    throw std::invalid_argument("forward_noise: latent " + shape_str(latent.shape()) + " vs noise " +
                                shape_str(draw.eps.shape()));
  const double ab = sched.alpha_bar(draw.t);
  return add(scale(latent, std::sqrt(ab)), scale(draw.eps, std::sqrt(1.0 - ab)));
}

// ---------------------------------------------------------------------------
// teacher model: frozen latent projection + small conditional U-shaped net
// ---------------------------------------------------------------------------

struct TeacherConfig {
  std::size_t image_size = 32;
  std::size_t latent_channels = 4;
  std::size_t latent_grid = 8;       // 4 x 8 x 8 latents from 4 x 4 pixel patches
  std::size_t base_channels = 16;    // after conv_in, at 8 x 8
  std::size_t mid_channels = 32;     // after downsampling, at 4 x 4
  std::size_t cond_dim = 32;         // pooled caption vector at the bottleneck
  std::size_t time_dim = 32;         // sinusoidal time embedding
  std::size_t txt_emb_dim = 16;
  std::size_t max_seq_len = 16;
  std::size_t vocab_size = data::Vocabulary::standard().size();

  std::size_t patch_px() const { return image_size / latent_grid; }
  std::size_t patch_dim() const { return 3 * patch_px() * patch_px(); }
  Shape latent_shape() const { return {latent_channels, latent_grid, latent_grid}; }

  nlohmann::json to_json() const {
    return nlohmann::json{{"image_size", image_size},   {"latent_channels", latent_channels},
                          {"latent_grid", latent_grid}, {"base_channels", base_channels},
                          {"mid_channels", mid_channels}, {"cond_dim", cond_dim},
                          {"time_dim", time_dim},       {"txt_emb_dim", txt_emb_dim},
                          {"max_seq_len", max_seq_len}, {"vocab_size", vocab_size}};
  }

  static TeacherConfig from_json(const nlohmann::json& j) {
    TeacherConfig c;
    c.image_size = j.at("image_size").get<std::size_t>();
    c.latent_channels = j.at("latent_channels").get<std::size_t>();
    c.latent_grid = j.at("latent_grid").get<std::size_t>();
    c.base_channels = j.at("base_channels").get<std::size_t>();
    c.mid_channels = j.at("mid_channels").get<std::size_t>();
    c.cond_dim = j.at("cond_dim").get<std::size_t>();
    c.time_dim = j.at("time_dim").get<std::size_t>();
    c.txt_emb_dim = j.at("txt_emb_dim").get<std::size_t>();
    c.max_seq_len = j.at("max_seq_len").get<std::size_t>();
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    return c;
  }
};

// Fixed per-patch linear projection into latent space; seeded once, frozen
// forever, and excluded from every optimizer mask.
inline void init_latent_encoder(ParamStore& store, const TeacherConfig& cfg, Rng& rng) {
  const double stddev = 1.0 / std::sqrt(static_cast<double>(cfg.patch_dim()));
  store.insert("teacher.latent.weight",
               Tensor::randn({cfg.latent_channels, cfg.patch_dim()}, rng, stddev), false);
}

inline void init_denoiser(ParamStore& store, const TeacherConfig& cfg, Rng& rng) {
  const std::size_t cb = cfg.base_channels, cm = cfg.mid_channels;
  auto conv = [&](const std::string& name, std::size_t cout, std::size_t cin) {
    const double stddev = 1.0 / std::sqrt(static_cast<double>(cin * 9));
    store.insert(name + ".weight", Tensor::randn({cout, cin, 3, 3}, rng, stddev));
    store.insert(name + ".bias", Tensor::zeros({cout}));
  };
  conv("teacher.unet.conv_in", cb, cfg.latent_channels + 2);  // + row/col coordinate maps
  store.insert("teacher.unet.time1.weight", Tensor::randn({cfg.time_dim, cb}, rng, 0.05));
  store.insert("teacher.unet.time1.bias", Tensor::zeros({cb}));
  store.insert("teacher.unet.cond1.weight", Tensor::randn({cfg.cond_dim, cb}, rng, 0.2));
  store.insert("teacher.unet.cond1.bias", Tensor::zeros({cb}));
  // rank-1 spatial modulation: the caption vector decodes into channel, row
  // and column profiles whose outer product biases the full-resolution
  // features; captions talk about where things are, this lets them say it
  for (int term = 0; term < 2; ++term) {
    const std::string sp = "teacher.unet.sp" + std::to_string(term);
    store.insert(sp + ".chan.weight", Tensor::randn({cfg.cond_dim, cb}, rng, 0.2));
    store.insert(sp + ".chan.bias", Tensor::zeros({cb}));
    store.insert(sp + ".row.weight", Tensor::randn({cfg.cond_dim, cfg.latent_grid}, rng, 0.05));
    store.insert(sp + ".row.bias", Tensor::ones({cfg.latent_grid}));
    store.insert(sp + ".col.weight", Tensor::randn({cfg.cond_dim, cfg.latent_grid}, rng, 0.05));
    store.insert(sp + ".col.bias", Tensor::ones({cfg.latent_grid}));
  }
  conv("teacher.unet.down", cm, cb);
  store.insert("teacher.unet.time2.weight", Tensor::randn({cfg.time_dim, cm}, rng, 0.05));
  store.insert("teacher.unet.time2.bias", Tensor::zeros({cm}));
  // multiplicative caption modulation (scale starts at identity)
  store.insert("teacher.unet.film1.weight", Tensor::randn({cfg.cond_dim, cb}, rng, 0.1));
  store.insert("teacher.unet.film1.bias", Tensor::zeros({cb}));
  store.insert("teacher.unet.film2.weight", Tensor::randn({cfg.cond_dim, cm}, rng, 0.1));
  store.insert("teacher.unet.film2.bias", Tensor::zeros({cm}));
  store.insert("teacher.unet.txt.emb", Tensor::randn({cfg.vocab_size, cfg.txt_emb_dim}, rng, 1.0));
  // position gates start at one: a bag-of-words read of the caption that
  // training can bend toward order sensitivity where it pays off
  store.insert("teacher.unet.txt.gate", Tensor::ones({cfg.max_seq_len, cfg.txt_emb_dim}));
  // bigram branch: adjacent-token composition; a bag of bigrams separates
  // noun-phrase swaps at first order while staying cheap
  store.insert("teacher.unet.txt.bigram.weight",
               Tensor::randn({2 * cfg.txt_emb_dim, cfg.txt_emb_dim},
                             rng, 1.0 / std::sqrt(static_cast<double>(2 * cfg.txt_emb_dim))));
  store.insert("teacher.unet.txt.bigram.bias", Tensor::zeros({cfg.txt_emb_dim}));
  store.insert("teacher.unet.txt.w1",
               Tensor::randn({3 * cfg.txt_emb_dim, cfg.cond_dim},
                             rng, 2.0 / std::sqrt(static_cast<double>(3 * cfg.txt_emb_dim))));
  store.insert("teacher.unet.txt.b1", Tensor::zeros({cfg.cond_dim}));
  store.insert("teacher.unet.txt.w2",
               Tensor::randn({cfg.cond_dim, cfg.cond_dim}, rng, 2.0 / std::sqrt(static_cast<double>(cfg.cond_dim))));
  store.insert("teacher.unet.txt.b2", Tensor::zeros({cfg.cond_dim}));
  conv("teacher.unet.mid", cm, cm + cfg.cond_dim);
  conv("teacher.unet.up", cb, cm + cb);
  conv("teacher.unet.out", cfg.latent_channels, cb);
}

inline std::vector<double> sinusoidal_time_embedding(int t, std::size_t dim) {
  std::vector<double> out(dim);
  const std::size_t half = dim / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    out[i] = std::sin(t * freq);
    out[half + i] = std::cos(t * freq);
  }
  return out;
}

// Teacher handle; all forwards run against the owning store, optionally on a
// tape so gradients can flow through the frozen weights.
struct Teacher {
  ParamStore& store;
  TeacherConfig cfg;

  // image -> 4 x 8 x 8 latent through the frozen projection; never on a tape
  Tensor latent(const Tensor& image) const {
    if (image.shape() != Shape{3, cfg.image_size, cfg.image_size})
      throw std::invalid_argument("teacher latent: bad image shape " + shape_str(image.shape()));
    const auto& w = store.tensor("teacher.latent.weight").data();
    const std::size_t g = cfg.latent_grid, p = cfg.patch_px(), r = cfg.image_size, pd = cfg.patch_dim();
    const auto& img = image.data();
    std::vector<double> z(cfg.latent_channels * g * g, 0.0);
    std::vector<double> patch(pd);
    for (std::size_t pr = 0; pr < g; ++pr) {
      for (std::size_t pc = 0; pc < g; ++pc) {
        std::size_t at = 0;
        for (std::size_t c = 0; c < 3; ++c)
          for (std::size_t y = 0; y < p; ++y)
            for (std::size_t x = 0; x < p; ++x) patch[at++] = img[(c * r + pr * p + y) * r + pc * p + x];
        for (std::size_t ch = 0; ch < cfg.latent_channels; ++ch) {
          double acc = 0.0;
          for (std::size_t k = 0; k < pd; ++k) acc += w[ch * pd + k] * patch[k];
          z[(ch * g + pr) * g + pc] = acc;
        }
      }
    }
    return Tensor(cfg.latent_shape(), std::move(z));
  }

  // pooled caption conditioning vector as a [cond_dim] tensor: gated mean of
  // token embeddings plus a mean over composed adjacent-token bigrams
  Tensor caption_conditioning(const std::vector<int>& ids, Tape* tape) const {
    ParamView pv{store, tape};
    std::vector<int> padded = ids;
    if (padded.size() > cfg.max_seq_len)
      throw std::invalid_argument("teacher: caption longer than max_seq_len");
    padded.resize(cfg.max_seq_len, data::Vocabulary::kPad);
    Tensor e = embedding(pv("teacher.unet.txt.emb"), padded);
    Tensor gated = mul(e, pv("teacher.unet.txt.gate"));
    Tensor unigram = mean_axis(gated, 0);

    const std::size_t n = cfg.max_seq_len;
    Tensor pairs = concat<double>({slice(e, 0, 0, n - 1), slice(e, 0, 1, n - 1)}, 1);  // [n-1, 2*emb]
    Tensor composed = gelu(add(matmul(pairs, pv("teacher.unet.txt.bigram.weight")),
                               pv("teacher.unet.txt.bigram.bias")));
    Tensor bigram = mean_axis(composed, 0);

    // fixed position ramp: moves a word's embedding weight with its slot, so
    // swapped noun phrases land far apart in this branch
    std::vector<double> ramp_w(n);
    for (std::size_t i = 0; i < n; ++i) ramp_w[i] = static_cast<double>(i + 1) / static_cast<double>(n);
    Tensor ramp = mean_axis(mul(e, Tensor({n, 1}, std::move(ramp_w))), 0);

    Tensor u = reshape(concat<double>({reshape(unigram, {1, cfg.txt_emb_dim}),
                                       reshape(bigram, {1, cfg.txt_emb_dim}),
                                       reshape(ramp, {1, cfg.txt_emb_dim})}, 1),
                       {1, 3 * cfg.txt_emb_dim});
    Tensor h = gelu(add(matmul(u, pv("teacher.unet.txt.w1")), pv("teacher.unet.txt.b1")));
    Tensor cond = add(matmul(h, pv("teacher.unet.txt.w2")), pv("teacher.unet.txt.b2"));
    return reshape(cond, {cfg.cond_dim});
  }

  // noise prediction eps_theta(z_t, t, c)
  Tensor predict(const Tensor& z_t, int t, const std::vector<int>& ids, Tape* tape = nullptr) const {
    if (z_t.shape() != cfg.latent_shape())
      throw std::invalid_argument("teacher predict: latent shape " + shape_str(z_t.shape()) + " expected " +
                                  shape_str(cfg.latent_shape()));
    ParamView pv{store, tape};
    const Tensor temb({1, cfg.time_dim}, sinusoidal_time_embedding(t, cfg.time_dim));
    const std::size_t g = cfg.latent_grid;
    Tensor cond = caption_conditioning(ids, tape);
    const Tensor cond_row = reshape(cond, {1, cfg.cond_dim});

    // fixed coordinate maps make relative-position reasoning local
    std::vector<double> coords(2 * g * g);
    for (std::size_t y = 0; y < g; ++y) {
      for (std::size_t x = 0; x < g; ++x) {
        coords[y * g + x] = static_cast<double>(y) / static_cast<double>(g - 1);
        coords[g * g + y * g + x] = static_cast<double>(x) / static_cast<double>(g - 1);
      }
    }
    const Tensor z_in = concat<double>({z_t, Tensor({2, g, g}, std::move(coords))}, 0);

    // caption signal enters twice: a per-channel bias at full resolution and
    // extra channels at the bottleneck
    Tensor tb1 = reshape(add(matmul(temb, pv("teacher.unet.time1.weight")), pv("teacher.unet.time1.bias")),
                         {cfg.base_channels, 1, 1});
    Tensor cb1 = reshape(add(matmul(cond_row, pv("teacher.unet.cond1.weight")), pv("teacher.unet.cond1.bias")),
                         {cfg.base_channels, 1, 1});
    Tensor pre = add(add(conv2d(z_in, pv("teacher.unet.conv_in.weight"), pv("teacher.unet.conv_in.bias"), 1), tb1),
                     cb1);
    for (int term = 0; term < 2; ++term) {
      const std::string sp = "teacher.unet.sp" + std::to_string(term);
      Tensor chan = reshape(add(matmul(cond_row, pv(sp + ".chan.weight")), pv(sp + ".chan.bias")),
                            {cfg.base_channels, 1, 1});
      Tensor row = reshape(add(matmul(cond_row, pv(sp + ".row.weight")), pv(sp + ".row.bias")), {1, g, 1});
      Tensor col = reshape(add(matmul(cond_row, pv(sp + ".col.weight")), pv(sp + ".col.bias")), {1, 1, g});
      pre = add(pre, mul(mul(chan, row), col));
    }
    Tensor fs1 = reshape(add(matmul(cond_row, pv("teacher.unet.film1.weight")), pv("teacher.unet.film1.bias")),
                         {cfg.base_channels, 1, 1});
    Tensor h1 = gelu(mul(pre, add(Tensor::ones({1}), fs1)));

    Tensor tb2 = reshape(add(matmul(temb, pv("teacher.unet.time2.weight")), pv("teacher.unet.time2.bias")),
                         {cfg.mid_channels, 1, 1});
    Tensor fs2 = reshape(add(matmul(cond_row, pv("teacher.unet.film2.weight")), pv("teacher.unet.film2.bias")),
                         {cfg.mid_channels, 1, 1});
    Tensor h2 = gelu(mul(add(conv2d(avg_pool2d(h1, 2), pv("teacher.unet.down.weight"), pv("teacher.unet.down.bias"), 1),
                             tb2),
                         add(Tensor::ones({1}), fs2)));

    Tensor cond_map = add(Tensor::zeros({cfg.cond_dim, g / 2, g / 2}), reshape(cond, {cfg.cond_dim, 1, 1}));
    Tensor hb = gelu(conv2d(concat<double>({h2, cond_map}, 0), pv("teacher.unet.mid.weight"),
                            pv("teacher.unet.mid.bias"), 1));

    Tensor up = concat<double>({upsample_nearest(hb, 2), h1}, 0);
    Tensor ho = gelu(conv2d(up, pv("teacher.unet.up.weight"), pv("teacher.unet.up.bias"), 1));
    return conv2d(ho, pv("teacher.unet.out.weight"), pv("teacher.unet.out.bias"), 1);
  }

  void freeze() {
    for (const auto& name : store.names("teacher.")) store.set_trainable(name, false);
  }
};

// ---------------------------------------------------------------------------
// scoring: the denoising error d(x, c)
// ---------------------------------------------------------------------------

// Mean squared denoising error over a fixed set of (t, eps) draws. Template
// over the denoiser so tests can swap in stubs.
template <typename DenoiserLike>
double score_with_draws(const DenoiserLike& den, const DiffusionSchedule& sched, const Tensor& latent,
                        const std::vector<int>& ids, const std::vector<NoiseDraw>& draws) {
  if (draws.empty()) throw std::invalid_argument("score_with_draws: need at least one draw");
  double acc = 0.0;
  for (const auto& draw : draws) {
    const double ab = sched.alpha_bar(draw.t);
    const double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
    std::vector<double> zt(latent.numel());
    const auto& z0 = latent.data();
    const auto& ep = draw.eps.data();
    for (std::size_t i = 0; i < zt.size(); ++i) zt[i] = sa * z0[i] + sb * ep[i];
    const Tensor pred = den.predict(Tensor(latent.shape(), std::move(zt)), draw.t, ids, nullptr);
    const auto& pd = pred.data();
    double err = 0.0;
    for (std::size_t i = 0; i < pd.size(); ++i) {
      const double d = pd[i] - ep[i];
      err += d * d;
    }
    acc += err;
  }
  return acc / static_cast<double>(draws.size());
}

// Monte-Carlo estimate of E_{t, eps} || eps_theta(v(x), t, c) - eps ||^2.
template <typename TeacherLike>
double diffusion_score(const TeacherLike& teacher, const DiffusionSchedule& sched, const Tensor& image,
                       const std::vector<int>& ids, std::size_t n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw std::invalid_argument("diffusion_score: n_samples must be >= 1");
  const Tensor z0 = teacher.latent(image);
  const auto draws = make_draws(sched, z0.shape(), n_samples, Rng(seed));
  return score_with_draws(teacher, sched, z0, ids, draws);
}

// Argmin of the diffusion score over candidate captions with common random
// numbers; ties resolve to the lowest index.
template <typename TeacherLike>
std::size_t select_caption(const TeacherLike& teacher, const DiffusionSchedule& sched, const Tensor& image,
                           const std::vector<std::vector<int>>& captions, std::size_t n_samples,
                           std::uint64_t seed) {
  if (captions.size() < 2) throw std::invalid_argument("select_caption: need at least two captions");
  const Tensor z0 = teacher.latent(image);
  const auto draws = make_draws(sched, z0.shape(), n_samples, Rng(seed));
  std::size_t best = 0;
  double best_score = score_with_draws(teacher, sched, z0, captions[0], draws);
  for (std::size_t c = 1; c < captions.size(); ++c) {
    const double s = score_with_draws(teacher, sched, z0, captions[c], draws);
    if (s < best_score) {
      best_score = s;
      best = c;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// teacher training
// ---------------------------------------------------------------------------

struct TeacherTrainConfig {
  long epochs = 60;
  std::size_t batch = 32;
  double lr = 2e-3;
  // fraction of captions replaced by a word-order shuffle during training;
  // stands in for the noisy alt-text a web-scale teacher is conditioned on
  double caption_shuffle_prob = 0.25;
  // weight each element by 1 / (1 + SNR(t)); low-t reconstruction errors are
  // orders of magnitude larger and would otherwise drown the conditional
  // signal that lives at middle timesteps
  bool snr_weighted_loss = true;
  std::uint64_t seed = 1;
};

struct TeacherTrainReport {
  std::vector<double> epoch_losses;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  long steps = 0;
};

// Minimizes E || eps_theta(z_t, t, c) - eps ||^2 over the corpus and returns
// the frozen teacher report. The store must already hold teacher.latent.*
// (frozen) and teacher.unet.* (trainable).
inline TeacherTrainReport train_teacher(ParamStore& store, const TeacherConfig& tcfg,
                                        const DiffusionSchedule& sched,
                                        const std::vector<data::CorpusPair>& corpus,
                                        const TeacherTrainConfig& cfg) {
  if (corpus.empty()) throw std::invalid_argument("train_teacher: empty corpus");
  Teacher teacher{store, tcfg};
  const auto& vocab = data::Vocabulary::standard();

  // latents never change during training, compute them once
  std::vector<Tensor> latents;
  latents.reserve(corpus.size());
  for (const auto& pair : corpus) latents.push_back(teacher.latent(pair.image));

  OptimState opt;
  opt.lr = cfg.lr;
  Rng rng = Rng(cfg.seed).fork(59);
  TeacherTrainReport report;
  double last_finite = 0.0;
  const std::size_t batch = std::min(cfg.batch, corpus.size());
  const std::size_t steps_per_epoch = corpus.size() / batch;

  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (long epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      Tape tape;
      Tensor total = Tensor::scalar(0.0);
      for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t idx = order[step * batch + b];
        std::vector<int> ids = corpus[idx].caption.token_ids;
        if (rng.bernoulli(cfg.caption_shuffle_prob)) {
          auto words = corpus[idx].caption.words;
          rng.shuffle(words);
          std::string text;
          for (const auto& w : words) {
            if (!text.empty()) text += ' ';
            text += w;
          }
          ids = vocab.tokenize(text, tcfg.max_seq_len);
        }
        const NoiseDraw draw = sample_draw(sched, rng, tcfg.latent_shape());
        const Tensor z_t = forward_noise(sched, tape.leaf(latents[idx]), draw);
        const Tensor pred = teacher.predict(z_t, draw.t, ids, &tape);
        Tensor err = squared_error_sum(pred, draw.eps);
        if (cfg.snr_weighted_loss) {
          const double ab = sched.alpha_bar(draw.t);
          err = scale(err, 1.0 / (1.0 + ab / (1.0 - ab)));
        }
        total = add(total, err);
      }
      Tensor loss = scale(total, 1.0 / static_cast<double>(batch));
      const double loss_v = loss.scalar_value();
      if (!std::isfinite(loss_v))
        throw std::runtime_error("train_teacher: loss diverged, last finite loss " + std::to_string(last_finite));
      last_finite = loss_v;
      epoch_loss += loss_v;
      if (report.steps == 0) report.initial_loss = loss_v;
      backward(loss, store);
      optimizer_step(store, opt);
      ++report.steps;
    }
    report.epoch_losses.push_back(epoch_loss / static_cast<double>(steps_per_epoch));
  }
  report.final_loss = report.epoch_losses.empty() ? report.initial_loss : report.epoch_losses.back();
  teacher.freeze();
  return report;
}

}  // namespace sdsclip::model
