// End-to-end acceptance suite. Drives the full pipeline (data, teacher,
// pretraining, experiment matrix, reports) through the same dispatch the CLI
// uses, then checks each acceptance criterion at its stated tolerance and
// prints one PASS/FAIL line per criterion. Exit code 0 iff all pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "../grad_check.hpp"
#include "../oracles.hpp"
#include "sdsclip/sdsclip.hpp"

using namespace sdsclip;

namespace {

// pipeline configuration shared by every stage
const char* kPipelineConfig = R"(# acceptance pipeline configuration
data.seed = 1
data.winoground-n = 400
data.aro-attribution-n = 400
data.aro-relation-n = 400
data.ordering-n = 200
data.zeroshot-n = 200
data.pretrain-n = 4096
data.finetune-n = 512
data.holdout-n = 64

teacher.epochs = 30
teacher.batch = 32
teacher.lr = 0.002
teacher.shuffle-prob = 0.2
teacher.T = 100
teacher.init-seed = 7
teacher.seed = 1

pretrain.epochs = 30
pretrain.batch = 32
pretrain.lr = 0.0003
pretrain.init-seed = 11
pretrain.seed = 1

# fine-tuning (TrainConfig keys)
epochs = 40
batch-size = 32
learning-rate = 0.00005
lambda = 0.001
mask-policy = layernorm+bridge
sds-noising = true
bridge.init-seed = 13

matrix.seeds = 1,2,3
matrix.modes = none,clip-only,clip+sds,clip+feature-distill
eval.n-samples = 50
)";

struct CriterionResult {
  int id;
  bool pass = false;
};

std::vector<CriterionResult> g_results;

void record(int id, const std::string& name, bool pass, const std::string& detail) {
  g_results.push_back({id, pass});
  std::printf("[%s] criterion %d: %s  (%s)\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

void must(int code, const std::string& what) {
  if (code != 0) throw std::runtime_error(what + " failed with exit code " + std::to_string(code));
}

// ---------------------------------------------------------------------------
// criterion 1: gradient correctness
// ---------------------------------------------------------------------------

void criterion_1_gradients() {
  const double t0 = now_seconds();
  Rng rng(20250808);
  double worst_op = 0.0;
  std::size_t cases = 0;

  using Maker = std::function<gradcheck::Report(Rng&)>;
  const auto randin = [](Shape shape, Rng& r, double lo, double hi) {
    std::vector<double> d(shape_numel(shape));
    for (auto& v : d) v = lo + (hi - lo) * r.uniform();
    return Tensor(std::move(shape), std::move(d));
  };
  std::map<std::string, Maker> ops;
  ops["add"] = [](Rng& r) {
    const std::size_t m = 1 + r.index(4), n = 1 + r.index(4);
    Tensor b = r.index(2) ? Tensor::randn({n}, r) : Tensor::randn({m, n}, r);
    return gradcheck::check_gradients({Tensor::randn({m, n}, r), b},
                                      [](const std::vector<Tensor>& in) { return add(in[0], in[1]); }, r);
  };
  ops["sub"] = [](Rng& r) {
    const std::size_t m = 1 + r.index(4), n = 1 + r.index(4);
    return gradcheck::check_gradients({Tensor::randn({m, n}, r), Tensor::randn({m, n}, r)},
                                      [](const std::vector<Tensor>& in) { return sub(in[0], in[1]); }, r);
  };
  ops["mul"] = [](Rng& r) {
    const std::size_t m = 1 + r.index(4), n = 1 + r.index(4);
    Tensor b = r.index(2) ? Tensor::randn({1}, r) : Tensor::randn({m, n}, r);
    return gradcheck::check_gradients({Tensor::randn({m, n}, r), b},
                                      [](const std::vector<Tensor>& in) { return mul(in[0], in[1]); }, r);
  };
  ops["scale"] = [](Rng& r) {
    const double c = -2.0 + 4.0 * r.uniform();
    return gradcheck::check_gradients({Tensor::randn({2 + r.index(3), 3}, r)},
                                      [c](const std::vector<Tensor>& in) { return scale(in[0], c); }, r);
  };
  ops["matmul"] = [](Rng& r) {
    const std::size_t m = 1 + r.index(4), k = 1 + r.index(4), n = 1 + r.index(4);
    return gradcheck::check_gradients({Tensor::randn({m, k}, r), Tensor::randn({k, n}, r)},
                                      [](const std::vector<Tensor>& in) { return matmul(in[0], in[1]); }, r);
  };
  ops["transpose"] = [](Rng& r) {
    return gradcheck::check_gradients({Tensor::randn({2 + r.index(3), 1 + r.index(4)}, r)},
                                      [](const std::vector<Tensor>& in) { return transpose(in[0]); }, r);
  };
  ops["reshape"] = [](Rng& r) {
    const std::size_t m = 2 + r.index(3), n = 2 + r.index(3);
    return gradcheck::check_gradients({Tensor::randn({m, n}, r)},
                                      [m, n](const std::vector<Tensor>& in) { return reshape(in[0], {n * m}); },
                                      r);
  };
  ops["concat"] = [](Rng& r) {
    const std::size_t axis = r.index(2);
    Shape sa = {2, 3}, sb = {2, 3};
    (axis == 0 ? sa[0] : sa[1]) += r.index(2);
    return gradcheck::check_gradients(
        {Tensor::randn(sa, r), Tensor::randn(sb, r)},
        [axis](const std::vector<Tensor>& in) { return concat<double>({in[0], in[1]}, axis); }, r);
  };
  ops["slice"] = [](Rng& r) {
    const std::size_t m = 3 + r.index(3), n = 3 + r.index(3);
    const std::size_t axis = r.index(2);
    const std::size_t dim = axis == 0 ? m : n;
    const std::size_t start = r.index(dim - 1);
    const std::size_t len = 1 + r.index(dim - start);
    return gradcheck::check_gradients(
        {Tensor::randn({m, n}, r)},
        [axis, start, len](const std::vector<Tensor>& in) { return slice(in[0], axis, start, len); }, r);
  };
  ops["sum"] = [](Rng& r) {
    return gradcheck::check_gradients({Tensor::randn({2 + r.index(4), 3}, r)},
                                      [](const std::vector<Tensor>& in) { return sum(in[0]); }, r);
  };
  ops["mean"] = [](Rng& r) {
    return gradcheck::check_gradients({Tensor::randn({2 + r.index(4), 3}, r)},
                                      [](const std::vector<Tensor>& in) { return mean(in[0]); }, r);
  };
  ops["sum_axis"] = [](Rng& r) {
    const std::size_t axis = r.index(2);
    return gradcheck::check_gradients({Tensor::randn({2 + r.index(3), 2 + r.index(3)}, r)},
                                      [axis](const std::vector<Tensor>& in) { return sum_axis(in[0], axis); }, r);
  };
  ops["mean_axis"] = [](Rng& r) {
    const std::size_t axis = r.index(2);
    return gradcheck::check_gradients({Tensor::randn({2 + r.index(3), 2 + r.index(3)}, r)},
                                      [axis](const std::vector<Tensor>& in) { return mean_axis(in[0], axis); },
                                      r);
  };
  ops["exp"] = [randin](Rng& r) {
    return gradcheck::check_gradients({randin({2, 1 + r.index(4)}, r, -2.0, 2.0)},
                                      [](const std::vector<Tensor>& in) { return exp(in[0]); }, r);
  };
  ops["log"] = [randin](Rng& r) {
    return gradcheck::check_gradients({randin({2, 1 + r.index(4)}, r, 0.2, 3.0)},
                                      [](const std::vector<Tensor>& in) { return log(in[0]); }, r);
  };
  ops["gelu"] = [](Rng& r) {
    return gradcheck::check_gradients({Tensor::randn({2, 2 + r.index(4)}, r)},
                                      [](const std::vector<Tensor>& in) { return gelu(in[0]); }, r);
  };
  ops["softmax"] = [](Rng& r) {
    const std::size_t axis = r.index(2);
    return gradcheck::check_gradients({Tensor::randn({2 + r.index(3), 2 + r.index(3)}, r)},
                                      [axis](const std::vector<Tensor>& in) { return softmax(in[0], axis); }, r);
  };
  ops["log_softmax"] = [](Rng& r) {
    const std::size_t axis = r.index(2);
    return gradcheck::check_gradients({Tensor::randn({2 + r.index(3), 2 + r.index(3)}, r)},
                                      [axis](const std::vector<Tensor>& in) { return log_softmax(in[0], axis); },
                                      r);
  };
  ops["layer_norm"] = [](Rng& r) {
    const std::size_t m = 1 + r.index(3), d = 3 + r.index(5);
    return gradcheck::check_gradients(
        {Tensor::randn({m, d}, r), Tensor::randn({d}, r), Tensor::randn({d}, r)},
        [](const std::vector<Tensor>& in) { return layer_norm(in[0], in[1], in[2], 1); }, r);
  };
  ops["embedding"] = [](Rng& r) {
    const std::size_t v = 4 + r.index(4), d = 2 + r.index(3), l = 1 + r.index(5);
    std::vector<int> ids(l);
    for (auto& id : ids) id = static_cast<int>(r.index(v));
    return gradcheck::check_gradients({Tensor::randn({v, d}, r)},
                                      [ids](const std::vector<Tensor>& in) { return embedding(in[0], ids); }, r);
  };
  ops["attention"] = [](Rng& r) {
    const bool causal = r.index(2) == 0;
    const std::size_t n = 2 + r.index(3);
    const std::size_t m = causal ? n : 2 + r.index(3);
    const std::size_t dh = 2 + r.index(3), dv = 2 + r.index(3);
    return gradcheck::check_gradients(
        {Tensor::randn({n, dh}, r), Tensor::randn({m, dh}, r), Tensor::randn({m, dv}, r)},
        [causal](const std::vector<Tensor>& in) { return attention(in[0], in[1], in[2], causal); }, r);
  };
  ops["l2_normalize"] = [](Rng& r) {
    return gradcheck::check_gradients({Tensor::randn({3 + r.index(5)}, r)},
                                      [](const std::vector<Tensor>& in) { return l2_normalize(in[0]); }, r);
  };
  ops["conv2d"] = [](Rng& r) {
    const std::size_t cin = 1 + r.index(2), cout = 1 + r.index(2);
    const std::size_t k = r.index(2) ? 3 : 1;
    const std::size_t pad = k / 2;
    return gradcheck::check_gradients(
        {Tensor::randn({cin, 4, 4}, r), Tensor::randn({cout, cin, k, k}, r, 0.5), Tensor::randn({cout}, r, 0.5)},
        [pad](const std::vector<Tensor>& in) { return conv2d(in[0], in[1], in[2], pad); }, r);
  };
  ops["avg_pool2d"] = [](Rng& r) {
    return gradcheck::check_gradients({Tensor::randn({1 + r.index(2), 4, 4}, r)},
                                      [](const std::vector<Tensor>& in) { return avg_pool2d(in[0], 2); }, r);
  };
  ops["upsample_nearest"] = [](Rng& r) {
    return gradcheck::check_gradients({Tensor::randn({1 + r.index(2), 2, 2}, r)},
                                      [](const std::vector<Tensor>& in) { return upsample_nearest(in[0], 2); },
                                      r);
  };

  for (auto& [name, maker] : ops) {
    (void)name;
    for (int c = 0; c < 50; ++c) {
      const auto rep = maker(rng);
      worst_op = std::max(worst_op, rep.max_rel_err);
      cases += rep.checked;
    }
  }

  // end-to-end losses: 50 randomized cases each, rotating the probed
  // parameter and the (t, eps) draw stream per case
  model::EncoderConfig ecfg;
  ecfg.embed_dim = 32;
  ecfg.layers = 1;
  ecfg.heads = 2;
  model::TeacherConfig tcfg;
  const auto sched = model::DiffusionSchedule::default_schedule(100);
  ParamStore store;
  Rng init(1);
  model::init_dual_encoder(store, ecfg, init);
  model::init_latent_encoder(store, tcfg, init);
  model::init_denoiser(store, tcfg, init);
  train::init_bridge(store, ecfg.embed_dim, tcfg, init);
  model::Teacher{store, tcfg}.freeze();
  const model::Teacher teacher{store, tcfg};
  for (const auto& name : store.names())
    if (name.rfind("teacher.", 0) != 0) store.set_trainable(name, true);

  std::vector<Tensor> images;
  std::vector<std::vector<int>> captions;
  for (const auto& item : data::generate_corpus(2, 99)) {
    images.push_back(item.image);
    captions.push_back(item.caption.token_ids);
  }
  const std::vector<std::string> probe_params = {
      "bridge.w.weight",        "bridge.w.bias",          "clip.image.block0.ln1.gain",
      "clip.image.block0.ln1.bias", "clip.image.patch_proj.weight", "clip.text.block0.ln2.gain",
      "clip.text.tok_emb",      "clip.image.lnf.gain",    "clip.text.lnf.bias",
      "clip.logit_scale"};

  double worst_loss_gap = 0.0;
  bool loss_pass = true;
  std::size_t loss_cases = 0;
  enum class Kind { Clip, Sds, FeatureDistill };
  const auto check_loss = [&](Kind kind) {
    for (int c = 0; c < 50; ++c) {
      const std::string pname = probe_params[static_cast<std::size_t>(c) % probe_params.size()];
      const auto draws = model::make_draws(sched, tcfg.latent_shape(), images.size(),
                                           Rng(500 + static_cast<std::uint64_t>(c)));
      const auto loss_value = [&](ParamStore& s) {
        const model::Teacher t2{s, tcfg};
        model::ParamView pv{s};
        switch (kind) {
          case Kind::Clip: return train::contrastive_loss(pv, ecfg, images, captions).scalar_value();
          case Kind::Sds:
            return train::sds_loss(pv, ecfg, t2, sched, images, captions, draws).scalar_value();
          default:
            return train::feature_distill_loss(pv, ecfg, t2, sched, images, captions, draws).scalar_value();
        }
      };
      store.clear_grads();
      {
        Tape tape;
        model::ParamView pv{store, &tape};
        Tensor loss;
        switch (kind) {
          case Kind::Clip: loss = train::contrastive_loss(pv, ecfg, images, captions); break;
          case Kind::Sds: loss = train::sds_loss(pv, ecfg, teacher, sched, images, captions, draws); break;
          default: loss = train::feature_distill_loss(pv, ecfg, teacher, sched, images, captions, draws); break;
        }
        backward(loss, store);
      }
      const auto& grad = store.entry(pname).grad;
      std::vector<double> vals = store.tensor(pname).data();
      Rng pick(1000 + static_cast<std::uint64_t>(c));
      const std::size_t coord = pick.index(vals.size());
      const std::function<double()> f = [&]() {
        ParamStore probe;
        store.copy_into(probe);
        probe.set_tensor(pname, Tensor(store.tensor(pname).shape(), vals));
        return loss_value(probe);
      };
      const double fd = oracle::central_diff(f, vals, coord, 1e-4);
      const double an = grad.empty() ? 0.0 : grad[coord];
      if (!oracle::grad_close(an, fd)) loss_pass = false;
      worst_loss_gap = std::max(worst_loss_gap, std::fabs(an - fd));
      ++loss_cases;
    }
    store.clear_grads();
  };
  check_loss(Kind::Clip);
  check_loss(Kind::Sds);
  check_loss(Kind::FeatureDistill);

  const double elapsed = now_seconds() - t0;
  const bool pass = worst_op < 1e-4 && loss_pass && elapsed < 300.0;
  record(1, "gradient correctness vs central finite differences", pass,
         "op rel err " + fmt(worst_op) + ", worst loss gap " + fmt(worst_loss_gap) + ", " +
             std::to_string(cases + loss_cases) + " checks, " + fmt(elapsed) + "s");
}

// ---------------------------------------------------------------------------
// criterion 2: analytic loss anchors
// ---------------------------------------------------------------------------

struct EchoStub {
  model::TeacherConfig cfg;
  const std::vector<model::NoiseDraw>* draws = nullptr;
  mutable std::size_t call = 0;
  Tensor latent(const Tensor&) const { return Tensor::zeros(cfg.latent_shape()); }
  Tensor predict(const Tensor& z_t, int, const std::vector<int>&, Tape* = nullptr) const {
    return add((*draws)[call++].eps, scale(z_t, 0.0));
  }
};

struct ZeroStub {
  model::TeacherConfig cfg;
  Tensor latent(const Tensor&) const { return Tensor::zeros(cfg.latent_shape()); }
  Tensor predict(const Tensor& z_t, int, const std::vector<int>&, Tape* = nullptr) const {
    return Tensor::zeros(z_t.shape());
  }
};

void criterion_2_anchors() {
  model::EncoderConfig ecfg;
  ecfg.embed_dim = 32;
  ecfg.layers = 1;
  ecfg.heads = 2;
  ParamStore store;
  Rng rng(3);
  model::init_dual_encoder(store, ecfg, rng);
  const auto corpus = data::generate_corpus(1, 5);

  bool ln_ok = true;
  std::string ln_detail;
  for (std::size_t n : {2u, 4u, 8u}) {
    std::vector<Tensor> images(n, corpus[0].image);
    std::vector<std::vector<int>> caps(n, corpus[0].caption.token_ids);
    const double loss = train::contrastive_loss(model::ParamView{store}, ecfg, images, caps).scalar_value();
    if (std::fabs(loss - std::log(static_cast<double>(n))) > 1e-9) ln_ok = false;
    ln_detail += "N=" + std::to_string(n) + ":" + fmt(loss) + " ";
  }

  const auto sched = model::DiffusionSchedule::default_schedule(100);
  model::TeacherConfig tcfg;
  ZeroStub zero{tcfg};
  const auto ids = data::Vocabulary::standard().tokenize("a red circle", 16);
  const double zero_score = model::diffusion_score(zero, sched, Tensor::zeros({3, 32, 32}), ids, 200, 31);
  const bool zero_ok = std::fabs(zero_score - 256.0) <= 25.6;

  const auto draws = model::make_draws(sched, tcfg.latent_shape(), 3, Rng(17));
  EchoStub echo{tcfg, &draws};
  std::vector<Tensor> images;
  std::vector<std::vector<int>> caps;
  for (const auto& item : data::generate_corpus(3, 7)) {
    images.push_back(item.image);
    caps.push_back(item.caption.token_ids);
  }
  train::init_bridge(store, ecfg.embed_dim, tcfg, rng);
  Tape tape;
  const double echo_loss =
      train::sds_loss(model::ParamView{store, &tape}, ecfg, echo, sched, images, caps, draws).scalar_value();

  const bool pass = ln_ok && zero_ok && echo_loss == 0.0;
  record(2, "analytic loss anchors", pass,
         "lnN " + ln_detail + "| zero-denoiser " + fmt(zero_score) + " | echo sds " + fmt(echo_loss));
}

// ---------------------------------------------------------------------------
// criterion 9: metric oracle
// ---------------------------------------------------------------------------

void criterion_9_metric_oracle() {
  const auto chance = oracle::pair_matching_chance();
  std::vector<data::TaskInstance> tasks;
  for (std::uint64_t i = 0; i < 10000; ++i) {
    data::TaskInstance t;
    t.kind = data::TaskKind::WinogroundPair;
    t.task_id = i;
    t.images.resize(2);
    t.captions.resize(2);
    t.correct_caption_per_image = {0, 1};
    t.predicate_count = 1;
    tasks.push_back(std::move(t));
  }
  eval::Scorer random;
  random.kind = "random";
  random.higher_is_better = true;
  random.score_task = [](const data::TaskInstance& t) {
    Rng r = Rng(808).fork(t.task_id + 1);
    std::vector<std::vector<double>> out(2, std::vector<double>(2));
    for (auto& row : out)
      for (auto& v : row) v = r.uniform();
    return out;
  };
  const auto rec = eval::winoground_scores(random, tasks);
  const bool pass = std::fabs(rec.text_score - chance.text) <= 0.02 &&
                    std::fabs(rec.image_score - chance.image) <= 0.02 &&
                    std::fabs(rec.group_score - chance.group) <= 0.02;
  record(9, "winoground metric matches brute-force ordering oracle", pass,
         "text " + fmt(rec.text_score) + "/" + fmt(chance.text) + ", image " + fmt(rec.image_score) + "/" +
             fmt(chance.image) + ", group " + fmt(rec.group_score) + "/" + fmt(chance.group));
}

// ---------------------------------------------------------------------------
// records helpers
// ---------------------------------------------------------------------------

double mean_over_seeds(const std::vector<eval::MetricsRecord>& records, const std::string& split,
                       const std::string& mode, const std::function<double(const eval::MetricsRecord&)>& get) {
  double acc = 0.0;
  int n = 0;
  for (const auto& r : records) {
    if (r.split != split || r.mode != mode) continue;
    acc += get(r);
    ++n;
  }
  if (n == 0) throw std::runtime_error("no records for " + split + "/" + mode);
  return acc / n;
}

double tag_text(const eval::MetricsRecord& r, const std::string& tag) {
  const auto it = r.tag_scores.find(tag);
  if (it == r.tag_scores.end()) throw std::runtime_error("missing tag " + tag);
  return it->second.text;
}

}  // namespace

int main(int argc, char** argv) {
  std::string out_root = "acceptance_runs";
  for (int i = 1; i + 1 < argc; i += 2) {
    if (std::string(argv[i]) == "--out") out_root = argv[i + 1];
  }
  std::filesystem::remove_all(out_root);
  std::filesystem::create_directories(out_root);
  if (!std::getenv("SDS_THREADS")) setenv("SDS_THREADS", "2", 1);

  try {
    criterion_1_gradients();
    criterion_2_anchors();
    criterion_9_metric_oracle();

    // -----------------------------------------------------------------------
    // full pipeline through the CLI dispatch
    // -----------------------------------------------------------------------
    const std::string cfg_path = out_root + "/pipeline.cfg";
    {
      std::ofstream f(cfg_path);
      f << kPipelineConfig;
    }
    const std::string data_dir = out_root + "/data";
    const std::string teacher_dir = out_root + "/teacher";
    const std::string base_dir = out_root + "/base";

    const double pipeline_t0 = now_seconds();
    std::printf("-- gen-data\n");
    std::fflush(stdout);
    must(cli::dispatch({"gen-data", "--config", cfg_path, "--out", data_dir}), "gen-data");
    std::printf("-- train-teacher\n");
    std::fflush(stdout);
    must(cli::dispatch({"train-teacher", "--config", cfg_path, "--data", data_dir, "--out", teacher_dir}),
         "train-teacher");
    std::printf("-- pretrain-clip\n");
    std::fflush(stdout);
    must(cli::dispatch({"pretrain-clip", "--config", cfg_path, "--data", data_dir, "--out", base_dir}),
         "pretrain-clip");

    // -----------------------------------------------------------------------
    // criterion 3: freezing and masking contracts on the real artifacts
    // -----------------------------------------------------------------------
    {
      const auto ecfg = cli::load_encoder_config(base_dir + "/encoder_config.json");
      const auto base = ParamStore::load(base_dir + "/clip_base.bin");
      const auto teacher_art = cli::load_teacher(teacher_dir);
      auto corpus = cli::load_corpus(data_dir + "/corpus_finetune.jsonl");
      corpus.resize(64);

      train::TrainConfig tc;
      tc.epochs = 2;
      tc.batch_size = 16;
      tc.mode = train::RunMode::ClipSds;
      tc.lambda = 0.001;
      tc.seed = 77;
      ParamStore run = cli::combined_store(base, teacher_art, ecfg.embed_dim, 55);
      const auto teacher_hash_before = run.subtree_hash("teacher.");
      std::map<std::string, Tensor> before;
      const auto mask = train::build_mask(run, train::MaskPolicy::LayerNormBridge);
      for (const auto& name : run.names("clip."))
        if (!mask.count(name)) before[name] = run.tensor(name);
      train::finetune(run, ecfg, model::Teacher{run, teacher_art.cfg}, teacher_art.sched, corpus, tc);
      bool frozen_ok = run.subtree_hash("teacher.") == teacher_hash_before;
      for (const auto& [name, old] : before) frozen_ok = frozen_ok && run.tensor(name).same_values(old);

      ParamStore a = cli::combined_store(base, teacher_art, ecfg.embed_dim, 55);
      ParamStore b = cli::combined_store(base, teacher_art, ecfg.embed_dim, 55);
      train::TrainConfig ca = tc, cb = tc;
      ca.mode = train::RunMode::ClipOnly;
      cb.mode = train::RunMode::ClipSds;
      cb.lambda = 0.0;
      train::finetune(a, ecfg, model::Teacher{a, teacher_art.cfg}, teacher_art.sched, corpus, ca);
      train::finetune(b, ecfg, model::Teacher{b, teacher_art.cfg}, teacher_art.sched, corpus, cb);
      const bool lambda_zero_ok = a.subtree_hash() == b.subtree_hash();

      record(3, "freezing and masking contracts", frozen_ok && lambda_zero_ok,
             std::string("teacher+non-LN bit-identical: ") + (frozen_ok ? "yes" : "no") +
                 ", lambda=0 == clip-only: " + (lambda_zero_ok ? "yes" : "no"));
    }

    // -----------------------------------------------------------------------
    // experiment matrix, twice, plus reports (criteria 5, 6a, 7, 10)
    // -----------------------------------------------------------------------
    std::printf("-- matrix (1st)\n");
    std::fflush(stdout);
    must(cli::dispatch({"matrix", "--config", cfg_path, "--data", data_dir, "--teacher", teacher_dir, "--model",
                        base_dir, "--out", out_root + "/matrix"}),
         "matrix");
    must(cli::dispatch({"report", "--records", out_root + "/matrix/records.jsonl", "--out", out_root + "/report"}),
         "report");
    std::printf("-- matrix (2nd, determinism)\n");
    std::fflush(stdout);
    must(cli::dispatch({"matrix", "--config", cfg_path, "--data", data_dir, "--teacher", teacher_dir, "--model",
                        base_dir, "--out", out_root + "/matrix2"}),
         "matrix2");
    must(cli::dispatch({"report", "--records", out_root + "/matrix2/records.jsonl", "--out",
                        out_root + "/report2"}),
         "report2");

    const auto records = report::read_records_jsonl(out_root + "/matrix/records.jsonl");
    {
      std::map<std::string, int> rows_per_split;
      for (const auto& r : records) rows_per_split[r.split]++;
      bool twelve = rows_per_split.size() == 5;
      for (const auto& [split, n] : rows_per_split) twelve = twelve && n == 12;
      if (!twelve) throw std::runtime_error("matrix did not produce 12 rows per split");
    }

    {
      const double rel_sds = mean_over_seeds(records, "winoground", "clip+sds",
                                             [](const eval::MetricsRecord& r) { return tag_text(r, "relation"); });
      const double rel_only = mean_over_seeds(records, "winoground", "clip-only",
                                              [](const eval::MetricsRecord& r) { return tag_text(r, "relation"); });
      const double obj_sds = mean_over_seeds(records, "winoground", "clip+sds",
                                             [](const eval::MetricsRecord& r) { return tag_text(r, "object"); });
      const double obj_only = mean_over_seeds(records, "winoground", "clip-only",
                                              [](const eval::MetricsRecord& r) { return tag_text(r, "object"); });
      const double overall_only = mean_over_seeds(records, "winoground", "clip-only",
                                                  [](const eval::MetricsRecord& r) { return r.text_score; });
      const double overall_none = mean_over_seeds(records, "winoground", "none",
                                                  [](const eval::MetricsRecord& r) { return r.text_score; });
      const bool improves = rel_sds > rel_only && obj_sds > obj_only &&
                            (rel_sds - rel_only >= 0.02 || obj_sds - obj_only >= 0.02);
      const bool only_flat = std::fabs(overall_only - overall_none) < 0.02;
      record(5, "directional gains: clip+sds beats clip-only on swaps, clip-only stays flat",
             improves && only_flat,
             "rel " + fmt(rel_only) + "->" + fmt(rel_sds) + ", obj " + fmt(obj_only) + "->" + fmt(obj_sds) +
                 ", none vs clip-only " + fmt(overall_none) + "/" + fmt(overall_only));
    }

    const double overall_fd = mean_over_seeds(records, "winoground", "clip+feature-distill",
                                              [](const eval::MetricsRecord& r) { return r.text_score; });
    const double overall_only = mean_over_seeds(records, "winoground", "clip-only",
                                                [](const eval::MetricsRecord& r) { return r.text_score; });

    {
      const double zs_sds = mean_over_seeds(records, "zeroshot", "clip+sds",
                                            [](const eval::MetricsRecord& r) { return r.accuracy; });
      const double zs_only = mean_over_seeds(records, "zeroshot", "clip-only",
                                             [](const eval::MetricsRecord& r) { return r.accuracy; });
      record(7, "zero-shot non-degradation", zs_sds >= zs_only - 0.02,
             "clip+sds " + fmt(zs_sds) + " vs clip-only " + fmt(zs_only) + " - 0.02");
    }

    {
      const std::string t1 = slurp(out_root + "/report/table1.csv");
      const std::string t2 = slurp(out_root + "/report2/table1.csv");
      record(10, "matrix determinism: byte-identical table1.csv", t1 == t2,
             std::to_string(t1.size()) + " bytes compared");
    }

    // -----------------------------------------------------------------------
    // diffusion-score criteria (4, 6b, 8)
    // -----------------------------------------------------------------------
    const auto teacher_art = cli::load_teacher(teacher_dir);
    ParamStore teacher_store = teacher_art.store;
    const model::Teacher teacher{teacher_store, teacher_art.cfg};
    const auto ecfg = cli::load_encoder_config(base_dir + "/encoder_config.json");
    ParamStore base = ParamStore::load(base_dir + "/clip_base.bin");

    const auto wino_tasks = data::read_tasks_jsonl(data_dir + "/winoground.jsonl");
    std::vector<data::TaskInstance> relation_tasks;
    for (const auto& t : wino_tasks)
      if (!t.tags.empty() && t.tags[0] == "relation") relation_tasks.push_back(t);

    {
      const double clip_rel = mean_over_seeds(records, "winoground", "none",
                                              [](const eval::MetricsRecord& r) { return tag_text(r, "relation"); });
      double diff_rel = 0.0;
      for (std::uint64_t seed : {101u, 102u, 103u}) {
        const auto scorer = eval::make_diffusion_scorer(teacher, teacher_art.sched, 50, seed);
        diff_rel += eval::winoground_scores(scorer, relation_tasks).text_score;
      }
      diff_rel /= 3.0;
      const double wall_h = (now_seconds() - pipeline_t0) / 3600.0;
      const bool pass = diff_rel - clip_rel >= 0.05 && wall_h < 2.0;
      record(4, "teacher compositional advantage on relation swaps", pass,
             "diffusion " + fmt(diff_rel) + " vs clip " + fmt(clip_rel) + ", pipeline " + fmt(wall_h) + "h");
    }

    {
      const auto ordering_tasks = data::read_tasks_jsonl(data_dir + "/ordering.jsonl");
      const auto scorer = eval::make_diffusion_scorer(teacher, teacher_art.sched, 50, 104);
      auto rec = eval::multi_choice_accuracy(scorer, ordering_tasks);
      const bool fd_ok = !(overall_fd > overall_only);
      record(6, "negative results: feature distillation and ordering", fd_ok && rec.accuracy <= 0.35,
             "feature-distill " + fmt(overall_fd) + " vs clip-only " + fmt(overall_only) + ", ordering " +
                 fmt(rec.accuracy));
    }

    {
      std::vector<data::TaskInstance> probe(wino_tasks.begin(), wino_tasks.begin() + 24);
      std::map<std::size_t, double> ratio;
      for (std::size_t n : {10u, 25u, 50u})
        ratio[n] = eval::latency_ratio(base, ecfg, teacher, teacher_art.sched, probe, n).ratio;
      const bool pass = ratio[50] > 5.0 && ratio[10] < ratio[25] && ratio[25] < ratio[50];
      record(8, "latency ratio above 5x at 50 draws and monotone", pass,
             "ratio(10)=" + fmt(ratio[10]) + ", ratio(25)=" + fmt(ratio[25]) + ", ratio(50)=" + fmt(ratio[50]));
    }
  } catch (const std::exception& e) {
    std::printf("[FAIL] pipeline error: %s\n", e.what());
    std::fflush(stdout);
    return 1;
  }

  int failures = 0;
  for (const auto& r : g_results) failures += r.pass ? 0 : 1;
  std::printf("%d/%zu criteria passed\n", static_cast<int>(g_results.size()) - failures, g_results.size());
  return failures == 0 ? 0 : 1;
}
