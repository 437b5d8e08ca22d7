#include <gtest/gtest.h>

#include <cmath>

#include "sdsclip/data/benchmark.hpp"
#include "sdsclip/train/finetune.hpp"
#include "sdsclip/train/pretrain.hpp"

using namespace sdsclip;
using namespace sdsclip::model;
using namespace sdsclip::train;

namespace {

struct World {
  EncoderConfig ecfg;  // spec defaults: d = 64, 2 layers
  TeacherConfig tcfg;
  ParamStore store;
  DiffusionSchedule sched = DiffusionSchedule::default_schedule(100);
  std::vector<data::CorpusPair> corpus;

  explicit World(unsigned seed, std::size_t corpus_n = 8) {
    Rng rng(seed);
    init_dual_encoder(store, ecfg, rng);
    init_latent_encoder(store, tcfg, rng);
    init_denoiser(store, tcfg, rng);
    init_bridge(store, ecfg.embed_dim, tcfg, rng);
    Teacher{store, tcfg}.freeze();
    for (const auto& item : data::generate_corpus(static_cast<long>(corpus_n), seed + 100))
      corpus.push_back({item.image, item.caption});
  }

  Teacher teacher() { return Teacher{store, tcfg}; }
};

TrainConfig quick_config(RunMode mode, double lambda, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.mode = mode;
  cfg.lambda = lambda;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST(BuildMask, CountMatchesIndependentWalk) {
  World w(1);
  const auto mask = build_mask(w.store, MaskPolicy::LayerNormBridge);

  // independent name-walk oracle: enumerate the expected names directly
  std::set<std::string> expected;
  for (const std::string tower : {"clip.image.", "clip.text."}) {
    for (int l = 0; l < 2; ++l) {
      for (const std::string ln : {"ln1", "ln2"}) {
        expected.insert(tower + "block" + std::to_string(l) + "." + ln + ".gain");
        expected.insert(tower + "block" + std::to_string(l) + "." + ln + ".bias");
      }
    }
    expected.insert(tower + "lnf.gain");
    expected.insert(tower + "lnf.bias");
  }
  expected.insert("bridge.w.weight");
  expected.insert("bridge.w.bias");
  EXPECT_EQ(mask, expected);

  std::size_t mask_numel = 0;
  for (const auto& name : mask) mask_numel += w.store.tensor(name).numel();
  // (#LayerNorms x 2 x 64) + bridge (64 x 256 + 256)
  const std::size_t ln_params = 10 * 2 * 64;
  EXPECT_EQ(mask_numel, ln_params + 64 * 256 + 256);

  // < 10% of the dual-encoder parameters are trainable under this policy
  EXPECT_LT(static_cast<double>(mask_numel), 0.10 * static_cast<double>(w.store.numel("clip.")));
}

TEST(BuildMask, TeacherNeverIncludedAndFullIsSuperset) {
  World w(2);
  const auto narrow = build_mask(w.store, MaskPolicy::LayerNormBridge);
  const auto full = build_mask(w.store, MaskPolicy::Full);
  for (const auto& name : narrow) {
    EXPECT_TRUE(full.count(name)) << name;
    EXPECT_NE(name.rfind("teacher.", 0), 0u);
  }
  for (const auto& name : full) EXPECT_NE(name.rfind("teacher.", 0), 0u);
  EXPECT_GT(full.size(), narrow.size());
  EXPECT_TRUE(full.count("clip.logit_scale"));
  EXPECT_FALSE(narrow.count("clip.logit_scale"));

  ParamStore incomplete;
  incomplete.insert("clip.x", Tensor::scalar(1.0));
  EXPECT_THROW(build_mask(incomplete, MaskPolicy::Full), std::invalid_argument);
}

TEST(Finetune, LambdaZeroMatchesClipOnlyBitwise) {
  World a(3), b(3);
  const auto ra = finetune(a.store, a.ecfg, a.teacher(), a.sched, a.corpus, quick_config(RunMode::ClipOnly, 0.001, 7));
  const auto rb = finetune(b.store, b.ecfg, b.teacher(), b.sched, b.corpus, quick_config(RunMode::ClipSds, 0.0, 7));
  EXPECT_EQ(a.store.subtree_hash(), b.store.subtree_hash());
  EXPECT_EQ(ra.steps.size(), rb.steps.size());
}

TEST(Finetune, MaskingContractHoldsBitwise) {
  World w(4);
  const auto before_hash_teacher = w.store.subtree_hash("teacher.");
  std::map<std::string, Tensor> before;
  for (const auto& name : w.store.names("clip.")) before[name] = w.store.tensor(name);

  const auto report = finetune(w.store, w.ecfg, w.teacher(), w.sched, w.corpus,
                               quick_config(RunMode::ClipSds, 0.001, 11));

  const auto mask = build_mask(w.store, MaskPolicy::LayerNormBridge);
  std::size_t changed = 0;
  for (const auto& [name, old] : before) {
    if (mask.count(name)) {
      if (!w.store.tensor(name).same_values(old)) ++changed;
    } else {
      EXPECT_TRUE(w.store.tensor(name).same_values(old)) << name << " moved despite being masked out";
    }
  }
  EXPECT_GT(changed, 0u);  // the layer norms actually trained
  EXPECT_EQ(w.store.subtree_hash("teacher."), before_hash_teacher);
  EXPECT_EQ(report.steps.size(), 4u);  // 2 epochs x floor(8 / 4)
  EXPECT_GT(report.trainable_params, 0u);
}

TEST(Finetune, DeterministicUnderSeed) {
  World a(5), b(5);
  finetune(a.store, a.ecfg, a.teacher(), a.sched, a.corpus, quick_config(RunMode::ClipSds, 0.001, 13));
  finetune(b.store, b.ecfg, b.teacher(), b.sched, b.corpus, quick_config(RunMode::ClipSds, 0.001, 13));
  EXPECT_EQ(a.store.subtree_hash(), b.store.subtree_hash());
}

TEST(Finetune, InputValidation) {
  World w(6);
  auto cfg = quick_config(RunMode::ClipSds, 0.001, 1);
  EXPECT_THROW(finetune(w.store, w.ecfg, w.teacher(), w.sched, {}, cfg), std::invalid_argument);
  cfg.mode = RunMode::None;
  EXPECT_THROW(finetune(w.store, w.ecfg, w.teacher(), w.sched, w.corpus, cfg), std::invalid_argument);
  cfg.mode = RunMode::ClipSds;
  cfg.batch_size = 1000;
  EXPECT_THROW(finetune(w.store, w.ecfg, w.teacher(), w.sched, w.corpus, cfg), std::invalid_argument);
  // unfrozen teacher is rejected
  World v(7);
  v.store.set_trainable("teacher.unet.out.bias", true);
  EXPECT_THROW(finetune(v.store, v.ecfg, v.teacher(), v.sched, v.corpus, quick_config(RunMode::ClipSds, 0.001, 1)),
               std::invalid_argument);
}

TEST(RunMode, NamesRoundTrip) {
  for (RunMode m : {RunMode::None, RunMode::ClipOnly, RunMode::ClipSds, RunMode::ClipFeatureDistill})
    EXPECT_EQ(parse_run_mode(run_mode_name(m)), m);
  EXPECT_THROW(parse_run_mode("bogus"), std::invalid_argument);
  for (MaskPolicy p : {MaskPolicy::LayerNormBridge, MaskPolicy::Full})
    EXPECT_EQ(parse_mask_policy(mask_policy_name(p)), p);
}

TEST(Pretrain, LearnsTinyCorpusAndStaysDeterministic) {
  EncoderConfig cfg;
  cfg.embed_dim = 32;
  cfg.layers = 1;
  cfg.heads = 2;
  // mirrored scene pairs: captions inside a pair share a word multiset, so
  // fitting this corpus requires order sensitivity in the text tower
  std::vector<data::CorpusPair> corpus;
  for (std::uint64_t s = 0; s < 16; ++s) {
    const auto task = data::generate_winoground_task(900 + s, data::SwapKind::Relation);
    corpus.push_back({task.images[0], task.captions[0]});
    corpus.push_back({task.images[1], task.captions[1]});
  }

  PretrainConfig pc;
  pc.epochs = 140;
  pc.batch = 8;
  pc.lr = 3e-4;
  pc.seed = 2;

  ParamStore s1, s2;
  Rng r1(42), r2(42);
  init_dual_encoder(s1, cfg, r1);
  init_dual_encoder(s2, cfg, r2);
  const auto rep1 = pretrain_clip(s1, cfg, corpus, pc);
  const auto rep2 = pretrain_clip(s2, cfg, corpus, pc);
  EXPECT_EQ(s1.subtree_hash(), s2.subtree_hash());
  EXPECT_EQ(rep1.steps, 140 * 4);
  EXPECT_LT(rep1.epoch_losses.back(), rep1.epoch_losses.front());

  // training pushed matched pairs above mismatched ones on average
  const double acc = retrieval_top1(s1, cfg, corpus);
  EXPECT_GT(acc, 0.7);

  // word-multiset-equal but differently ordered captions stay apart
  const auto task = data::generate_winoground_task(3, data::SwapKind::Relation);
  ParamView pv{s1};
  const Tensor e0 = encode_text(pv, cfg, task.captions[0].token_ids);
  const Tensor e1 = encode_text(pv, cfg, task.captions[1].token_ids);
  EXPECT_LT(cosine(e0, e1), 0.999);
}
