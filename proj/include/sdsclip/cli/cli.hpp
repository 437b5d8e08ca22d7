#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "sdsclip/cli/config.hpp"
#include "sdsclip/data/task_io.hpp"
#include "sdsclip/eval/harness.hpp"
#include "sdsclip/model/encoder.hpp"
#include "sdsclip/model/teacher.hpp"
#include "sdsclip/report/report.hpp"
#include "sdsclip/train/finetune.hpp"
#include "sdsclip/train/pretrain.hpp"

namespace sdsclip::cli {

inline constexpr const char* kVersion = "0.1.0";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// small filesystem helpers
// ---------------------------------------------------------------------------

inline void ensure_dir(const std::string& path) { std::filesystem::create_directories(path); }

inline std::string file_hash_hex(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot hash missing file " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return hash_hex(detail::fnv1a(bytes));
}

inline void write_text_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::trunc | std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + tmp);
    f << text;
    if (!f) throw std::runtime_error("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline std::string iso_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::tm tm_utc;
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

// Self-description of one run: config echo plus hashes of every artifact the
// run produced; written atomically when the run finishes.
struct RunManifest {
  std::string command;
  std::string config_path;
  nlohmann::json config_echo = nlohmann::json::object();
  std::uint64_t seed = 0;
  nlohmann::json inputs = nlohmann::json::object();
  std::vector<std::string> outputs;
  std::string started_at = iso_now();
  nlohmann::json extra = nlohmann::json::object();

  void write(const std::string& out_dir) const {
    nlohmann::json j;
    j["command"] = command;
    j["config_path"] = config_path;
    j["config"] = config_echo;
    j["seed"] = seed;
    j["inputs"] = inputs;
    nlohmann::json hashes = nlohmann::json::object();
    for (const auto& path : outputs)
      hashes[std::filesystem::path(path).filename().string()] = file_hash_hex(path);
    j["artifact_hashes"] = hashes;
    j["started_at"] = started_at;
    j["finished_at"] = iso_now();
    j["version"] = kVersion;
    if (!extra.empty()) j["extra"] = extra;
    write_text_atomic(out_dir + "/manifest.json", j.dump(2) + "\n");
  }
};

// ---------------------------------------------------------------------------
// config -> typed settings
// ---------------------------------------------------------------------------

inline data::BenchConfig bench_config_from(const Config& cfg, std::uint64_t seed) {
  data::BenchConfig bc;
  bc.seed = seed;
  bc.gen.grid = static_cast<int>(cfg.i64("data.grid", 4));
  bc.gen.resolution = static_cast<int>(cfg.i64("data.resolution", 32));
  bc.winoground_n = static_cast<std::size_t>(cfg.i64("data.winoground-n", 400));
  bc.aro_attribution_n = static_cast<std::size_t>(cfg.i64("data.aro-attribution-n", 400));
  bc.aro_relation_n = static_cast<std::size_t>(cfg.i64("data.aro-relation-n", 400));
  bc.ordering_n = static_cast<std::size_t>(cfg.i64("data.ordering-n", 200));
  bc.zeroshot_n = static_cast<std::size_t>(cfg.i64("data.zeroshot-n", 200));
  return bc;
}

inline model::EncoderConfig encoder_config_from(const Config& cfg) {
  model::EncoderConfig ec;
  ec.embed_dim = static_cast<std::size_t>(cfg.i64("model.embed-dim", 64));
  ec.image_size = static_cast<std::size_t>(cfg.i64("data.resolution", 32));
  ec.patch_size = static_cast<std::size_t>(cfg.i64("model.patch-size", 8));
  ec.text_max_len = static_cast<std::size_t>(cfg.i64("model.text-max-len", 16));
  ec.layers = static_cast<std::size_t>(cfg.i64("model.layers", 2));
  ec.heads = static_cast<std::size_t>(cfg.i64("model.heads", 4));
  ec.mlp_ratio = static_cast<std::size_t>(cfg.i64("model.mlp-ratio", 4));
  ec.validate();
  return ec;
}

inline train::TrainConfig train_config_from(const Config& cfg, std::uint64_t seed_override, bool has_seed) {
  train::TrainConfig tc;
  tc.epochs = cfg.i64("epochs", 10);
  tc.batch_size = static_cast<std::size_t>(cfg.i64("batch-size", 32));
  tc.learning_rate = cfg.f64("learning-rate", 5e-5);
  tc.lambda = cfg.f64("lambda", 0.001);
  tc.mode = train::parse_run_mode(cfg.str("mode", "clip+sds"));
  tc.seed = has_seed ? seed_override : static_cast<std::uint64_t>(cfg.i64("seed", 1));
  tc.mask_policy = train::parse_mask_policy(cfg.str("mask-policy", "layernorm+bridge"));
  tc.sds_noising = cfg.flag("sds-noising", true);
  return tc;
}

// ---------------------------------------------------------------------------
// artifact loading
// ---------------------------------------------------------------------------

struct TeacherArtifacts {
  ParamStore store;
  model::TeacherConfig cfg;
  model::DiffusionSchedule sched;
};

inline TeacherArtifacts load_teacher(const std::string& dir) {
  TeacherArtifacts t;
  t.store = ParamStore::load(dir + "/teacher.bin");
  std::ifstream f(dir + "/teacher_config.json");
  if (!f) throw std::runtime_error("cannot open " + dir + "/teacher_config.json");
  const auto j = nlohmann::json::parse(f);
  t.cfg = model::TeacherConfig::from_json(j.at("teacher"));
  t.sched = model::DiffusionSchedule::from_json(j.at("schedule"));
  for (const auto& name : t.store.names()) t.store.set_trainable(name, false);
  return t;
}

inline model::EncoderConfig load_encoder_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  return model::EncoderConfig::from_json(nlohmann::json::parse(f));
}

inline std::vector<data::CorpusPair> load_corpus(const std::string& path) { return data::read_corpus_jsonl(path); }

inline std::string split_path(const std::string& data_dir, const std::string& split) {
  static const std::vector<std::string> known = {"winoground", "aro_attribution", "aro_relation", "ordering",
                                                 "zeroshot"};
  for (const auto& k : known)
    if (k == split) return data_dir + "/" + split + ".jsonl";
  throw UsageError("unknown split '" + split + "'");
}

// Assembles the combined store a fine-tuning run works on: the pretrained
// dual encoder, the frozen teacher, and a freshly seeded bridge.
inline ParamStore combined_store(const ParamStore& base, const TeacherArtifacts& teacher,
                                 std::size_t embed_dim, std::uint64_t bridge_seed) {
  ParamStore store;
  base.copy_into(store, "clip.");
  teacher.store.copy_into(store, "teacher.");
  for (const auto& name : store.names("teacher.")) store.set_trainable(name, false);
  Rng rng(bridge_seed);
  train::init_bridge(store, embed_dim, teacher.cfg, rng);
  return store;
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

struct Args {
  std::string command;
  std::map<std::string, std::string> flags;

  bool has(const std::string& name) const { return flags.count(name) != 0; }

  std::string get(const std::string& name) const {
    const auto it = flags.find(name);
    if (it == flags.end()) throw UsageError("missing required flag --" + name);
    return it->second;
  }

  std::string get_or(const std::string& name, const std::string& fallback) const {
    const auto it = flags.find(name);
    return it == flags.end() ? fallback : it->second;
  }

  std::uint64_t seed_or(std::uint64_t fallback) const {
    const auto it = flags.find("seed");
    return it == flags.end() ? fallback : static_cast<std::uint64_t>(std::stoull(it->second));
  }
};

inline const char* usage_text() {
  return
      "usage: sdsclip <command> [flags]\n"
      "\n"
      "commands:\n"
      "  gen-data       --config FILE --out DIR [--seed N]\n"
      "  train-teacher  --config FILE --data DIR --out DIR [--seed N]\n"
      "  pretrain-clip  --config FILE --data DIR --out DIR [--seed N]\n"
      "  finetune       --config FILE --data DIR --teacher DIR --model DIR --out DIR [--seed N] [--mode M]\n"
      "  evaluate       --checkpoint FILE --split NAME --scorer clip|diffusion --data DIR --out FILE\n"
      "                 [--teacher DIR] [--config FILE] [--seed N] [--mode LABEL] [--n-samples N]\n"
      "                 [--encoder-config FILE]\n"
      "  matrix         --config FILE --data DIR --teacher DIR --model DIR --out DIR\n"
      "  report         --records FILE --out DIR\n"
      "\n"
      "flags --config, --seed and --out behave identically across commands; the\n"
      "SDS_OUT environment variable supplies a default output root and\n"
      "SDS_THREADS bounds matrix parallelism.\n";
}

inline Args parse_args(const std::vector<std::string>& argv) {
  static const std::set<std::string> commands = {"gen-data", "train-teacher", "pretrain-clip", "finetune",
                                                 "evaluate", "matrix",        "report"};
  static const std::set<std::string> known_flags = {"config",  "out",        "seed",    "data",
                                                    "teacher", "model",      "mode",    "checkpoint",
                                                    "split",   "scorer",     "records", "n-samples",
                                                    "encoder-config"};
  if (argv.empty()) throw UsageError("no command given");
  Args args;
  args.command = argv[0];
  if (!commands.count(args.command)) throw UsageError("unknown command '" + args.command + "'");
  for (std::size_t i = 1; i < argv.size(); ++i) {
    const std::string& a = argv[i];
    if (a.rfind("--", 0) != 0) throw UsageError("unexpected argument '" + a + "'");
    const std::string name = a.substr(2);
    if (!known_flags.count(name)) throw UsageError("unknown flag --" + name);
    if (i + 1 >= argv.size()) throw UsageError("flag --" + name + " needs a value");
    args.flags[name] = argv[++i];
  }
  return args;
}

inline std::string out_dir_for(const Args& args) {
  if (args.has("out")) return args.get("out");
  const char* root = std::getenv("SDS_OUT");
  if (!root) throw UsageError("missing --out and SDS_OUT is not set");
  return std::string(root) + "/" + args.command;
}

// gen-data: all benchmark splits, the three corpora, and a manifest
inline void cmd_gen_data(const Args& args) {
  const Config cfg = args.has("config") ? Config::load(args.get("config")) : Config::from_string("");
  const std::string out = out_dir_for(args);
  ensure_dir(out);
  const std::uint64_t seed = args.seed_or(static_cast<std::uint64_t>(cfg.i64("data.seed", 1)));
  RunManifest manifest;
  manifest.command = "gen-data";
  manifest.config_path = args.get_or("config", "");
  manifest.config_echo = cfg.echo();
  manifest.seed = seed;

  const auto bc = bench_config_from(cfg, seed);
  const auto splits = data::generate_benchmarks(bc);
  data::write_tasks_jsonl(out + "/winoground.jsonl", splits.winoground);
  data::write_tasks_jsonl(out + "/aro_attribution.jsonl", splits.aro_attribution);
  data::write_tasks_jsonl(out + "/aro_relation.jsonl", splits.aro_relation);
  data::write_tasks_jsonl(out + "/ordering.jsonl", splits.ordering);
  data::write_tasks_jsonl(out + "/zeroshot.jsonl", splits.zeroshot);

  const long pretrain_n = cfg.i64("data.pretrain-n", 1024);
  const long teacher_n = cfg.i64("data.teacher-n", 4 * pretrain_n);
  const long finetune_n = cfg.i64("data.finetune-n", 512);
  const long holdout_n = cfg.i64("data.holdout-n", 64);
  const auto pretrain = data::generate_corpus(pretrain_n, Rng(seed).derive(201), bc.gen);
  const auto teacher = data::generate_corpus(teacher_n, Rng(seed).derive(204), bc.gen);
  const auto finetune = data::generate_corpus(finetune_n, Rng(seed).derive(202), bc.gen);
  const auto holdout = data::generate_corpus(holdout_n, Rng(seed).derive(203), bc.gen);
  data::write_corpus_jsonl(out + "/corpus_pretrain.jsonl", pretrain);
  data::write_corpus_jsonl(out + "/corpus_teacher.jsonl", teacher);
  data::write_corpus_jsonl(out + "/corpus_finetune.jsonl", finetune);
  data::write_corpus_jsonl(out + "/holdout.jsonl", holdout);

  nlohmann::json prompts = nlohmann::json::array();
  for (int k = 0; k < 12; ++k) {
    std::string text;
    for (const auto& w : data::class_prompt_words(k)) {
      if (!text.empty()) text += ' ';
      text += w;
    }
    prompts.push_back(text);
  }
  manifest.extra = {{"grammar_version", 1},
                    {"counts",
                     {{"winoground", splits.winoground.size()},
                      {"aro_attribution", splits.aro_attribution.size()},
                      {"aro_relation", splits.aro_relation.size()},
                      {"ordering", splits.ordering.size()},
                      {"zeroshot", splits.zeroshot.size()},
                      {"corpus_pretrain", pretrain.size()},
                      {"corpus_teacher", teacher.size()},
                      {"corpus_finetune", finetune.size()},
                      {"holdout", holdout.size()}}},
                    {"class_prompts", prompts}};
  for (const char* f : {"winoground.jsonl", "aro_attribution.jsonl", "aro_relation.jsonl", "ordering.jsonl",
                        "zeroshot.jsonl", "corpus_pretrain.jsonl", "corpus_teacher.jsonl",
                        "corpus_finetune.jsonl", "holdout.jsonl"})
    manifest.outputs.push_back(out + "/" + f);
  manifest.write(out);
}

inline void cmd_train_teacher(const Args& args) {
  const Config cfg = args.has("config") ? Config::load(args.get("config")) : Config::from_string("");
  const std::string data_dir = args.get("data");
  const std::string out = out_dir_for(args);
  ensure_dir(out);
  const std::uint64_t seed = args.seed_or(static_cast<std::uint64_t>(cfg.i64("teacher.seed", 1)));

  RunManifest manifest;
  manifest.command = "train-teacher";
  manifest.config_path = args.get_or("config", "");
  manifest.config_echo = cfg.echo();
  manifest.seed = seed;
  manifest.inputs["corpus"] = data_dir + "/corpus_teacher.jsonl";

  model::TeacherConfig tcfg;
  tcfg.image_size = static_cast<std::size_t>(cfg.i64("data.resolution", 32));
  const auto sched = model::DiffusionSchedule::default_schedule(static_cast<std::size_t>(cfg.i64("teacher.T", 100)));
  const auto corpus = load_corpus(data_dir + "/corpus_teacher.jsonl");

  ParamStore store;
  Rng init_rng(static_cast<std::uint64_t>(cfg.i64("teacher.init-seed", 7)));
  model::init_latent_encoder(store, tcfg, init_rng);
  model::init_denoiser(store, tcfg, init_rng);

  model::TeacherTrainConfig tc;
  tc.epochs = cfg.i64("teacher.epochs", 60);
  tc.batch = static_cast<std::size_t>(cfg.i64("teacher.batch", 32));
  tc.lr = cfg.f64("teacher.lr", 2e-3);
  tc.caption_shuffle_prob = cfg.f64("teacher.shuffle-prob", 0.25);
  tc.seed = seed;
  const auto report = model::train_teacher(store, tcfg, sched, corpus, tc);

  store.save(out + "/teacher.bin", "teacher.");
  write_text_atomic(out + "/teacher_config.json",
                    nlohmann::json{{"teacher", tcfg.to_json()}, {"schedule", sched.to_json()}}.dump(2) + "\n");
  nlohmann::json curve;
  curve["epoch_losses"] = report.epoch_losses;
  curve["initial_loss"] = report.initial_loss;
  curve["final_loss"] = report.final_loss;
  curve["steps"] = report.steps;
  write_text_atomic(out + "/teacher_train.json", curve.dump(2) + "\n");

  manifest.outputs = {out + "/teacher.bin", out + "/teacher_config.json", out + "/teacher_train.json"};
  manifest.write(out);
}

inline void cmd_pretrain_clip(const Args& args) {
  const Config cfg = args.has("config") ? Config::load(args.get("config")) : Config::from_string("");
  const std::string data_dir = args.get("data");
  const std::string out = out_dir_for(args);
  ensure_dir(out);
  const std::uint64_t seed = args.seed_or(static_cast<std::uint64_t>(cfg.i64("pretrain.seed", 1)));

  RunManifest manifest;
  manifest.command = "pretrain-clip";
  manifest.config_path = args.get_or("config", "");
  manifest.config_echo = cfg.echo();
  manifest.seed = seed;
  manifest.inputs["corpus"] = data_dir + "/corpus_pretrain.jsonl";

  const auto ecfg = encoder_config_from(cfg);
  const auto corpus = load_corpus(data_dir + "/corpus_pretrain.jsonl");
  const auto holdout = load_corpus(data_dir + "/holdout.jsonl");

  ParamStore store;
  Rng init_rng(static_cast<std::uint64_t>(cfg.i64("pretrain.init-seed", 11)));
  model::init_dual_encoder(store, ecfg, init_rng);

  train::PretrainConfig pc;
  pc.epochs = cfg.i64("pretrain.epochs", 40);
  pc.batch = static_cast<std::size_t>(cfg.i64("pretrain.batch", 32));
  pc.lr = cfg.f64("pretrain.lr", 3e-4);
  pc.seed = seed;
  const auto report = train::pretrain_clip(store, ecfg, corpus, pc);
  const double holdout_retrieval = train::retrieval_top1(store, ecfg, holdout);

  store.save(out + "/clip_base.bin", "clip.");
  write_text_atomic(out + "/encoder_config.json", ecfg.to_json().dump(2) + "\n");
  nlohmann::json rj;
  rj["epoch_losses"] = report.epoch_losses;
  rj["steps"] = report.steps;
  rj["holdout_retrieval_top1"] = holdout_retrieval;
  write_text_atomic(out + "/pretrain_report.json", rj.dump(2) + "\n");

  manifest.outputs = {out + "/clip_base.bin", out + "/encoder_config.json", out + "/pretrain_report.json"};
  manifest.write(out);
}

inline void cmd_finetune(const Args& args) {
  Config cfg = args.has("config") ? Config::load(args.get("config")) : Config::from_string("");
  if (args.has("mode")) cfg.set("mode", args.get("mode"));
  const std::string data_dir = args.get("data");
  const std::string teacher_dir = args.get("teacher");
  const std::string model_dir = args.get("model");
  const std::string out = out_dir_for(args);
  ensure_dir(out);

  RunManifest manifest;
  manifest.command = "finetune";
  manifest.config_path = args.get_or("config", "");
  manifest.config_echo = cfg.echo();
  manifest.inputs["corpus"] = data_dir + "/corpus_finetune.jsonl";
  manifest.inputs["teacher"] = teacher_dir + "/teacher.bin";
  manifest.inputs["model"] = model_dir + "/clip_base.bin";

  const auto tc = train_config_from(cfg, args.seed_or(0), args.has("seed"));
  manifest.seed = tc.seed;
  const auto ecfg = load_encoder_config(model_dir + "/encoder_config.json");
  const auto base = ParamStore::load(model_dir + "/clip_base.bin");
  const auto teacher_art = load_teacher(teacher_dir);
  const auto corpus = load_corpus(data_dir + "/corpus_finetune.jsonl");

  const std::uint64_t bridge_seed =
      Rng(static_cast<std::uint64_t>(cfg.i64("bridge.init-seed", 13))).derive(tc.seed);
  ParamStore store = combined_store(base, teacher_art, ecfg.embed_dim, bridge_seed);
  const model::Teacher teacher{store, teacher_art.cfg};
  const auto report = train::finetune(store, ecfg, teacher, teacher_art.sched, corpus, tc);

  store.save_prefixes(out + "/checkpoint.bin", {"clip.", "bridge."});
  write_text_atomic(out + "/encoder_config.json", ecfg.to_json().dump(2) + "\n");
  write_text_atomic(out + "/train_report.json", report.to_json().dump(2) + "\n");
  manifest.outputs = {out + "/checkpoint.bin", out + "/encoder_config.json", out + "/train_report.json"};
  manifest.write(out);
}

inline eval::MetricsRecord evaluate_split(const std::string& split, const eval::Scorer& scorer,
                                          ParamStore& store, const model::EncoderConfig& ecfg,
                                          const std::vector<data::TaskInstance>& tasks) {
  using namespace eval;
  const auto t0 = std::chrono::steady_clock::now();
  MetricsRecord rec;
  if (split == "winoground") {
    rec = winoground_scores(scorer, tasks);
  } else if (split == "zeroshot") {
    if (scorer.kind != "clip-cosine")
      throw UsageError("zero-shot classification is defined for the clip-cosine scorer");
    rec = zero_shot_accuracy(store, ecfg, tasks);
  } else {
    rec = multi_choice_accuracy(scorer, tasks);
    rec.split = split;
  }
  rec.mean_latency_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() /
                       static_cast<double>(tasks.size());
  return rec;
}

inline void cmd_evaluate(const Args& args) {
  const Config cfg = args.has("config") ? Config::load(args.get("config")) : Config::from_string("");
  const std::string checkpoint = args.get("checkpoint");
  const std::string split = args.get("split");
  const std::string scorer_name = args.get("scorer");
  const std::string data_dir = args.get("data");
  const std::string records_path = args.get("out");
  const std::uint64_t seed = args.seed_or(static_cast<std::uint64_t>(cfg.i64("eval.seed", 1)));

  const std::string enc_path = args.get_or(
      "encoder-config", (std::filesystem::path(checkpoint).parent_path() / "encoder_config.json").string());
  const auto ecfg = load_encoder_config(enc_path);
  ParamStore store = ParamStore::load(checkpoint);
  const auto tasks = data::read_tasks_jsonl(split_path(data_dir, split));

  eval::Scorer scorer;
  TeacherArtifacts teacher_art;
  if (scorer_name == "clip" || scorer_name == "clip-cosine") {
    scorer = eval::make_clip_scorer(store, ecfg);
  } else if (scorer_name == "diffusion" || scorer_name == "diffusion-score") {
    if (!args.has("teacher")) throw UsageError("--teacher is required for the diffusion scorer");
    teacher_art = load_teacher(args.get("teacher"));
    const std::size_t n_samples = static_cast<std::size_t>(
        args.has("n-samples") ? std::stol(args.get("n-samples")) : cfg.i64("eval.n-samples", 50));
    scorer = eval::make_diffusion_scorer(model::Teacher{teacher_art.store, teacher_art.cfg}, teacher_art.sched,
                                         n_samples, seed);
  } else {
    throw UsageError("unknown scorer '" + scorer_name + "'");
  }

  auto rec = evaluate_split(split, scorer, store, ecfg, tasks);
  rec.seed = seed;
  rec.mode = args.get_or("mode", "");
  rec.checkpoint_hash = file_hash_hex(checkpoint);
  report::append_record_jsonl(records_path, rec);
  std::cout << rec.to_json().dump() << "\n";
}

// ---------------------------------------------------------------------------
// experiment matrix
// ---------------------------------------------------------------------------

struct MatrixCell {
  train::RunMode mode;
  std::uint64_t seed;
};

inline std::size_t matrix_thread_count(std::size_t cells) {
  const char* env = std::getenv("SDS_THREADS");
  std::size_t n = 1;
  if (env) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) n = static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, std::min(n, cells));
}

// Fine-tunes (or skips, for mode none) and evaluates every benchmark split
// per (mode, seed) cell. Records land sorted by (split, mode, seed) so the
// output bytes do not depend on scheduling.
inline void cmd_matrix(const Args& args) {
  const Config cfg = args.has("config") ? Config::load(args.get("config")) : Config::from_string("");
  const std::string data_dir = args.get("data");
  const std::string teacher_dir = args.get("teacher");
  const std::string model_dir = args.get("model");
  const std::string out = out_dir_for(args);
  ensure_dir(out);

  RunManifest manifest;
  manifest.command = "matrix";
  manifest.config_path = args.get_or("config", "");
  manifest.config_echo = cfg.echo();
  manifest.seed = static_cast<std::uint64_t>(cfg.i64("seed", 1));
  manifest.inputs = {{"data", data_dir}, {"teacher", teacher_dir}, {"model", model_dir}};

  const auto ecfg = load_encoder_config(model_dir + "/encoder_config.json");
  const auto base = ParamStore::load(model_dir + "/clip_base.bin");
  const auto teacher_art = load_teacher(teacher_dir);
  const auto corpus = load_corpus(data_dir + "/corpus_finetune.jsonl");

  std::map<std::string, std::vector<data::TaskInstance>> splits;
  for (const char* s : {"winoground", "aro_attribution", "aro_relation", "ordering", "zeroshot"})
    splits[s] = data::read_tasks_jsonl(data_dir + "/" + std::string(s) + ".jsonl");

  std::vector<MatrixCell> cells;
  for (const auto& mode : cfg.list("matrix.modes", "none,clip-only,clip+sds,clip+feature-distill"))
    for (std::uint64_t seed : cfg.u64_list("matrix.seeds", "1,2,3"))
      cells.push_back({train::parse_run_mode(mode), seed});

  std::vector<eval::MetricsRecord> records;
  std::mutex records_mutex;
  std::atomic<std::size_t> next{0};
  std::vector<std::string> errors;

  const auto run_cell = [&](const MatrixCell& cell) {
    const std::string run_name = std::string(train::run_mode_name(cell.mode)) + "_s" + std::to_string(cell.seed);
    const std::string run_dir = out + "/runs/" + run_name;
    ensure_dir(run_dir);
    const std::uint64_t bridge_seed =
        Rng(static_cast<std::uint64_t>(cfg.i64("bridge.init-seed", 13))).derive(cell.seed);
    ParamStore store = combined_store(base, teacher_art, ecfg.embed_dim, bridge_seed);
    if (cell.mode != train::RunMode::None) {
      auto tc = train_config_from(cfg, cell.seed, true);
      tc.mode = cell.mode;
      const model::Teacher teacher{store, teacher_art.cfg};
      const auto report = train::finetune(store, ecfg, teacher, teacher_art.sched, corpus, tc);
      write_text_atomic(run_dir + "/train_report.json", report.to_json().dump(2) + "\n");
    }
    store.save_prefixes(run_dir + "/checkpoint.bin", {"clip.", "bridge."});
    write_text_atomic(run_dir + "/encoder_config.json", ecfg.to_json().dump(2) + "\n");
    const std::string checkpoint_hash = hash_hex(detail::fnv1a(store.serialize_prefixes({"clip.", "bridge."})));

    const auto clip_scorer = eval::make_clip_scorer(store, ecfg);
    std::vector<eval::MetricsRecord> cell_records;
    for (const auto& [split, tasks] : splits) {
      auto rec = evaluate_split(split, clip_scorer, store, ecfg, tasks);
      rec.mode = train::run_mode_name(cell.mode);
      rec.seed = cell.seed;
      rec.checkpoint_hash = checkpoint_hash;
      rec.mean_latency_s = std::numeric_limits<double>::quiet_NaN();  // keep records byte-deterministic
      cell_records.push_back(std::move(rec));
    }
    std::lock_guard<std::mutex> lock(records_mutex);
    for (auto& r : cell_records) records.push_back(std::move(r));
  };

  const std::size_t workers = matrix_thread_count(cells.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= cells.size()) return;
        try {
          run_cell(cells[i]);
        } catch (const std::exception& e) {
          std::lock_guard<std::mutex> lock(records_mutex);
          errors.push_back(e.what());
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (!errors.empty()) throw std::runtime_error("matrix: " + errors.front());

  const auto split_idx = [](const std::string& s) {
    return report::detail::order_index(report::detail::split_order(), s);
  };
  const auto mode_idx = [](const std::string& m) {
    return report::detail::order_index(report::detail::mode_order(), m);
  };
  std::sort(records.begin(), records.end(), [&](const eval::MetricsRecord& a, const eval::MetricsRecord& b) {
    return std::tuple(split_idx(a.split), mode_idx(a.mode), a.seed) <
           std::tuple(split_idx(b.split), mode_idx(b.mode), b.seed);
  });

  std::string jsonl;
  for (const auto& r : records) jsonl += r.to_json().dump() + "\n";
  write_text_atomic(out + "/records.jsonl", jsonl);
  report::write_summary_csv(out + "/summary.csv", records);

  manifest.outputs = {out + "/records.jsonl", out + "/summary.csv"};
  manifest.extra = {{"cells", cells.size()}, {"records", records.size()}, {"workers", workers}};
  manifest.write(out);
}

inline void cmd_report(const Args& args) {
  const std::string records = args.get("records");
  const std::string out = out_dir_for(args);
  ensure_dir(out);
  report::emit_reports(records, out);
  RunManifest manifest;
  manifest.command = "report";
  manifest.inputs["records"] = records;
  manifest.outputs = {out + "/table1.csv", out + "/latency.csv", out + "/latency.svg", out + "/zeroshot.csv",
                      out + "/zeroshot.svg"};
  manifest.write(out);
}

// exit codes: 0 success, 1 usage error, 2 runtime error
inline int dispatch(const std::vector<std::string>& argv) {
  try {
    const Args args = parse_args(argv);
    if (args.command == "gen-data") cmd_gen_data(args);
    else if (args.command == "train-teacher") cmd_train_teacher(args);
    else if (args.command == "pretrain-clip") cmd_pretrain_clip(args);
    else if (args.command == "finetune") cmd_finetune(args);
    else if (args.command == "evaluate") cmd_evaluate(args);
    else if (args.command == "matrix") cmd_matrix(args);
    else if (args.command == "report") cmd_report(args);
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << usage_text();
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace sdsclip::cli
