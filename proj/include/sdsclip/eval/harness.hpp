#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdsclip/data/benchmark.hpp"
#include "sdsclip/model/encoder.hpp"
#include "sdsclip/model/teacher.hpp"

namespace sdsclip::eval {

using data::TaskInstance;

// A scorer produces one raw score per (image, caption) combination of a
// task; the harness normalizes direction internally via higher_is_better.
struct Scorer {
  std::string kind;
  bool higher_is_better = true;
  std::function<std::vector<std::vector<double>>(const TaskInstance&)> score_task;

  double utility(double raw) const { return higher_is_better ? raw : -raw; }
};

inline Scorer make_clip_scorer(ParamStore& store, const model::EncoderConfig& cfg) {
  Scorer s;
  s.kind = "clip-cosine";
  s.higher_is_better = true;
  s.score_task = [&store, cfg](const TaskInstance& task) {
    model::ParamView pv{store};
    std::vector<Tensor> img_emb, txt_emb;
    for (const auto& img : task.images) img_emb.push_back(model::encode_image(pv, cfg, img));
    for (const auto& cap : task.captions) txt_emb.push_back(model::encode_text(pv, cfg, cap.token_ids));
    std::vector<std::vector<double>> out(img_emb.size(), std::vector<double>(txt_emb.size()));
    for (std::size_t i = 0; i < img_emb.size(); ++i)
      for (std::size_t c = 0; c < txt_emb.size(); ++c) out[i][c] = model::cosine(img_emb[i], txt_emb[c]);
    return out;
  };
  return s;
}

// Denoising-error scorer with common random numbers: every (image, caption)
// combination of one task shares the same (t, eps) draws, drawn from a
// stream keyed by (seed, task id).
inline Scorer make_diffusion_scorer(const model::Teacher& teacher, const model::DiffusionSchedule& sched,
                                    std::size_t n_samples, std::uint64_t seed) {
  Scorer s;
  s.kind = "diffusion-score";
  s.higher_is_better = false;
  s.score_task = [teacher, sched, n_samples, seed](const TaskInstance& task) {
    const auto draws =
        model::make_draws(sched, teacher.cfg.latent_shape(), n_samples, Rng(seed).fork(task.task_id + 1));
    std::vector<std::vector<double>> out(task.images.size(), std::vector<double>(task.captions.size()));
    for (std::size_t i = 0; i < task.images.size(); ++i) {
      const Tensor z0 = teacher.latent(task.images[i]);
      for (std::size_t c = 0; c < task.captions.size(); ++c)
        out[i][c] = model::score_with_draws(teacher, sched, z0, task.captions[c].token_ids, draws);
    }
    return out;
  };
  return s;
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

struct TagScores {
  double text = 0.0;
  double image = 0.0;
  double group = 0.0;
  int n = 0;
};

struct MetricsRecord {
  std::string split;
  std::string scorer;
  std::string mode;  // filled in by the experiment matrix
  std::uint64_t seed = 0;
  std::string checkpoint_hash;
  int n_tasks = 0;
  double text_score = std::numeric_limits<double>::quiet_NaN();
  double image_score = std::numeric_limits<double>::quiet_NaN();
  double group_score = std::numeric_limits<double>::quiet_NaN();
  std::map<std::string, TagScores> tag_scores;
  std::map<int, TagScores> predicate_scores;
  double accuracy = std::numeric_limits<double>::quiet_NaN();
  double mean_latency_s = std::numeric_limits<double>::quiet_NaN();

  void validate() const {
    const auto in01 = [](double v) { return std::isnan(v) || (v >= 0.0 && v <= 1.0); };
    if (!in01(text_score) || !in01(image_score) || !in01(group_score) || !in01(accuracy))
      throw std::runtime_error("metrics record: score outside [0, 1]");
    if (!std::isnan(group_score) && group_score > std::min(text_score, image_score) + 1e-12)
      throw std::runtime_error("metrics record: group score exceeds min(text, image)");
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"split", split}, {"scorer", scorer}, {"mode", mode}, {"seed", seed},
                     {"checkpoint_hash", checkpoint_hash}, {"n_tasks", n_tasks}};
    const auto put = [&j](const char* key, double v) {
      if (!std::isnan(v)) j[key] = v;
    };
    put("text_score", text_score);
    put("image_score", image_score);
    put("group_score", group_score);
    put("accuracy", accuracy);
    put("mean_latency_s", mean_latency_s);
    if (!tag_scores.empty()) {
      nlohmann::json tags;
      for (const auto& [tag, ts] : tag_scores)
        tags[tag] = {{"text", ts.text}, {"image", ts.image}, {"group", ts.group}, {"n", ts.n}};
      j["tags"] = tags;
    }
    if (!predicate_scores.empty()) {
      nlohmann::json preds;
      for (const auto& [k, ts] : predicate_scores)
        preds[std::to_string(k)] = {{"text", ts.text}, {"image", ts.image}, {"group", ts.group}, {"n", ts.n}};
      j["predicates"] = preds;
    }
    return j;
  }

  static MetricsRecord from_json(const nlohmann::json& j) {
    MetricsRecord r;
    r.split = j.at("split").get<std::string>();
    r.scorer = j.at("scorer").get<std::string>();
    r.mode = j.value("mode", "");
    r.seed = j.value("seed", std::uint64_t{0});
    r.checkpoint_hash = j.value("checkpoint_hash", "");
    r.n_tasks = j.value("n_tasks", 0);
    r.text_score = j.value("text_score", std::numeric_limits<double>::quiet_NaN());
    r.image_score = j.value("image_score", std::numeric_limits<double>::quiet_NaN());
    r.group_score = j.value("group_score", std::numeric_limits<double>::quiet_NaN());
    r.accuracy = j.value("accuracy", std::numeric_limits<double>::quiet_NaN());
    r.mean_latency_s = j.value("mean_latency_s", std::numeric_limits<double>::quiet_NaN());
    if (j.contains("tags")) {
      for (const auto& [tag, ts] : j.at("tags").items())
        r.tag_scores[tag] = {ts.at("text").get<double>(), ts.at("image").get<double>(),
                             ts.at("group").get<double>(), ts.at("n").get<int>()};
    }
    if (j.contains("predicates")) {
      for (const auto& [k, ts] : j.at("predicates").items())
        r.predicate_scores[std::stoi(k)] = {ts.at("text").get<double>(), ts.at("image").get<double>(),
                                            ts.at("group").get<double>(), ts.at("n").get<int>()};
    }
    return r;
  }
};

// Pair-matching metrics. For each task: text-correct iff each image's own
// caption strictly beats the other caption; image-correct mirrors it on the
// image side; group-correct is the conjunction. Ties fail.
inline MetricsRecord winoground_scores(const Scorer& scorer, const std::vector<TaskInstance>& tasks) {
  if (tasks.empty()) throw std::invalid_argument("winoground_scores: empty split");
  MetricsRecord rec;
  rec.split = "winoground";
  rec.scorer = scorer.kind;
  rec.n_tasks = static_cast<int>(tasks.size());
  struct Acc {
    int text = 0, image = 0, group = 0, n = 0;
  };
  Acc overall;
  std::map<std::string, Acc> by_tag;
  std::map<int, Acc> by_pred;
  for (const auto& task : tasks) {
    if (task.kind != data::TaskKind::WinogroundPair || task.images.size() != 2 || task.captions.size() != 2)
      throw std::invalid_argument("winoground_scores: task " + std::to_string(task.task_id) +
                                  " is not a winoground pair");
    const auto raw = scorer.score_task(task);
    const double u00 = scorer.utility(raw[0][0]), u01 = scorer.utility(raw[0][1]);
    const double u10 = scorer.utility(raw[1][0]), u11 = scorer.utility(raw[1][1]);
    const bool text = u00 > u01 && u11 > u10;
    const bool image = u00 > u10 && u11 > u01;
    const bool group = text && image;
    const auto bump = [&](Acc& a) {
      a.text += text;
      a.image += image;
      a.group += group;
      a.n += 1;
    };
    bump(overall);
    for (const auto& tag : task.tags) bump(by_tag[tag]);
    bump(by_pred[task.predicate_count]);
  }
  const auto close = [](const Acc& a) {
    TagScores t;
    t.n = a.n;
    t.text = static_cast<double>(a.text) / a.n;
    t.image = static_cast<double>(a.image) / a.n;
    t.group = static_cast<double>(a.group) / a.n;
    return t;
  };
  const TagScores all = close(overall);
  rec.text_score = all.text;
  rec.image_score = all.image;
  rec.group_score = all.group;
  for (const auto& [tag, acc] : by_tag) rec.tag_scores[tag] = close(acc);
  for (const auto& [k, acc] : by_pred) rec.predicate_scores[k] = close(acc);
  rec.validate();
  return rec;
}

// Fraction of tasks whose best-scoring caption is the correct one; a tied
// best counts as incorrect.
inline MetricsRecord multi_choice_accuracy(const Scorer& scorer, const std::vector<TaskInstance>& tasks) {
  if (tasks.empty()) throw std::invalid_argument("multi_choice_accuracy: empty split");
  MetricsRecord rec;
  rec.scorer = scorer.kind;
  rec.n_tasks = static_cast<int>(tasks.size());
  int correct = 0;
  for (const auto& task : tasks) {
    if (task.correct < 0 || task.images.size() != 1)
      throw std::invalid_argument("multi_choice_accuracy: task " + std::to_string(task.task_id) +
                                  " is not a single-image choice task");
    const auto raw = scorer.score_task(task);
    double best = -std::numeric_limits<double>::infinity();
    int best_at = -1, best_count = 0;
    for (std::size_t c = 0; c < task.captions.size(); ++c) {
      const double u = scorer.utility(raw[0][c]);
      if (u > best) {
        best = u;
        best_at = static_cast<int>(c);
        best_count = 1;
      } else if (u == best) {
        ++best_count;
      }
    }
    if (best_count == 1 && best_at == task.correct) ++correct;
  }
  rec.accuracy = static_cast<double>(correct) / static_cast<double>(tasks.size());
  rec.validate();
  return rec;
}

// Top-1 rule over precomputed embeddings; unique strict maximum required.
inline double zero_shot_top1(const std::vector<Tensor>& image_emb, const std::vector<int>& class_ids,
                             const std::vector<Tensor>& prompt_emb) {
  if (image_emb.empty() || image_emb.size() != class_ids.size())
    throw std::invalid_argument("zero_shot_top1: embeddings and class ids must match");
  int correct = 0;
  for (std::size_t i = 0; i < image_emb.size(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    int best_at = -1, best_count = 0;
    for (std::size_t k = 0; k < prompt_emb.size(); ++k) {
      const double u = model::cosine(image_emb[i], prompt_emb[k]);
      if (u > best) {
        best = u;
        best_at = static_cast<int>(k);
        best_count = 1;
      } else if (u == best) {
        ++best_count;
      }
    }
    if (best_count == 1 && best_at == class_ids[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(image_emb.size());
}

// Top-1 accuracy of the cosine-nearest class prompt.
inline MetricsRecord zero_shot_accuracy(ParamStore& store, const model::EncoderConfig& cfg,
                                        const std::vector<TaskInstance>& tasks) {
  if (tasks.empty()) throw std::invalid_argument("zero_shot_accuracy: empty split");
  model::ParamView pv{store};
  const auto& vocab = data::Vocabulary::standard();
  std::vector<Tensor> prompt_emb;
  for (int k = 0; k < 12; ++k) {
    std::string text;
    for (const auto& w : data::class_prompt_words(k)) {
      if (!text.empty()) text += ' ';
      text += w;
    }
    prompt_emb.push_back(model::encode_text(pv, cfg, vocab.tokenize(text, cfg.text_max_len)));
  }
  std::vector<Tensor> image_emb;
  std::vector<int> class_ids;
  for (const auto& task : tasks) {
    if (task.kind != data::TaskKind::ZeroshotClass || task.class_id < 0)
      throw std::invalid_argument("zero_shot_accuracy: task is not a zero-shot classification task");
    image_emb.push_back(model::encode_image(pv, cfg, task.images[0]));
    class_ids.push_back(task.class_id);
  }
  MetricsRecord rec;
  rec.split = "zeroshot";
  rec.scorer = "clip-cosine";
  rec.n_tasks = static_cast<int>(tasks.size());
  rec.accuracy = zero_shot_top1(image_emb, class_ids, prompt_emb);
  rec.validate();
  return rec;
}

// ---------------------------------------------------------------------------
// latency probe
// ---------------------------------------------------------------------------

struct LatencyReport {
  double clip_mean_s = 0.0;
  double diffusion_mean_s = 0.0;
  double ratio = 0.0;
};

// Mean per-task wall-clock of diffusion scoring over clip scoring,
// single-threaded, with one warm-up pass before timing.
inline LatencyReport latency_ratio(ParamStore& store, const model::EncoderConfig& ecfg,
                                   const model::Teacher& teacher, const model::DiffusionSchedule& sched,
                                   const std::vector<TaskInstance>& tasks, std::size_t n_samples,
                                   std::uint64_t seed = 17) {
  if (tasks.empty()) throw std::invalid_argument("latency_ratio: no tasks");
  Scorer clip = make_clip_scorer(store, ecfg);
  Scorer diff = make_diffusion_scorer(teacher, sched, n_samples, seed);
  clip.score_task(tasks[0]);  // warm-up
  diff.score_task(tasks[0]);
  const auto time_all = [&](const Scorer& s) {
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& task : tasks) s.score_task(task);
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() /
           static_cast<double>(tasks.size());
  };
  LatencyReport rep;
  rep.clip_mean_s = time_all(clip);
  rep.diffusion_mean_s = time_all(diff);
  if (rep.clip_mean_s <= 0.0 || rep.diffusion_mean_s <= 0.0)
    throw std::runtime_error("latency_ratio: zero-duration measurement, clock resolution too coarse");
  rep.ratio = rep.diffusion_mean_s / rep.clip_mean_s;
  return rep;
}

}  // namespace sdsclip::eval
