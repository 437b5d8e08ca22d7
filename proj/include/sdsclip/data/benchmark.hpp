#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdsclip/core/rng.hpp"
#include "sdsclip/core/tensor.hpp"
#include "sdsclip/data/scene.hpp"
#include "sdsclip/data/vocab.hpp"

namespace sdsclip::data {

enum class TemplateKind : int { Object = 0, Attribute = 1, Relation = 2, OrderingShuffled = 3, ClassPrompt = 4 };
enum class TaskKind : int { WinogroundPair = 0, AroSingle = 1, OrderingSingle = 2, ZeroshotClass = 3 };
enum class SwapKind : int { Object = 0, Relation = 1, Attribute = 2, Both = 3 };

inline const char* task_kind_name(TaskKind k) {
  switch (k) {
    case TaskKind::WinogroundPair: return "winoground-pair";
    case TaskKind::AroSingle: return "aro-single";
    case TaskKind::OrderingSingle: return "ordering-single";
    default: return "zeroshot-class";
  }
}

inline const char* template_kind_name(TemplateKind k) {
  switch (k) {
    case TemplateKind::Object: return "object";
    case TemplateKind::Attribute: return "attribute";
    case TemplateKind::Relation: return "relation";
    case TemplateKind::OrderingShuffled: return "ordering-shuffled";
    default: return "class-prompt";
  }
}

struct Caption {
  std::vector<std::string> words;
  std::vector<int> token_ids;
  TemplateKind kind = TemplateKind::Relation;

  std::string text() const {
    std::string out;
    for (const auto& w : words) {
      if (!out.empty()) out += ' ';
      out += w;
    }
    return out;
  }
};

inline Caption make_caption(std::vector<std::string> words, TemplateKind kind, std::size_t max_seq_len) {
  Caption c;
  c.words = std::move(words);
  c.kind = kind;
  c.token_ids = Vocabulary::standard().tokenize(c.text(), max_seq_len);
  return c;
}

struct TaskInstance {
  TaskKind kind = TaskKind::WinogroundPair;
  std::uint64_t task_id = 0;
  std::vector<Tensor> images;                  // 1 or 2 rendered tensors
  std::vector<Caption> captions;               // 2..k candidates
  std::vector<int> correct_caption_per_image;  // winoground pairs
  int correct = -1;                            // single-image tasks
  std::vector<std::string> tags;               // subset of {object, relation, both}
  int predicate_count = 1;
  int class_id = -1;                           // zero-shot tasks
  std::vector<Scene> scenes;                   // kept in memory for checking, not persisted
};

// ---------------------------------------------------------------------------
// caption grammar: parsing and symbolic truth
// ---------------------------------------------------------------------------

struct ParsedNp {
  ColorKind color;
  ShapeKind shape;
};

struct ParsedCaption {
  std::vector<ParsedNp> nps;
  std::vector<Predicate> preds;  // between consecutive noun phrases
  bool conjunction = false;      // "a X and a Y"
  bool photo = false;            // "a photo of a X"
};

namespace grammar {

inline std::optional<ColorKind> parse_color(const std::string& w) {
  if (w == "red") return ColorKind::Red;
  if (w == "green") return ColorKind::Green;
  if (w == "blue") return ColorKind::Blue;
  if (w == "yellow") return ColorKind::Yellow;
  return std::nullopt;
}

inline std::optional<ShapeKind> parse_shape(const std::string& w) {
  if (w == "circle") return ShapeKind::Circle;
  if (w == "square") return ShapeKind::Square;
  if (w == "triangle") return ShapeKind::Triangle;
  return std::nullopt;
}

inline std::optional<ParsedNp> parse_np(const std::vector<std::string>& w, std::size_t& i) {
  if (i + 3 > w.size()) return std::nullopt;
  if (w[i] != "a") return std::nullopt;
  auto color = parse_color(w[i + 1]);
  if (!color) return std::nullopt;
  auto shape = parse_shape(w[i + 2]);
  if (!shape) return std::nullopt;
  i += 3;
  return ParsedNp{*color, *shape};
}

inline std::optional<Predicate> parse_pred(const std::vector<std::string>& w, std::size_t& i) {
  if (i >= w.size()) return std::nullopt;
  if (w[i] == "above") {
    ++i;
    return Predicate::Above;
  }
  if (w[i] == "below") {
    ++i;
    return Predicate::Below;
  }
  if (i + 1 < w.size() && w[i + 1] == "of") {
    if (w[i] == "left") {
      i += 2;
      return Predicate::LeftOf;
    }
    if (w[i] == "right") {
      i += 2;
      return Predicate::RightOf;
    }
  }
  return std::nullopt;
}

}  // namespace grammar

inline std::optional<ParsedCaption> parse_caption(const std::vector<std::string>& words) {
  ParsedCaption out;
  std::size_t i = 0;
  // "a photo of a {color} {shape}"
  if (words.size() == 6 && words[0] == "a" && words[1] == "photo" && words[2] == "of") {
    i = 3;
    auto np = grammar::parse_np(words, i);
    if (!np || i != words.size()) return std::nullopt;
    out.photo = true;
    out.nps.push_back(*np);
    return out;
  }
  auto first = grammar::parse_np(words, i);
  if (!first) return std::nullopt;
  out.nps.push_back(*first);
  if (i == words.size()) return out;  // "a {color} {shape}"
  if (words[i] == "and") {
    ++i;
    auto second = grammar::parse_np(words, i);
    if (!second || i != words.size()) return std::nullopt;
    out.conjunction = true;
    out.nps.push_back(*second);
    return out;
  }
  while (i < words.size()) {
    auto pred = grammar::parse_pred(words, i);
    if (!pred) return std::nullopt;
    auto np = grammar::parse_np(words, i);
    if (!np) return std::nullopt;
    out.preds.push_back(*pred);
    out.nps.push_back(*np);
  }
  return out;
}

// Truth of a caption against a scene: every noun phrase must resolve to a
// distinct object with that color and shape, and chained predicates must hold
// between consecutive resolutions. Small backtracking search, so duplicate
// bundles are handled correctly.
inline bool caption_true(const std::vector<std::string>& words, const Scene& scene) {
  const auto parsed = parse_caption(words);
  if (!parsed) return false;
  const auto& nps = parsed->nps;
  const auto& objs = scene.objects;
  std::vector<std::size_t> chosen(nps.size(), 0);
  std::vector<bool> used(objs.size(), false);

  std::function<bool(std::size_t)> assign = [&](std::size_t k) -> bool {
    if (k == nps.size()) {
      for (std::size_t p = 0; p < parsed->preds.size(); ++p) {
        const auto& a = objs[chosen[p]];
        const auto& b = objs[chosen[p + 1]];
        if (!predicate_holds(parsed->preds[p], a.row, a.col, b.row, b.col)) return false;
      }
      return true;
    }
    for (std::size_t o = 0; o < objs.size(); ++o) {
      if (used[o]) continue;
      if (objs[o].color != nps[k].color || objs[o].shape != nps[k].shape) continue;
      used[o] = true;
      chosen[k] = o;
      if (assign(k + 1)) return true;
      used[o] = false;
    }
    return false;
  };
  return assign(0);
}

inline bool word_multisets_equal(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  auto sa = a, sb = b;
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  return sa == sb;
}

// ---------------------------------------------------------------------------
// generators
// ---------------------------------------------------------------------------

struct GenParams {
  int grid = 4;  // must divide the resolution; 2 and 4 both work at 32px
  int resolution = 32;
  std::size_t max_seq_len = 16;
};

namespace gendetail {

inline ColorKind rand_color(Rng& rng) { return static_cast<ColorKind>(rng.index(4)); }
inline ShapeKind rand_shape(Rng& rng) { return static_cast<ShapeKind>(rng.index(3)); }
inline Predicate rand_pred(Rng& rng) { return static_cast<Predicate>(rng.index(4)); }

struct Bundle {
  ColorKind color;
  ShapeKind shape;
};

inline std::vector<std::string> np_words(const Bundle& b) { return {"a", color_word(b.color), shape_word(b.shape)}; }

inline std::vector<std::string> chain_words(const std::vector<Bundle>& bundles, const std::vector<Predicate>& preds) {
  std::vector<std::string> w = np_words(bundles[0]);
  for (std::size_t p = 0; p < preds.size(); ++p) {
    for (const auto& pw : predicate_words(preds[p])) w.push_back(pw);
    const auto np = np_words(bundles[p + 1]);
    w.insert(w.end(), np.begin(), np.end());
  }
  return w;
}

// Places a chain of objects whose consecutive cells satisfy the predicates.
// Returns empty on a failed attempt; callers retry.
inline std::vector<std::pair<int, int>> place_chain(Rng& rng, int grid, const std::vector<Predicate>& preds) {
  std::vector<std::pair<int, int>> cells;
  cells.emplace_back(static_cast<int>(rng.index(static_cast<std::size_t>(grid))),
                     static_cast<int>(rng.index(static_cast<std::size_t>(grid))));
  for (Predicate p : preds) {
    const auto [r, c] = cells.back();
    std::vector<std::pair<int, int>> options;
    for (int rr = 0; rr < grid; ++rr) {
      for (int cc = 0; cc < grid; ++cc) {
        if (!predicate_holds(p, r, c, rr, cc)) continue;
        // predicate_holds(p, prev, next) must run in caption order:
        // "prev p next" means prev is the subject
        bool taken = false;
        for (const auto& cell : cells) taken = taken || (cell.first == rr && cell.second == cc);
        if (!taken) options.emplace_back(rr, cc);
      }
    }
    if (options.empty()) return {};
    cells.push_back(options[rng.index(options.size())]);
  }
  return cells;
}

inline Scene scene_from(const std::vector<Bundle>& bundles, const std::vector<std::pair<int, int>>& cells,
                        int grid) {
  Scene s;
  s.grid_rows = grid;
  s.grid_cols = grid;
  for (std::size_t i = 0; i < bundles.size(); ++i)
    s.objects.push_back({bundles[i].shape, bundles[i].color, cells[i].first, cells[i].second});
  s.validate();
  return s;
}

}  // namespace gendetail

// Two images and two captions over the same word multiset; exactly one
// caption is true of each image. `swap` controls what differs between the
// scenes and caption pair:
//   object    - the two end (color, shape) bundles trade cells
//   relation  - positions mirrored along the predicate axis
//   attribute - colors trade owners in place
//   both      - attribute swap plus mirrored positions
inline TaskInstance generate_winoground_task(std::uint64_t seed, SwapKind swap, const GenParams& gp = {}) {
  using namespace gendetail;
  Rng rng = Rng(seed).fork(17);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const int pred_count = rng.bernoulli(0.75) ? 1 : 2;
    const std::size_t n = static_cast<std::size_t>(pred_count) + 1;
    std::vector<Bundle> bundles;
    for (std::size_t i = 0; i < n; ++i) bundles.push_back({rand_color(rng), rand_shape(rng)});
    const Bundle& first = bundles.front();
    const Bundle& last = bundles.back();
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i)
      for (std::size_t j = i + 1; j < n && ok; ++j)
        ok = bundles[i].color != bundles[j].color || bundles[i].shape != bundles[j].shape;
    if (!ok) continue;
    if ((swap == SwapKind::Attribute || swap == SwapKind::Both) && first.color == last.color) continue;
    if (swap == SwapKind::Both && first.shape == last.shape) continue;

    std::vector<Predicate> preds;
    for (int p = 0; p < pred_count; ++p) preds.push_back(rand_pred(rng));
    const auto cells = place_chain(rng, gp.grid, preds);
    if (cells.empty()) continue;

    std::vector<Bundle> bundles_b = bundles;
    auto cells_b = cells;
    std::vector<Bundle> caption_b = bundles;  // noun-phrase order of the second caption
    switch (swap) {
      case SwapKind::Object:
      case SwapKind::Relation:
        std::swap(cells_b.front(), cells_b.back());
        std::swap(caption_b.front(), caption_b.back());
        break;
      case SwapKind::Attribute:
        std::swap(bundles_b.front().color, bundles_b.back().color);
        std::swap(caption_b.front().color, caption_b.back().color);
        break;
      case SwapKind::Both:
        std::swap(bundles_b.front().color, bundles_b.back().color);
        std::swap(cells_b.front(), cells_b.back());
        std::swap(caption_b.front().shape, caption_b.back().shape);
        break;
    }

    bool distinct_b = true;
    for (std::size_t i = 0; i < n && distinct_b; ++i)
      for (std::size_t j = i + 1; j < n && distinct_b; ++j)
        distinct_b = bundles_b[i].color != bundles_b[j].color || bundles_b[i].shape != bundles_b[j].shape;
    if (!distinct_b) continue;

    const Scene scene_a = scene_from(bundles, cells, gp.grid);
    const Scene scene_b = scene_from(bundles_b, cells_b, gp.grid);
    const auto words_a = chain_words(bundles, preds);
    const auto words_b = chain_words(caption_b, preds);

    if (!word_multisets_equal(words_a, words_b)) continue;
    if (!caption_true(words_a, scene_a) || caption_true(words_a, scene_b)) continue;
    if (!caption_true(words_b, scene_b) || caption_true(words_b, scene_a)) continue;

    TaskInstance t;
    t.kind = TaskKind::WinogroundPair;
    t.task_id = seed;
    t.scenes = {scene_a, scene_b};
    t.images = {render(scene_a, gp.resolution), render(scene_b, gp.resolution)};
    t.captions = {make_caption(words_a, TemplateKind::Relation, gp.max_seq_len),
                  make_caption(words_b, TemplateKind::Relation, gp.max_seq_len)};
    t.correct_caption_per_image = {0, 1};
    t.predicate_count = pred_count;
    switch (swap) {
      case SwapKind::Object: t.tags = {"object"}; break;
      case SwapKind::Relation: t.tags = {"relation"}; break;
      case SwapKind::Attribute: t.tags = {"object"}; break;
      case SwapKind::Both: t.tags = {"both"}; break;
    }
    return t;
  }
  throw std::runtime_error("generate_winoground_task: no valid construction after 1000 attempts");
}

// One image, the true caption and three word-order shuffles of it. Shuffles
// that happen to describe the scene correctly are resampled.
inline TaskInstance generate_ordering_task(std::uint64_t seed, const GenParams& gp = {}) {
  using namespace gendetail;
  Rng rng = Rng(seed).fork(23);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<Bundle> bundles = {{rand_color(rng), rand_shape(rng)}, {rand_color(rng), rand_shape(rng)}};
    if (bundles[0].color == bundles[1].color && bundles[0].shape == bundles[1].shape) continue;
    const std::vector<Predicate> preds = {rand_pred(rng)};
    const auto cells = place_chain(rng, gp.grid, preds);
    if (cells.empty()) continue;
    const Scene scene = scene_from(bundles, cells, gp.grid);
    const auto correct_words = chain_words(bundles, preds);
    if (!caption_true(correct_words, scene)) continue;

    std::vector<std::vector<std::string>> distractors;
    int tries = 0;
    while (distractors.size() < 3 && tries < 1000) {
      ++tries;
      auto shuffled = correct_words;
      rng.shuffle(shuffled);
      if (shuffled == correct_words) continue;
      if (caption_true(shuffled, scene)) continue;  // accidentally valid description
      bool dup = false;
      for (const auto& d : distractors) dup = dup || d == shuffled;
      if (dup) continue;
      distractors.push_back(std::move(shuffled));
    }
    if (distractors.size() < 3) continue;

    TaskInstance t;
    t.kind = TaskKind::OrderingSingle;
    t.task_id = seed;
    t.scenes = {scene};
    t.images = {render(scene, gp.resolution)};
    const std::size_t correct_at = rng.index(4);
    std::size_t di = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      if (k == correct_at) {
        t.captions.push_back(make_caption(correct_words, TemplateKind::Relation, gp.max_seq_len));
      } else {
        t.captions.push_back(make_caption(distractors[di++], TemplateKind::OrderingShuffled, gp.max_seq_len));
      }
    }
    t.correct = static_cast<int>(correct_at);
    t.predicate_count = 1;
    return t;
  }
  throw std::runtime_error("generate_ordering_task: no valid construction after 1000 attempts");
}

// One image, two candidate captions probing either attribute binding
// ("a red circle and a blue square" vs colors traded) or relations
// (predicate vs its inverse).
inline TaskInstance generate_aro_task(std::uint64_t seed, bool attribution, const GenParams& gp = {}) {
  using namespace gendetail;
  Rng rng = Rng(seed).fork(attribution ? 29 : 31);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<Bundle> bundles = {{rand_color(rng), rand_shape(rng)}, {rand_color(rng), rand_shape(rng)}};
    std::vector<std::string> correct_words, wrong_words;
    Scene scene;
    if (attribution) {
      if (bundles[0].color == bundles[1].color || bundles[0].shape == bundles[1].shape) continue;
      const int r0 = static_cast<int>(rng.index(static_cast<std::size_t>(gp.grid)));
      const int c0 = static_cast<int>(rng.index(static_cast<std::size_t>(gp.grid)));
      int r1 = r0, c1 = c0;
      while (r1 == r0 && c1 == c0) {
        r1 = static_cast<int>(rng.index(static_cast<std::size_t>(gp.grid)));
        c1 = static_cast<int>(rng.index(static_cast<std::size_t>(gp.grid)));
      }
      scene = scene_from(bundles, {{r0, c0}, {r1, c1}}, gp.grid);
      correct_words = np_words(bundles[0]);
      correct_words.push_back("and");
      for (const auto& w : np_words(bundles[1])) correct_words.push_back(w);
      auto swapped = bundles;
      std::swap(swapped[0].color, swapped[1].color);
      wrong_words = np_words(swapped[0]);
      wrong_words.push_back("and");
      for (const auto& w : np_words(swapped[1])) wrong_words.push_back(w);
    } else {
      if (bundles[0].color == bundles[1].color && bundles[0].shape == bundles[1].shape) continue;
      const std::vector<Predicate> preds = {rand_pred(rng)};
      const auto cells = place_chain(rng, gp.grid, preds);
      if (cells.empty()) continue;
      scene = scene_from(bundles, cells, gp.grid);
      correct_words = chain_words(bundles, preds);
      wrong_words = chain_words(bundles, {inverse_predicate(preds[0])});
    }
    if (!caption_true(correct_words, scene) || caption_true(wrong_words, scene)) continue;

    TaskInstance t;
    t.kind = TaskKind::AroSingle;
    t.task_id = seed;
    t.scenes = {scene};
    t.images = {render(scene, gp.resolution)};
    const TemplateKind kind = attribution ? TemplateKind::Attribute : TemplateKind::Relation;
    const std::size_t correct_at = rng.index(2);
    if (correct_at == 0) {
      t.captions = {make_caption(correct_words, kind, gp.max_seq_len), make_caption(wrong_words, kind, gp.max_seq_len)};
    } else {
      t.captions = {make_caption(wrong_words, kind, gp.max_seq_len), make_caption(correct_words, kind, gp.max_seq_len)};
    }
    t.correct = static_cast<int>(correct_at);
    t.tags = {attribution ? "object" : "relation"};
    t.predicate_count = attribution ? 0 : 1;
    return t;
  }
  throw std::runtime_error("generate_aro_task: no valid construction after 1000 attempts");
}

inline int class_id_of(ColorKind c, ShapeKind s) { return static_cast<int>(c) * 3 + static_cast<int>(s); }

inline std::vector<std::string> class_prompt_words(int class_id) {
  const auto color = static_cast<ColorKind>(class_id / 3);
  const auto shape = static_cast<ShapeKind>(class_id % 3);
  return {"a", "photo", "of", "a", color_word(color), shape_word(shape)};
}

inline TaskInstance generate_zeroshot_task(std::uint64_t seed, const GenParams& gp = {}) {
  using namespace gendetail;
  Rng rng = Rng(seed).fork(37);
  const Bundle b{rand_color(rng), rand_shape(rng)};
  const int r = static_cast<int>(rng.index(static_cast<std::size_t>(gp.grid)));
  const int c = static_cast<int>(rng.index(static_cast<std::size_t>(gp.grid)));
  const Scene scene = scene_from({b}, {{r, c}}, gp.grid);
  TaskInstance t;
  t.kind = TaskKind::ZeroshotClass;
  t.task_id = seed;
  t.scenes = {scene};
  t.images = {render(scene, gp.resolution)};
  t.class_id = class_id_of(b.color, b.shape);
  t.predicate_count = 0;
  return t;
}

struct CorpusItem {
  Tensor image;
  Caption caption;
  Scene scene;
};

// Single-scene image-caption pairs covering every caption template except
// the shuffled one; the fine-tuning and pretraining data.
inline std::vector<CorpusItem> generate_corpus(long n, std::uint64_t seed, const GenParams& gp = {}) {
  using namespace gendetail;
  if (n <= 0) throw std::invalid_argument("generate_corpus: n must be positive, got " + std::to_string(n));
  Rng master = Rng(seed).fork(41);
  std::vector<CorpusItem> out;
  out.reserve(static_cast<std::size_t>(n));
  std::uint64_t attempt = 0;
  while (out.size() < static_cast<std::size_t>(n)) {
    if (++attempt > static_cast<std::uint64_t>(n) * 1000)
      throw std::runtime_error("generate_corpus: too many rejected attempts");
    Rng rng = master.fork(attempt);
    const double u = rng.uniform();
    CorpusItem item;
    if (u < 0.45) {
      std::vector<Bundle> bundles = {{rand_color(rng), rand_shape(rng)}, {rand_color(rng), rand_shape(rng)}};
      if (bundles[0].color == bundles[1].color && bundles[0].shape == bundles[1].shape) continue;
      const std::vector<Predicate> preds = {rand_pred(rng)};
      const auto cells = place_chain(rng, gp.grid, preds);
      if (cells.empty()) continue;
      item.scene = scene_from(bundles, cells, gp.grid);
      item.caption = make_caption(chain_words(bundles, preds), TemplateKind::Relation, gp.max_seq_len);
    } else if (u < 0.75) {
      std::vector<Bundle> bundles = {{rand_color(rng), rand_shape(rng)}, {rand_color(rng), rand_shape(rng)}};
      if (bundles[0].color == bundles[1].color && bundles[0].shape == bundles[1].shape) continue;
      const int r0 = static_cast<int>(rng.index(static_cast<std::size_t>(gp.grid)));
      const int c0 = static_cast<int>(rng.index(static_cast<std::size_t>(gp.grid)));
      int r1 = r0, c1 = c0;
      while (r1 == r0 && c1 == c0) {
        r1 = static_cast<int>(rng.index(static_cast<std::size_t>(gp.grid)));
        c1 = static_cast<int>(rng.index(static_cast<std::size_t>(gp.grid)));
      }
      item.scene = scene_from(bundles, {{r0, c0}, {r1, c1}}, gp.grid);
      std::vector<std::string> words = np_words(bundles[0]);
      words.push_back("and");
      for (const auto& w : np_words(bundles[1])) words.push_back(w);
      item.caption = make_caption(words, TemplateKind::Attribute, gp.max_seq_len);
    } else if (u < 0.90) {
      const Bundle b{rand_color(rng), rand_shape(rng)};
      const int r = static_cast<int>(rng.index(static_cast<std::size_t>(gp.grid)));
      const int c = static_cast<int>(rng.index(static_cast<std::size_t>(gp.grid)));
      item.scene = scene_from({b}, {{r, c}}, gp.grid);
      item.caption = make_caption(np_words(b), TemplateKind::Object, gp.max_seq_len);
    } else {
      const Bundle b{rand_color(rng), rand_shape(rng)};
      const int r = static_cast<int>(rng.index(static_cast<std::size_t>(gp.grid)));
      const int c = static_cast<int>(rng.index(static_cast<std::size_t>(gp.grid)));
      item.scene = scene_from({b}, {{r, c}}, gp.grid);
      std::vector<std::string> words = {"a", "photo", "of"};
      for (const auto& w : np_words(b)) words.push_back(w);
      item.caption = make_caption(words, TemplateKind::ClassPrompt, gp.max_seq_len);
    }
    item.image = render(item.scene, gp.resolution);
    out.push_back(std::move(item));
  }
  return out;
}

// ---------------------------------------------------------------------------
// split assembly
// ---------------------------------------------------------------------------

struct BenchConfig {
  std::uint64_t seed = 1;
  GenParams gen;
  std::size_t winoground_n = 400;
  std::size_t aro_attribution_n = 400;
  std::size_t aro_relation_n = 400;
  std::size_t ordering_n = 200;
  std::size_t zeroshot_n = 200;
  // winoground swap mix; the "both" slice mirrors its rarity in the original
  double frac_object = 0.30;
  double frac_relation = 0.375;
  double frac_attribute = 0.275;
  // remainder is "both"
};

struct BenchmarkSplits {
  std::vector<TaskInstance> winoground;
  std::vector<TaskInstance> aro_attribution;
  std::vector<TaskInstance> aro_relation;
  std::vector<TaskInstance> ordering;
  std::vector<TaskInstance> zeroshot;
};

inline BenchmarkSplits generate_benchmarks(const BenchConfig& cfg) {
  BenchmarkSplits out;
  Rng master(cfg.seed);
  const Rng wino = master.fork(101), attr = master.fork(102), rel = master.fork(103), ord = master.fork(104),
            zs = master.fork(105);
  for (std::size_t i = 0; i < cfg.winoground_n; ++i) {
    const double u = static_cast<double>(i) / static_cast<double>(cfg.winoground_n);
    SwapKind kind = SwapKind::Both;
    if (u < cfg.frac_object) kind = SwapKind::Object;
    else if (u < cfg.frac_object + cfg.frac_relation) kind = SwapKind::Relation;
    else if (u < cfg.frac_object + cfg.frac_relation + cfg.frac_attribute) kind = SwapKind::Attribute;
    auto t = generate_winoground_task(wino.derive(i + 1), kind, cfg.gen);
    t.task_id = i;
    out.winoground.push_back(std::move(t));
  }
  for (std::size_t i = 0; i < cfg.aro_attribution_n; ++i) {
    auto t = generate_aro_task(attr.derive(i + 1), true, cfg.gen);
    t.task_id = i;
    out.aro_attribution.push_back(std::move(t));
  }
  for (std::size_t i = 0; i < cfg.aro_relation_n; ++i) {
    auto t = generate_aro_task(rel.derive(i + 1), false, cfg.gen);
    t.task_id = i;
    out.aro_relation.push_back(std::move(t));
  }
  for (std::size_t i = 0; i < cfg.ordering_n; ++i) {
    auto t = generate_ordering_task(ord.derive(i + 1), cfg.gen);
    t.task_id = i;
    out.ordering.push_back(std::move(t));
  }
  for (std::size_t i = 0; i < cfg.zeroshot_n; ++i) {
    auto t = generate_zeroshot_task(zs.derive(i + 1), cfg.gen);
    t.task_id = i;
    out.zeroshot.push_back(std::move(t));
  }
  return out;
}

}  // namespace sdsclip::data
