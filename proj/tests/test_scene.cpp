#include <gtest/gtest.h>

#include <map>
#include <set>
#include <string>
#include <vector>

#include "sdsclip/data/benchmark.hpp"
#include "sdsclip/data/scene.hpp"
#include "sdsclip/data/vocab.hpp"

using namespace sdsclip;
using namespace sdsclip::data;

namespace {

// Independent constraint-checker oracle. Deliberately re-implemented against
// the raw word sequence and cell coordinates, without the library's parser:
// scans noun phrases and predicate words linearly and checks coordinates.
struct OracleNp {
  std::string color, shape;
};

bool oracle_caption_true(const std::vector<std::string>& w, const Scene& scene) {
  static const std::set<std::string> colors = {"red", "green", "blue", "yellow"};
  static const std::set<std::string> shapes = {"circle", "square", "triangle"};
  std::vector<OracleNp> nps;
  std::vector<std::string> preds;
  std::size_t i = 0;
  bool conjunction = false;
  if (w.size() >= 3 && w[0] == "a" && w[1] == "photo" && w[2] == "of") i = 3;
  while (i < w.size()) {
    if (w[i] == "a" && i + 2 < w.size() && colors.count(w[i + 1]) && shapes.count(w[i + 2])) {
      nps.push_back({w[i + 1], w[i + 2]});
      i += 3;
    } else if (w[i] == "and") {
      conjunction = true;
      ++i;
    } else if (w[i] == "left" || w[i] == "right") {
      if (i + 1 >= w.size() || w[i + 1] != "of") return false;
      preds.push_back(w[i]);
      i += 2;
    } else if (w[i] == "above" || w[i] == "below") {
      preds.push_back(w[i]);
      ++i;
    } else {
      return false;  // ungrammatical
    }
  }
  if (conjunction && !preds.empty()) return false;
  if (!conjunction && !preds.empty() && preds.size() + 1 != nps.size()) return false;

  // resolve each noun phrase to the unique matching object (test scenes use
  // distinct bundles, so lookup is unambiguous)
  std::vector<int> resolved;
  for (const auto& np : nps) {
    int found = -1;
    for (std::size_t o = 0; o < scene.objects.size(); ++o) {
      if (color_word(scene.objects[o].color) == np.color && shape_word(scene.objects[o].shape) == np.shape) {
        if (found >= 0) return false;  // ambiguous, not used by these tests
        found = static_cast<int>(o);
      }
    }
    if (found < 0) return false;
    resolved.push_back(found);
  }
  std::set<int> uniq(resolved.begin(), resolved.end());
  if (uniq.size() != resolved.size()) return false;
  for (std::size_t p = 0; p < preds.size(); ++p) {
    const auto& a = scene.objects[static_cast<std::size_t>(resolved[p])];
    const auto& b = scene.objects[static_cast<std::size_t>(resolved[p + 1])];
    bool ok = false;
    if (preds[p] == "left") ok = a.row == b.row && a.col < b.col;
    if (preds[p] == "right") ok = a.row == b.row && a.col > b.col;
    if (preds[p] == "above") ok = a.col == b.col && a.row < b.row;
    if (preds[p] == "below") ok = a.col == b.col && a.row > b.row;
    if (!ok) return false;
  }
  return true;
}

}  // namespace

TEST(Render, EmptySceneIsWhite) {
  Scene s;
  s.grid_rows = s.grid_cols = 2;
  Tensor img = render(s, 32);
  for (std::size_t i = 0; i < img.numel(); ++i) ASSERT_DOUBLE_EQ(img[i], 1.0);
}

TEST(Render, RedCircleStaysInsideItsCell) {
  Scene s;
  s.grid_rows = s.grid_cols = 2;
  s.objects.push_back({ShapeKind::Circle, ColorKind::Red, 0, 0});
  Tensor img = render(s, 32);
  int red_pixels = 0;
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      const double r = img[static_cast<std::size_t>(0 * 32 * 32 + y * 32 + x)];
      const double g = img[static_cast<std::size_t>(1 * 32 * 32 + y * 32 + x)];
      const double b = img[static_cast<std::size_t>(2 * 32 * 32 + y * 32 + x)];
      const bool is_red = r == 1.0 && g == 0.0 && b == 0.0;
      const bool is_white = r == 1.0 && g == 1.0 && b == 1.0;
      ASSERT_TRUE(is_red || is_white);
      if (is_red) {
        ++red_pixels;
        ASSERT_LT(y, 16);
        ASSERT_LT(x, 16);
      }
    }
  }
  EXPECT_GT(red_pixels, 50);  // the disk actually got drawn
}

TEST(Render, Deterministic) {
  Scene s;
  s.grid_rows = s.grid_cols = 3;
  s.objects.push_back({ShapeKind::Triangle, ColorKind::Yellow, 1, 2});
  s.objects.push_back({ShapeKind::Square, ColorKind::Blue, 2, 0});
  EXPECT_TRUE(render(s, 33).same_values(render(s, 33)));
}

TEST(Render, ErrorsOnBadInput) {
  Scene s;
  s.grid_rows = s.grid_cols = 2;
  s.objects.push_back({ShapeKind::Circle, ColorKind::Red, 5, 0});
  EXPECT_THROW(render(s, 32), std::invalid_argument);
  Scene ok;
  ok.grid_rows = ok.grid_cols = 3;
  EXPECT_THROW(render(ok, 32), std::invalid_argument);  // 32 not divisible by 3
}

TEST(Tokenizer, RoundTripsEveryGrammarSentence) {
  const auto& v = Vocabulary::standard();
  Rng rng(9);
  for (int i = 0; i < 200; ++i) {
    const auto task = generate_winoground_task(rng.derive(static_cast<std::uint64_t>(i)), SwapKind::Relation);
    for (const auto& c : task.captions) {
      EXPECT_EQ(v.detokenize(c.token_ids), c.text());
      EXPECT_EQ(c.token_ids.size(), 16u);
    }
  }
}

TEST(Tokenizer, EmptyAndErrors) {
  const auto& v = Vocabulary::standard();
  const auto ids = v.tokenize("", 16);
  ASSERT_EQ(ids.size(), 16u);
  EXPECT_EQ(ids[0], Vocabulary::kBos);
  EXPECT_EQ(ids[1], Vocabulary::kEos);
  for (std::size_t i = 2; i < ids.size(); ++i) EXPECT_EQ(ids[i], Vocabulary::kPad);
  EXPECT_EQ(Vocabulary::kEos, 2);  // fixed and documented
  try {
    v.tokenize("a purple circle", 16);
    FAIL() << "expected unknown-word error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("purple"), std::string::npos);
  }
  EXPECT_THROW(v.tokenize("a red circle left of a blue square left of a red circle left of a blue square", 16),
               std::invalid_argument);
}

TEST(Winoground, PropertyMultisetAndExactlyOneScene) {
  Rng rng(1234);
  const SwapKind kinds[] = {SwapKind::Object, SwapKind::Relation, SwapKind::Attribute, SwapKind::Both};
  int checked = 0;
  for (int i = 0; i < 1050; ++i) {
    const auto task = generate_winoground_task(rng.derive(static_cast<std::uint64_t>(i)), kinds[i % 4]);
    ASSERT_EQ(task.captions.size(), 2u);
    ASSERT_EQ(task.images.size(), 2u);
    ASSERT_EQ(task.scenes.size(), 2u);
    // word multisets must be identical
    ASSERT_TRUE(word_multisets_equal(task.captions[0].words, task.captions[1].words));
    // each caption true of exactly its own scene, per the independent oracle
    ASSERT_TRUE(oracle_caption_true(task.captions[0].words, task.scenes[0]));
    ASSERT_FALSE(oracle_caption_true(task.captions[0].words, task.scenes[1]));
    ASSERT_TRUE(oracle_caption_true(task.captions[1].words, task.scenes[1]));
    ASSERT_FALSE(oracle_caption_true(task.captions[1].words, task.scenes[0]));
    ++checked;
  }
  EXPECT_GE(checked, 1000);
}

TEST(Winoground, TagsFollowSwapKind) {
  EXPECT_EQ(generate_winoground_task(7, SwapKind::Object).tags, std::vector<std::string>{"object"});
  EXPECT_EQ(generate_winoground_task(7, SwapKind::Relation).tags, std::vector<std::string>{"relation"});
  EXPECT_EQ(generate_winoground_task(7, SwapKind::Attribute).tags, std::vector<std::string>{"object"});
  EXPECT_EQ(generate_winoground_task(7, SwapKind::Both).tags, std::vector<std::string>{"both"});
}

TEST(Winoground, SameSeedSameTask) {
  const auto a = generate_winoground_task(99, SwapKind::Relation);
  const auto b = generate_winoground_task(99, SwapKind::Relation);
  ASSERT_EQ(a.captions[0].text(), b.captions[0].text());
  ASSERT_EQ(a.captions[1].text(), b.captions[1].text());
  EXPECT_TRUE(a.images[0].same_values(b.images[0]));
  EXPECT_TRUE(a.images[1].same_values(b.images[1]));
  EXPECT_EQ(a.tags, b.tags);
  EXPECT_EQ(a.predicate_count, b.predicate_count);
}

TEST(Ordering, DistractorsArePermutationsAndInvalid) {
  Rng rng(55);
  for (int i = 0; i < 100; ++i) {
    const auto task = generate_ordering_task(rng.derive(static_cast<std::uint64_t>(i)));
    ASSERT_EQ(task.captions.size(), 4u);
    ASSERT_GE(task.correct, 0);
    const auto& correct = task.captions[static_cast<std::size_t>(task.correct)];
    EXPECT_TRUE(oracle_caption_true(correct.words, task.scenes[0]));
    for (int k = 0; k < 4; ++k) {
      if (k == task.correct) continue;
      const auto& d = task.captions[static_cast<std::size_t>(k)];
      EXPECT_TRUE(word_multisets_equal(correct.words, d.words));
      EXPECT_FALSE(oracle_caption_true(d.words, task.scenes[0]));
    }
  }
}

TEST(Aro, CorrectCaptionIsUniquelyTrue) {
  Rng rng(66);
  for (int i = 0; i < 100; ++i) {
    for (bool attribution : {true, false}) {
      const auto task = generate_aro_task(rng.derive(static_cast<std::uint64_t>(2 * i + attribution)), attribution);
      ASSERT_EQ(task.captions.size(), 2u);
      const int c = task.correct;
      EXPECT_TRUE(oracle_caption_true(task.captions[static_cast<std::size_t>(c)].words, task.scenes[0]));
      EXPECT_FALSE(oracle_caption_true(task.captions[static_cast<std::size_t>(1 - c)].words, task.scenes[0]));
    }
  }
}

TEST(Corpus, SizeSemanticsAndDuplicates) {
  const auto corpus = generate_corpus(118, 7);
  EXPECT_EQ(corpus.size(), 118u);
  std::map<std::uint64_t, int> counts;
  std::set<std::string> caption_kinds;
  for (const auto& item : corpus) {
    EXPECT_TRUE(oracle_caption_true(item.caption.words, item.scene));
    counts[item.scene.hash()]++;
    caption_kinds.insert(template_kind_name(item.caption.kind));
  }
  // all template kinds except ordering-shuffled appear
  EXPECT_TRUE(caption_kinds.count("object"));
  EXPECT_TRUE(caption_kinds.count("attribute"));
  EXPECT_TRUE(caption_kinds.count("relation"));
  EXPECT_TRUE(caption_kinds.count("class-prompt"));
  EXPECT_FALSE(caption_kinds.count("ordering-shuffled"));
  // duplicate rate below 5% (hash-count oracle)
  int dups = 0;
  for (const auto& [h, c] : counts) dups += c - 1;
  EXPECT_LT(static_cast<double>(dups) / 118.0, 0.05);
}

TEST(Corpus, DisjointSeedsMostlyDisjointScenes) {
  const auto a = generate_corpus(118, 7);
  const auto b = generate_corpus(118, 8);
  std::set<std::uint64_t> ha;
  for (const auto& item : a) ha.insert(item.scene.hash());
  int overlap = 0;
  for (const auto& item : b) overlap += ha.count(item.scene.hash()) ? 1 : 0;
  EXPECT_LT(static_cast<double>(overlap) / 118.0, 0.15);
}

TEST(Corpus, RejectsNonPositiveN) {
  EXPECT_THROW(generate_corpus(0, 1), std::invalid_argument);
  EXPECT_THROW(generate_corpus(-3, 1), std::invalid_argument);
}

TEST(Benchmarks, SplitSizesAndTagCoverage) {
  BenchConfig cfg;
  cfg.seed = 3;
  cfg.winoground_n = 80;
  cfg.aro_attribution_n = 20;
  cfg.aro_relation_n = 20;
  cfg.ordering_n = 10;
  cfg.zeroshot_n = 10;
  const auto splits = generate_benchmarks(cfg);
  EXPECT_EQ(splits.winoground.size(), 80u);
  EXPECT_EQ(splits.aro_attribution.size(), 20u);
  EXPECT_EQ(splits.aro_relation.size(), 20u);
  EXPECT_EQ(splits.ordering.size(), 10u);
  EXPECT_EQ(splits.zeroshot.size(), 10u);
  std::set<std::string> tags;
  std::set<int> pred_counts;
  for (const auto& t : splits.winoground) {
    for (const auto& tag : t.tags) tags.insert(tag);
    pred_counts.insert(t.predicate_count);
  }
  EXPECT_EQ(tags, (std::set<std::string>{"object", "relation", "both"}));
  EXPECT_EQ(pred_counts, (std::set<int>{1, 2}));
}

TEST(Zeroshot, ClassIdMatchesScene) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto t = generate_zeroshot_task(s);
    ASSERT_EQ(t.scenes.size(), 1u);
    const auto& obj = t.scenes[0].objects.at(0);
    EXPECT_EQ(t.class_id, static_cast<int>(obj.color) * 3 + static_cast<int>(obj.shape));
    const auto prompt = class_prompt_words(t.class_id);
    EXPECT_TRUE(oracle_caption_true(prompt, t.scenes[0]));
  }
}
