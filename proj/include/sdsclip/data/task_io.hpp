#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdsclip/data/benchmark.hpp"

namespace sdsclip::data {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// base64 over raw 8-bit-per-channel image payloads (channel, row, column order)
// ---------------------------------------------------------------------------

namespace b64 {

inline const char* alphabet() { return "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/"; }

inline std::string encode(const std::vector<std::uint8_t>& bytes) {
  const char* tab = alphabet();
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  while (i + 3 <= bytes.size()) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += tab[(v >> 18) & 63];
    out += tab[(v >> 12) & 63];
    out += tab[(v >> 6) & 63];
    out += tab[v & 63];
    i += 3;
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const std::uint32_t v = bytes[i] << 16;
    out += tab[(v >> 18) & 63];
    out += tab[(v >> 12) & 63];
    out += "==";
  } else if (rest == 2) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += tab[(v >> 18) & 63];
    out += tab[(v >> 12) & 63];
    out += tab[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

inline std::vector<std::uint8_t> decode(const std::string& text) {
  std::vector<int> rev(256, -1);
  const char* tab = alphabet();
  for (int i = 0; i < 64; ++i) rev[static_cast<unsigned char>(tab[i])] = i;
  std::vector<std::uint8_t> out;
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=') break;
    const int v = rev[static_cast<unsigned char>(c)];
    if (v < 0) throw std::runtime_error("base64: invalid character");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xff));
    }
  }
  return out;
}

}  // namespace b64

inline std::string image_to_b64(const Tensor& img) {
  std::vector<std::uint8_t> bytes(img.numel());
  const auto& d = img.data();
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const double v = std::min(1.0, std::max(0.0, d[i]));
    bytes[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return b64::encode(bytes);
}

inline Tensor image_from_b64(const std::string& text) {
  const auto bytes = b64::decode(text);
  if (bytes.size() % 3 != 0) throw std::runtime_error("image payload is not 3-channel");
  const auto res = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(bytes.size() / 3))));
  if (res * res * 3 != bytes.size()) throw std::runtime_error("image payload is not square");
  std::vector<double> d(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) d[i] = static_cast<double>(bytes[i]) / 255.0;
  return Tensor({3, res, res}, std::move(d));
}

// ---------------------------------------------------------------------------
// task (de)serialization
// ---------------------------------------------------------------------------

inline json task_to_json(const TaskInstance& t) {
  json j;
  j["kind"] = task_kind_name(t.kind);
  j["task_id"] = t.task_id;
  json images = json::array();
  for (const auto& img : t.images) images.push_back(image_to_b64(img));
  j["images"] = images;
  json captions = json::array(), token_ids = json::array(), kinds = json::array();
  for (const auto& c : t.captions) {
    captions.push_back(c.text());
    token_ids.push_back(c.token_ids);
    kinds.push_back(template_kind_name(c.kind));
  }
  j["captions"] = captions;
  j["token_ids"] = token_ids;
  j["caption_kinds"] = kinds;
  j["tags"] = t.tags;
  j["predicate_count"] = t.predicate_count;
  if (!t.correct_caption_per_image.empty()) j["correct_caption_per_image"] = t.correct_caption_per_image;
  if (t.correct >= 0) j["correct"] = t.correct;
  if (t.class_id >= 0) j["class_id"] = t.class_id;
  return j;
}

inline TemplateKind template_kind_from(const std::string& name) {
  if (name == "object") return TemplateKind::Object;
  if (name == "attribute") return TemplateKind::Attribute;
  if (name == "relation") return TemplateKind::Relation;
  if (name == "ordering-shuffled") return TemplateKind::OrderingShuffled;
  if (name == "class-prompt") return TemplateKind::ClassPrompt;
  throw std::runtime_error("unknown caption kind " + name);
}

inline TaskKind task_kind_from(const std::string& name) {
  if (name == "winoground-pair") return TaskKind::WinogroundPair;
  if (name == "aro-single") return TaskKind::AroSingle;
  if (name == "ordering-single") return TaskKind::OrderingSingle;
  if (name == "zeroshot-class") return TaskKind::ZeroshotClass;
  throw std::runtime_error("unknown task kind " + name);
}

inline TaskInstance task_from_json(const json& j) {
  TaskInstance t;
  t.kind = task_kind_from(j.at("kind").get<std::string>());
  t.task_id = j.at("task_id").get<std::uint64_t>();
  for (const auto& img : j.at("images")) t.images.push_back(image_from_b64(img.get<std::string>()));
  const auto& captions = j.at("captions");
  const auto& token_ids = j.at("token_ids");
  const auto& kinds = j.at("caption_kinds");
  for (std::size_t i = 0; i < captions.size(); ++i) {
    Caption c;
    const std::string text = captions[i].get<std::string>();
    std::istringstream in(text);
    std::string w;
    while (in >> w) c.words.push_back(w);
    c.token_ids = token_ids[i].get<std::vector<int>>();
    c.kind = template_kind_from(kinds[i].get<std::string>());
    t.captions.push_back(std::move(c));
  }
  t.tags = j.at("tags").get<std::vector<std::string>>();
  t.predicate_count = j.at("predicate_count").get<int>();
  if (j.contains("correct_caption_per_image"))
    t.correct_caption_per_image = j.at("correct_caption_per_image").get<std::vector<int>>();
  if (j.contains("correct")) t.correct = j.at("correct").get<int>();
  if (j.contains("class_id")) t.class_id = j.at("class_id").get<int>();
  return t;
}

inline void write_tasks_jsonl(const std::string& path, const std::vector<TaskInstance>& tasks) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  for (const auto& t : tasks) f << task_to_json(t).dump() << "\n";
  if (!f) throw std::runtime_error("short write to " + path);
}

inline std::vector<TaskInstance> read_tasks_jsonl(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<TaskInstance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(task_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

// corpus persistence shares the line format: one image, one caption
inline void write_corpus_jsonl(const std::string& path, const std::vector<CorpusItem>& corpus) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  for (const auto& item : corpus) {
    json j;
    j["image"] = image_to_b64(item.image);
    j["caption"] = item.caption.text();
    j["token_ids"] = item.caption.token_ids;
    j["caption_kind"] = template_kind_name(item.caption.kind);
    f << j.dump() << "\n";
  }
  if (!f) throw std::runtime_error("short write to " + path);
}

struct CorpusPair {
  Tensor image;
  Caption caption;
};

inline std::vector<CorpusPair> read_corpus_jsonl(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<CorpusPair> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      CorpusPair p;
      p.image = image_from_b64(j.at("image").get<std::string>());
      const std::string text = j.at("caption").get<std::string>();
      std::istringstream in(text);
      std::string w;
      while (in >> w) p.caption.words.push_back(w);
      p.caption.token_ids = j.at("token_ids").get<std::vector<int>>();
      p.caption.kind = template_kind_from(j.at("caption_kind").get<std::string>());
      out.push_back(std::move(p));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace sdsclip::data
