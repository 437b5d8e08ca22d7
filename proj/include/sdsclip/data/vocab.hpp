#pragma once

#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdsclip::data {

// Closed vocabulary over the caption grammar. Special ids are fixed:
// PAD = 0, BOS = 1, EOS = 2; words follow in sorted order.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;

  static const Vocabulary& standard() {
    static const Vocabulary v({"a", "above", "and", "below", "blue", "circle", "green", "left", "of", "photo",
                               "red", "right", "square", "triangle", "yellow"});
    return v;
  }

  explicit Vocabulary(const std::vector<std::string>& words) {
    id_to_word_ = {"<pad>", "<bos>", "<eos>"};
    for (const auto& w : words) {
      if (word_to_id_.count(w)) throw std::invalid_argument("vocabulary: duplicate word " + w);
      word_to_id_[w] = static_cast<int>(id_to_word_.size());
      id_to_word_.push_back(w);
    }
  }

  int id(const std::string& word) const {
    auto it = word_to_id_.find(word);
    if (it == word_to_id_.end()) throw std::invalid_argument("vocabulary: unknown word '" + word + "'");
    return it->second;
  }

  const std::string& word(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_word_.size())
      throw std::invalid_argument("vocabulary: id " + std::to_string(id) + " out of range");
    return id_to_word_[static_cast<std::size_t>(id)];
  }

  std::size_t size() const { return id_to_word_.size(); }

  std::vector<int> tokenize(const std::string& text, std::size_t max_len) const {
    std::vector<int> ids = {kBos};
    std::istringstream in(text);
    std::string w;
    while (in >> w) ids.push_back(id(w));
    ids.push_back(kEos);
    if (ids.size() > max_len)
      throw std::invalid_argument("vocabulary: caption '" + text + "' exceeds max length " +
                                  std::to_string(max_len));
    ids.resize(max_len, kPad);
    return ids;
  }

  std::string detokenize(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
      if (id == kBos || id == kPad) continue;
      if (id == kEos) break;
      if (!out.empty()) out += ' ';
      out += word(id);
    }
    return out;
  }

 private:
  std::map<std::string, int> word_to_id_;
  std::vector<std::string> id_to_word_;
};

}  // namespace sdsclip::data
