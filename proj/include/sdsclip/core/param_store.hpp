#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdsclip/core/tensor.hpp"

namespace sdsclip {

// Flat binary checkpoint format:
//   magic "SDSC", version u32, then per entry:
//   name length u32 + UTF-8 name, dtype tag u8 (1 = f64, 2 = f32),
//   rank u32, dims u64 each, payload little-endian.
// Entries are written in name order, so equal stores serialize to equal bytes.
inline constexpr char kStoreMagic[4] = {'S', 'D', 'S', 'C'};
inline constexpr std::uint32_t kStoreVersion = 1;

namespace detail {

inline void put_bytes(std::string& out, const void* p, std::size_t n) {
  out.append(static_cast<const char*>(p), n);
}

inline void put_u32(std::string& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  put_bytes(out, b, 4);
}

inline void put_u64(std::string& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  put_bytes(out, b, 8);
}

template <typename S>
void put_scalar(std::string& out, S v) {
  if constexpr (sizeof(S) == 8) {
    put_u64(out, std::bit_cast<std::uint64_t>(static_cast<double>(v)));
  } else {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    put_u32(out, bits);
  }
}

class ByteReader {
 public:
  ByteReader(const std::string& bytes) : bytes_(bytes) {}
  bool eof() const { return pos_ >= bytes_.size(); }
  void read(void* p, std::size_t n) {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("param store: truncated file");
    std::memcpy(p, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    unsigned char b[4];
    read(b, 4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  std::uint64_t u64() {
    unsigned char b[8];
    read(b, 8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  std::string str(std::size_t n) {
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

// Named parameter collection. Frozen entries keep empty grad slots; the tape
// only deposits gradients into trainable entries.
template <typename S>
class ParamStoreT {
 public:
  struct Entry {
    TensorT<S> tensor;
    bool trainable = true;
    TensorT<S> grad;  // empty until backward populates it
  };

  void insert(const std::string& name, TensorT<S> tensor, bool trainable = true) {
    if (entries_.count(name)) throw std::invalid_argument("param store: duplicate name " + name);
    if (tensor.empty()) throw std::invalid_argument("param store: empty tensor for " + name);
    entries_[name] = Entry{std::move(tensor), trainable, {}};
  }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  const Entry& entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::invalid_argument("param store: unknown name " + name);
    return it->second;
  }

  const TensorT<S>& tensor(const std::string& name) const { return entry(name).tensor; }

  void set_tensor(const std::string& name, TensorT<S> t) {
    auto& e = mutable_entry(name);
    if (t.shape() != e.tensor.shape())
      throw std::invalid_argument("param store: shape change for " + name + ": " + shape_str(e.tensor.shape()) +
                                  " -> " + shape_str(t.shape()));
    e.tensor = std::move(t).detached();
  }

  void set_trainable(const std::string& name, bool trainable) { mutable_entry(name).trainable = trainable; }

  void accumulate_grad(const std::string& name, const std::vector<S>& g) {
    auto& e = mutable_entry(name);
    if (g.size() != e.tensor.numel())
      throw std::invalid_argument("param store: grad size mismatch for " + name);
    if (e.grad.empty()) {
      e.grad = TensorT<S>(e.tensor.shape(), g);
    } else {
      std::vector<S> acc = e.grad.data();
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
      e.grad = TensorT<S>(e.tensor.shape(), std::move(acc));
    }
  }

  void clear_grads() {
    for (auto& [name, e] : entries_) e.grad = {};
  }

  std::vector<std::string> names(const std::string& prefix = "") const {
    std::vector<std::string> out;
    for (const auto& [name, e] : entries_) {
      if (name.rfind(prefix, 0) == 0) out.push_back(name);
    }
    return out;
  }

  std::size_t size() const { return entries_.size(); }

  std::size_t numel(const std::string& prefix = "") const {
    std::size_t n = 0;
    for (const auto& [name, e] : entries_) {
      if (name.rfind(prefix, 0) == 0) n += e.tensor.numel();
    }
    return n;
  }

  // serialized bytes of entries under prefix, ordered by name
  std::string serialize(const std::string& prefix = "") const { return serialize_prefixes({prefix}); }

  std::string serialize_prefixes(const std::vector<std::string>& prefixes) const {
    std::string out;
    detail::put_bytes(out, kStoreMagic, 4);
    detail::put_u32(out, kStoreVersion);
    for (const auto& [name, e] : entries_) {
      bool match = false;
      for (const auto& prefix : prefixes) match = match || name.rfind(prefix, 0) == 0;
      if (!match) continue;
      detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
      detail::put_bytes(out, name.data(), name.size());
      out.push_back(static_cast<char>(sizeof(S) == 8 ? 1 : 2));
      detail::put_u32(out, static_cast<std::uint32_t>(e.tensor.rank()));
      for (std::size_t d : e.tensor.shape()) detail::put_u64(out, d);
      for (S v : e.tensor.data()) detail::put_scalar<S>(out, v);
    }
    return out;
  }

  void save(const std::string& path, const std::string& prefix = "") const {
    save_prefixes(path, {prefix});
  }

  void save_prefixes(const std::string& path, const std::vector<std::string>& prefixes) const {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("param store: cannot open " + path + " for writing");
    const std::string bytes = serialize_prefixes(prefixes);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("param store: short write to " + path);
  }

  static ParamStoreT load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("param store: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
  }

  static ParamStoreT deserialize(const std::string& bytes) {
    detail::ByteReader r(bytes);
    char magic[4];
    r.read(magic, 4);
    if (std::memcmp(magic, kStoreMagic, 4) != 0) throw std::runtime_error("param store: bad magic");
    const std::uint32_t version = r.u32();
    if (version != kStoreVersion)
      throw std::runtime_error("param store: unsupported version " + std::to_string(version));
    ParamStoreT store;
    while (!r.eof()) {
      const std::uint32_t name_len = r.u32();
      const std::string name = r.str(name_len);
      char tag;
      r.read(&tag, 1);
      const char want = (sizeof(S) == 8) ? 1 : 2;
      if (tag != want)
        throw std::runtime_error("param store: dtype tag mismatch for " + name);
      const std::uint32_t rank = r.u32();
      Shape shape(rank);
      for (auto& d : shape) d = static_cast<std::size_t>(r.u64());
      std::vector<S> data(shape_numel(shape));
      for (auto& v : data) {
        if constexpr (sizeof(S) == 8) {
          v = static_cast<S>(std::bit_cast<double>(r.u64()));
        } else {
          v = static_cast<S>(std::bit_cast<float>(r.u32()));
        }
      }
      store.insert(name, TensorT<S>(std::move(shape), std::move(data)));
    }
    return store;
  }

  std::uint64_t subtree_hash(const std::string& prefix = "") const { return detail::fnv1a(serialize(prefix)); }

  // Deep-copies entries under prefix into dst (names kept).
  void copy_into(ParamStoreT& dst, const std::string& prefix = "") const {
    for (const auto& [name, e] : entries_) {
      if (name.rfind(prefix, 0) != 0) continue;
      dst.insert(name, e.tensor, e.trainable);
    }
  }

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  Entry& mutable_entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::invalid_argument("param store: unknown name " + name);
    return it->second;
  }

  std::map<std::string, Entry> entries_;
};

using ParamStore = ParamStoreT<double>;

inline std::string hash_hex(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

}  // namespace sdsclip
