#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace evdet {

using json = nlohmann::json;

// Error hierarchy shared by all modules. The CLI maps these onto
// machine-readable error records on stderr.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};
struct ParseError : Error {
  using Error::Error;
};
struct ValidationError : Error {
  using Error::Error;
};
struct ArgumentError : Error {
  using Error::Error;
};
struct DependencyError : Error {
  using Error::Error;
};
struct ConsistencyError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

// Non-fatal diagnostics. Operations that can warn accept an optional sink.
using Warnings = std::vector<std::string>;

inline void warn(Warnings* sink, std::string msg) {
  if (sink != nullptr) sink->push_back(std::move(msg));
}

// ---------------------------------------------------------------------------
// Deterministic randomness.
//
// Data artifacts must be byte-identical across runs for one seed, so we do
// not rely on std:: distributions (their output is implementation-defined).
// splitmix64 drives everything.

inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class DetRng {
 public:
  explicit DetRng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() { return splitmix64(state_); }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [0, n). Rejection-free modulo is fine at our scales.
  uint64_t next_below(uint64_t n) {
    return n == 0 ? 0 : next_u64() % n;
  }

  // Standard normal via Box-Muller; second value cached.
  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 1e-300) u1 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (size_t i = items.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(next_below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Hashing (FNV-1a, 64-bit) for content fingerprints and manifest checks.

inline uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a64(s.data(), s.size(), h);
}

std::string to_hex(uint64_t v);

// ---------------------------------------------------------------------------
// File helpers. Writes go through a temp file + rename so interrupted runs
// never leave a half-written artifact under its final name.

std::string read_file(const std::filesystem::path& path);
void atomic_write_file(const std::filesystem::path& path, const std::string& content);
uint64_t hash_file(const std::filesystem::path& path);

std::vector<json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records);

// Splits text on ASCII whitespace.
std::vector<std::string> split_whitespace(const std::string& text);

std::string join_tokens(const std::vector<std::string>& tokens, size_t begin, size_t end);

}  // namespace evdet
