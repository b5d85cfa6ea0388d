#pragma once

#include <cassert>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <type_traits>
#include <vector>

namespace wfq {

// One machine word. Cells hold either a small integer (head positions,
// last[] indices), a pointer to an immutable record, or kUnset.
using Word = std::uint64_t;

// Universal "blank" value. Head cells are initialized to 1 explicitly, super
// values are always >= 1 and pointers are never null, so 0 is free.
inline constexpr Word kUnset = 0;

inline Word pack_ptr(const void* p) { return reinterpret_cast<Word>(p); }
template <class T>
inline T* unpack_ptr(Word w) { return reinterpret_cast<T*>(w); }

// Identifies one queue operation: process id plus the per-process sequence
// number (1-based, matching the op's block index in the process's leaf).
struct OpId {
  int pid = -1;
  std::int64_t seq = 0;
  friend bool operator==(const OpId& a, const OpId& b) {
    return a.pid == b.pid && a.seq == b.seq;
  }
  friend bool operator<(const OpId& a, const OpId& b) {
    return a.pid != b.pid ? a.pid < b.pid : a.seq < b.seq;
  }
};

enum class OpKind : std::uint8_t { Enq, Deq, Raw };

// Per-process instrumentation counters. `steps` counts shared-cell accesses
// plus immutable-record fetches; CAS counters count cell CAS only.
struct Metrics {
  std::uint64_t steps = 0;
  std::uint64_t cas_attempts = 0;
  std::uint64_t cas_successes = 0;
  std::int64_t container_peak = 0;

  Metrics& operator+=(const Metrics& o) {
    steps += o.steps;
    cas_attempts += o.cas_attempts;
    cas_successes += o.cas_successes;
    if (o.container_peak > container_peak) container_peak = o.container_peak;
    return *this;
  }
};

// Deterministic, platform-independent RNG (splitmix64).
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  // Uniform in [0, n) without implementation-defined distributions.
  std::uint64_t below(std::uint64_t n) {
    assert(n > 0);
    return next() % n;
  }
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

// Bump allocator for immutable records (blocks, tree versions, chunks).
// Records are never destroyed individually; retiring a record only means it
// becomes unreachable from the data structure. The arena frees everything
// when the owning queue instance goes away.
class Arena {
 public:
  Arena() = default;
  Arena(const Arena&) = delete;
  Arena& operator=(const Arena&) = delete;

  void* allocate(std::size_t bytes, std::size_t align) {
    std::size_t off = (used_ + align - 1) & ~(align - 1);
    if (cur_ == nullptr || off + bytes > cap_) {
      cap_ = std::max<std::size_t>(kChunkBytes, bytes + align);
      chunks_.emplace_back(new char[cap_]);  // no zero-fill
      cur_ = chunks_.back().get();
      off = (reinterpret_cast<std::uintptr_t>(cur_) % align == 0)
                ? 0
                : align;  // chunk storage is max-aligned anyway
    }
    void* p = cur_ + off;
    used_ = off + bytes;
    return p;
  }

  template <class T, class... Args>
  T* make(Args&&... args) {
    static_assert(std::is_trivially_destructible_v<T>,
                  "arena records must not need destruction");
    void* p = allocate(sizeof(T), alignof(T));
    return new (p) T(std::forward<Args>(args)...);
  }

  std::size_t bytes_allocated() const {
    return chunks_.size() * kChunkBytes;
  }

 private:
  static constexpr std::size_t kChunkBytes = 1 << 20;
  std::vector<std::unique_ptr<char[]>> chunks_;
  char* cur_ = nullptr;
  std::size_t used_ = 0;
  std::size_t cap_ = 0;
};

// FNV-1a, used for memo keys and history hashing.
inline std::uint64_t fnv1a(std::uint64_t h, std::uint64_t v) {
  for (int i = 0; i < 8; i++) {
    h ^= (v >> (8 * i)) & 0xff;
    h *= 0x100000001b3ull;
  }
  return h;
}
inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;

inline int ceil_log2(std::int64_t n) {
  int k = 0;
  std::int64_t v = 1;
  while (v < n) {
    v <<= 1;
    k++;
  }
  return k;
}

inline std::int64_t next_pow2(std::int64_t n) {
  std::int64_t v = 1;
  while (v < n) v <<= 1;
  return v;
}

}  // namespace wfq
