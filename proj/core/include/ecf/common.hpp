#pragma once

#include <cstdint>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ecf {

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

template <typename Err = ShapeError>
inline void check(bool cond, const std::string& msg) {
  if (!cond) throw Err(msg);
}

inline std::string shape_str(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// Number of worker threads. Defaults to ECF_THREADS if set, otherwise the
// hardware concurrency. Values below 1 are clamped to 1.
int thread_count();

// Splits [0, n) into contiguous chunks and runs body(begin, end) on each,
// either inline (single thread) or on std::thread workers. Each index is
// processed by exactly one invocation, so functions whose output elements are
// written by exactly one index produce results independent of thread count.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& body);

// CRC-32 (IEEE 802.3, reflected) over a byte buffer, used by the checkpoint
// format to detect payload corruption.
uint32_t crc32(const void* data, size_t len, uint32_t seed = 0);

// FNV-1a 64-bit hash of a string.
uint64_t fnv1a64(const std::string& s);

}  // namespace ecf
