#ifndef DAR_CORE_COMMON_HPP
#define DAR_CORE_COMMON_HPP

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dar {

enum class ErrorCode {
  InvalidArgument,
  Io,
  MissingDependency,
  Numeric,
  Internal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool ok, ErrorCode code, const std::string& message) {
  if (!ok) fail(code, message);
}

// Deterministic RNG with distributions implemented here so that streams are
// bit-identical across standard libraries (std distributions are not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Independent stream derived from (seed, stream id).
  static Rng derive(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [lo, hi], inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  // Standard normal via Box-Muller.
  double normal();

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// FNV-1a 64-bit, used for artifact digests in run manifests.
std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t state = 0xcbf29ce484222325ull);
std::uint64_t fnv1a64_file(const std::filesystem::path& path);
// Digest of a directory tree: sorted relative paths hashed with their bytes.
std::uint64_t fnv1a64_dir(const std::filesystem::path& dir);
std::string hex64(std::uint64_t value);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// Minimal CSV emitter; fields with commas/quotes are quoted.
class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path);
  ~CsvWriter();
  void row(const std::vector<std::string>& fields);
  static std::string num(double v);

 private:
  struct Impl;
  Impl* impl_;
};

}  // namespace dar

#endif
