#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace uva {

/// Error category, mirrored one-to-one by the C API status codes.
enum class ErrorKind {
  InvalidArgument,
  Parse,
  Validation,
  Io,
  Exists,
  HashMismatch,
  Runtime,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Malformed input; carries the 1-based line number when one applies (0 otherwise).
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(ErrorKind::Parse, line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

inline Error invalid_argument(const std::string& what) { return Error(ErrorKind::InvalidArgument, what); }
inline Error validation_error(const std::string& what) { return Error(ErrorKind::Validation, what); }
inline Error io_error(const std::string& what) { return Error(ErrorKind::Io, what); }
inline Error runtime_error(const std::string& what) { return Error(ErrorKind::Runtime, what); }

/// splitmix64 finalizer; used to derive independent seeds from (seed, stream).
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix64(mix64(seed) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

/// Portable random source. The standard distributions are implementation
/// defined, so bounded integers, reals and normals are derived here directly
/// from the mt19937_64 output stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);
  /// Uniform real in [0, 1).
  double uniform();
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

std::string sha256_hex(std::span<const std::byte> data);
std::string sha256_hex(std::string_view text);
std::string sha256_file(const std::string& path);

/// Shortest round-trip decimal representation of a double.
std::string format_double(double v);
/// Strict parse of a full string as a double; throws ParseError on failure.
double parse_double(std::string_view text, std::size_t line = 0);

std::vector<std::string_view> split(std::string_view s, char delim);
std::string_view trim(std::string_view s);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

inline constexpr const char* kToolkitVersion = "0.3.0";

}  // namespace uva
