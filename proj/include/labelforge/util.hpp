#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace labelforge {

std::string sha256_hex(std::string_view data);

/// ISO-8601 UTC timestamp with millisecond precision.
std::string utc_timestamp();

std::string trim(std::string_view s);
std::string ascii_lower(std::string_view s);

/// Hex string from a cryptographically secure source.
std::string random_token(std::size_t bytes = 16);

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary and renames over the target.
void atomic_write_file(const std::filesystem::path& path, std::string_view content);

/// Deterministic generator with a portable bounded draw, so seeded shuffles
/// give the same permutation on every standard library.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();
  /// Uniform in [0, bound); bound > 0.
  std::uint64_t below(std::uint64_t bound);
  double unit();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace labelforge
