#pragma once

#include <cstddef>

// Process-wide allocation accounting. The library replaces the global
// operator new/delete family, so every heap allocation made through them is
// counted (malloc called directly, e.g. by the OpenMP runtime, is not).
namespace gnnforge::memtrack {

std::size_t live_bytes() noexcept;
std::size_t peak_bytes() noexcept;
std::size_t largest_allocation() noexcept;
std::size_t allocation_count() noexcept;

/// Count allocations of at least `bytes` from now on (0 disables).
void set_watch_threshold(std::size_t bytes) noexcept;
std::size_t watched_count() noexcept;

/// Resets peak and largest-allocation to the current live state.
void reset_peak() noexcept;

/// Measures allocation behaviour relative to the live bytes at construction.
class Scope {
 public:
  Scope() noexcept;
  std::size_t baseline() const noexcept { return baseline_; }
  /// Peak live bytes above the baseline since construction.
  std::size_t peak_above_baseline() const noexcept;

 private:
  std::size_t baseline_;
};

}  // namespace gnnforge::memtrack
