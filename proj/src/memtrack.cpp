#include "gnnforge/memtrack.hpp"

#include <atomic>
#include <cstdlib>
#include <new>

namespace gnnforge::memtrack {
namespace {

constexpr std::size_t kHeader = alignof(std::max_align_t);

std::atomic<std::size_t> g_live{0};
std::atomic<std::size_t> g_peak{0};
std::atomic<std::size_t> g_largest{0};
std::atomic<std::size_t> g_count{0};
std::atomic<std::size_t> g_watch{0};
std::atomic<std::size_t> g_watched{0};

void raise_to(std::atomic<std::size_t>& slot, std::size_t value) noexcept {
  std::size_t cur = slot.load(std::memory_order_relaxed);
  while (value > cur && !slot.compare_exchange_weak(cur, value, std::memory_order_relaxed)) {
  }
}

void on_alloc(std::size_t n) noexcept {
  const std::size_t live = g_live.fetch_add(n, std::memory_order_relaxed) + n;
  raise_to(g_peak, live);
  raise_to(g_largest, n);
  g_count.fetch_add(1, std::memory_order_relaxed);
  const std::size_t watch = g_watch.load(std::memory_order_relaxed);
  if (watch != 0 && n >= watch) g_watched.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace

void* tracked_alloc(std::size_t n) noexcept {
  auto* base = static_cast<unsigned char*>(std::malloc(n + kHeader));
  if (base == nullptr) return nullptr;
  *reinterpret_cast<std::size_t*>(base) = n;
  on_alloc(n);
  return base + kHeader;
}

void tracked_free(void* p) noexcept {
  if (p == nullptr) return;
  auto* base = static_cast<unsigned char*>(p) - kHeader;
  g_live.fetch_sub(*reinterpret_cast<std::size_t*>(base), std::memory_order_relaxed);
  std::free(base);
}

std::size_t live_bytes() noexcept { return g_live.load(std::memory_order_relaxed); }
std::size_t peak_bytes() noexcept { return g_peak.load(std::memory_order_relaxed); }
std::size_t largest_allocation() noexcept { return g_largest.load(std::memory_order_relaxed); }
std::size_t allocation_count() noexcept { return g_count.load(std::memory_order_relaxed); }

void set_watch_threshold(std::size_t bytes) noexcept {
  g_watched.store(0, std::memory_order_relaxed);
  g_watch.store(bytes, std::memory_order_relaxed);
}
std::size_t watched_count() noexcept { return g_watched.load(std::memory_order_relaxed); }

void reset_peak() noexcept {
  g_peak.store(g_live.load(std::memory_order_relaxed), std::memory_order_relaxed);
  g_largest.store(0, std::memory_order_relaxed);
}

Scope::Scope() noexcept : baseline_(live_bytes()) { reset_peak(); }

std::size_t Scope::peak_above_baseline() const noexcept {
  const std::size_t peak = peak_bytes();
  return peak > baseline_ ? peak - baseline_ : 0;
}

}  // namespace gnnforge::memtrack

using gnnforge::memtrack::tracked_alloc;
using gnnforge::memtrack::tracked_free;

void* operator new(std::size_t n) {
  if (void* p = tracked_alloc(n)) return p;
  throw std::bad_alloc();
}
void* operator new[](std::size_t n) {
  if (void* p = tracked_alloc(n)) return p;
  throw std::bad_alloc();
}
void* operator new(std::size_t n, const std::nothrow_t&) noexcept { return tracked_alloc(n); }
void* operator new[](std::size_t n, const std::nothrow_t&) noexcept { return tracked_alloc(n); }
void operator delete(void* p) noexcept { tracked_free(p); }
void operator delete[](void* p) noexcept { tracked_free(p); }
void operator delete(void* p, std::size_t) noexcept { tracked_free(p); }
void operator delete[](void* p, std::size_t) noexcept { tracked_free(p); }
void operator delete(void* p, const std::nothrow_t&) noexcept { tracked_free(p); }
void operator delete[](void* p, const std::nothrow_t&) noexcept { tracked_free(p); }
