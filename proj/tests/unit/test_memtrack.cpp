#include <memory>
#include <vector>

#include "doctest.h"
#include "gnnforge/memtrack.hpp"

using namespace gnnforge;

TEST_CASE("live bytes follow allocations") {
  const auto before = memtrack::live_bytes();
  auto* p = new std::vector<char>(1 << 20);
  CHECK(memtrack::live_bytes() >= before + (1 << 20));
  delete p;
  CHECK(memtrack::live_bytes() == before);
}

TEST_CASE("scopes measure the peak above their baseline") {
  std::vector<char> keep(4096);
  memtrack::Scope scope;
  {
    std::vector<char> a(100000);
    std::vector<char> b(50000);
    a[0] = b[0] = 1;
  }
  std::vector<char> c(1000);
  CHECK(scope.peak_above_baseline() >= 150000);
  CHECK(scope.peak_above_baseline() < 150000 + 4096);
  CHECK(memtrack::largest_allocation() >= 100000);
}

TEST_CASE("the watch threshold counts large allocations only") {
  memtrack::set_watch_threshold(1 << 16);
  { std::vector<char> small(100); }
  CHECK(memtrack::watched_count() == 0);
  { std::vector<char> big(1 << 17); }
  { auto arr = std::make_unique<double[]>(1 << 14); }
  CHECK(memtrack::watched_count() == 2);
  memtrack::set_watch_threshold(0);
  { std::vector<char> big(1 << 17); }
  CHECK(memtrack::watched_count() == 0);
}

TEST_CASE("reset_peak drops to the current live level") {
  { std::vector<char> big(1 << 20); }
  memtrack::reset_peak();
  CHECK(memtrack::peak_bytes() == memtrack::live_bytes());
  CHECK(memtrack::largest_allocation() == 0);
  const auto count = memtrack::allocation_count();
  auto x = std::make_unique<int>(3);
  CHECK(memtrack::allocation_count() == count + 1);
}
