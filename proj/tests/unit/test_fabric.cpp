#include <numeric>
#include <thread>

#include "doctest.h"
#include "gnnforge/errors.hpp"
#include "gnnforge/fabric.hpp"

using namespace gnnforge;

namespace {

Bytes bytes_of(std::initializer_list<int> v) {
  std::vector<int> data(v);
  return to_bytes<int>(data);
}

}  // namespace

TEST_CASE("channels are FIFO per sender, receiver and tag") {
  MessageFabric f(3);
  f.send(0, 1, MessageFabric::kHalo, bytes_of({1}));
  f.send(0, 1, MessageFabric::kHalo, bytes_of({2}));
  f.send(0, 1, MessageFabric::kAllreduce, bytes_of({3}));
  f.send(2, 1, MessageFabric::kHalo, bytes_of({4}));
  CHECK(f.in_flight() == 4);
  CHECK(f.recv(1, 2, MessageFabric::kHalo) == bytes_of({4}));
  CHECK(f.recv(1, 0, MessageFabric::kAllreduce) == bytes_of({3}));
  CHECK(f.recv(1, 0, MessageFabric::kHalo) == bytes_of({1}));
  CHECK(f.irecv(1, 0, MessageFabric::kHalo).wait() == bytes_of({2}));
  CHECK(f.in_flight() == 0);
}

TEST_CASE("counters track bytes and messages per tag") {
  MessageFabric f(2);
  f.send(0, 1, MessageFabric::kHalo, Bytes(12));
  f.send(0, 1, MessageFabric::kAllreduce, Bytes(8));
  f.send(1, 0, MessageFabric::kHalo, Bytes(4));
  CHECK(f.bytes_sent(0) == 20);
  CHECK(f.bytes_sent(0, MessageFabric::kHalo) == 12);
  CHECK(f.messages_sent(0) == 2);
  CHECK(f.messages_sent(1, MessageFabric::kAllreduce) == 0);
  CHECK(f.bytes_received(1) == 20);
  CHECK(f.bytes_between(0, 1, MessageFabric::kHalo) == 12);
  CHECK(f.total_bytes(MessageFabric::kHalo) == 16);
  CHECK(f.total_messages(MessageFabric::kHalo) == 2);
  f.reset_counters();
  CHECK(f.total_bytes(MessageFabric::kHalo) == 0);
  CHECK(f.in_flight() == 3);
}

TEST_CASE("receives block until the message arrives") {
  MessageFabric f(2);
  Bytes got;
  std::thread t([&] { got = f.recv(1, 0, MessageFabric::kHalo); });
  std::this_thread::sleep_for(std::chrono::milliseconds(20));
  f.send(0, 1, MessageFabric::kHalo, bytes_of({42}));
  t.join();
  CHECK(got == bytes_of({42}));
}

TEST_CASE("invalid endpoints are rejected") {
  MessageFabric f(2);
  CHECK_THROWS_AS(f.send(0, 2, MessageFabric::kHalo, {}), RangeError);
  CHECK_THROWS_AS(f.send(0, 1, 7, {}), RangeError);
}

TEST_CASE("ring segments tile the vector") {
  for (std::size_t n : {0u, 1u, 7u, 8u, 100u})
    for (std::size_t p : {1u, 2u, 3u, 4u}) {
      std::size_t covered = 0;
      for (std::size_t s = 0; s < p; ++s) {
        const auto [b, e] = detail::ring_segment(n, p, s);
        CHECK(b == covered);
        covered = e;
      }
      CHECK(covered == n);
    }
}

TEST_CASE("ring all-reduce sums integers exactly with 2(P-1) messages") {
  for (std::size_t p : {1u, 2u, 3u, 4u, 5u}) {
    for (std::size_t n : {1u, 10u, 1001u}) {
      MessageFabric f(p);
      std::vector<std::vector<std::int64_t>> data(p, std::vector<std::int64_t>(n));
      std::vector<std::int64_t> want(n, 0);
      for (std::size_t r = 0; r < p; ++r)
        for (std::size_t i = 0; i < n; ++i) {
          data[r][i] = static_cast<std::int64_t>((r + 1) * 1000003 + i * 7) * (i % 2 ? -1 : 1);
          want[i] += data[r][i];
        }
      ring_allreduce_all(f, data);
      for (std::size_t r = 0; r < p; ++r) CHECK(data[r] == want);
      for (std::size_t r = 0; r < p; ++r) CHECK(f.messages_sent(r, MessageFabric::kAllreduce) == 2 * (p - 1));
      CHECK(f.in_flight() == 0);
    }
  }
}

TEST_CASE("float all-reduce leaves every replica bit-identical") {
  const std::size_t p = 4;
  MessageFabric f(p);
  std::vector<std::vector<float>> data(p);
  for (std::size_t r = 0; r < p; ++r)
    for (std::size_t i = 0; i < 37; ++i) data[r].push_back(0.1f * float(r + 1) + 1e-3f * float(i));
  ring_allreduce_all(f, data);
  for (std::size_t r = 1; r < p; ++r) CHECK(data[r] == data[0]);
  CHECK(data[0][0] == doctest::Approx(0.1 + 0.2 + 0.3 + 0.4));
}

TEST_CASE("split-phase handles rethrow the worker's error at wait") {
  auto err = std::make_shared<std::exception_ptr>();
  AllreduceHandle h(std::thread([err] { *err = std::make_exception_ptr(DimensionError("segment mismatch")); }), err);
  CHECK(h.pending());
  CHECK_THROWS_AS(h.wait(), DimensionError);
  CHECK_FALSE(h.pending());
  CHECK_NOTHROW(h.wait());
}

TEST_CASE("split-phase all-reduce overlaps with caller work") {
  MessageFabric f(2);
  std::vector<float> a(64, 1.0f), b(64, 2.0f);
  std::thread other([&] { ring_allreduce<float>(f, 1, b); });
  auto h = ring_iallreduce<float>(f, 0, a);
  float busy = 0.0f;
  for (int i = 0; i < 1000; ++i) busy += 1.0f;
  h.wait();
  other.join();
  CHECK(busy == 1000.0f);
  CHECK(a == std::vector<float>(64, 3.0f));
  CHECK(b == a);
}
