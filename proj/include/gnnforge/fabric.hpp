#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <deque>
#include <exception>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "gnnforge/errors.hpp"

namespace gnnforge {

using Bytes = std::vector<std::byte>;

/// In-process interconnect: one ordered, buffered channel per (sender,
/// receiver, tag). Sends never block; receives block until a message arrives.
class MessageFabric {
 public:
  enum Tag : int { kHalo = 0, kHaloReverse = 1, kAllreduce = 2 };
  static constexpr int kTagCount = 3;

  explicit MessageFabric(std::size_t ranks);
  MessageFabric(const MessageFabric&) = delete;
  MessageFabric& operator=(const MessageFabric&) = delete;

  std::size_t ranks() const noexcept { return ranks_; }

  void send(std::size_t from, std::size_t to, int tag, Bytes payload);
  Bytes recv(std::size_t to, std::size_t from, int tag);

  /// A posted receive; wait() blocks until the matching message arrives.
  class RecvRequest {
   public:
    RecvRequest(MessageFabric& f, std::size_t to, std::size_t from, int tag) : f_(&f), to_(to), from_(from), tag_(tag) {}
    Bytes wait() { return f_->recv(to_, from_, tag_); }
    std::size_t peer() const noexcept { return from_; }

   private:
    MessageFabric* f_;
    std::size_t to_, from_;
    int tag_;
  };
  RecvRequest irecv(std::size_t to, std::size_t from, int tag) { return {*this, to, from, tag}; }

  std::uint64_t bytes_sent(std::size_t rank) const;
  std::uint64_t bytes_sent(std::size_t rank, int tag) const;
  std::uint64_t messages_sent(std::size_t rank) const;
  std::uint64_t messages_sent(std::size_t rank, int tag) const;
  std::uint64_t bytes_received(std::size_t rank) const;
  std::uint64_t bytes_between(std::size_t from, std::size_t to, int tag) const;
  std::uint64_t total_bytes(int tag) const;
  std::uint64_t total_messages(int tag) const;
  void reset_counters();

  /// Messages sent but not yet received.
  std::size_t in_flight() const;

 private:
  struct Channel {
    std::mutex m;
    std::condition_variable cv;
    std::deque<Bytes> q;
  };

  std::size_t index(std::size_t from, std::size_t to, int tag) const;
  void check(std::size_t from, std::size_t to, int tag) const;

  std::size_t ranks_;
  std::vector<std::unique_ptr<Channel>> channels_;
  std::unique_ptr<std::atomic<std::uint64_t>[]> bytes_;     // per channel
  std::unique_ptr<std::atomic<std::uint64_t>[]> messages_;  // per channel
};

template <class T>
Bytes to_bytes(std::span<const T> data) {
  Bytes b(data.size_bytes());
  if (!b.empty()) std::memcpy(b.data(), data.data(), b.size());
  return b;
}

/// Split-phase ring all-reduce state for one rank. The reduction runs on a
/// helper thread started at issue; wait() joins it and rethrows its error.
class AllreduceHandle {
 public:
  AllreduceHandle() = default;
  explicit AllreduceHandle(std::thread t, std::shared_ptr<std::exception_ptr> err)
      : worker_(std::move(t)), error_(std::move(err)) {}
  AllreduceHandle(AllreduceHandle&&) noexcept = default;
  AllreduceHandle& operator=(AllreduceHandle&& o) noexcept {
    if (this != &o) {
      join();
      worker_ = std::move(o.worker_);
      error_ = std::move(o.error_);
    }
    return *this;
  }
  ~AllreduceHandle() { join(); }

  bool pending() const noexcept { return worker_.joinable(); }
  void wait() {
    join();
    if (error_ && *error_) {
      auto e = *error_;
      *error_ = nullptr;
      std::rethrow_exception(e);
    }
  }

 private:
  void join() {
    if (worker_.joinable()) worker_.join();
  }
  std::thread worker_;
  std::shared_ptr<std::exception_ptr> error_;
};

namespace detail {

/// Segment s of an n-element vector split P ways: [begin, end).
inline std::pair<std::size_t, std::size_t> ring_segment(std::size_t n, std::size_t p, std::size_t s) {
  const std::size_t base = n / p, rem = n % p;
  const std::size_t begin = s * base + std::min(s, rem);
  return {begin, begin + base + (s < rem ? 1 : 0)};
}

template <class T>
void ring_allreduce_body(MessageFabric& fabric, std::size_t rank, std::span<T> data) {
  const std::size_t p = fabric.ranks();
  if (p == 1) return;
  const std::size_t right = (rank + 1) % p;
  const std::size_t left = (rank + p - 1) % p;
  const std::size_t n = data.size();
  auto recv_segment = [&](std::size_t seg) {
    Bytes in = fabric.recv(rank, left, MessageFabric::kAllreduce);
    const auto [b, e] = ring_segment(n, p, seg);
    if (in.size() != (e - b) * sizeof(T))
      throw DimensionError("ring all-reduce: vector length differs across ranks");
    std::vector<T> vals(e - b);
    if (!in.empty()) std::memcpy(vals.data(), in.data(), in.size());
    return std::make_pair(b, vals);
  };
  auto send_segment = [&](std::size_t seg) {
    const auto [b, e] = ring_segment(n, p, seg);
    fabric.send(rank, right, MessageFabric::kAllreduce,
                to_bytes(std::span<const T>(data.data() + b, e - b)));
  };
  // Reduce-scatter: after P-1 steps this rank holds the full sum of segment rank+1.
  for (std::size_t step = 0; step + 1 < p; ++step) {
    send_segment((rank + p - step) % p);
    auto [b, vals] = recv_segment((rank + 2 * p - step - 1) % p);
    for (std::size_t i = 0; i < vals.size(); ++i) data[b + i] += vals[i];
  }
  // All-gather: circulate the reduced segments.
  for (std::size_t step = 0; step + 1 < p; ++step) {
    send_segment((rank + 1 + p - step) % p);
    auto [b, vals] = recv_segment((rank + p - step) % p);
    std::copy(vals.begin(), vals.end(), data.begin() + static_cast<std::ptrdiff_t>(b));
  }
}

}  // namespace detail

/// Starts this rank's part of a sum all-reduce over `data`, which must stay
/// alive and untouched until wait(). 2(P-1) messages per rank.
template <class T>
AllreduceHandle ring_iallreduce(MessageFabric& fabric, std::size_t rank, std::span<T> data) {
  auto err = std::make_shared<std::exception_ptr>();
  std::thread t([&fabric, rank, data, err] {
    try {
      detail::ring_allreduce_body(fabric, rank, data);
    } catch (...) {
      *err = std::current_exception();
    }
  });
  return AllreduceHandle(std::move(t), std::move(err));
}

template <class T>
void ring_allreduce(MessageFabric& fabric, std::size_t rank, std::span<T> data) {
  detail::ring_allreduce_body(fabric, rank, data);
}

/// Runs all ranks' reductions concurrently on one vector per rank.
template <class T>
void ring_allreduce_all(MessageFabric& fabric, std::vector<std::vector<T>>& per_rank) {
  if (per_rank.size() != fabric.ranks()) throw DimensionError("one vector per rank required");
  for (const auto& v : per_rank)
    if (v.size() != per_rank.front().size()) throw DimensionError("ring all-reduce: vector lengths differ");
  std::vector<AllreduceHandle> handles;
  handles.reserve(per_rank.size());
  for (std::size_t r = 0; r < per_rank.size(); ++r)
    handles.push_back(ring_iallreduce(fabric, r, std::span<T>(per_rank[r])));
  for (auto& h : handles) h.wait();
}

}  // namespace gnnforge
