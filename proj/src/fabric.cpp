#include "gnnforge/fabric.hpp"

namespace gnnforge {

MessageFabric::MessageFabric(std::size_t ranks) : ranks_(ranks) {
  if (ranks == 0) throw std::invalid_argument("fabric needs at least one rank");
  const std::size_t n = ranks * ranks * kTagCount;
  channels_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) channels_.push_back(std::make_unique<Channel>());
  bytes_ = std::make_unique<std::atomic<std::uint64_t>[]>(n);
  messages_ = std::make_unique<std::atomic<std::uint64_t>[]>(n);
  reset_counters();
}

std::size_t MessageFabric::index(std::size_t from, std::size_t to, int tag) const {
  return (from * ranks_ + to) * kTagCount + static_cast<std::size_t>(tag);
}

void MessageFabric::check(std::size_t from, std::size_t to, int tag) const {
  if (from >= ranks_ || to >= ranks_) throw RangeError("fabric rank out of range");
  if (tag < 0 || tag >= kTagCount) throw RangeError("fabric tag out of range");
}

void MessageFabric::send(std::size_t from, std::size_t to, int tag, Bytes payload) {
  check(from, to, tag);
  const std::size_t i = index(from, to, tag);
  bytes_[i].fetch_add(payload.size(), std::memory_order_relaxed);
  messages_[i].fetch_add(1, std::memory_order_relaxed);
  Channel& c = *channels_[i];
  {
    std::lock_guard lock(c.m);
    c.q.push_back(std::move(payload));
  }
  c.cv.notify_one();
}

Bytes MessageFabric::recv(std::size_t to, std::size_t from, int tag) {
  check(from, to, tag);
  Channel& c = *channels_[index(from, to, tag)];
  std::unique_lock lock(c.m);
  c.cv.wait(lock, [&] { return !c.q.empty(); });
  Bytes b = std::move(c.q.front());
  c.q.pop_front();
  return b;
}

std::uint64_t MessageFabric::bytes_sent(std::size_t rank) const {
  std::uint64_t s = 0;
  for (int t = 0; t < kTagCount; ++t) s += bytes_sent(rank, t);
  return s;
}

std::uint64_t MessageFabric::bytes_sent(std::size_t rank, int tag) const {
  std::uint64_t s = 0;
  for (std::size_t to = 0; to < ranks_; ++to) s += bytes_[index(rank, to, tag)].load();
  return s;
}

std::uint64_t MessageFabric::messages_sent(std::size_t rank) const {
  std::uint64_t s = 0;
  for (int t = 0; t < kTagCount; ++t) s += messages_sent(rank, t);
  return s;
}

std::uint64_t MessageFabric::messages_sent(std::size_t rank, int tag) const {
  std::uint64_t s = 0;
  for (std::size_t to = 0; to < ranks_; ++to) s += messages_[index(rank, to, tag)].load();
  return s;
}

std::uint64_t MessageFabric::bytes_received(std::size_t rank) const {
  std::uint64_t s = 0;
  for (std::size_t from = 0; from < ranks_; ++from)
    for (int t = 0; t < kTagCount; ++t) s += bytes_[index(from, rank, t)].load();
  return s;
}

std::uint64_t MessageFabric::bytes_between(std::size_t from, std::size_t to, int tag) const {
  check(from, to, tag);
  return bytes_[index(from, to, tag)].load();
}

std::uint64_t MessageFabric::total_bytes(int tag) const {
  std::uint64_t s = 0;
  for (std::size_t r = 0; r < ranks_; ++r) s += bytes_sent(r, tag);
  return s;
}

std::uint64_t MessageFabric::total_messages(int tag) const {
  std::uint64_t s = 0;
  for (std::size_t r = 0; r < ranks_; ++r) s += messages_sent(r, tag);
  return s;
}

void MessageFabric::reset_counters() {
  const std::size_t n = ranks_ * ranks_ * kTagCount;
  for (std::size_t i = 0; i < n; ++i) {
    bytes_[i].store(0);
    messages_[i].store(0);
  }
}

std::size_t MessageFabric::in_flight() const {
  std::size_t n = 0;
  for (const auto& c : channels_) {
    std::lock_guard lock(c->m);
    n += c->q.size();
  }
  return n;
}

}  // namespace gnnforge
