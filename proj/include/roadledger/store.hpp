#pragma once

// Content-addressed object store and the zone-hierarchical event bus.

#include <condition_variable>
#include <chrono>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "roadledger/crypto.hpp"
#include "roadledger/payload.hpp"

namespace roadledger::store {

inline constexpr std::size_t kDefaultInlineMax = 256;

/// Immutable objects keyed by SHA-256 of their bytes. Backed either by an
/// in-memory map or by a directory holding `objects/<hex-digest>` files.
/// Safe for concurrent put/get.
class ObjectStore {
 public:
  ObjectStore() = default;
  explicit ObjectStore(std::filesystem::path root);

  ObjectRef put(ByteView bytes);
  /// Verifies the digest before returning. Throws NotFound / IntegrityFailure.
  Bytes get(const ObjectRef& ref) const;
  bool contains(const ObjectRef& ref) const;

  /// Path of the backing file, empty for in-memory stores.
  std::filesystem::path path_of(const ObjectRef& ref) const;

 private:
  std::optional<std::filesystem::path> dir_;
  mutable std::shared_mutex mu_;
  std::map<Digest, Bytes> mem_;
};

/// Small data goes inline; anything larger than `inline_max` is encrypted
/// under `object_key`, put in the store and referenced.
Payload make_payload(ObjectStore& store, ByteView data, const Digest& object_key,
                     std::size_t inline_max = kDefaultInlineMax);

/// Fetches and decrypts an object written by make_payload.
Bytes open_object(const ObjectStore& store, const ObjectRef& ref, const Digest& object_key);

/// Hierarchical zone path such as it/bologna/centro.
struct Topic {
  std::vector<std::string> labels;

  static Topic parse(std::string_view path);
  std::string to_string() const;
  bool is_prefix_of(const Topic& other) const;

  auto operator<=>(const Topic&) const = default;
};

struct Event {
  Topic topic;
  std::uint64_t seq = 0;
  Bytes message;
};

class EventBus;

/// Per-subscriber FIFO queue. Dropping the last handle unsubscribes.
class Subscription {
 public:
  explicit Subscription(Topic topic) : topic_(std::move(topic)) {}

  const Topic& topic() const { return topic_; }
  std::optional<Event> try_pop();
  std::optional<Event> wait_pop(std::chrono::milliseconds timeout);
  std::vector<Event> drain();
  void unsubscribe();
  bool active() const;

 private:
  friend class EventBus;
  void deliver(const Event& e);

  Topic topic_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Event> queue_;
  bool active_ = true;
};

class EventBus {
 public:
  std::shared_ptr<Subscription> subscribe(const Topic& topic);
  /// Delivers to subscribers of `topic` and of every ancestor. Returns the
  /// per-topic sequence number (1, 2, ...).
  std::uint64_t publish(const Topic& topic, ByteView message);

 private:
  std::mutex mu_;
  std::map<Topic, std::uint64_t> seq_;
  std::vector<std::weak_ptr<Subscription>> subs_;
};

}  // namespace roadledger::store
