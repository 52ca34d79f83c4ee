#include "roadledger/store.hpp"

#include <fstream>
#include <iterator>

namespace roadledger::store {

namespace fs = std::filesystem;

ObjectStore::ObjectStore(fs::path root) : dir_(std::move(root)) {
  fs::create_directories(*dir_ / "objects");
}

fs::path ObjectStore::path_of(const ObjectRef& ref) const {
  if (!dir_) return {};
  return *dir_ / "objects" / ref.digest.hex();
}

ObjectRef ObjectStore::put(ByteView bytes) {
  if (bytes.empty()) throw Error(ErrorCode::kInvalidArgument, "cannot store an empty object");
  ObjectRef ref{sha256(bytes)};
  std::unique_lock lock(mu_);
  if (!dir_) {
    mem_.try_emplace(ref.digest, bytes.begin(), bytes.end());
    return ref;
  }
  auto path = path_of(ref);
  if (fs::exists(path)) return ref;
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  }
  fs::rename(tmp, path);
  return ref;
}

Bytes ObjectStore::get(const ObjectRef& ref) const {
  Bytes out;
  {
    std::shared_lock lock(mu_);
    if (!dir_) {
      auto it = mem_.find(ref.digest);
      if (it == mem_.end()) throw Error(ErrorCode::kNotFound, ref.digest.hex());
      out = it->second;
    } else {
      std::ifstream in(path_of(ref), std::ios::binary);
      if (!in) throw Error(ErrorCode::kNotFound, ref.digest.hex());
      out.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
  }
  if (sha256(out) != ref.digest) throw Error(ErrorCode::kIntegrityFailure, ref.digest.hex());
  return out;
}

bool ObjectStore::contains(const ObjectRef& ref) const {
  std::shared_lock lock(mu_);
  if (!dir_) return mem_.contains(ref.digest);
  return fs::exists(path_of(ref));
}

Payload make_payload(ObjectStore& store, ByteView data, const Digest& object_key,
                     std::size_t inline_max) {
  if (data.size() <= inline_max) return inline_payload(Bytes(data.begin(), data.end()));
  return Payload{store.put(keystream_xor(object_key, kDomainObject, data))};
}

Bytes open_object(const ObjectStore& store, const ObjectRef& ref, const Digest& object_key) {
  return keystream_xor(object_key, kDomainObject, store.get(ref));
}

Topic Topic::parse(std::string_view path) {
  Topic t;
  while (!path.empty()) {
    auto slash = path.find('/');
    auto label = path.substr(0, slash);
    if (label.empty()) throw Error(ErrorCode::kInvalidTopic, "empty zone label");
    for (char c : label) {
      const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-';
      if (!ok) throw Error(ErrorCode::kInvalidTopic, "label must match [a-z0-9-]+");
    }
    t.labels.emplace_back(label);
    if (slash == std::string_view::npos) break;
    path.remove_prefix(slash + 1);
    if (path.empty()) throw Error(ErrorCode::kInvalidTopic, "trailing slash");
  }
  if (t.labels.empty()) throw Error(ErrorCode::kInvalidTopic, "topic must not be empty");
  return t;
}

std::string Topic::to_string() const {
  std::string out;
  for (const auto& l : labels) {
    if (!out.empty()) out += '/';
    out += l;
  }
  return out;
}

bool Topic::is_prefix_of(const Topic& other) const {
  if (labels.size() > other.labels.size()) return false;
  return std::equal(labels.begin(), labels.end(), other.labels.begin());
}

void Subscription::deliver(const Event& e) {
  {
    std::lock_guard lock(mu_);
    if (!active_) return;
    queue_.push_back(e);
  }
  cv_.notify_one();
}

std::optional<Event> Subscription::try_pop() {
  std::lock_guard lock(mu_);
  if (queue_.empty()) return std::nullopt;
  auto e = std::move(queue_.front());
  queue_.pop_front();
  return e;
}

std::optional<Event> Subscription::wait_pop(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  if (!cv_.wait_for(lock, timeout, [&] { return !queue_.empty(); })) return std::nullopt;
  auto e = std::move(queue_.front());
  queue_.pop_front();
  return e;
}

std::vector<Event> Subscription::drain() {
  std::lock_guard lock(mu_);
  std::vector<Event> out(std::make_move_iterator(queue_.begin()),
                         std::make_move_iterator(queue_.end()));
  queue_.clear();
  return out;
}

void Subscription::unsubscribe() {
  std::lock_guard lock(mu_);
  active_ = false;
  queue_.clear();
}

bool Subscription::active() const {
  std::lock_guard lock(mu_);
  return active_;
}

std::shared_ptr<Subscription> EventBus::subscribe(const Topic& topic) {
  auto sub = std::make_shared<Subscription>(topic);
  std::lock_guard lock(mu_);
  subs_.push_back(sub);
  return sub;
}

std::uint64_t EventBus::publish(const Topic& topic, ByteView message) {
  std::lock_guard lock(mu_);
  Event e{topic, ++seq_[topic], Bytes(message.begin(), message.end())};
  std::erase_if(subs_, [&](const std::weak_ptr<Subscription>& w) {
    auto s = w.lock();
    if (!s || !s->active()) return true;
    if (s->topic().is_prefix_of(topic)) s->deliver(e);
    return false;
  });
  return e.seq;
}

}  // namespace roadledger::store
