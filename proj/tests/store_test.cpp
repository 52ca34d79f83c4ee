#include <gtest/gtest.h>

#include <fstream>
#include <thread>

#include "roadledger/store.hpp"

using namespace roadledger;
using namespace roadledger::store;

namespace {

std::filesystem::path temp_dir(std::string_view name) {
  auto p = std::filesystem::temp_directory_path() / ("roadledger_" + std::string(name));
  std::filesystem::remove_all(p);
  return p;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kMalformed;
}

}  // namespace

TEST(ObjectStore, PutIsIdempotentAndMatchesExternalHash) {
  ObjectStore s;
  auto b = to_bytes("roadledger object store oracle");
  auto r1 = s.put(b);
  auto r2 = s.put(b);
  EXPECT_EQ(r1, r2);
  // Python: hashlib.sha256(b"roadledger object store oracle").hexdigest()
  EXPECT_EQ(r1.digest.hex(), "63d843e8af613f8dd28998a9b5568f3cfb3f04427a6602cfe0208fed179e93bf");
  EXPECT_EQ(s.get(r1), b);
}

TEST(ObjectStore, UnknownRefIsNotFound) {
  ObjectStore s;
  EXPECT_EQ(code_of([&] { s.get(ObjectRef{sha256(as_view("nope"))}); }), ErrorCode::kNotFound);
  EXPECT_EQ(code_of([&] { s.put({}); }), ErrorCode::kInvalidArgument);
}

TEST(ObjectStore, DirectoryBackendDetectsCorruption) {
  auto dir = temp_dir("store_corrupt");
  ObjectStore s(dir);
  auto ref = s.put(to_bytes("pristine"));
  ASSERT_TRUE(std::filesystem::exists(dir / "objects" / ref.digest.hex()));
  {
    std::ofstream out(s.path_of(ref), std::ios::binary | std::ios::trunc);
    out << "corrupted";
  }
  EXPECT_EQ(code_of([&] { s.get(ref); }), ErrorCode::kIntegrityFailure);
  std::filesystem::remove_all(dir);
}

TEST(ObjectStore, OneMebibyteRoundTripOnDisk) {
  auto dir = temp_dir("store_big");
  ObjectStore s(dir);
  Bytes big(1 << 20);
  for (std::size_t i = 0; i < big.size(); ++i) big[i] = static_cast<std::uint8_t>(i * 131 + 7);
  auto ref = s.put(big);
  ObjectStore reopened(dir);
  EXPECT_EQ(reopened.get(ref), big);
  std::filesystem::remove_all(dir);
}

TEST(ObjectStore, ConcurrentPutGet) {
  ObjectStore s;
  std::vector<std::thread> ts;
  for (int w = 0; w < 4; ++w) {
    ts.emplace_back([&, w] {
      for (int i = 0; i < 50; ++i) {
        auto b = to_bytes(std::to_string(i % 10) + "-shared");
        auto ref = s.put(b);
        EXPECT_EQ(s.get(ref), b);
        (void)w;
      }
    });
  }
  for (auto& t : ts) t.join();
}

TEST(Payload, InlineThresholdRule) {
  ObjectStore s;
  auto key = sha256(as_view("k"));
  // 16 bytes: a latitude/longitude pair as two doubles.
  Bytes coords(16, 0x42);
  EXPECT_EQ(make_payload(s, coords, key, 256).type(), PayloadType::kInline);
  Bytes exact(256, 1);
  EXPECT_EQ(make_payload(s, exact, key, 256).type(), PayloadType::kInline);

  Bytes trace(10 * 1000, 7);
  auto p = make_payload(s, trace, key, 256);
  ASSERT_EQ(p.type(), PayloadType::kObjectRef);
  auto ref = std::get<ObjectRef>(p.value);
  EXPECT_NE(s.get(ref), trace);  // stored encrypted
  EXPECT_EQ(open_object(s, ref, key), trace);
}

TEST(Payload, WireFormatRoundTrip) {
  std::vector<Payload> cases{
      inline_payload(to_bytes("88.5")),
      Payload{ObjectRef{sha256(as_view("o"))}},
      Payload{ChannelRef{ChannelKind::kFeature, sha256(as_view("r")), "speed"}},
      Payload{TxAddress{sha256(as_view("t"))}},
      Payload{CertificateBlob{to_bytes("cert")}},
  };
  for (const auto& p : cases) {
    auto bytes = p.serialize();
    EXPECT_EQ(bytes[0], static_cast<std::uint8_t>(p.type()));
    EXPECT_EQ(Payload::deserialize(bytes), p);
  }
  EXPECT_THROW(Payload::deserialize(Bytes{9, 0, 0, 0, 0}), Error);
}

TEST(Topic, ParseAndPrefix) {
  auto a = Topic::parse("it/bologna");
  auto b = Topic::parse("it/bologna/centro");
  EXPECT_TRUE(a.is_prefix_of(b));
  EXPECT_FALSE(b.is_prefix_of(a));
  EXPECT_FALSE(Topic::parse("it/milano").is_prefix_of(b));
  EXPECT_EQ(b.to_string(), "it/bologna/centro");
  for (auto bad : {"", "It/x", "a//b", "a/", "a b"})
    EXPECT_EQ(code_of([&] { Topic::parse(bad); }), ErrorCode::kInvalidTopic) << bad;
}

TEST(EventBus, AncestorSubscribersReceive) {
  EventBus bus;
  auto city = bus.subscribe(Topic::parse("it/bologna"));
  auto other = bus.subscribe(Topic::parse("it/milano"));
  bus.publish(Topic::parse("it/bologna/centro"), to_bytes("jam"));
  auto e = city->try_pop();
  ASSERT_TRUE(e);
  EXPECT_EQ(e->message, to_bytes("jam"));
  EXPECT_EQ(e->topic.to_string(), "it/bologna/centro");
  EXPECT_FALSE(other->try_pop());
}

TEST(EventBus, PerTopicSequenceIsOrdered) {
  EventBus bus;
  auto sub = bus.subscribe(Topic::parse("it"));
  auto t = Topic::parse("it/bologna");
  for (int i = 1; i <= 100; ++i) EXPECT_EQ(bus.publish(t, Bytes{static_cast<std::uint8_t>(i)}), static_cast<std::uint64_t>(i));
  auto all = sub->drain();
  ASSERT_EQ(all.size(), 100u);
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i].seq, i + 1);
}

TEST(EventBus, UnsubscribeAndFanOut) {
  EventBus bus;
  auto t = Topic::parse("it/bologna");
  auto a = bus.subscribe(t);
  auto b = bus.subscribe(t);
  auto gone = bus.subscribe(t);
  gone->unsubscribe();
  bus.publish(t, to_bytes("x"));
  EXPECT_EQ(a->try_pop()->message, b->try_pop()->message);
  EXPECT_FALSE(gone->try_pop());
}

TEST(EventBus, PrefixRuleMatchesBruteForce) {
  // Delivery happens iff the subscription topic is a label-wise prefix.
  std::vector<std::string> paths{"it", "it/bo", "it/bo/centro", "it/mi", "fr", "it/bologna"};
  for (const auto& s : paths) {
    for (const auto& p : paths) {
      EventBus bus;
      auto sub = bus.subscribe(Topic::parse(s));
      bus.publish(Topic::parse(p), to_bytes("m"));
      const bool expected = p == s || p.starts_with(s + "/");
      EXPECT_EQ(sub->try_pop().has_value(), expected) << s << " <- " << p;
    }
  }
}
