#include <gtest/gtest.h>

#include <thread>

#include "roadledger/authsvc.hpp"
#include "roadledger/mam.hpp"

using namespace roadledger;
using namespace roadledger::authsvc;

namespace {

Digest label(std::string_view s) { return sha256(as_view(s)); }
KeyPair key(std::string_view name) { return KeyPair::from_seed(label(name)); }

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kMalformed;
}

// One data owner with two feature channels and a session, one buyer and one
// stranger. Every channel of the owner uses the master key as side key.
struct Market {
  NetworkConfig cfg{"test", 4, 512};
  Tangle tangle;
  KeyPair owner = key("owner"), buyer = key("buyer"), stranger = key("stranger");
  contracts::ContractState contracts{
      {{owner.address(), 0}, {buyer.address(), 100}, {stranger.address(), 100}}};
  Digest master = label("owner master");
  mam::ChannelState index = mam::create_channel(label("idx"), ChannelKind::kIndex, master);
  mam::ChannelState speed =
      mam::create_channel(label("speed"), ChannelKind::kFeature, master, "speed");
  mam::ChannelState position =
      mam::create_channel(label("pos"), ChannelKind::kFeature, master, "position");
  std::vector<Digest> speed_addresses, position_addresses;
  Digest contract_id;

  Market() {
    mam::register_channel(index, tangle, speed.ref(), cfg);
    mam::register_channel(index, tangle, position.ref(), cfg);
    for (int i = 0; i < 3; ++i) {
      speed_addresses.push_back(
          mam::publish(speed, tangle, inline_payload(to_bytes("kmh " + std::to_string(50 + i))), cfg)
              .message.address);
      position_addresses.push_back(
          mam::publish(position, tangle, inline_payload(to_bytes("pos " + std::to_string(i))), cfg)
              .message.address);
    }
    contract_id = contracts.deploy_feature_contract(
        owner.address(), {{1, {TxAddress{speed_addresses[0]}}, 10},
                          {2, {speed.ref()}, 20},
                          {3, {position.ref()}, 30}});
  }

  UserRegistration registration() const {
    return UserRegistration::make(owner, master, index.entry_root(), contract_id);
  }
};

}  // namespace

TEST(DeriveKey, MatchesExternalSha256) {
  // Python: hashlib.sha256(bytes(64)).hexdigest()
  EXPECT_EQ(derive_key(Digest{}, Digest{}).hex(),
            "f5a5fd42d16a20302798ef6ed309979b43003d2320d9f0e8ea9831a92759fb4b");
  // Python: random.Random(7) masters and roots, hashlib.sha256(m + r).
  const char* vectors[][3] = {
      {"a54dca182530bb1d6d132cded6237b2ed91e3f721fcb1971174494d6493c9d5c",
       "3460be31201e69fedaa0eee8b9997f5c7c2999fdafe593253cd654af4dfad714",
       "8d8bfac911cdfa1e804c07422282669d1dcf9888bc56b9b6cae11e54e960b04b"},
      {"27a0aeb3fee9232f8af2211f9ee491c5b10becb5563bfc1e6f93427ecbc8fe29",
       "55e5cd8e46dc8ed4b7c2764d2a5a4d767706f85d8690024ad6bda3401be9c8cb",
       "a5f8f50b6daac5df58424e01be2b0be0001cab04f5e552896f7ddec07b9a8861"},
      {"ccc935f6cd1f61226ae15338ae1a34004d33ba0d246ac04c81b1baf23e3bf9ee",
       "f5f79f2b4934af87f5520b69b94b0d982e85bb55b672a872637acd7466fcb60e",
       "7b4d94a5a1e96e3e93bc0aebf79fa23b3a7c634103a71828dfc6c921547cf889"},
      {"0e8ff18463b0e4b2ba29703474f064ac68f700f5b02b3dc666f45bdeaa2ccaed",
       "cd2b5157410e4dee4af2b34f430a073447de636c0e806c957ba684d6431fb5ea",
       "cdb72a2bc34bcdb2ae81735ba23908b0b9129647d3bcb37e9a83bac651fafa72"},
      {"d7424d09e15d024c5848f23d1fa6f7361d7f618d1532e70e20e2a6668de7f47e",
       "8467e546d53ec8e2a1257bdb256c9b3e4fbb498146ef7030cbf9537252dccead",
       "922c3a48caa079e9f59a052582331dffbff12f4c104cd7fff86b3521788e48e1"},
      {"d764b6a32fbb09adeae109c4a997203975352b878b145c8a42d884cf4cfda72d",
       "8e1d5dd92589082d852a7122873ee805add58942167a385286195c679f9c6994",
       "af5f5110a50c1d0289af8f93816dafdf27e55f8db12500c34f1f3d66008e680d"},
      {"e45b8ab1098012070961f37de436ddfdc99d6e75af6547cfb11b42072482dc53",
       "1c2bc3907c9617eb5e5089e40186baa8a57d119e6fb65d00abc32af38e667f02",
       "85fa6db6c02d98d148af1747ff2bfb785614bfea82b94b367c2b9b82331fc7fe"},
      {"2e872d49cc15c90b999b772b4fc7a6fd4c914a16db4708752b0f1544b835c0e7",
       "19097dfa8701e9232f21f2812687786976ebfcc327f5931765274ba9829b4406",
       "d33b7ba742e68407ce3330737407f1f08de20b6a0b48a5bcbd278e848b0980f7"},
      {"f61ff889326ffa9492edeeee3c669f2bf20894ea27e689c66b6b262e4886b843",
       "8f39ba76fef8c90c5101fbe6cf9a48d5b0c0a13da900a6adcb3d64069481be21",
       "7d9d53a244454287d84ab3e12829338ab37bd318ff8bb23fc614f66f42045dcb"},
      {"c9c727b8db8c188f341a924c7f88dfa161bfdb0ecc682919d2e64692f8194157",
       "f1d4af90988285cf7a9af7c93d5552266afe70e7aae6da47627c2e59af2ea37a",
       "7a54dd4ca9dc3cc75640d7a49e57cdaf853bb160466914057c145accc7b6c05d"},
  };
  for (const auto& v : vectors)
    EXPECT_EQ(derive_key(Digest::from_hex(v[0]), Digest::from_hex(v[1])).hex(), v[2]);
}

TEST(DeriveKey, OneBitChangesKey) {
  auto m = label("m");
  auto r = label("r");
  EXPECT_EQ(derive_key(m, r), derive_key(m, r));
  for (int bit = 0; bit < 256; ++bit) {
    auto r2 = r;
    r2.bytes[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    EXPECT_NE(derive_key(m, r), derive_key(m, r2));
  }
}

TEST(Registration, ResolvesBothFeatureChannelsFromIndex) {
  Market m;
  AuthService svc(m.tangle, m.contracts);
  svc.register_user(m.registration());
  auto chans = svc.channels_of(m.owner.address());
  // Oracle: the index holds exactly what was registered, in order.
  ASSERT_EQ(chans.size(), 2u);
  EXPECT_EQ(chans[0], m.speed.ref());
  EXPECT_EQ(chans[1], m.position.ref());
}

TEST(Registration, RejectsBadSignatureAndUnknownContract) {
  Market m;
  AuthService svc(m.tangle, m.contracts);
  auto reg = m.registration();
  reg.signature = m.stranger.sign(reg.signed_bytes());
  EXPECT_EQ(code_of([&] { svc.register_user(reg); }), ErrorCode::kBadSignature);
  auto other = UserRegistration::make(m.owner, m.master, m.index.entry_root(), label("nope"));
  EXPECT_EQ(code_of([&] { svc.register_user(other); }), ErrorCode::kUnknownContract);
  // The contract must belong to the registering owner.
  auto bob_contract = m.contracts.deploy_feature_contract(m.buyer.address(), {});
  auto mismatched = UserRegistration::make(m.owner, m.master, m.index.entry_root(), bob_contract);
  EXPECT_EQ(code_of([&] { svc.register_user(mismatched); }), ErrorCode::kUnknownContract);
}

TEST(KeyRelease, PurchasedTransactionDecrypts) {
  Market m;
  AuthService svc(m.tangle, m.contracts);
  svc.register_user(m.registration());
  m.contracts.purchase_access(m.buyer.address(), m.contract_id, 1);
  auto resp = svc.handle_key_request(KeyRequest::make(m.buyer, {TxAddress{m.speed_addresses[0]}}));
  ASSERT_EQ(resp.items.size(), 1u);
  ASSERT_TRUE(resp.items[0].granted());
  ASSERT_EQ(resp.items[0].keys.size(), 1u);
  auto fetched = mam::fetch_message(m.tangle, m.speed_addresses[0], resp.items[0].keys[0].key);
  EXPECT_EQ(std::get<InlineDatum>(fetched.payload.value).data, to_bytes("kmh 50"));
  EXPECT_EQ(resp.state, m.contracts.state_hash());
}

TEST(KeyRelease, NoGrantMeansNoKeyMaterial) {
  Market m;
  AuthService svc(m.tangle, m.contracts);
  svc.register_user(m.registration());
  auto resp =
      svc.handle_key_request(KeyRequest::make(m.stranger, {TxAddress{m.speed_addresses[0]}}));
  ASSERT_EQ(resp.items.size(), 1u);
  EXPECT_EQ(resp.items[0].denied, ErrorCode::kAccessDenied);
  EXPECT_TRUE(resp.items[0].keys.empty());
  EXPECT_EQ(resp.to_json().find("\"key\""), std::string::npos);
}

TEST(KeyRelease, MixedRequestIsPartial) {
  Market m;
  AuthService svc(m.tangle, m.contracts);
  svc.register_user(m.registration());
  m.contracts.purchase_access(m.buyer.address(), m.contract_id, 1);
  auto resp = svc.handle_key_request(KeyRequest::make(
      m.buyer, {TxAddress{m.speed_addresses[0]}, TxAddress{m.speed_addresses[1]},
                TxAddress{label("not a message")}}));
  ASSERT_EQ(resp.items.size(), 3u);
  EXPECT_TRUE(resp.items[0].granted());
  EXPECT_EQ(resp.items[1].denied, ErrorCode::kAccessDenied);
  EXPECT_EQ(resp.items[2].denied, ErrorCode::kUnknownItem);
}

TEST(KeyRelease, ChannelGrantCoversCurrentMessagesAndTheirTransactions) {
  Market m;
  AuthService svc(m.tangle, m.contracts);
  svc.register_user(m.registration());
  m.contracts.purchase_access(m.buyer.address(), m.contract_id, 2);
  auto resp = svc.handle_key_request(
      KeyRequest::make(m.buyer, {m.speed.ref(), m.position.ref(), TxAddress{m.speed_addresses[2]}}));
  ASSERT_TRUE(resp.items[0].granted());
  EXPECT_EQ(resp.items[0].root, m.speed.entry_root());
  ASSERT_EQ(resp.items[0].keys.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& k = resp.items[0].keys[i];
    EXPECT_EQ(k.address, m.speed_addresses[i]);
    EXPECT_NO_THROW(mam::fetch_message(m.tangle, k.address, k.key));
  }
  EXPECT_EQ(resp.items[1].denied, ErrorCode::kAccessDenied);
  EXPECT_TRUE(resp.items[2].granted());

  // Messages published after the request are only released on a new request.
  auto later = mam::publish(m.speed, m.tangle, inline_payload(to_bytes("kmh 99")), m.cfg);
  auto again = svc.handle_key_request(KeyRequest::make(m.buyer, {m.speed.ref()}));
  ASSERT_EQ(again.items[0].keys.size(), 4u);
  EXPECT_EQ(again.items[0].keys.back().address, later.message.address);
}

TEST(KeyRelease, SessionGrantReachesReferencedFeatureData) {
  Market m;
  auto session = mam::open_session(m.index, m.tangle, m.cfg, label("session-1"), m.master);
  mam::record_in_session(session, m.tangle, TxAddress{m.position_addresses[1]}, m.cfg);
  AuthService svc(m.tangle, m.contracts);
  svc.register_user(m.registration());

  m.contracts.add_bundle(m.contract_id, m.owner.address(), {4, {session.ref()}, 5});
  m.contracts.purchase_access(m.buyer.address(), m.contract_id, 4);
  auto resp = svc.handle_key_request(
      KeyRequest::make(m.buyer, {session.ref(), TxAddress{m.position_addresses[1]},
                                 TxAddress{m.position_addresses[0]}}));
  ASSERT_TRUE(resp.items[0].granted());
  ASSERT_EQ(resp.items[0].keys.size(), 2u);
  EXPECT_EQ(resp.items[0].keys[1].address, m.position_addresses[1]);
  auto fetched = mam::fetch_message(m.tangle, m.position_addresses[1], resp.items[0].keys[1].key);
  EXPECT_EQ(std::get<InlineDatum>(fetched.payload.value).data, to_bytes("pos 1"));
  EXPECT_TRUE(resp.items[1].granted());
  EXPECT_EQ(resp.items[2].denied, ErrorCode::kAccessDenied);
}

TEST(KeyRelease, BadRequestSignatureRejectsWholeRequest) {
  Market m;
  AuthService svc(m.tangle, m.contracts);
  svc.register_user(m.registration());
  auto req = KeyRequest::make(m.buyer, {TxAddress{m.speed_addresses[0]}});
  req.items.push_back(TxAddress{m.speed_addresses[1]});
  EXPECT_EQ(code_of([&] { svc.handle_key_request(req); }), ErrorCode::kBadSignature);
  auto impostor = KeyRequest::make(m.stranger, {TxAddress{m.speed_addresses[0]}});
  impostor.requester = m.owner.address();
  EXPECT_EQ(code_of([&] { svc.handle_key_request(impostor); }), ErrorCode::kBadSignature);
}

// Every released key corresponds to a granted item in the request and
// decrypts its target; nothing outside the request is returned.
TEST(KeyRelease, SoundnessAndNoAmplification) {
  Market m;
  AuthService svc(m.tangle, m.contracts);
  svc.register_user(m.registration());
  m.contracts.purchase_access(m.buyer.address(), m.contract_id, 3);
  std::vector<ItemRef> items{m.speed.ref(), m.position.ref()};
  for (auto& a : m.speed_addresses) items.push_back(TxAddress{a});
  for (auto& a : m.position_addresses) items.push_back(TxAddress{a});
  for (const auto* who : {&m.buyer, &m.stranger, &m.owner}) {
    auto req = KeyRequest::make(*who, items);
    auto resp = svc.handle_key_request(req);
    ASSERT_EQ(resp.items.size(), items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
      EXPECT_EQ(resp.items[i].ref, items[i]);
      const bool allowed = m.contracts.check_access(
          m.contract_id, who->address(), items[i],
          [&](const ChannelRef& c, const TxAddress& t) {
            const auto& addrs = c == m.speed.ref() ? m.speed_addresses : m.position_addresses;
            return std::find(addrs.begin(), addrs.end(), t.address) != addrs.end();
          });
      EXPECT_EQ(resp.items[i].granted(), allowed);
      for (const auto& k : resp.items[i].keys)
        EXPECT_NO_THROW(mam::fetch_message(m.tangle, k.address, k.key));
    }
  }
}

TEST(KeyRelease, RestartFromRegistrationsGivesIdenticalResponses) {
  Market m;
  auto file = std::filesystem::temp_directory_path() / "roadledger_registrations.json";
  m.contracts.purchase_access(m.buyer.address(), m.contract_id, 2);
  auto req = KeyRequest::make(m.buyer, {m.speed.ref(), TxAddress{m.position_addresses[0]}});
  std::string first;
  {
    AuthService svc(m.tangle, m.contracts);
    svc.register_user(m.registration());
    first = svc.handle_key_request(req).to_json();
    svc.save_registrations(file);
  }
  AuthService restarted(m.tangle, m.contracts);
  restarted.load_registrations(file);
  EXPECT_EQ(restarted.handle_key_request(req).to_json(), first);
  std::filesystem::remove(file);
}

TEST(Wire, JsonRoundTrips) {
  Market m;
  AuthService svc(m.tangle, m.contracts);
  svc.register_user(m.registration());
  m.contracts.purchase_access(m.buyer.address(), m.contract_id, 2);
  auto req = KeyRequest::make(m.buyer, {m.speed.ref(), TxAddress{m.speed_addresses[0]},
                                        TxAddress{m.position_addresses[0]}});
  auto parsed = KeyRequest::from_json(req.to_json());
  EXPECT_TRUE(parsed.verify());
  EXPECT_EQ(parsed.items, req.items);
  auto resp = svc.handle_key_request(req);
  EXPECT_EQ(KeyResponse::from_json(resp.to_json()), resp);
  EXPECT_EQ(code_of([&] { KeyRequest::from_json("{not json"); }), ErrorCode::kMalformed);
  EXPECT_NE(svc.handle_json("{}").find("\"error\""), std::string::npos);

  auto forged = req;
  forged.signature[0] ^= 1;
  try {
    KeyResponse::from_json(svc.handle_json(forged.to_json()));
    ADD_FAILURE() << "forged request answered";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBadSignature);
    EXPECT_STREQ(e.what(), "BadSignature: key request signature");
  }
}

TEST(Wire, TcpServerAnswersConcurrentClients) {
  Market m;
  AuthService svc(m.tangle, m.contracts);
  svc.register_user(m.registration());
  m.contracts.purchase_access(m.buyer.address(), m.contract_id, 1);
  TcpServer server(svc, "127.0.0.1", 0);
  ASSERT_NE(server.port(), 0);

  auto expected = svc.handle_key_request(
      KeyRequest::make(m.buyer, {TxAddress{m.speed_addresses[0]}, TxAddress{m.speed_addresses[1]}}));
  std::vector<std::thread> clients;
  std::atomic<int> ok{0};
  for (int c = 0; c < 4; ++c) {
    clients.emplace_back([&] {
      for (int i = 0; i < 5; ++i) {
        auto req = KeyRequest::make(
            m.buyer, {TxAddress{m.speed_addresses[0]}, TxAddress{m.speed_addresses[1]}});
        if (request_keys("127.0.0.1", server.port(), req) == expected) ++ok;
      }
    });
  }
  for (auto& t : clients) t.join();
  EXPECT_EQ(ok.load(), 20);

  auto forged = KeyRequest::make(m.buyer, {TxAddress{m.speed_addresses[0]}});
  forged.signature[0] ^= 1;
  EXPECT_EQ(code_of([&] { request_keys("127.0.0.1", server.port(), forged); }),
            ErrorCode::kBadSignature);
  server.stop();
}
