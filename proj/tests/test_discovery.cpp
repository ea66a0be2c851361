#include "doctest.h"
#include "oracles.hpp"
#include "tip/dnssd.hpp"
#include "tip/error.hpp"

using namespace tip;

namespace {

NodeRecord record_for(const NodeId& id) {
    NodeRecord r;
    r.node_id = id;
    return r;
}

// Reference distance: big-endian byte-wise XOR, compared lexicographically.
int reference_bucket(const NodeId& a, const NodeId& b) {
    for (int i = 0; i < 32; ++i) {
        unsigned x = a.bytes[static_cast<std::size_t>(i)] ^ b.bytes[static_cast<std::size_t>(i)];
        if (x) {
            int top = 7;
            while (!(x >> top)) --top;
            return (31 - i) * 8 + top;
        }
    }
    return -1;
}

Errc code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return Errc::Ok;
}

}  // namespace

TEST_CASE("xor distance and bucket index") {
    Rng rng(1);
    for (int i = 0; i < 2000; ++i) {
        NodeId a = Key256::random(rng), b = Key256::random(rng);
        // Force a shared prefix of random length now and then.
        if (i % 3 == 0) std::copy_n(a.bytes.begin(), rng.below(32), b.bytes.begin());
        if (a == b) continue;
        auto d = dht::xor_distance(a, b);
        CHECK(d == dht::xor_distance(b, a));
        CHECK((d ^ a) == b);
        CHECK(dht::bucket_index(a, b) == reference_bucket(a, b));
    }
    NodeId z;
    NodeId one = Key256::from_uint(1);
    CHECK(dht::bucket_index(z, one) == 0);
    NodeId top;
    top.bytes[0] = 0x80;
    CHECK(dht::bucket_index(z, top) == 255);
    CHECK(code_of([&] { (void)dht::bucket_index(one, one); }) == Errc::SelfReference);
}

TEST_CASE("routing table invariants under random inserts") {
    Rng rng(2);
    NodeId local = Key256::random(rng);
    dht::RoutingTable t(local, 4);
    CHECK(t.insert(record_for(local)) == dht::RoutingTable::Insert::Self);
    std::vector<NodeId> added;
    for (int i = 0; i < 3000; ++i) {
        NodeId id = Key256::random(rng);
        if (i % 2) std::copy_n(local.bytes.begin(), rng.below(31) + 1, id.bytes.begin());
        if (id == local) continue;
        auto r = t.insert(record_for(id));
        if (r == dht::RoutingTable::Insert::Added) added.push_back(id);
    }
    CHECK(t.check_invariants());
    CHECK(t.size() == added.size());
    for (int b = 0; b < dht::kBuckets; ++b) CHECK(t.bucket(b).size() <= 4);

    SUBCASE("refresh moves an entry to the most recent end") {
        NodeId first = added.front();
        int b = dht::bucket_index(local, first);
        if (t.bucket(b).size() > 1) {
            CHECK(t.least_recent(b)->node_id == first);
            CHECK(t.insert(record_for(first)) == dht::RoutingTable::Insert::Refreshed);
            CHECK(t.bucket(b).back().node_id == first);
        }
    }
    SUBCASE("closest agrees with a brute-force sort") {
        for (int q = 0; q < 50; ++q) {
            Key256 target = Key256::random(rng);
            auto got = t.closest(target, 20);
            std::vector<NodeId> want = added;
            std::sort(want.begin(), want.end(),
                      [&](const auto& a, const auto& b) { return (a ^ target) < (b ^ target); });
            want.resize(std::min<std::size_t>(20, want.size()));
            REQUIRE(got.size() == want.size());
            for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i].node_id == want[i]);
        }
    }
    SUBCASE("remove") {
        CHECK(t.remove(added.back()));
        CHECK_FALSE(t.remove(added.back()));
        CHECK(t.find(added.back()) == nullptr);
        CHECK(t.check_invariants());
    }
}

TEST_CASE("full bucket: silent occupant is evicted, live one kept") {
    net::SimNetwork net(5);
    net.set_logging(false);
    NodeConfig cfg;
    cfg.k = 1;
    cfg.announce_interval_us = 0;
    Rng rng(9);
    auto& ta = net.add_node("a");
    Node a(ta, crypto::NodeIdentity::generate(rng), cfg, 1);
    a.start();
    // Two more nodes that land in the same bucket of a.
    std::vector<std::unique_ptr<Node>> others;
    int bucket = -1;
    for (int i = 0; others.size() < 3 && i < 1000; ++i) {
        auto ident = crypto::NodeIdentity::generate(rng);
        int b = dht::bucket_index(a.id(), ident.node_id);
        if (bucket == -1) bucket = b;
        if (b != bucket) continue;
        auto& t = net.add_node("o" + std::to_string(others.size()));
        others.push_back(std::make_unique<Node>(t, ident, cfg, static_cast<std::uint64_t>(i + 2)));
        others.back()->start();
    }
    REQUIRE(others.size() == 3);
    a.add_peer(others[0]->record());
    REQUIRE(a.dht().table().bucket(bucket).size() == 1);

    a.dht().table_insert(others[1]->record());
    net.run_for(2'000'000);
    CHECK(a.dht().table().find(others[0]->id()) != nullptr);
    CHECK(a.dht().table().find(others[1]->id()) == nullptr);
    CHECK(a.dht().pings_sent() >= 1);

    net.set_muted(others[0]->address(), true);
    a.dht().table_insert(others[2]->record());
    net.run_for(2'000'000);
    CHECK(a.dht().table().find(others[0]->id()) == nullptr);
    CHECK(a.dht().table().find(others[2]->id()) != nullptr);
    CHECK(a.dht().table().check_invariants());
}

TEST_CASE("1024-node DHT: every published key is found in at most 10 rounds") {
    auto t = oracle::dht_trial(1024, 100, 0xD47);
    CHECK(t.published == 100);
    CHECK(t.true_closest == 100);
    CHECK(t.found == 100);
    CHECK(t.correct == 100);
    CHECK(t.max_rounds <= 10);
    MESSAGE("max rounds " << t.max_rounds);
}

TEST_CASE("small DHT with other parameters") {
    auto t = oracle::dht_trial(200, 20, 77, 8, 2);
    CHECK(t.found == 20);
    CHECK(t.correct == 20);
}

TEST_CASE("a provider on the local link needs no FIND_NODE") {
    oracle::Mesh m(30, 20, 3, 31, 10);
    Capability cap{"machine:fluid:fill", DataSchema::U16, "1.0.0", 0.995, 10};
    m.nodes[7]->serve(cap, [](const cbor::Value&) { return adapter::TypedValue{DataSchema::U16, cbor::Value(1u)}; });
    m.net.run_for(1'000'000);

    auto& req = *m.nodes[0];
    const auto before = req.io().counters().find_node_sent;
    bool done = false;
    std::vector<NodeRecord> got;
    discovery::DiscoverStats stats;
    req.discovery().discover(cap.id, {}, [&](std::vector<NodeRecord> r, discovery::DiscoverStats s) {
        got = std::move(r);
        stats = s;
        done = true;
    });
    REQUIRE(m.wait(done));
    CHECK(req.io().counters().find_node_sent == before);
    CHECK_FALSE(stats.dht_started);
    CHECK(stats.local_hits >= 1);
    REQUIRE(got.size() == 1);
    CHECK(got[0].node_id == m.nodes[7]->id());

    SUBCASE("the second call is served from the cache") {
        bool again = false;
        req.discovery().discover(cap.id, {}, [&](std::vector<NodeRecord> r, discovery::DiscoverStats s) {
            CHECK(s.cache_hit);
            CHECK(r.size() == 1);
            again = true;
        });
        REQUIRE(m.wait(again));
        CHECK(req.io().counters().find_node_sent == before);
    }
}

TEST_CASE("a provider on another link is found through the DHT") {
    oracle::Mesh m(40, 20, 3, 41, 12);
    NodeConfig cfg;
    cfg.announce_interval_us = 0;
    cfg.link_group = "far-away";
    Rng rng(4);
    auto& t = m.net.add_node("remote");
    Node remote(t, crypto::NodeIdentity::generate(rng), cfg, 5);
    remote.start();
    for (int i = 0; i < 10; ++i) remote.add_peer(m.nodes[rng.below(m.nodes.size())]->record());
    Capability cap{"sensor:temp:remote", DataSchema::F32, "1.0.0", 0.99, 1};
    remote.serve(cap, [](const cbor::Value&) { return adapter::TypedValue{DataSchema::F32, cbor::Value(21.5)}; });
    m.net.run_for(2'000'000);

    auto& req = *m.nodes[3];
    bool done = false;
    std::vector<NodeRecord> got;
    discovery::DiscoverStats stats;
    req.discovery().discover(cap.id, {}, [&](std::vector<NodeRecord> r, discovery::DiscoverStats s) {
        got = std::move(r);
        stats = s;
        done = true;
    });
    REQUIRE(m.wait(done));
    CHECK(stats.dht_started);
    CHECK(stats.dht_hits >= 1);
    CHECK(req.io().counters().find_node_sent > 0);
    REQUIRE(got.size() == 1);
    CHECK(got[0].node_id == remote.id());
    CHECK(got[0].find_capability(cap.id) != nullptr);
}

TEST_CASE("unknown capability resolves to nothing") {
    oracle::Mesh m(20, 20, 3, 51, 8);
    bool done = false;
    std::size_t n = 99;
    m.nodes[0]->discovery().discover("nobody:has:this", {}, [&](std::vector<NodeRecord> r, discovery::DiscoverStats) {
        n = r.size();
        done = true;
    });
    REQUIRE(m.wait(done));
    CHECK(n == 0);
}

TEST_CASE("discovery cache expires at its ttl") {
    discovery::DiscoveryCache c(1000);
    NodeRecord r;
    r.node_id = Key256::from_uint(5);
    c.put("a", {r}, 100);
    CHECK(c.get("a", 100).has_value());
    CHECK(c.get("a", 1099).has_value());
    CHECK_FALSE(c.get("a", 1100).has_value());
    CHECK(c.size() == 0);
    CHECK_FALSE(c.get("b", 0).has_value());
}

TEST_CASE("DNS-SD records") {
    auto id = crypto::NodeIdentity::from_seed(crypto::Seed{4});
    NodeRecord n;
    n.node_id = id.node_id;
    n.signing_public = id.public_key();
    n.addresses = {"udp://10.0.0.7:5683"};
    n.capabilities = {{"machine:fluid:fill", DataSchema::U16, "1.2.0", 0.99, 10},
                      {"sensor:temp:celsius", DataSchema::F32, "1.0.0", 0.9, 1}};

    auto services = dnssd::service_instances(n);
    REQUIRE(services.size() == 2);
    CHECK(services[0].txt_value("cap") == "machine:fluid:fill");
    CHECK(services[0].txt_value("schema") == "0");  // DataSchema::U16
    CHECK(services[0].txt_value("ver") == "1.2.0");
    CHECK(services[0].txt_value("sec") == "1");
    CHECK(services[0].instance.ends_with("._tip._udp.local"));

    SUBCASE("DNS wire roundtrip") {
        Bytes msg = dnssd::encode_dns_response(services);
        CHECK(dnssd::decode_dns_response(msg) == services);
        for (std::size_t cut : {0u, 5u, 12u, 30u}) {
            if (cut >= msg.size()) continue;
            CHECK(code_of([&] { (void)dnssd::decode_dns_response(ByteView(msg).subspan(0, cut)); }) ==
                  Errc::MalformedDns);
        }
    }
    SUBCASE("compression pointer loops are rejected") {
        // Header with one answer whose name is a pointer to itself.
        Bytes msg = {0, 0, 0x84, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0xC0, 12, 0, 12, 0, 1, 0, 0, 0, 120, 0, 2, 0xC0, 12};
        CHECK(code_of([&] { (void)dnssd::decode_dns_response(msg); }) == Errc::MalformedDns);
    }
    SUBCASE("signed announcements") {
        Bytes a = dnssd::encode_announcement(n, id.key);
        auto dec = dnssd::decode_announcement(a);
        REQUIRE(dec);
        CHECK(dec->node.node_id == n.node_id);
        CHECK(dec->services == services);
        for (std::size_t i = 0; i < a.size(); i += 7) {
            Bytes t = a;
            t[i] ^= 0x01;
            CAPTURE(i);
            CHECK_FALSE(dnssd::decode_announcement(t).has_value());
        }
        auto wrong = crypto::NodeIdentity::from_seed(crypto::Seed{5});
        CHECK_FALSE(dnssd::decode_announcement(dnssd::encode_announcement(n, wrong.key)).has_value());
    }
    SUBCASE("queries") {
        CHECK(dnssd::decode_query(dnssd::encode_query("machine:fluid:fill")) == "machine:fluid:fill");
        CHECK_FALSE(dnssd::decode_query(as_bytes("garbage")).has_value());
    }
}
