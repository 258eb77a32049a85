#include "satmem/memory_client.hpp"
#include "satmem/memory_service.hpp"

#include <gtest/gtest.h>

#include <future>
#include <set>
#include <thread>

using namespace satmem;
using namespace std::chrono_literals;

namespace {

// A bare protocol peer for checks the mirror would hide.
struct RawPeer {
  net::Socket sock;

  explicit RawPeer(const std::string &url) {
    auto u = net::DirectUrl::parse(url);
    sock = net::connect_tcp(u.host, u.port);
    auto hello = net::hello_frame(u.instance);
    net::send_frame(sock, std::span(reinterpret_cast<const std::uint8_t *>(hello.data()), hello.size()));
  }
  void send(const wire::Message &m) { ASSERT_TRUE(net::send_frame(sock, wire::encode(m))); }
  std::optional<wire::Message> recv() {
    auto f = net::recv_frame(sock);
    if (!f)
      return std::nullopt;
    return wire::decode(*f);
  }
};

template <class T> T expect_next(RawPeer &p) {
  auto m = p.recv();
  EXPECT_TRUE(m.has_value());
  if (!m)
    return T{};
  EXPECT_TRUE(std::holds_alternative<T>(*m)) << "got variant index " << m->index();
  return std::holds_alternative<T>(*m) ? std::get<T>(*m) : T{};
}

json call(MemoryService &svc, const std::string &method, const std::string &ref, json arg = json::object()) {
  return svc.handle_web_call({{"method", method}, {"webPid", "test"}, {"objectRef", ref}, {"argument", arg}});
}

} // namespace

TEST(MemoryService, SnapshotOnConnect) {
  MemoryService svc;
  auto m = svc.create_memory(3);
  svc.rpc_add_clause(m.id, std::vector<Literal>{1, -2});
  RawPeer p(m.direct_url);
  auto s = expect_next<wire::Snapshot>(p);
  EXPECT_EQ(s.var_count, 3u);
  EXPECT_EQ(s.clauses, (std::vector<Clause>{{1, -2}}));
}

TEST(MemoryService, HubDoesNotEchoToSender) {
  MemoryService svc;
  auto m = svc.create_memory(2);
  RawPeer a(m.direct_url), b(m.direct_url);
  expect_next<wire::Snapshot>(a);
  expect_next<wire::Snapshot>(b);
  a.send(wire::AddClause{{1, 2}});
  a.send(wire::SnapshotRequest{});
  auto snap = expect_next<wire::Snapshot>(a);
  EXPECT_EQ(snap.clauses, (std::vector<Clause>{{1, 2}}));
  EXPECT_EQ(expect_next<wire::AddClause>(b).literals, (Clause{1, 2}));
}

TEST(MemoryService, VariableOpsAnswerAndRelay) {
  MemoryService svc;
  auto m = svc.create_memory(8);
  RawPeer a(m.direct_url), b(m.direct_url);
  expect_next<wire::Snapshot>(a);
  expect_next<wire::Snapshot>(b);
  a.send(wire::AddVariable{});
  EXPECT_EQ(expect_next<wire::VarIndex>(a).index, 9u);
  EXPECT_EQ(expect_next<wire::AddVars>(b).count, 1u);
  a.send(wire::LockVars{});
  expect_next<wire::LockGranted>(a);
  a.send(wire::AddVars{4});
  EXPECT_EQ(expect_next<wire::FirstIndex>(a).index, 10u);
  EXPECT_EQ(expect_next<wire::AddVars>(b).count, 4u);
  a.send(wire::UnlockVars{});
  EXPECT_EQ(svc.var_count(m.id), 13u);
}

TEST(MemoryService, ErrorsKeepConnectionOpenWhenRecoverable) {
  MemoryService svc;
  auto m = svc.create_memory(2);
  RawPeer a(m.direct_url);
  expect_next<wire::Snapshot>(a);
  a.send(wire::UnlockVars{});
  EXPECT_EQ(expect_next<wire::ErrorMsg>(a).code, wire::ErrorCode::Locked);
  a.send(wire::AddVars{0});
  EXPECT_EQ(expect_next<wire::ErrorMsg>(a).code, wire::ErrorCode::Malformed);
  a.send(wire::AddClause{{3}});
  EXPECT_EQ(expect_next<wire::ErrorMsg>(a).code, wire::ErrorCode::OutOfRange);
  a.send(wire::SnapshotRequest{});
  EXPECT_EQ(expect_next<wire::Snapshot>(a).var_count, 2u);
}

TEST(MemoryService, ServerOpcodeFromClientClosesConnection) {
  MemoryService svc;
  auto m = svc.create_memory(2);
  RawPeer a(m.direct_url);
  expect_next<wire::Snapshot>(a);
  a.send(wire::VarIndex{1});
  EXPECT_EQ(expect_next<wire::ErrorMsg>(a).code, wire::ErrorCode::Malformed);
  EXPECT_FALSE(a.recv().has_value());
}

TEST(MemoryService, GarbageFrameClosesConnection) {
  MemoryService svc;
  auto m = svc.create_memory(2);
  RawPeer a(m.direct_url);
  expect_next<wire::Snapshot>(a);
  const std::uint8_t junk[] = {0x02, 0x05};
  net::send_frame(a.sock, junk);
  EXPECT_EQ(expect_next<wire::ErrorMsg>(a).code, wire::ErrorCode::Malformed);
  EXPECT_FALSE(a.recv().has_value());
}

TEST(MemoryService, QueuedVariableOpsRunAfterUnlock) {
  MemoryService svc;
  auto m = svc.create_memory(0);
  RawPeer a(m.direct_url), b(m.direct_url);
  expect_next<wire::Snapshot>(a);
  expect_next<wire::Snapshot>(b);
  a.send(wire::LockVars{});
  expect_next<wire::LockGranted>(a);
  b.send(wire::AddVariable{});
  b.send(wire::SnapshotRequest{});
  // B's snapshot is answered while its variable request waits.
  EXPECT_EQ(expect_next<wire::Snapshot>(b).var_count, 0u);
  a.send(wire::AddVars{2});
  EXPECT_EQ(expect_next<wire::FirstIndex>(a).index, 1u);
  EXPECT_EQ(expect_next<wire::AddVars>(b).count, 2u);
  a.send(wire::UnlockVars{});
  EXPECT_EQ(expect_next<wire::VarIndex>(b).index, 3u);
}

TEST(MemoryService, WatchdogReleasesStaleLock) {
  MemoryServiceOptions opts;
  opts.lock_timeout = 100ms;
  MemoryService svc(opts);
  auto m = svc.create_memory(0);
  RawPeer a(m.direct_url), b(m.direct_url);
  expect_next<wire::Snapshot>(a);
  expect_next<wire::Snapshot>(b);
  a.send(wire::LockVars{});
  expect_next<wire::LockGranted>(a);
  b.send(wire::AddVariable{});
  EXPECT_EQ(expect_next<wire::ErrorMsg>(a).code, wire::ErrorCode::Locked);
  EXPECT_EQ(expect_next<wire::VarIndex>(b).index, 1u);
}

TEST(MemoryService, WebAddVariableWaitsForLock) {
  MemoryService svc;
  auto m = svc.create_memory(0);
  RawPeer a(m.direct_url);
  expect_next<wire::Snapshot>(a);
  a.send(wire::LockVars{});
  expect_next<wire::LockGranted>(a);
  auto fut = std::async(std::launch::async, [&] { return svc.rpc_add_variable(m.id); });
  EXPECT_EQ(fut.wait_for(150ms), std::future_status::timeout);
  a.send(wire::AddVars{3});
  expect_next<wire::FirstIndex>(a);
  a.send(wire::UnlockVars{});
  EXPECT_EQ(fut.get(), 4);
}

TEST(MemoryService, WebCalls) {
  MemoryService svc;
  auto created = svc.handle_web_call({{"method", "SatCnf.create"}, {"argument", {{"initialVariableCount", 2}}}});
  const std::string id = created.at("id");
  EXPECT_EQ(created.at("directUrl"), svc.direct_url(id));
  EXPECT_EQ(call(svc, "SatCnf.addVariable", id).at("index"), 3);
  EXPECT_EQ(call(svc, "SatCnf.addClause", id, {{"clause", {3, -1}}}).at("added"), true);
  EXPECT_EQ(call(svc, "SatCnf.addClause", id, {{"clause", {-1, 3}}}).at("added"), false);
  EXPECT_EQ(call(svc, "SatCnf.addClause", id, {{"clause", {9}}}).at("error"), "OUT_OF_RANGE");
  EXPECT_EQ(call(svc, "SatCnf.addClause", id, {{"clause", {0}}}).at("error"), "ZERO_LITERAL");
  auto listed = call(svc, "SatCnf.clauses", id);
  EXPECT_EQ(listed.at("clauses"), json::parse("[[-1,3]]"));
  EXPECT_EQ(listed.at("varCount"), 3);
  EXPECT_EQ(call(svc, "SatCnf.frobnicate", id).at("error"), "NO_SUCH_METHOD");
  EXPECT_EQ(call(svc, "SatCnf.clauses", "nope").at("error"), "NO_SUCH_OBJECT");
  EXPECT_EQ(svc.handle_web_call(json::array()).at("error"), "BAD_ENVELOPE");
  EXPECT_EQ(call(svc, "SatCnf.delete", id).at("deleted"), true);
  EXPECT_EQ(call(svc, "SatCnf.clauses", id).at("error"), "NO_SUCH_OBJECT");
}

TEST(MemoryService, ForksOverWebCalls) {
  MemoryService svc;
  auto origin = svc.create_memory(2);
  svc.rpc_add_clause(origin.id, std::vector<Literal>{1});
  const std::string att = call(svc, "SatCnf.fork", origin.id).at("forkId");
  const std::string det = call(svc, "SatCnf.fork", origin.id, {{"detach", true}}).at("forkId");
  auto mirror = MemoryMirror::connect(svc.direct_url(att));
  svc.rpc_add_clause(origin.id, std::vector<Literal>{2});
  call(svc, "SatCnf.addClause", att, {{"clause", {-1, -2}}});
  mirror->sync();
  EXPECT_EQ(mirror->clauses(), (std::vector<Clause>{{1}, {2}, {-1, -2}}));
  EXPECT_EQ(svc.clauses(det), (std::vector<Clause>{{1}}));
  EXPECT_EQ(svc.clauses(origin.id), (std::vector<Clause>{{1}, {2}}));
  // Attached forks share the variable counter.
  EXPECT_EQ(svc.rpc_add_variable(att), 3);
  EXPECT_EQ(svc.var_count(origin.id), 3u);
  EXPECT_EQ(svc.var_count(det), 2u);
}

TEST(MemoryMirror, HandshakeRejectsUnknownInstance) {
  MemoryService svc;
  auto m = svc.create_memory(1);
  auto url = net::DirectUrl::parse(m.direct_url);
  url.instance = "missing";
  EXPECT_THROW(MemoryMirror::connect(url.str(), 2s), MirrorError);
}

TEST(MemoryMirror, AppliesRelaysAndOwnWrites) {
  MemoryService svc;
  auto m = svc.create_memory(4);
  auto a = MemoryMirror::connect(m.direct_url), b = MemoryMirror::connect(m.direct_url);
  a->add_clause_direct({2, 1});
  EXPECT_EQ(a->clauses(), (std::vector<Clause>{{1, 2}}));
  EXPECT_THROW(a->add_clause_direct({7}), CnfError);
  a->sync();
  b->sync();
  EXPECT_EQ(b->clauses(), (std::vector<Clause>{{1, 2}}));
  EXPECT_EQ(a->add_variable(), 5);
  b->sync();
  EXPECT_EQ(b->var_count(), 5u);
  std::size_t cursor = 0;
  EXPECT_EQ(b->clauses_since(cursor).size(), 1u);
  EXPECT_EQ(cursor, 1u);
  EXPECT_THROW(a->reserve_variables(0), CnfError);
}

TEST(MemoryMirror, DeleteClosesMirrors) {
  MemoryService svc;
  auto m = svc.create_memory(1);
  auto a = MemoryMirror::connect(m.direct_url);
  svc.delete_memory(m.id);
  for (int i = 0; i < 200 && a->alive(); ++i)
    std::this_thread::sleep_for(10ms);
  EXPECT_FALSE(a->alive());
  EXPECT_THROW(svc.delete_memory(m.id), std::out_of_range);
}

TEST(MemoryMirror, ConcurrentWritersConverge) {
  MemoryService svc;
  auto m = svc.create_memory(1000);
  std::vector<std::unique_ptr<MemoryMirror>> mirrors;
  for (int i = 0; i < 4; ++i)
    mirrors.push_back(MemoryMirror::connect(m.direct_url));
  std::vector<std::thread> writers;
  for (int i = 0; i < 4; ++i)
    writers.emplace_back([&, i] {
      for (int k = 0; k < 250; ++k) {
        const Literal v = i * 250 + k + 1;
        mirrors[i]->add_clause_direct({v, -(v % 1000 + 1)});
      }
    });
  for (auto &t : writers)
    t.join();
  for (auto &mm : mirrors)
    mm->sync();
  // A second round: every write from every peer was applied before the first
  // round of replies, so these snapshots see everything.
  for (auto &mm : mirrors)
    mm->sync();
  auto server = svc.clauses(m.id);
  std::set<Clause> expect(server.begin(), server.end());
  EXPECT_EQ(server.size(), 1000u);
  EXPECT_EQ(expect.size(), 1000u);
  for (auto &mm : mirrors) {
    auto cls = mm->clauses();
    EXPECT_EQ(std::set<Clause>(cls.begin(), cls.end()), expect);
    EXPECT_EQ(cls.size(), 1000u);
  }
}

TEST(MemoryMirror, ConcurrentReservationsAreDisjoint) {
  MemoryService svc;
  auto m = svc.create_memory(0);
  auto a = MemoryMirror::connect(m.direct_url), b = MemoryMirror::connect(m.direct_url);
  for (int rep = 0; rep < 200; ++rep) {
    Literal fa = 0, fb = 0;
    std::thread ta([&] { fa = a->reserve_variables(4); });
    std::thread tb([&] { fb = b->reserve_variables(4); });
    ta.join();
    tb.join();
    ASSERT_TRUE(fa + 4 <= fb || fb + 4 <= fa) << fa << " " << fb;
  }
  EXPECT_EQ(svc.var_count(m.id), 1600u);
  a->sync();
  EXPECT_EQ(a->var_count(), 1600u);
  EXPECT_TRUE(a->errors().empty());
}
