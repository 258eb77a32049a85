#include "satmem/server.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <future>
#include <random>

using namespace satmem;
using namespace satmem::testing;
using namespace std::chrono_literals;

namespace {

std::string make_memory(MemoryService &svc, std::size_t vars, const std::vector<Clause> &clauses) {
  auto m = svc.create_memory(vars);
  for (auto &c : clauses)
    svc.rpc_add_clause(m.id, c);
  return m.id;
}

// Every pigeonhole clause guarded by x1: trivially SAT with x1 = true, but a
// solver that tries x1 = false first must refute the pigeonhole instance.
std::vector<Clause> guarded_pigeonhole(int pigeons, std::size_t &vars) {
  std::vector<Clause> out;
  for (auto c : pigeonhole(pigeons, pigeons - 1)) {
    for (auto &l : c)
      l += l > 0 ? 1 : -1;
    c.push_back(1);
    out.push_back(c);
  }
  vars = static_cast<std::size_t>(pigeons * (pigeons - 1) + 1);
  return out;
}

template <class F> bool eventually(F f, std::chrono::milliseconds limit = 5s) {
  const auto end = std::chrono::steady_clock::now() + limit;
  while (std::chrono::steady_clock::now() < end) {
    if (f())
      return true;
    std::this_thread::sleep_for(2ms);
  }
  return f();
}

} // namespace

TEST(SolverWorker, SolvesFromMemory) {
  MemoryService svc;
  SolverWorker w("w");
  auto unsat = make_memory(svc, 1, {{1}, {-1}});
  EXPECT_EQ(w.solve(svc.direct_url(unsat), 0ms, {}, "p").at("result"), "UNSAT");
  auto sat = make_memory(svc, 2, {{1, 2}});
  DiversificationSettings s;
  s.phases[1] = false;
  auto out = w.solve(svc.direct_url(sat), 0ms, s, "p");
  EXPECT_EQ(out.at("result"), "SAT");
  EXPECT_EQ(out.at("model"), json::parse("[false,true]"));
}

TEST(SolverWorker, UnreachableMemory) {
  SolverWorker w("w");
  auto out = w.solve("tcp://127.0.0.1:1/none", 0ms, {}, "p");
  EXPECT_EQ(out.at("error"), "MEMORY_UNAVAILABLE");
  EXPECT_EQ(w.record().state, SolverState::Idle);
}

TEST(SolverWorker, StateMachineErrors) {
  SolverWorker w("w");
  EXPECT_EQ(w.pause("p").at("error"), "NOT_BUSY");
  EXPECT_EQ(w.resume("p").at("error"), "NOT_PAUSED");
  EXPECT_EQ(w.cancel("p").at("error"), "NOT_RUNNING");
}

TEST(SolverWorker, BusyPauseResumeCancel) {
  MemoryService svc;
  SolverWorker w("w");
  auto id = make_memory(svc, 132, pigeonhole(12, 11));
  const auto url = svc.direct_url(id);
  auto fut = std::async(std::launch::async, [&] { return w.solve(url, 0ms, {}, "owner"); });
  ASSERT_TRUE(eventually([&] { return w.record().state == SolverState::Busy; }));
  EXPECT_EQ(w.solve(url, 0ms, {}, "other").at("error"), "BUSY");
  EXPECT_EQ(w.pause("intruder").at("error"), "WEBPID_MISMATCH");
  EXPECT_EQ(w.pause("owner").at("state"), "PAUSED");
  EXPECT_TRUE(w.wait_parked(5s));
  EXPECT_EQ(w.pause("owner").at("error"), "NOT_BUSY");
  EXPECT_EQ(w.resume("owner").at("state"), "BUSY");
  EXPECT_EQ(w.resume("owner").at("error"), "NOT_PAUSED");
  EXPECT_EQ(w.cancel("intruder").at("error"), "WEBPID_MISMATCH");
  EXPECT_EQ(w.cancel("owner").at("state"), "IDLE");
  EXPECT_EQ(fut.get().at("result"), "UNKNOWN");
  // A cancelled solver accepts new work.
  auto small = make_memory(svc, 1, {{1}});
  EXPECT_EQ(w.solve(svc.direct_url(small), 0ms, {}, "next").at("result"), "SAT");
}

TEST(SolverWorker, PauseResumeIsTransparent) {
  MemoryService svc;
  std::mt19937 rng(4);
  int points = 0;
  for (int round = 0; round < 300 && points < 20; ++round) {
    std::size_t vars;
    auto cls = guarded_pigeonhole(8, vars);
    for (auto &c : random_cnf(rng, static_cast<int>(vars), 10))
      if (std::find(c.begin(), c.end(), 1) == c.end())
        cls.push_back(c);
    auto expect = DpllSolver().run(vars, cls);
    auto id = make_memory(svc, vars, cls);
    SolverWorker w("w");
    auto fut = std::async(std::launch::async, [&] { return w.solve(svc.direct_url(id), 0ms, {}, "p"); });
    std::this_thread::sleep_for(std::chrono::microseconds(rng() % 3000));
    if (w.pause("p").contains("state") && w.wait_parked(5s)) {
      ++points;
      ASSERT_EQ(w.resume("p").at("state"), "BUSY");
    } else {
      // The search ended before reaching another decision.
      w.resume("p");
    }
    auto got = outcome_from_json(fut.get());
    ASSERT_EQ(got.result, expect.result);
    ASSERT_EQ(got.model, expect.model);
  }
  EXPECT_GE(points, 20);
}

TEST(SolverWorker, MemoryDeletedMidSearch) {
  MemoryService svc;
  SolverWorker w("w");
  auto id = make_memory(svc, 132, pigeonhole(12, 11));
  auto fut = std::async(std::launch::async, [&] { return w.solve(svc.direct_url(id), 0ms, {}, "p"); });
  ASSERT_TRUE(eventually([&] { return w.record().state == SolverState::Busy; }));
  w.pause("p");
  ASSERT_TRUE(w.wait_parked(5s));
  svc.delete_memory(id);
  std::this_thread::sleep_for(50ms);
  w.resume("p");
  auto out = fut.get();
  EXPECT_EQ(out.at("result"), "UNKNOWN");
  EXPECT_EQ(out.at("error"), "MEMORY_UNAVAILABLE");
}

TEST(SolverWorker, FoldsInClausesAddedDuringSearch) {
  MemoryService svc;
  SolverWorker w("w");
  std::size_t vars;
  auto cls = guarded_pigeonhole(9, vars);
  auto id = make_memory(svc, vars, cls);
  auto fut = std::async(std::launch::async, [&] { return w.solve(svc.direct_url(id), 0ms, {}, "p"); });
  ASSERT_TRUE(eventually([&] { return w.record().state == SolverState::Busy; }));
  // Forbid the easy escape; the instance becomes UNSAT.
  svc.rpc_add_clause(id, std::vector<Literal>{-1});
  auto out = fut.get();
  EXPECT_EQ(out.at("result"), "UNSAT");
}

TEST(Kernel, RegistryAndFindAvailable) {
  Kernel k;
  auto ids = k.spawn_workers(2);
  ASSERT_EQ(k.list_solvers().size(), 2u);
  EXPECT_EQ(k.list_solvers()[0].solver_type, "ReferenceDpll");
  auto a = k.find_available(0ms), b = k.find_available(0ms);
  ASSERT_TRUE(a && b);
  EXPECT_NE(a->solver_id, b->solver_id);
  EXPECT_FALSE(k.find_available(0ms).has_value());
  EXPECT_EQ(k.handle_web_call({{"method", "Kernel.findAvailable"}, {"argument", {{"timeout", 0}}}}).at("error"),
            "NONE_AVAILABLE");
}

TEST(Kernel, FindAvailableWaitsForIdle) {
  MemoryService svc;
  KernelOptions ko;
  ko.claim_lease = 0ms;
  Kernel k(ko);
  auto id = k.spawn_workers(1)[0];
  auto mem = make_memory(svc, 132, pigeonhole(12, 11));
  auto fut = std::async(std::launch::async, [&] {
    return k.solver_call("SatSolver.solve", id, {{"memoryUrl", svc.direct_url(mem)}}, "p");
  });
  ASSERT_TRUE(eventually([&] { return k.list_solvers()[0].state == SolverState::Busy; }));
  EXPECT_FALSE(k.find_available(0ms).has_value());
  auto waiter = std::async(std::launch::async, [&] { return k.find_available(5s); });
  std::this_thread::sleep_for(50ms);
  k.solver_call("SatSolver.cancel", id, json::object(), "p");
  auto got = waiter.get();
  ASSERT_TRUE(got.has_value());
  EXPECT_EQ(got->solver_id, id);
  EXPECT_EQ(fut.get().at("result"), "UNKNOWN");
}

TEST(Kernel, ParallelizeEmpty) {
  Kernel k;
  EXPECT_EQ(k.parallelize(json::array(), false, "p"), json::array());
}

TEST(Kernel, ParallelizeReturnsPositionalResults) {
  MemoryService svc;
  Kernel k;
  k.spawn_workers(3);
  std::mt19937 rng(6);
  std::vector<Clause> cls;
  do
    cls = random_cnf(rng, 10, 30);
  while (!brute_force_sat(10, cls));
  auto mem = make_memory(svc, 10, cls);
  json calls = json::array();
  for (int r = 0; r < 3; ++r)
    calls.push_back({{"memoryUrl", svc.direct_url(mem)},
                     {"timeout", 5},
                     {"diversification", {{"rank", r}, {"size", 3}, {"jitter", true}}}});
  auto res = k.parallelize(calls, false, "p");
  ASSERT_EQ(res.size(), 3u);
  for (auto &r : res) {
    ASSERT_EQ(r.at("result"), "SAT");
    EXPECT_TRUE(satisfies(cls, r.at("model").get<Assignment>()));
  }
}

TEST(Kernel, ParallelizeKeepsChildErrorsInTheirSlot) {
  MemoryService svc;
  Kernel k;
  auto ids = k.spawn_workers(1);
  auto mem = make_memory(svc, 132, pigeonhole(12, 11));
  auto small = make_memory(svc, 1, {{1}});
  // Occupy the only solver, then ask for it with timeout 0 in one slot.
  auto fut = std::async(std::launch::async, [&] {
    return k.solver_call("SatSolver.solve", ids[0], {{"memoryUrl", svc.direct_url(mem)}}, "hold");
  });
  ASSERT_TRUE(eventually([&] { return k.list_solvers()[0].state == SolverState::Busy; }));
  json calls = json::array({json{{"solverId", ids[0]}, {"memoryUrl", svc.direct_url(small)}},
                            json{{"solverId", "missing"}, {"memoryUrl", svc.direct_url(small)}}});
  auto res = k.parallelize(calls, false, "p");
  ASSERT_EQ(res.size(), 2u);
  EXPECT_EQ(res[0].at("error"), "BUSY");
  EXPECT_EQ(res[1].at("error"), "NO_SUCH_OBJECT");
  k.solver_call("SatSolver.cancel", ids[0], json::object(), "hold");
  EXPECT_EQ(fut.get().at("result"), "UNKNOWN");
}

TEST(Kernel, ParallelizeShortCircuitCancelsSiblings) {
  MemoryService svc;
  Kernel k;
  auto ids = k.spawn_workers(3);
  std::size_t vars;
  auto cls = guarded_pigeonhole(12, vars);
  auto mem = make_memory(svc, vars, cls);
  json calls = json::array();
  for (int r = 0; r < 3; ++r) {
    json div = {{"rank", r}, {"size", 3}};
    if (r == 0)
      div["phases"] = {{"x1", true}};
    calls.push_back({{"solverId", ids[r]}, {"memoryUrl", svc.direct_url(mem)}, {"diversification", div}});
  }
  const auto start = std::chrono::steady_clock::now();
  auto res = k.parallelize(calls, true, "p");
  EXPECT_LT(std::chrono::steady_clock::now() - start, 30s);
  ASSERT_EQ(res.size(), 3u);
  EXPECT_EQ(res[0].at("result"), "SAT");
  EXPECT_EQ(res[1].at("result"), "UNKNOWN");
  EXPECT_EQ(res[2].at("result"), "UNKNOWN");
}

TEST(Node, WebCallsOverHttp) {
  NodeOptions o;
  o.workers = 2;
  Node node(o);
  RpcClient c(node.endpoint());
  auto created = c.call("SatCnf.create", "", {{"initialVariableCount", 2}});
  const std::string id = created.at("id");
  c.call("SatCnf.addClause", id, {{"clause", {1, 2}}});
  c.call("SatCnf.addClause", id, {{"clause", {-1}}});
  auto solvers = c.call("Kernel.listSolvers", "").at("solvers");
  ASSERT_EQ(solvers.size(), 2u);
  EXPECT_EQ(solvers[0].at("state"), "IDLE");
  EXPECT_EQ(solvers[0].at("endpoint"), node.endpoint());
  auto solver = c.call("Kernel.findAvailable", "", {{"timeout", 1}});
  auto out = c.call("SatSolver.solve", solver.at("solverId"), {{"memoryUrl", created.at("directUrl")}});
  EXPECT_EQ(out.at("result"), "SAT");
  EXPECT_EQ(out.at("model"), json::parse("[false,true]"));
  EXPECT_EQ(c.call("No.such", "").at("error"), "NO_SUCH_METHOD");
}

TEST(Node, ForwardsCallsToRemoteSolvers) {
  Node a(NodeOptions{}), b(NodeOptions{});
  RpcClient ca(a.endpoint());
  auto remote = b.kernel().list_solvers().at(0);
  auto rec = to_json(remote);
  ca.call("Kernel.registerSolver", "", rec);
  EXPECT_EQ(ca.call("Kernel.listSolvers", "").at("solvers").size(), 2u);
  auto mem = ca.call("SatCnf.create", "", {{"initialVariableCount", 1}});
  ca.call("SatCnf.addClause", mem.at("id"), {{"clause", {1}}});
  auto out = ca.call("SatSolver.solve", remote.solver_id, {{"memoryUrl", mem.at("directUrl")}});
  EXPECT_EQ(out.at("result"), "SAT");
}

TEST(Node, RejectsZeroWorkersAndTakenPort) {
  NodeOptions zero;
  zero.workers = 0;
  EXPECT_THROW(Node{zero}, std::invalid_argument);
  Node first(NodeOptions{});
  NodeOptions same;
  same.port = first.port();
  EXPECT_THROW(Node{same}, std::runtime_error);
}
