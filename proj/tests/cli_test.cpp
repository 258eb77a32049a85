#include "satmem/cli.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace satmem;
using namespace satmem::cli;

namespace {

std::string temp_path(const std::string &name) {
  return (std::filesystem::temp_directory_path() / ("satmem_cli_" + name)).string();
}

std::string slurp(const std::string &path) {
  std::ifstream f(path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct Run {
  int code;
  std::string out, err;
};

template <class F> Run capture(F f) {
  std::ostringstream out, err;
  int code = f(out, err);
  return {code, out.str(), err.str()};
}

Run factor(std::uint64_t n, std::size_t l, const std::string &endpoint = "", std::size_t portfolio = 1) {
  FactorOptions o;
  o.n = n;
  o.l = l;
  o.endpoint = endpoint;
  o.portfolio = portfolio;
  return capture([&](auto &out, auto &err) { return cmd_factor(o, out, err); });
}

} // namespace

TEST(Cli, ParseProduct) {
  EXPECT_EQ(parse_product("15", 4).product(), 15u);
  EXPECT_EQ(parse_product("0b1111", 4).product(), 15u);
  EXPECT_EQ(parse_product("0b00100001", 4).product(), 33u);
  EXPECT_THROW(parse_product("", 4), FactorError);
  EXPECT_THROW(parse_product("-3", 4), FactorError);
  EXPECT_THROW(parse_product("0b12", 4), FactorError);
  EXPECT_THROW(parse_product("256", 4), FactorError);
  EXPECT_THROW(parse_product("99999999999999999999999", 4), FactorError);
}

TEST(Cli, EncodeWritesDimacsWithLayout) {
  const auto path = temp_path("encode.cnf");
  auto r = capture([&](auto &out, auto &err) { return cmd_encode(4, "35", path, out, err); });
  ASSERT_EQ(r.code, kExitOk) << r.err;
  auto doc = dimacs_parse(slurp(path));
  EXPECT_GE(doc.var_count, 8u);
  EXPECT_NE(r.out.find("u: x1..x4"), std::string::npos);
  bool layout = false;
  for (const auto &c : doc.comments)
    layout |= c.find("u = x1..x4, v = x5..x8") != std::string::npos;
  EXPECT_TRUE(layout);

  // The file alone determines the factors.
  auto store = dimacs_read(slurp(path));
  auto res = DpllSolver().run(store);
  ASSERT_EQ(res.result, SolveResult::Sat);
  auto [u, v] = decode_model(res.model, 4);
  EXPECT_EQ(u, 7u);
  EXPECT_EQ(v, 5u);
  std::filesystem::remove(path);
}

TEST(Cli, EncodeRejectsBadArguments) {
  const auto path = temp_path("bad.cnf");
  auto r = capture([&](auto &out, auto &err) { return cmd_encode(3, "15", path, out, err); });
  EXPECT_EQ(r.code, kExitError);
  EXPECT_NE(r.err.find("power of two"), std::string::npos);
  r = capture([&](auto &out, auto &err) { return cmd_encode(8, "70000", path, out, err); });
  EXPECT_EQ(r.code, kExitError);
  r = capture([&](auto &out, auto &err) { return cmd_encode(4, "15", "/nonexistent/dir/x.cnf", out, err); });
  EXPECT_EQ(r.code, kExitError);
}

TEST(Cli, EncodeIntoRemoteMemory) {
  NodeOptions no;
  Node node(no);
  auto m = node.memory().create_memory(0);
  auto r = capture([&](auto &out, auto &err) { return cmd_encode(4, "21", m.direct_url, out, err); });
  ASSERT_EQ(r.code, kExitOk) << r.err;
  auto mirror = MemoryMirror::connect(m.direct_url);
  auto snap = mirror->sync();
  CnfStore store(snap.var_count);
  for (const auto &c : snap.clauses)
    store.add_clause(c);
  auto res = DpllSolver().run(store);
  ASSERT_EQ(res.result, SolveResult::Sat);
  auto [u, v] = decode_model(res.model, 4);
  EXPECT_EQ(u * v, 21u);
  EXPECT_EQ(v, 3u);
}

TEST(Cli, FactorEmbedded) {
  auto r = factor(15, 4);
  EXPECT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(r.out, "15 = 5 × 3\n");
  r = factor(49, 4);
  EXPECT_EQ(r.out, "49 = 7 × 7\n");
}

TEST(Cli, FactorUnsat) {
  auto r = factor(23, 4);
  EXPECT_EQ(r.code, kExitUnsat);
  EXPECT_EQ(r.out, "UNSAT (no two factors of length 4)\n");
  r = factor(121, 4); // 11 needs five bits
  EXPECT_EQ(r.code, kExitUnsat);
}

TEST(Cli, FactorRejectsBadArguments) {
  EXPECT_EQ(factor(15, 3).code, kExitError);
  EXPECT_EQ(factor(70000, 8).code, kExitError);
  EXPECT_EQ(factor(15, 4, "", 0).code, kExitError);
  EXPECT_EQ(factor(15, 4, "http://127.0.0.1:1").code, kExitError);
}

TEST(Cli, FactorPortfolioOnSharedNode) {
  NodeOptions no;
  no.workers = 3;
  Node node(no);
  auto r = factor(8633, 8, node.endpoint(), 3);
  EXPECT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(r.out, "8633 = 97 × 89\n");
  EXPECT_EQ(node.memory().memory_count(), 0u);
}

TEST(Cli, SolveExitCodes) {
  const auto sat = temp_path("sat.cnf"), unsat = temp_path("unsat.cnf");
  std::ofstream(sat) << "c tiny\np cnf 2 2\n1 2 0\n-1 0\n";
  std::ofstream(unsat) << "p cnf 1 2\n1 0\n-1 0\n";
  auto r = capture([&](auto &out, auto &err) { return cmd_solve(sat, out, err); });
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_EQ(r.out, "s SATISFIABLE\nv -1 2 0\n");
  r = capture([&](auto &out, auto &err) { return cmd_solve(unsat, out, err); });
  EXPECT_EQ(r.code, kExitUnsat);
  EXPECT_EQ(r.out, "s UNSATISFIABLE\n");
  r = capture([&](auto &out, auto &err) { return cmd_solve(temp_path("missing.cnf"), out, err); });
  EXPECT_EQ(r.code, kExitError);
  std::filesystem::remove(sat);
  std::filesystem::remove(unsat);
}

TEST(Cli, DimacsImportExportRoundTrip) {
  NodeOptions no;
  Node node(no);
  const auto in = temp_path("in.cnf"), out_path = temp_path("out.cnf");
  std::ofstream(in) << "p cnf 5 3\n1 -2 0\n3 4 5 0\n-5 0\n";
  auto r = capture([&](auto &out, auto &err) { return cmd_dimacs_import(in, node.endpoint(), out, err); });
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto pos = r.out.find("directUrl: ");
  ASSERT_NE(pos, std::string::npos);
  std::string url = r.out.substr(pos + 11);
  url.pop_back();
  r = capture([&](auto &out, auto &err) { return cmd_dimacs_export(url, out_path, out, err); });
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(dimacs_read(slurp(out_path)).clauses(), dimacs_read(slurp(in)).clauses());
  EXPECT_EQ(dimacs_read(slurp(out_path)).var_count(), 5u);
  std::filesystem::remove(in);
  std::filesystem::remove(out_path);
}
