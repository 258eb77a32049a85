// satmem: run a node, encode factorization instances, solve, convert DIMACS.

#include "satmem/cli.hpp"

#include "CLI11.hpp"

#include <csignal>
#include <iostream>

namespace {

satmem::Node *g_node = nullptr;

void on_signal(int) {
  if (g_node)
    std::thread([] { g_node->stop(); }).detach();
}

} // namespace

int main(int argc, char **argv) {
  using namespace satmem;
  CLI::App app{"Shared SAT memory, solvers and factorization encoder"};
  app.require_subcommand(1);
  const std::string env_endpoint = cli::endpoint_from_env();

  auto *serve = app.add_subcommand("serve", "Run a memory service with solver workers");
  NodeOptions node_opts;
  long long workers = static_cast<long long>(default_worker_count());
  double lock_timeout = 10;
  serve->add_option("--host", node_opts.host, "Address to listen on")->capture_default_str();
  serve->add_option("--port", node_opts.port, "Web-call port")->default_val(8080);
  serve->add_option("--direct-port", node_opts.direct_port, "Direct channel port (0 = any)")
      ->capture_default_str();
  serve->add_option("--workers", workers, "Reference solver workers")->capture_default_str();
  serve->add_option("--lock-timeout", lock_timeout, "Seconds before a held variable lock is released")
      ->capture_default_str();

  auto *encode = app.add_subcommand("encode", "Encode a factorization instance");
  std::size_t enc_l = 0;
  std::string enc_product, enc_out;
  encode->add_option("--l", enc_l, "Factor bit length (power of two)")->required();
  encode->add_option("--product", enc_product, "Product, decimal or 0b bits (MSB first)")->required();
  encode->add_option("--out", enc_out, "DIMACS path or tcp:// memory URL")->required();

  auto *factor = app.add_subcommand("factor", "Factor N on shared solvers");
  cli::FactorOptions fo;
  fo.endpoint = env_endpoint;
  factor->add_option("N", fo.n, "Number to factor")->required();
  factor->add_option("--l", fo.l, "Factor bit length (power of two)")->required();
  factor->add_option("--endpoint", fo.endpoint, "Node endpoint; empty runs an in-process node")
      ->capture_default_str();
  factor->add_option("--portfolio", fo.portfolio, "Number of diversified solvers")->capture_default_str();
  factor->add_option("--wait", fo.wait, "Seconds to wait for free solvers")->capture_default_str();

  auto *solve = app.add_subcommand("solve", "Solve a DIMACS file with the reference solver");
  std::string solve_path;
  solve->add_option("file", solve_path, "DIMACS CNF file")->required();

  auto *dimacs = app.add_subcommand("dimacs", "Convert between memories and DIMACS files");
  dimacs->require_subcommand(1);
  auto *exp = dimacs->add_subcommand("export", "Write a memory to a DIMACS file");
  std::string exp_url, exp_out;
  exp->add_option("url", exp_url, "tcp:// memory URL")->required();
  exp->add_option("--out", exp_out, "DIMACS path")->required();
  auto *imp = dimacs->add_subcommand("import", "Create a memory from a DIMACS file");
  std::string imp_path, imp_endpoint = env_endpoint;
  imp->add_option("file", imp_path, "DIMACS path")->required();
  imp->add_option("--endpoint", imp_endpoint, "Node endpoint")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    return app.exit(e) == 0 ? cli::kExitOk : cli::kExitError;
  }

  if (serve->parsed()) {
    if (workers <= 0) {
      std::cerr << "error: --workers must be at least 1\n";
      return cli::kExitError;
    }
    node_opts.workers = static_cast<std::size_t>(workers);
    node_opts.lock_timeout = std::chrono::milliseconds(static_cast<long long>(lock_timeout * 1000));
    try {
      Node node(node_opts);
      g_node = &node;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "endpoint: " << node.endpoint() << "\n"
                << "direct port: " << node.memory().direct_port() << "\n"
                << "workers: " << node_opts.workers << std::endl;
      node.wait();
      g_node = nullptr;
      return cli::kExitOk;
    } catch (const std::exception &e) {
      std::cerr << "error: " << e.what() << "\n";
      return cli::kExitError;
    }
  }
  if (encode->parsed())
    return cli::cmd_encode(enc_l, enc_product, enc_out, std::cout, std::cerr);
  if (factor->parsed())
    return cli::cmd_factor(fo, std::cout, std::cerr);
  if (solve->parsed())
    return cli::cmd_solve(solve_path, std::cout, std::cerr);
  if (exp->parsed())
    return cli::cmd_dimacs_export(exp_url, exp_out, std::cout, std::cerr);
  if (imp->parsed()) {
    if (imp_endpoint.empty()) {
      std::cerr << "error: --endpoint or " << kEndpointEnv << " is required\n";
      return cli::kExitError;
    }
    return cli::cmd_dimacs_import(imp_path, imp_endpoint, std::cout, std::cerr);
  }
  return cli::kExitError;
}
