#pragma once

// One node: the memory service, the solver kernel and an HTTP front end that
// accepts web-call envelopes on POST /call.

#include "satmem/memory_service.hpp"
#include "satmem/solver_api.hpp"

#include "httplib.h"

#include <memory>
#include <stdexcept>
#include <string>
#include <thread>

namespace satmem {

struct NodeOptions {
  std::string host = "127.0.0.1";
  int port = 0;              // 0 picks an ephemeral port
  std::uint16_t direct_port = 0;
  std::size_t workers = 1;
  std::chrono::milliseconds lock_timeout{10'000};
};

/// Default worker count: one per core, leaving one core for the node itself.
inline std::size_t default_worker_count() {
  const unsigned n = std::thread::hardware_concurrency();
  return n > 1 ? n - 1 : 1;
}

class Node {
public:
  explicit Node(NodeOptions opts) : opts_(std::move(opts)) {
    if (opts_.workers == 0)
      throw std::invalid_argument("at least one worker is required");
    // The library default also sets SO_REUSEPORT, which would let a second
    // node share the port silently.
    http_.set_socket_options([](socket_t sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
    });
    if (opts_.port == 0) {
      port_ = http_.bind_to_any_port(opts_.host);
    } else {
      port_ = opts_.port;
      if (!http_.bind_to_port(opts_.host, port_))
        port_ = -1;
    }
    if (port_ <= 0)
      throw std::runtime_error("cannot listen on " + opts_.host + ":" + std::to_string(opts_.port));

    MemoryServiceOptions mo;
    mo.host = opts_.host;
    mo.direct_port = opts_.direct_port;
    mo.lock_timeout = opts_.lock_timeout;
    memory_ = std::make_unique<MemoryService>(mo);
    KernelOptions ko;
    ko.endpoint = endpoint();
    kernel_ = std::make_unique<Kernel>(ko);
    kernel_->spawn_workers(opts_.workers);

    http_.Post(kCallPath, [this](const httplib::Request &req, httplib::Response &res) {
      json env;
      try {
        env = json::parse(req.body);
      } catch (const json::parse_error &e) {
        res.set_content(error_result("BAD_ENVELOPE", e.what()).dump(), "application/json");
        return;
      }
      res.set_content(handle_web_call(env).dump(), "application/json");
    });
    http_.new_task_queue = [] { return new httplib::ThreadPool(16); };
    thread_ = std::thread([this] { http_.listen_after_bind(); });
    http_.wait_until_ready();
  }

  Node(const Node &) = delete;
  Node &operator=(const Node &) = delete;

  ~Node() { stop(); }

  void stop() {
    if (!thread_.joinable())
      return;
    http_.stop();
    thread_.join();
    memory_->stop();
  }

  /// Blocks until stop() is called from another thread.
  void wait() {
    if (thread_.joinable())
      thread_.join();
  }

  int port() const noexcept { return port_; }
  std::string endpoint() const { return "http://" + opts_.host + ":" + std::to_string(port_); }
  MemoryService &memory() noexcept { return *memory_; }
  Kernel &kernel() noexcept { return *kernel_; }

  json handle_web_call(const json &env) {
    if (!env.is_object() || !env.contains("method") || !env["method"].is_string())
      return error_result("BAD_ENVELOPE", "missing method");
    const std::string method = env["method"];
    if (method.rfind("SatCnf.", 0) == 0)
      return memory_->handle_web_call(env);
    return kernel_->handle_web_call(env);
  }

private:
  NodeOptions opts_;
  httplib::Server http_;
  int port_ = 0;
  std::unique_ptr<MemoryService> memory_;
  std::unique_ptr<Kernel> kernel_;
  std::thread thread_;
};

} // namespace satmem
