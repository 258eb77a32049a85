#pragma once

// Network-facing SAT memory. Each instance owns a CnfStore view and is
// reachable two ways: JSON web calls (handle_web_call) and a binary direct
// channel whose hub relays variable and clause additions to every other peer.

#include "satmem/cnf.hpp"
#include "satmem/net.hpp"
#include "satmem/protocol.hpp"
#include "satmem/rpc.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace satmem {

inline const char *cnf_error_name(CnfError::Code c) {
  switch (c) {
  case CnfError::Code::ZeroLiteral:
    return "ZERO_LITERAL";
  case CnfError::Code::OutOfRange:
    return "OUT_OF_RANGE";
  case CnfError::Code::EmptyClause:
    return "EMPTY_CLAUSE";
  case CnfError::Code::LengthMismatch:
    return "LENGTH_MISMATCH";
  case CnfError::Code::InvalidArgument:
    break;
  }
  return "INVALID_ARGUMENT";
}

struct MemoryServiceOptions {
  std::string host = "127.0.0.1";
  std::uint16_t direct_port = 0; // 0 picks an ephemeral port
  std::chrono::milliseconds lock_timeout{10'000};
};

class MemoryService {
public:
  struct Created {
    std::string id;
    std::string direct_url;
  };

  explicit MemoryService(MemoryServiceOptions opts = {}) : opts_(std::move(opts)) {
    listener_ = net::listen_tcp(opts_.host, opts_.direct_port);
    port_ = listener_.local_port();
    accept_thread_ = std::thread([this] { accept_loop(); });
    watchdog_ = std::thread([this] { watchdog_loop(); });
  }

  MemoryService(const MemoryService &) = delete;
  MemoryService &operator=(const MemoryService &) = delete;

  ~MemoryService() { stop(); }

  void stop() {
    {
      std::lock_guard lock(mu_);
      if (stopped_)
        return;
      stopped_ = true;
      for (auto &[id, inst] : instances_)
        for (auto &c : inst->conns)
          c->close_now();
      instances_.clear();
    }
    cv_.notify_all();
    listener_.shutdown();
    if (accept_thread_.joinable())
      accept_thread_.join();
    if (watchdog_.joinable())
      watchdog_.join();
    std::list<std::shared_ptr<Conn>> conns;
    {
      std::lock_guard lock(mu_);
      conns.swap(all_conns_);
    }
    for (auto &c : conns) {
      c->close_now();
      c->join();
    }
    listener_.close();
  }

  std::uint16_t direct_port() const noexcept { return port_; }

  Created create_memory(std::size_t initial_vars) {
    std::lock_guard lock(mu_);
    auto inst = std::make_shared<Instance>(CnfStore(initial_vars));
    inst->id = make_uuid();
    inst->vars = std::make_shared<VarGroup>();
    inst->vars->members.push_back(inst);
    instances_[inst->id] = inst;
    return {inst->id, url_for(inst->id)};
  }

  Created fork_memory(const std::string &id, bool detach) {
    std::lock_guard lock(mu_);
    auto origin = find_locked(id);
    if (!origin)
      throw std::out_of_range("NO_SUCH_OBJECT");
    auto inst = std::make_shared<Instance>(origin->store.fork(detach));
    inst->id = make_uuid();
    if (detach) {
      inst->vars = std::make_shared<VarGroup>();
    } else {
      inst->vars = origin->vars;
      origin->attached.push_back(inst);
    }
    inst->vars->members.push_back(inst);
    instances_[inst->id] = inst;
    return {inst->id, url_for(inst->id)};
  }

  /// Unregisters the instance and closes its direct connections.
  void delete_memory(const std::string &id) {
    std::lock_guard lock(mu_);
    auto it = instances_.find(id);
    if (it == instances_.end())
      throw std::out_of_range("NO_SUCH_OBJECT");
    auto inst = it->second;
    instances_.erase(it);
    inst->deleted = true;
    for (auto &c : inst->conns) {
      if (inst->vars->holder == c.get())
        release_locked(*inst->vars);
      c->close_now();
    }
    inst->conns.clear();
    auto &members = inst->vars->members;
    members.erase(std::remove_if(members.begin(), members.end(),
                                 [&](const std::weak_ptr<Instance> &w) {
                                   auto p = w.lock();
                                   return !p || p == inst;
                                 }),
                  members.end());
    cv_.notify_all();
  }

  bool has_memory(const std::string &id) const {
    std::lock_guard lock(mu_);
    return instances_.count(id) != 0;
  }

  std::size_t memory_count() const {
    std::lock_guard lock(mu_);
    return instances_.size();
  }

  std::size_t var_count(const std::string &id) const {
    std::lock_guard lock(mu_);
    return require_locked(id)->store.var_count();
  }

  std::vector<Clause> clauses(const std::string &id) const {
    std::lock_guard lock(mu_);
    return require_locked(id)->store.clauses();
  }

  std::string direct_url(const std::string &id) const {
    std::lock_guard lock(mu_);
    require_locked(id);
    return url_for(id);
  }

  std::size_t connection_count(const std::string &id) const {
    std::lock_guard lock(mu_);
    return require_locked(id)->conns.size();
  }

  /// Dispatches one web call envelope; never throws for application errors.
  json handle_web_call(const json &envelope) {
    if (!envelope.is_object() || !envelope.contains("method") || !envelope["method"].is_string())
      return error_result("BAD_ENVELOPE", "missing method");
    const std::string method = envelope["method"];
    const json arg = envelope.contains("argument") && envelope["argument"].is_object()
                         ? envelope["argument"]
                         : json::object();
    const std::string ref = envelope.contains("objectRef") && envelope["objectRef"].is_string()
                                ? envelope["objectRef"].get<std::string>()
                                : std::string();
    try {
      if (method == "SatCnf.create") {
        std::size_t n = arg.value("initialVariableCount", std::size_t{0});
        auto c = create_memory(n);
        return {{"id", c.id}, {"directUrl", c.direct_url}};
      }
      if (method != "SatCnf.addVariable" && method != "SatCnf.addClause" &&
          method != "SatCnf.clauses" && method != "SatCnf.fork" && method != "SatCnf.delete")
        return error_result("NO_SUCH_METHOD", method);
      if (!has_memory(ref))
        return error_result("NO_SUCH_OBJECT", ref);
      if (method == "SatCnf.addVariable")
        return {{"index", rpc_add_variable(ref)}};
      if (method == "SatCnf.addClause") {
        if (!arg.contains("clause") || !arg["clause"].is_array())
          return error_result("BAD_ARGUMENT", "clause must be an array of integers");
        Clause lits = arg["clause"].get<Clause>();
        return {{"added", rpc_add_clause(ref, lits)}};
      }
      if (method == "SatCnf.clauses") {
        std::lock_guard lock(mu_);
        auto inst = require_locked(ref);
        return {{"clauses", inst->store.clauses()}, {"varCount", inst->store.var_count()}};
      }
      if (method == "SatCnf.fork") {
        auto f = fork_memory(ref, arg.value("detach", false));
        return {{"forkId", f.id}, {"directUrl", f.direct_url}};
      }
      delete_memory(ref);
      return {{"deleted", true}};
    } catch (const CnfError &e) {
      return error_result(cnf_error_name(e.code()), e.what());
    } catch (const std::out_of_range &e) {
      return error_result("NO_SUCH_OBJECT", ref);
    } catch (const json::exception &e) {
      return error_result("BAD_ARGUMENT", e.what());
    }
  }

  /// Web-call path for addVariable. Waits while another peer holds the lock.
  Literal rpc_add_variable(const std::string &id) {
    std::unique_lock lock(mu_);
    auto inst = require_locked(id);
    cv_.wait(lock, [&] {
      return stopped_ || inst->deleted || (!inst->vars->holder && inst->vars->waiting.empty());
    });
    if (stopped_ || inst->deleted)
      throw std::out_of_range("NO_SUCH_OBJECT");
    Literal first = inst->store.add_variables(1);
    broadcast_vars_locked(*inst->vars, 1, nullptr);
    return first;
  }

  bool rpc_add_clause(const std::string &id, std::span<const Literal> lits) {
    std::lock_guard lock(mu_);
    auto inst = require_locked(id);
    return add_clause_locked(inst, lits, nullptr);
  }

private:
  struct Conn;
  struct Instance;

  struct Pending {
    std::shared_ptr<Conn> conn;
    wire::Message msg;
  };

  // Lock state and variable-change subscribers for one variable counter.
  struct VarGroup {
    const Conn *holder = nullptr;
    std::chrono::steady_clock::time_point locked_at;
    std::deque<Pending> waiting;
    std::vector<std::weak_ptr<Instance>> members;
  };

  struct Instance {
    explicit Instance(CnfStore s) : store(std::move(s)) {}
    std::string id;
    CnfStore store;
    std::shared_ptr<VarGroup> vars;
    std::vector<std::weak_ptr<Instance>> attached;
    std::vector<std::shared_ptr<Conn>> conns;
    bool deleted = false;
  };

  struct Conn {
    explicit Conn(net::Socket s) : sock(std::move(s)) {}

    net::Socket sock;
    std::weak_ptr<Instance> inst;
    std::mutex out_mu;
    std::condition_variable out_cv;
    std::deque<std::vector<std::uint8_t>> outq;
    bool closing = false;      // stop after flushing outq
    bool closed = false;       // stop now
    std::thread reader, writer;
    std::atomic<bool> finished{false};

    void send(const wire::Message &m) {
      {
        std::lock_guard lock(out_mu);
        if (closing || closed)
          return;
        outq.push_back(wire::encode(m));
      }
      out_cv.notify_one();
    }
    void close_after_flush() {
      {
        std::lock_guard lock(out_mu);
        closing = true;
      }
      out_cv.notify_one();
    }
    void close_now() {
      {
        std::lock_guard lock(out_mu);
        closed = true;
      }
      out_cv.notify_one();
      sock.shutdown();
    }
    void join() {
      if (reader.joinable())
        reader.join();
      if (writer.joinable())
        writer.join();
    }
    void write_loop() {
      for (;;) {
        std::vector<std::uint8_t> frame;
        {
          std::unique_lock lock(out_mu);
          out_cv.wait(lock, [&] { return closed || closing || !outq.empty(); });
          if (closed)
            return;
          if (outq.empty()) {
            sock.shutdown();
            return;
          }
          frame = std::move(outq.front());
          outq.pop_front();
        }
        if (!net::send_frame(sock, frame)) {
          sock.shutdown();
          return;
        }
      }
    }
  };

  std::string url_for(const std::string &id) const {
    return net::DirectUrl{opts_.host, port_, id}.str();
  }

  std::shared_ptr<Instance> find_locked(const std::string &id) const {
    auto it = instances_.find(id);
    return it == instances_.end() ? nullptr : it->second;
  }

  std::shared_ptr<Instance> require_locked(const std::string &id) const {
    auto p = find_locked(id);
    if (!p)
      throw std::out_of_range("NO_SUCH_OBJECT");
    return p;
  }

  // Attached descendants, transitively; they observe the origin's clauses.
  static void collect_attached(const std::shared_ptr<Instance> &inst,
                               std::vector<std::shared_ptr<Instance>> &out) {
    for (auto &w : inst->attached)
      if (auto child = w.lock(); child && !child->deleted) {
        out.push_back(child);
        collect_attached(child, out);
      }
  }

  bool add_clause_locked(const std::shared_ptr<Instance> &inst, std::span<const Literal> lits,
                         const Conn *origin) {
    Clause c = canonical(lits);
    std::vector<std::shared_ptr<Instance>> down;
    collect_attached(inst, down);
    std::vector<bool> had(down.size());
    for (std::size_t i = 0; i < down.size(); ++i)
      had[i] = down[i]->store.contains(c);
    if (!inst->store.add_clause(c))
      return false;
    const wire::Message msg = wire::AddClause{c};
    for (auto &peer : inst->conns)
      if (peer.get() != origin)
        peer->send(msg);
    for (std::size_t i = 0; i < down.size(); ++i)
      if (!had[i])
        for (auto &peer : down[i]->conns)
          peer->send(msg);
    return true;
  }

  void broadcast_vars_locked(VarGroup &g, std::uint32_t n, const Conn *origin) {
    const wire::Message msg = wire::AddVars{n};
    for (auto &w : g.members)
      if (auto m = w.lock(); m && !m->deleted)
        for (auto &peer : m->conns)
          if (peer.get() != origin)
            peer->send(msg);
  }

  static bool var_op(const wire::Message &m) {
    return std::holds_alternative<wire::AddVariable>(m) ||
           std::holds_alternative<wire::AddVars>(m) || std::holds_alternative<wire::LockVars>(m);
  }

  // Applies a variable operation that is known not to be blocked.
  void apply_var_op_locked(Instance &inst, const std::shared_ptr<Conn> &conn,
                           const wire::Message &m) {
    VarGroup &g = *inst.vars;
    if (std::holds_alternative<wire::LockVars>(m)) {
      g.holder = conn.get();
      g.locked_at = std::chrono::steady_clock::now();
      conn->send(wire::LockGranted{});
      return;
    }
    const std::uint32_t n =
        std::holds_alternative<wire::AddVars>(m) ? std::get<wire::AddVars>(m).count : 1;
    const Literal first = inst.store.add_variables(n);
    if (std::holds_alternative<wire::AddVariable>(m))
      conn->send(wire::VarIndex{static_cast<std::uint32_t>(first)});
    else
      conn->send(wire::FirstIndex{static_cast<std::uint32_t>(first)});
    broadcast_vars_locked(g, n, conn.get());
  }

  void release_locked(VarGroup &g) {
    g.holder = nullptr;
    drain_locked(g);
    cv_.notify_all();
  }

  // Runs queued variable operations in FIFO order until one blocks.
  void drain_locked(VarGroup &g) {
    while (!g.waiting.empty()) {
      Pending &p = g.waiting.front();
      if (g.holder && g.holder != p.conn.get())
        return;
      Pending job = std::move(p);
      g.waiting.pop_front();
      auto inst = job.conn->inst.lock();
      if (!inst || inst->deleted || job.conn->finished)
        continue;
      apply_var_op_locked(*inst, job.conn, job.msg);
    }
  }

  void handle_message_locked(const std::shared_ptr<Instance> &inst,
                             const std::shared_ptr<Conn> &conn, wire::Message &&m) {
    VarGroup &g = *inst->vars;
    if (auto *ac = std::get_if<wire::AddClause>(&m)) {
      try {
        add_clause_locked(inst, ac->literals, conn.get());
      } catch (const CnfError &e) {
        const auto code = e.code() == CnfError::Code::OutOfRange ? wire::ErrorCode::OutOfRange
                                                                 : wire::ErrorCode::Malformed;
        conn->send(wire::ErrorMsg{code, e.what()});
      }
      return;
    }
    if (var_op(m)) {
      if (auto *av = std::get_if<wire::AddVars>(&m); av && av->count == 0) {
        conn->send(wire::ErrorMsg{wire::ErrorCode::Malformed, "ADD_VARS count must be positive"});
        return;
      }
      if (g.holder == conn.get()) {
        apply_var_op_locked(*inst, conn, m);
        return;
      }
      if (g.holder || !g.waiting.empty()) {
        g.waiting.push_back({conn, std::move(m)});
        return;
      }
      apply_var_op_locked(*inst, conn, m);
      return;
    }
    if (std::holds_alternative<wire::UnlockVars>(m)) {
      if (g.holder != conn.get()) {
        conn->send(wire::ErrorMsg{wire::ErrorCode::Locked, "connection does not hold the lock"});
        return;
      }
      release_locked(g);
      return;
    }
    if (std::holds_alternative<wire::SnapshotRequest>(m)) {
      conn->send(snapshot_locked(*inst));
      return;
    }
    conn->send(wire::ErrorMsg{wire::ErrorCode::Malformed, "unexpected opcode from client"});
    conn->close_after_flush();
  }

  static wire::Snapshot snapshot_locked(const Instance &inst) {
    return wire::Snapshot{static_cast<std::uint32_t>(inst.store.var_count()), inst.store.clauses()};
  }

  void accept_loop() {
    for (;;) {
      auto s = net::accept_tcp(listener_);
      if (!s)
        return;
      auto conn = std::make_shared<Conn>(std::move(*s));
      std::lock_guard lock(mu_);
      if (stopped_) {
        conn->sock.shutdown();
        return;
      }
      reap_locked();
      all_conns_.push_back(conn);
      conn->writer = std::thread([conn] { conn->write_loop(); });
      conn->reader = std::thread([this, conn] { read_loop(conn); });
    }
  }

  void reap_locked() {
    for (auto it = all_conns_.begin(); it != all_conns_.end();) {
      if ((*it)->finished) {
        (*it)->join();
        it = all_conns_.erase(it);
      } else {
        ++it;
      }
    }
  }

  void read_loop(const std::shared_ptr<Conn> &conn) {
    serve_connection(conn);
    {
      std::lock_guard lock(mu_);
      if (auto inst = conn->inst.lock()) {
        auto &cs = inst->conns;
        cs.erase(std::remove(cs.begin(), cs.end(), conn), cs.end());
        VarGroup &g = *inst->vars;
        if (g.holder == conn.get())
          release_locked(g);
      }
    }
    conn->close_after_flush();
    if (conn->writer.joinable())
      conn->writer.join();
    conn->finished = true;
  }

  void serve_connection(const std::shared_ptr<Conn> &conn) {
    auto hello = net::recv_frame(conn->sock);
    if (!hello)
      return;
    const std::string text(hello->begin(), hello->end());
    const std::string prefix = "SATMEM/1 ";
    {
      std::lock_guard lock(mu_);
      std::shared_ptr<Instance> inst;
      if (text.rfind(prefix, 0) == 0)
        inst = find_locked(text.substr(prefix.size()));
      if (!inst) {
        conn->send(wire::ErrorMsg{wire::ErrorCode::Malformed, "unknown instance or bad handshake"});
        conn->close_after_flush();
        return;
      }
      conn->inst = inst;
      inst->conns.push_back(conn);
      conn->send(snapshot_locked(*inst));
    }
    for (;;) {
      auto frame = net::recv_frame(conn->sock);
      if (!frame)
        return;
      std::optional<wire::Message> msg;
      try {
        msg = wire::decode(*frame);
      } catch (const wire::ProtocolError &e) {
        conn->send(wire::ErrorMsg{wire::ErrorCode::Malformed, e.what()});
        conn->close_after_flush();
        return;
      }
      std::lock_guard lock(mu_);
      auto inst = conn->inst.lock();
      if (!inst || inst->deleted)
        return;
      handle_message_locked(inst, conn, std::move(*msg));
    }
  }

  void watchdog_loop() {
    std::unique_lock lock(mu_);
    while (!stopped_) {
      cv_.wait_for(lock, std::chrono::milliseconds(20));
      const auto now = std::chrono::steady_clock::now();
      for (auto &[id, inst] : instances_) {
        VarGroup &g = *inst->vars;
        if (g.holder && now - g.locked_at > opts_.lock_timeout) {
          for (auto &c : inst->conns)
            if (c.get() == g.holder)
              c->send(wire::ErrorMsg{wire::ErrorCode::Locked, "lock force-released after timeout"});
          release_locked(g);
        }
      }
    }
  }

  MemoryServiceOptions opts_;
  net::Socket listener_;
  std::uint16_t port_ = 0;
  std::thread accept_thread_, watchdog_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  bool stopped_ = false;
  std::map<std::string, std::shared_ptr<Instance>> instances_;
  std::list<std::shared_ptr<Conn>> all_conns_;
};

} // namespace satmem
