#pragma once

// Client mirror of a remote SAT memory over the direct-access channel.
// The mirror applies its own additions locally before sending them and
// applies everything relayed by the hub on a single reader thread.

#include "satmem/cnf.hpp"
#include "satmem/net.hpp"
#include "satmem/protocol.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace satmem {

class MirrorError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class MemoryMirror {
public:
  /// Connects, performs the handshake and applies the initial snapshot.
  static std::unique_ptr<MemoryMirror> connect(const std::string &direct_url,
                                               std::chrono::milliseconds timeout = std::chrono::seconds(10)) {
    const auto url = net::DirectUrl::parse(direct_url);
    std::unique_ptr<MemoryMirror> m(new MemoryMirror(net::connect_tcp(url.host, url.port)));
    const auto hello = net::hello_frame(url.instance);
    if (!net::send_frame(m->sock_, std::span(reinterpret_cast<const std::uint8_t *>(hello.data()),
                                             hello.size())))
      throw MirrorError("handshake send failed");
    m->reader_ = std::thread([p = m.get()] { p->read_loop(); });
    std::unique_lock lock(m->mu_);
    if (!m->cv_.wait_for(lock, timeout, [&] { return m->ready_ || !m->alive_; }))
      throw MirrorError("handshake timed out");
    if (!m->ready_)
      throw MirrorError("handshake rejected: " + m->last_error_);
    return m;
  }

  MemoryMirror(const MemoryMirror &) = delete;
  MemoryMirror &operator=(const MemoryMirror &) = delete;

  ~MemoryMirror() { close(); }

  void close() {
    sock_.shutdown();
    if (reader_.joinable() && reader_.get_id() != std::this_thread::get_id())
      reader_.join();
  }

  bool alive() const {
    std::lock_guard lock(mu_);
    return alive_;
  }

  std::size_t var_count() const { return store_.var_count(); }
  std::vector<Clause> clauses() const { return store_.clauses(); }
  std::size_t clause_count() const { return store_.own_clause_count(); }

  /// Clauses appended since `cursor`; advances `cursor`.
  std::vector<Clause> clauses_since(std::size_t &cursor) const {
    auto out = store_.own_clauses_since(cursor);
    cursor += out.size();
    return out;
  }

  /// Bumped on every local state change; cheap to poll.
  std::uint64_t generation() const noexcept { return generation_.load(std::memory_order_acquire); }

  /// Applies locally, then sends. Out-of-range literals throw before sending.
  void add_clause_direct(std::span<const Literal> lits) {
    Clause c = canonical(lits);
    store_.add_clause(c);
    generation_.fetch_add(1, std::memory_order_release);
    send(wire::AddClause{std::move(c)});
  }

  void add_clause_direct(std::initializer_list<Literal> lits) {
    add_clause_direct(std::span<const Literal>(lits.begin(), lits.size()));
  }

  Literal add_variable(std::chrono::milliseconds timeout = std::chrono::seconds(30)) {
    std::uint64_t ticket;
    {
      std::lock_guard out(send_mu_);
      ticket = enqueue_request(1);
      send_locked(wire::AddVariable{});
    }
    return await_index(ticket, timeout);
  }

  /// LOCK_VARS, ADD_VARS(n), UNLOCK_VARS as one bracket; returns the first index.
  Literal reserve_variables(std::size_t n, std::chrono::milliseconds timeout = std::chrono::seconds(30)) {
    if (n == 0)
      throw CnfError(CnfError::Code::InvalidArgument, "reserve count must be positive");
    std::uint64_t ticket;
    {
      std::lock_guard out(send_mu_);
      {
        std::lock_guard lock(mu_);
        if (lock_pending_)
          throw MirrorError("a lock is already pending on this mirror");
        lock_pending_ = true;
      }
      ticket = enqueue_request(static_cast<std::uint32_t>(n));
      send_locked(wire::LockVars{});
      send_locked(wire::AddVars{static_cast<std::uint32_t>(n)});
    }
    Literal first;
    try {
      first = await_index(ticket, timeout);
    } catch (...) {
      std::lock_guard lock(mu_);
      lock_pending_ = false;
      throw;
    }
    send(wire::UnlockVars{});
    std::lock_guard lock(mu_);
    lock_pending_ = false;
    return first;
  }

  /// Round-trips a SNAPSHOT_REQUEST. Every message this mirror sent earlier
  /// has been applied by the server, and every relay sent before the reply
  /// has been applied here, when this returns.
  wire::Snapshot sync(std::chrono::milliseconds timeout = std::chrono::seconds(30)) {
    std::uint64_t ticket;
    {
      std::lock_guard out(send_mu_);
      {
        std::lock_guard lock(mu_);
        ticket = ++snapshot_tickets_;
      }
      send_locked(wire::SnapshotRequest{});
    }
    std::unique_lock lock(mu_);
    if (!cv_.wait_for(lock, timeout, [&] { return snapshots_done_ >= ticket || !alive_; }))
      throw MirrorError("snapshot timed out");
    if (snapshots_done_ < ticket)
      throw MirrorError("connection lost");
    return last_snapshot_;
  }

  /// Error messages received from the server, oldest first.
  std::vector<wire::ErrorMsg> errors() const {
    std::lock_guard lock(mu_);
    return errors_;
  }

  /// Sends raw bytes as one frame; for protocol tests.
  bool send_raw(std::span<const std::uint8_t> bytes) {
    std::lock_guard lock(send_mu_);
    return net::send_frame(sock_, bytes);
  }

private:
  explicit MemoryMirror(net::Socket s) : sock_(std::move(s)) {}

  struct Request {
    std::uint64_t ticket;
    std::uint32_t count;
  };

  void send(const wire::Message &m) {
    std::lock_guard out(send_mu_);
    send_locked(m);
  }

  void send_locked(const wire::Message &m) {
    if (!net::send_frame(sock_, wire::encode(m)))
      throw MirrorError("connection lost");
  }

  std::uint64_t enqueue_request(std::uint32_t count) {
    std::lock_guard lock(mu_);
    const std::uint64_t t = ++request_tickets_;
    requests_.push_back({t, count});
    return t;
  }

  Literal await_index(std::uint64_t ticket, std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    if (!cv_.wait_for(lock, timeout, [&] { return answers_.count(ticket) || !alive_; }))
      throw MirrorError("timed out waiting for variable index");
    auto it = answers_.find(ticket);
    if (it == answers_.end())
      throw MirrorError("connection lost");
    const Literal first = it->second;
    answers_.erase(it);
    return first;
  }

  void read_loop() {
    for (;;) {
      auto frame = net::recv_frame(sock_);
      if (!frame)
        break;
      wire::Message msg;
      try {
        msg = wire::decode(*frame);
      } catch (const wire::ProtocolError &) {
        break;
      }
      apply(msg);
    }
    std::lock_guard lock(mu_);
    alive_ = false;
    cv_.notify_all();
  }

  void grow_to(std::size_t n) {
    const std::size_t cur = store_.var_count();
    if (n > cur)
      store_.add_variables(n - cur);
  }

  void apply(wire::Message &msg) {
    std::lock_guard lock(mu_);
    if (auto *s = std::get_if<wire::Snapshot>(&msg)) {
      if (!ready_) {
        grow_to(s->var_count);
        for (const auto &c : s->clauses)
          store_.add_clause(c);
        ready_ = true;
      } else {
        last_snapshot_ = std::move(*s);
        ++snapshots_done_;
      }
    } else if (auto *ac = std::get_if<wire::AddClause>(&msg)) {
      try {
        store_.add_clause(ac->literals);
      } catch (const CnfError &) {
        // The hub orders variable growth before dependent clauses.
        return;
      }
    } else if (auto *av = std::get_if<wire::AddVars>(&msg)) {
      store_.add_variables(av->count);
    } else if (std::holds_alternative<wire::VarIndex>(msg) ||
               std::holds_alternative<wire::FirstIndex>(msg)) {
      const std::uint32_t first = std::holds_alternative<wire::VarIndex>(msg)
                                      ? std::get<wire::VarIndex>(msg).index
                                      : std::get<wire::FirstIndex>(msg).index;
      if (!requests_.empty()) {
        const Request r = requests_.front();
        requests_.pop_front();
        grow_to(std::size_t{first} + r.count - 1);
        answers_[r.ticket] = static_cast<Literal>(first);
      }
    } else if (auto *e = std::get_if<wire::ErrorMsg>(&msg)) {
      last_error_ = e->message;
      errors_.push_back(*e);
    }
    generation_.fetch_add(1, std::memory_order_release);
    cv_.notify_all();
  }

  net::Socket sock_;
  std::thread reader_;
  std::mutex send_mu_;
  CnfStore store_;
  std::atomic<std::uint64_t> generation_{0};

  mutable std::mutex mu_;
  std::condition_variable cv_;
  bool alive_ = true;
  bool ready_ = false;
  bool lock_pending_ = false;
  std::deque<Request> requests_;
  std::map<std::uint64_t, Literal> answers_;
  std::uint64_t request_tickets_ = 0;
  std::uint64_t snapshot_tickets_ = 0;
  std::uint64_t snapshots_done_ = 0;
  wire::Snapshot last_snapshot_;
  std::string last_error_;
  std::vector<wire::ErrorMsg> errors_;
};

} // namespace satmem
