#pragma once

// JSON web-call envelopes carried over HTTP POST to a single path.

#include "json.hpp"

#include "httplib.h"

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <string>

namespace satmem {

using json = nlohmann::json;

inline constexpr const char *kCallPath = "/call";
inline constexpr const char *kEndpointEnv = "SATMEM_ENDPOINT";

inline std::string make_uuid() {
  thread_local std::mt19937_64 rng{std::random_device{}() ^
                                   static_cast<std::uint64_t>(
                                       std::chrono::steady_clock::now().time_since_epoch().count())};
  std::uint64_t hi = rng(), lo = rng();
  hi = (hi & ~0xF000ULL) | 0x4000ULL;                      // version 4
  lo = (lo & 0x3FFFFFFFFFFFFFFFULL) | 0x8000000000000000ULL; // variant 1
  char buf[37];
  std::snprintf(buf, sizeof buf, "%08x-%04x-%04x-%04x-%012llx", static_cast<unsigned>(hi >> 32),
                static_cast<unsigned>((hi >> 16) & 0xFFFF), static_cast<unsigned>(hi & 0xFFFF),
                static_cast<unsigned>(lo >> 48),
                static_cast<unsigned long long>(lo & 0xFFFFFFFFFFFFULL));
  return buf;
}

inline json error_result(const std::string &code, const std::string &message = {}) {
  json r = {{"error", code}};
  if (!message.empty())
    r["message"] = message;
  return r;
}

class TransportError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline json make_envelope(const std::string &method, const std::string &object_ref,
                          json argument = json::object(), const std::string &web_pid = "cli") {
  return {{"method", method}, {"webPid", web_pid}, {"objectRef", object_ref},
          {"argument", std::move(argument)}};
}

/// Posts envelopes to http://host:port/call. Application errors come back
/// inside the result object; only transport failures throw.
class RpcClient {
public:
  explicit RpcClient(const std::string &endpoint,
                     std::chrono::milliseconds read_timeout = std::chrono::hours(24))
      : endpoint_(endpoint), client_(endpoint) {
    if (!client_.is_valid())
      throw TransportError("invalid endpoint " + endpoint);
    client_.set_connection_timeout(5);
    client_.set_read_timeout(read_timeout);
    client_.set_write_timeout(30);
  }

  json call(const json &envelope) {
    auto res = client_.Post(kCallPath, envelope.dump(), "application/json");
    if (!res)
      throw TransportError("web call to " + endpoint_ + " failed: " + httplib::to_string(res.error()));
    if (res->status != 200)
      throw TransportError("web call to " + endpoint_ + " returned HTTP " + std::to_string(res->status));
    try {
      return json::parse(res->body);
    } catch (const json::parse_error &e) {
      throw TransportError(std::string("unparseable response: ") + e.what());
    }
  }

  json call(const std::string &method, const std::string &object_ref,
            json argument = json::object(), const std::string &web_pid = "cli") {
    return call(make_envelope(method, object_ref, std::move(argument), web_pid));
  }

  const std::string &endpoint() const noexcept { return endpoint_; }

private:
  std::string endpoint_;
  httplib::Client client_;
};

} // namespace satmem
