#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "iclcheck/model.hpp"
#include "iclcheck/reference_models.hpp"

namespace iclcheck {

// Wire format
//   POST /v1/sample   {"context":[{"q":[..],"r":[..]},..], "seed":u64[, "q":[..]]}
//                     -> {"q":[..], "r":[..]}
//   POST /v1/logprob  {"context":[..], "example":{"q":[..],"r":[..]}}
//                     -> {"logprob": float, "coords": int}
// Text examples use "q_text"/"r_text" strings instead of "q"/"r"; "coords"
// then carries the token count. Errors are status 422 with
// {"error": {"code": str, "field": str, "message": str}}.

namespace wire {

nlohmann::json to_json(const Example& e);
nlohmann::json to_json(const Dataset& d);

/// Throws ProtocolError naming `where` (e.g. "example.q") on schema violations.
Example example_from_json(const nlohmann::json& j, const std::string& where);
Dataset dataset_from_json(const nlohmann::json& j, const std::string& where, Provenance tag);

nlohmann::json error_body(const std::string& code, const std::string& field,
                          const std::string& message);

}  // namespace wire

struct RemoteEndpoint {
  std::string base_address;  // e.g. "http://127.0.0.1:8080"
  std::chrono::milliseconds timeout{10000};
  unsigned retry_budget = 3;
  std::optional<std::string> token;
  std::chrono::milliseconds initial_backoff{20};

  void validate() const;
};

/// Environment variable holding the bearer token for remote models.
inline constexpr const char* kTokenEnvVar = "ICLCHECK_REMOTE_TOKEN";

/// CGM that delegates to a server speaking the wire protocol above.
/// Transient failures (no response, 5xx) are retried with exponential
/// backoff up to the retry budget.
class RemoteCgm final : public Cgm {
 public:
  explicit RemoteCgm(RemoteEndpoint endpoint);
  ~RemoteCgm() override;
  RemoteCgm(RemoteCgm&&) noexcept;
  RemoteCgm& operator=(RemoteCgm&&) noexcept;

  const RemoteEndpoint& endpoint() const noexcept { return endpoint_; }

  Example sample_with_seed(const Dataset& context, std::uint64_t seed,
                           std::optional<std::span<const double>> query) const override;
  LogProb logprob_example(const Example& x, const Dataset& context) const override;

 private:
  nlohmann::json post(const std::string& path, const nlohmann::json& body) const;

  RemoteEndpoint endpoint_;
};

RemoteCgm remote_cgm(const RemoteEndpoint& endpoint);

/// In-process server for the wire protocol backed by an exact-Bayes CGM.
/// Stops and joins on destruction.
class MockServer {
 public:
  /// `bind` is "host:port"; port 0 picks a free port.
  MockServer(const ConjugateModel& model, const std::string& bind);
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  int port() const noexcept;
  std::string base_address() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::unique_ptr<MockServer> mock_server(const ConjugateModel& model, const std::string& bind);

}  // namespace iclcheck
