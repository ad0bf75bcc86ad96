#include "iclcheck/remote.hpp"

#include <cmath>
#include <thread>

#include "httplib.h"
#include "iclcheck/cgm_adapters.hpp"
#include "iclcheck/errors.hpp"

namespace iclcheck {

using nlohmann::json;

namespace wire {

namespace {

std::vector<double> numbers_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ProtocolError(where, "expected a non-empty number array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) throw ProtocolError(where, "expected numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

std::string join(const std::string& where, const char* key) {
  return where.empty() ? std::string(key) : where + "." + key;
}

}  // namespace

json to_json(const Example& e) {
  if (e.is_text()) return {{"q_text", e.query_text()}, {"r_text", e.response_text()}};
  return {{"q", e.query()}, {"r", e.response()}};
}

json to_json(const Dataset& d) {
  json out = json::array();
  for (const auto& e : d) out.push_back(to_json(e));
  return out;
}

Example example_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw ProtocolError(where.empty() ? "body" : where, "expected an object");
  const bool numeric = j.contains("q") || j.contains("r");
  const bool text = j.contains("q_text") || j.contains("r_text");
  if (numeric && text) throw ProtocolError(where, "mixes numeric and text fields");
  if (text) {
    for (const char* key : {"q_text", "r_text"}) {
      if (!j.contains(key) || !j[key].is_string()) {
        throw ProtocolError(join(where, key), "expected a string");
      }
    }
    return Example::text(j["q_text"].get<std::string>(), j["r_text"].get<std::string>());
  }
  for (const char* key : {"q", "r"}) {
    if (!j.contains(key)) throw ProtocolError(join(where, key), "missing");
  }
  auto q = numbers_from_json(j["q"], join(where, "q"));
  auto r = numbers_from_json(j["r"], join(where, "r"));
  return Example(std::move(q), std::move(r));
}

Dataset dataset_from_json(const json& j, const std::string& where, Provenance tag) {
  if (!j.is_array()) throw ProtocolError(where, "expected an array of examples");
  Dataset out(tag);
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(example_from_json(j[i], where + "[" + std::to_string(i) + "]"));
  }
  return out;
}

json error_body(const std::string& code, const std::string& field, const std::string& message) {
  return {{"error", {{"code", code}, {"field", field}, {"message", message}}}};
}

}  // namespace wire

void RemoteEndpoint::validate() const {
  if (base_address.empty()) throw ConfigurationError("remote endpoint address is empty");
  if (timeout.count() <= 0) throw ConfigurationError("remote endpoint timeout must be > 0");
}

RemoteCgm::RemoteCgm(RemoteEndpoint endpoint) : endpoint_(std::move(endpoint)) {
  endpoint_.validate();
}
RemoteCgm::~RemoteCgm() = default;
RemoteCgm::RemoteCgm(RemoteCgm&&) noexcept = default;
RemoteCgm& RemoteCgm::operator=(RemoteCgm&&) noexcept = default;

json RemoteCgm::post(const std::string& path, const json& body) const {
  const std::string payload = body.dump();
  httplib::Headers headers;
  if (endpoint_.token) headers.emplace("Authorization", "Bearer " + *endpoint_.token);

  std::string last_failure;
  auto backoff = endpoint_.initial_backoff;
  for (unsigned attempt = 0; attempt <= endpoint_.retry_budget; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    httplib::Client client(endpoint_.base_address);
    client.set_connection_timeout(endpoint_.timeout);
    client.set_read_timeout(endpoint_.timeout);
    client.set_write_timeout(endpoint_.timeout);
    const auto res = client.Post(path, headers, payload, "application/json");
    if (!res) {
      last_failure = "request failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_failure = "server returned status " + std::to_string(res->status);
      continue;
    }
    json parsed;
    try {
      parsed = json::parse(res->body);
    } catch (const json::parse_error& e) {
      throw ProtocolError("body", std::string("response is not valid JSON: ") + e.what());
    }
    if (res->status == 200) return parsed;
    if (res->status == 422 && parsed.contains("error") && parsed["error"].is_object()) {
      const auto& err = parsed["error"];
      const std::string code = err.value("code", "");
      const std::string field = err.value("field", "");
      const std::string message = err.value("message", "");
      if (code == "domain_error") throw DomainError(message);
      throw ProtocolError(field, "server rejected request (" + code + "): " + message);
    }
    throw ProtocolError("status", "unexpected status " + std::to_string(res->status));
  }
  throw TransportError(endpoint_.base_address + path + ": " + last_failure + " after " +
                       std::to_string(endpoint_.retry_budget + 1) + " attempts");
}

Example RemoteCgm::sample_with_seed(const Dataset& context, std::uint64_t seed,
                                    std::optional<std::span<const double>> query) const {
  json body = {{"context", wire::to_json(context)}, {"seed", seed}};
  if (query) body["q"] = std::vector<double>(query->begin(), query->end());
  return wire::example_from_json(post("/v1/sample", body), "");
}

LogProb RemoteCgm::logprob_example(const Example& x, const Dataset& context) const {
  const json body = {{"context", wire::to_json(context)}, {"example", wire::to_json(x)}};
  const json res = post("/v1/logprob", body);
  if (!res.is_object()) throw ProtocolError("body", "expected an object");
  if (!res.contains("logprob")) throw ProtocolError("logprob", "missing");
  const auto& lp = res["logprob"];
  if (lp.is_null()) throw DataError("remote model returned a non-finite logprob");
  if (!lp.is_number()) throw ProtocolError("logprob", "expected a number");
  const double total = lp.get<double>();
  if (!std::isfinite(total)) throw DataError("remote model returned a non-finite logprob");
  if (!res.contains("coords")) throw ProtocolError("coords", "missing");
  const auto& coords = res["coords"];
  if (!coords.is_number_integer() || coords.get<std::int64_t>() < 1) {
    throw ProtocolError("coords", "expected a positive integer");
  }
  return {total, coords.get<std::size_t>()};
}

RemoteCgm remote_cgm(const RemoteEndpoint& endpoint) { return RemoteCgm(endpoint); }

struct MockServer::Impl {
  explicit Impl(const ConjugateModel& model) : cgm(model) {}

  ExactBayesCgm cgm;
  httplib::Server server;
  std::thread worker;
  int port = 0;
  std::string host;
};

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <class Handler>
void guarded(httplib::Response& res, Handler&& handler) {
  try {
    reply(res, 200, handler());
  } catch (const ProtocolError& e) {
    reply(res, 422, wire::error_body("schema", e.field(), e.what()));
  } catch (const DomainError& e) {
    reply(res, 422, wire::error_body("domain_error", "example.q", e.what()));
  } catch (const json::exception& e) {
    reply(res, 422, wire::error_body("invalid_json", "body", e.what()));
  } catch (const Error& e) {
    reply(res, 422, wire::error_body("invalid_request", "body", e.what()));
  } catch (const std::exception& e) {
    reply(res, 500, wire::error_body("internal", "", e.what()));
  }
}

}  // namespace

MockServer::MockServer(const ConjugateModel& model, const std::string& bind)
    : impl_(std::make_unique<Impl>(model)) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) throw ConfigurationError("bind address must be host:port");
  impl_->host = bind.substr(0, colon);
  int requested = 0;
  try {
    requested = std::stoi(bind.substr(colon + 1));
  } catch (const std::exception&) {
    throw ConfigurationError("bind address has an invalid port: " + bind);
  }

  const ExactBayesCgm* cgm = &impl_->cgm;
  impl_->server.Post("/v1/sample", [cgm](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = json::parse(req.body);
      if (!body.is_object()) throw ProtocolError("body", "expected an object");
      if (!body.contains("seed") || !body["seed"].is_number_unsigned()) {
        throw ProtocolError("seed", "expected an unsigned 64-bit integer");
      }
      if (!body.contains("context")) throw ProtocolError("context", "missing");
      const Dataset context =
          wire::dataset_from_json(body["context"], "context", Provenance::observed);
      std::optional<std::vector<double>> query;
      if (body.contains("q")) {
        query.emplace();
        if (!body["q"].is_array()) throw ProtocolError("q", "expected a number array");
        for (const auto& v : body["q"]) {
          if (!v.is_number()) throw ProtocolError("q", "expected numbers");
          query->push_back(v.get<double>());
        }
      }
      std::optional<std::span<const double>> query_view;
      if (query) query_view = std::span<const double>(*query);
      return wire::to_json(
          cgm->sample_with_seed(context, body["seed"].get<std::uint64_t>(), query_view));
    });
  });
  impl_->server.Post("/v1/logprob", [cgm](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = json::parse(req.body);
      if (!body.is_object()) throw ProtocolError("body", "expected an object");
      if (!body.contains("context")) throw ProtocolError("context", "missing");
      if (!body.contains("example")) throw ProtocolError("example", "missing");
      const Dataset context =
          wire::dataset_from_json(body["context"], "context", Provenance::observed);
      const Example x = wire::example_from_json(body["example"], "example");
      const LogProb lp = cgm->logprob_example(x, context);
      return json{{"logprob", lp.total}, {"coords", lp.coords}};
    });
  });

  if (requested == 0) {
    impl_->port = impl_->server.bind_to_any_port(impl_->host);
    if (impl_->port < 0) throw Error("mock server could not bind " + bind);
  } else {
    if (!impl_->server.bind_to_port(impl_->host, requested)) {
      throw Error("mock server could not bind " + bind);
    }
    impl_->port = requested;
  }
  impl_->worker = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

MockServer::~MockServer() { stop(); }

int MockServer::port() const noexcept { return impl_->port; }

std::string MockServer::base_address() const {
  return "http://" + impl_->host + ":" + std::to_string(impl_->port);
}

void MockServer::stop() {
  impl_->server.stop();
  if (impl_->worker.joinable()) impl_->worker.join();
}

std::unique_ptr<MockServer> mock_server(const ConjugateModel& model, const std::string& bind) {
  return std::make_unique<MockServer>(model, bind);
}

}  // namespace iclcheck
