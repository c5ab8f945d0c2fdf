// Copyright 2026 The cfcore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cfcore/http_client.hpp"

#include <cstdlib>
#include <random>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "cfcore/error.hpp"

namespace cfcore::http {

Endpoint parse_url(const std::string& url) {
  Endpoint ep;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ValidationError("endpoint URL lacks a scheme: " + url);
  ep.scheme = url.substr(0, scheme_end);
  if (ep.scheme != "http") throw ValidationError("unsupported URL scheme '" + ep.scheme + "' in " + url);
  auto rest = url.substr(scheme_end + 3);
  const auto slash = rest.find('/');
  std::string authority = rest.substr(0, slash);
  ep.path = slash == std::string::npos ? "/" : rest.substr(slash);
  const auto colon = authority.rfind(':');
  if (colon != std::string::npos) {
    ep.host = authority.substr(0, colon);
    try {
      ep.port = std::stoi(authority.substr(colon + 1));
    } catch (const std::exception&) {
      throw ValidationError("bad port in URL " + url);
    }
  } else {
    ep.host = authority;
  }
  if (ep.host.empty()) throw ValidationError("endpoint URL lacks a host: " + url);
  return ep;
}

PostResult post_json(const Endpoint& endpoint, const nlohmann::json& body, const RetryPolicy& policy,
                     const std::map<std::string, std::string>& headers) {
  httplib::Client client(endpoint.host, endpoint.port);
  client.set_connection_timeout(policy.timeout);
  client.set_read_timeout(policy.timeout);
  client.set_write_timeout(policy.timeout);
  httplib::Headers hs;
  for (const auto& [k, v] : headers) hs.emplace(k, v);

  const std::string payload = body.dump();
  std::minstd_rand jitter(static_cast<unsigned>(std::hash<std::string>{}(payload)));
  std::string last_error;
  int last_status = 0;
  for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
    auto res = client.Post(endpoint.path, hs, payload, "application/json");
    if (res) {
      last_status = res->status;
      if (res->status >= 200 && res->status < 300) {
        try {
          return {nlohmann::json::parse(res->body), attempt};
        } catch (const nlohmann::json::parse_error& e) {
          throw RemoteError("invalid JSON from " + endpoint.host + endpoint.path + ": " + e.what(), res->status);
        }
      }
      last_error = "HTTP " + std::to_string(res->status);
      if (res->status != 429 && res->status < 500) {
        throw RemoteError(last_error + " from " + endpoint.host + endpoint.path + ": " + res->body, res->status);
      }
    } else {
      last_error = httplib::to_string(res.error());
    }
    if (attempt == policy.max_attempts) break;
    auto delay = policy.base_delay * (1LL << std::min(attempt - 1, 20));
    if (delay > policy.max_delay) delay = policy.max_delay;
    const auto jitter_ms = std::chrono::milliseconds(
        delay.count() > 0 ? static_cast<long long>(jitter() % static_cast<unsigned long>(delay.count() / 2 + 1)) : 0);
    spdlog::warn("{}{}: attempt {}/{} failed ({}); retrying in {} ms", endpoint.host, endpoint.path, attempt,
                 policy.max_attempts, last_error, (delay + jitter_ms).count());
    std::this_thread::sleep_for(delay + jitter_ms);
  }
  throw RemoteError("request to " + endpoint.host + endpoint.path + " failed after " +
                        std::to_string(policy.max_attempts) + " attempts: " + last_error,
                    last_status);
}

std::map<std::string, std::string> bearer_from_env(const std::optional<std::string>& env_var) {
  if (!env_var || env_var->empty()) return {};
  const char* token = std::getenv(env_var->c_str());
  if (token == nullptr || *token == '\0') {
    spdlog::warn("auth environment variable {} is not set; sending unauthenticated requests", *env_var);
    return {};
  }
  return {{"Authorization", std::string("Bearer ") + token}};
}

}  // namespace cfcore::http
