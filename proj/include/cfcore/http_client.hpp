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

#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

namespace cfcore::http {

struct Endpoint {
  std::string scheme;  // "http" (https needs an OpenSSL-enabled build)
  std::string host;
  int port = 80;
  std::string path = "/";
};

// Parses "http://host[:port][/path]". Throws ValidationError on anything else.
Endpoint parse_url(const std::string& url);

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_delay{200};
  std::chrono::milliseconds max_delay{10'000};
  std::chrono::seconds timeout{60};
};

struct PostResult {
  nlohmann::json body;
  int attempts = 0;
};

// POSTs a JSON body, retrying on connection failure, HTTP 429 and 5xx with
// exponential backoff plus jitter. Other 4xx responses fail immediately.
// Throws RemoteError after the final attempt.
PostResult post_json(const Endpoint& endpoint, const nlohmann::json& body, const RetryPolicy& policy,
                     const std::map<std::string, std::string>& headers = {});

// "Authorization: Bearer <token>" header from an environment variable, if set.
std::map<std::string, std::string> bearer_from_env(const std::optional<std::string>& env_var);

}  // namespace cfcore::http
