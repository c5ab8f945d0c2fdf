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

#include <algorithm>
#include <numeric>

#include "cfcore/error.hpp"

namespace cfcore {

template <typename T>
std::vector<T> rerank(std::span<const T> items, std::span<const double> probs) {
  if (items.empty()) throw ValidationError("rerank: no results to reorder");
  if (items.size() != probs.size()) throw ValidationError("rerank: probability count does not match results");
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  std::vector<T> out;
  out.reserve(items.size());
  for (auto i : order) out.push_back(items[i]);
  return out;
}

}  // namespace cfcore
