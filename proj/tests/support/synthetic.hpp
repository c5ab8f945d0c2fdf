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

// Generated retrieval data for training checks. Each item is a pseudo-word
// entity described with a polar adjective in one of four sentence frames.
// The counterfactual keeps the frame and entity and swaps the adjective for
// one of the opposite polarity, so "same entity, opposite polarity" separates
// the positive from every negative in its pool.

#include <string>
#include <vector>

#include "cfcore/cfdpr.hpp"
#include "cfcore/random.hpp"

namespace cfcore::testing {

inline const std::vector<std::string>& positive_words() {
  static const std::vector<std::string> w = {"great", "excellent", "wonderful", "superb", "delightful", "brilliant"};
  return w;
}

inline const std::vector<std::string>& negative_words() {
  static const std::vector<std::string> w = {"awful", "terrible", "dreadful", "horrible", "boring", "dismal"};
  return w;
}

struct SyntheticItem {
  std::string entity;
  int polarity = 0;  // 1 positive
  int frame = 0;
  int word = 0;
};

inline std::string pseudo_word(Rng& rng) {
  static const std::string consonants = "bcdfghjklmnpqrstvwxz";
  static const std::string vowels = "aeiou";
  std::string s;
  for (int i = 0; i < 3; ++i) {
    s += consonants[rng.below(consonants.size())];
    s += vowels[rng.below(vowels.size())];
  }
  s += consonants[rng.below(consonants.size())];
  return s;
}

inline std::string polar_word(int polarity, int word) {
  return polarity ? positive_words()[static_cast<std::size_t>(word)] : negative_words()[static_cast<std::size_t>(word)];
}

inline std::string frame_sentence(int frame, const std::string& entity, const std::string& word) {
  switch (frame % 4) {
    case 0: return "the " + entity + " was " + word;
    case 1: return entity + " felt " + word + " overall";
    case 2: return "i found " + entity + " " + word;
    default: return entity + " is " + word;
  }
}

struct SyntheticRetrievalSet {
  std::vector<SyntheticItem> items;
  std::vector<TripletRecord> triplets;    // one per training item
  std::vector<EvalPool> train_pools;      // pools around the training items
  std::vector<EvalPool> heldout_pools;    // pools around unseen entities
};

inline TripletRecord synthetic_triplet(const SyntheticItem& it) {
  TripletRecord t;
  t.query = frame_sentence(it.frame, it.entity, polar_word(it.polarity, it.word));
  t.positive = frame_sentence(it.frame, it.entity, polar_word(1 - it.polarity, it.word));
  // A rewording that keeps the polarity, then the query itself.
  t.hard_negatives = {frame_sentence(it.frame + 1, it.entity, polar_word(it.polarity, (it.word + 1) % 6)), t.query};
  return t;
}

// `train` triplets plus `heldout` extra items used only for evaluation. Pools
// hold 30 random negatives (other items' positives) and 30 hard negatives
// (the same entity with same-polarity words across frames).
inline SyntheticRetrievalSet make_synthetic_retrieval(std::size_t train, std::size_t heldout, std::uint64_t seed) {
  SyntheticRetrievalSet s;
  Rng rng(seed);
  const std::size_t n = train + heldout;
  for (std::size_t i = 0; i < n; ++i) {
    SyntheticItem it;
    it.entity = pseudo_word(rng);
    it.polarity = static_cast<int>(rng.below(2));
    it.frame = static_cast<int>(rng.below(4));
    it.word = static_cast<int>(rng.below(6));
    s.items.push_back(it);
  }
  auto pool = [&](std::size_t i) {
    const auto& it = s.items[i];
    const auto t = synthetic_triplet(it);
    EvalPool p;
    p.query = t.query;
    p.positive = t.positive;
    for (std::size_t k = 0; k < EvalPool::kRandomNegatives; ++k) {
      std::size_t j;
      do {
        j = rng.below(n);
      } while (j == i || s.items[j].entity == it.entity);
      p.random_negatives.push_back(synthetic_triplet(s.items[j]).positive);
    }
    for (std::size_t k = 0; k < EvalPool::kHardNegatives; ++k) {
      p.hard_negatives.push_back(frame_sentence(static_cast<int>(k / 6), it.entity,
                                                polar_word(it.polarity, static_cast<int>(k % 6))));
    }
    return p;
  };
  for (std::size_t i = 0; i < train; ++i) {
    s.triplets.push_back(synthetic_triplet(s.items[i]));
    s.train_pools.push_back(pool(i));
  }
  for (std::size_t i = train; i < n; ++i) s.heldout_pools.push_back(pool(i));
  return s;
}

inline std::vector<std::string> all_texts(const SyntheticRetrievalSet& s) {
  std::vector<std::string> out;
  for (const auto& t : s.triplets) {
    out.push_back(t.query);
    out.push_back(t.positive);
    out.insert(out.end(), t.hard_negatives.begin(), t.hard_negatives.end());
  }
  for (const auto* pools : {&s.train_pools, &s.heldout_pools}) {
    for (const auto& p : *pools) {
      out.push_back(p.query);
      out.push_back(p.positive);
      out.insert(out.end(), p.random_negatives.begin(), p.random_negatives.end());
      out.insert(out.end(), p.hard_negatives.begin(), p.hard_negatives.end());
    }
  }
  return out;
}

// Hand-built separator used as an oracle: a candidate scores its 3-gram
// overlap with the query, minus a large penalty when it carries a word of the
// query's polarity. If this picks the positive in every pool, the data is
// separable by a function that is linear in the hashed features.
inline bool oracle_prefers_positive(const EvalPool& p, int query_polarity) {
  auto has_polarity = [&](const std::string& s) {
    const auto& words = query_polarity ? positive_words() : negative_words();
    for (const auto& w : words) {
      if (s.size() >= w.size() && s.compare(s.size() - w.size(), w.size(), w) == 0) return true;
      if (s.find(" " + w + " ") != std::string::npos) return true;
    }
    return false;
  };
  auto overlap = [&](const std::string& s) {
    std::size_t c = 0;
    for (std::size_t i = 0; i + 3 <= p.query.size(); ++i) {
      if (s.find(p.query.substr(i, 3)) != std::string::npos) ++c;
    }
    return static_cast<double>(c) - (has_polarity(s) ? 1000.0 : 0.0);
  };
  const double pos = overlap(p.positive);
  for (const auto* negs : {&p.random_negatives, &p.hard_negatives}) {
    for (const auto& n : *negs) {
      if (overlap(n) >= pos) return false;
    }
  }
  return true;
}

}  // namespace cfcore::testing
