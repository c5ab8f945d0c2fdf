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

#include "cfcore/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <boost/math/distributions/normal.hpp>

#include "cfcore/error.hpp"
#include "cfcore/text.hpp"

namespace cfcore {
namespace {

constexpr std::array<std::string_view, 9> kNegationWords = {"not", "no", "never", "n't", "none", "nothing",
                                                           "neither", "nobody", "nor"};
constexpr std::array<std::string_view, 9> kQuantifierWords = {"all", "some", "many", "few", "every",
                                                              "most", "none", "more", "less"};

using NgramCounts = std::map<std::vector<std::string_view>, std::size_t>;

NgramCounts ngrams(std::span<const std::string> toks, std::size_t n) {
  NgramCounts out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    std::vector<std::string_view> g(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                    toks.begin() + static_cast<std::ptrdiff_t>(i + n));
    ++out[g];
  }
  return out;
}

std::size_t negation_count(std::span<const std::string> toks) {
  return static_cast<std::size_t>(std::count_if(toks.begin(), toks.end(), [](const auto& t) { return is_negation_word(t); }));
}

bool touches_quantifier(std::span<const std::string> toks) {
  return std::any_of(toks.begin(), toks.end(),
                     [](const auto& t) { return is_quantifier_word(t) || text::contains_digit(t); });
}

std::string fixed(double v, int precision) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

}  // namespace

std::size_t token_levenshtein(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1);
  std::vector<std::size_t> cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double norm_levenshtein(std::string_view original, std::string_view edited) {
  const auto a = text::split_whitespace(original);
  const auto b = text::split_whitespace(edited);
  const std::size_t longest = std::max(a.size(), b.size());
  if (longest == 0) return 0.0;
  return static_cast<double>(token_levenshtein(a, b)) / static_cast<double>(longest);
}

double self_bleu(std::string_view original, std::string_view edited) {
  const auto ref = text::split_whitespace(original);
  const auto cand = text::split_whitespace(edited);
  if (cand.empty()) return 0.0;
  const std::size_t max_n = std::min<std::size_t>(4, cand.size());
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    const auto c = ngrams(cand, n);
    const auto r = ngrams(ref, n);
    std::size_t matched = 0;
    std::size_t total = 0;
    for (const auto& [g, cnt] : c) {
      total += cnt;
      if (auto it = r.find(g); it != r.end()) matched += std::min(cnt, it->second);
    }
    double p;
    if (n == 1) {
      if (matched == 0) return 0.0;
      p = static_cast<double>(matched) / static_cast<double>(total);
    } else {
      p = static_cast<double>(matched + 1) / static_cast<double>(total + 1);
    }
    log_sum += std::log(p);
  }
  double bleu = std::exp(log_sum / static_cast<double>(max_n));
  if (cand.size() < ref.size()) {
    bleu *= std::exp(1.0 - static_cast<double>(ref.size()) / static_cast<double>(cand.size()));
  }
  return bleu;
}

std::string_view to_string(PerturbationType t) {
  switch (t) {
    case PerturbationType::kNegation: return "negation";
    case PerturbationType::kInsertion: return "insertion";
    case PerturbationType::kDelete: return "delete";
    case PerturbationType::kLexical: return "lexical";
    case PerturbationType::kResemantic: return "resemantic";
    case PerturbationType::kQuantifier: return "quantifier";
    case PerturbationType::kRestructure: return "restructure";
    case PerturbationType::kUnchanged: return "unchanged";
    case PerturbationType::kUnk: return "unk";
  }
  return "unk";
}

PerturbationType parse_perturbation_type(std::string_view s) {
  for (auto t : kPerturbationTypes) {
    if (to_string(t) == s) return t;
  }
  throw ValidationError("unknown perturbation type '" + std::string(s) + "'");
}

std::vector<EditRegion> edit_regions(std::span<const std::string> a, std::span<const std::string> b) {
  // lcs[i][j] = LCS length of a[i..] and b[j..]
  std::vector<std::vector<std::size_t>> lcs(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = a.size(); i-- > 0;) {
    for (std::size_t j = b.size(); j-- > 0;) {
      lcs[i][j] = a[i] == b[j] ? lcs[i + 1][j + 1] + 1 : std::max(lcs[i + 1][j], lcs[i][j + 1]);
    }
  }
  std::vector<EditRegion> out;
  EditRegion cur;
  auto flush = [&] {
    if (!cur.removed.empty() || !cur.added.empty()) out.push_back(std::move(cur));
    cur = {};
  };
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.size() || j < b.size()) {
    if (i < a.size() && j < b.size() && a[i] == b[j] && lcs[i][j] == lcs[i + 1][j + 1] + 1) {
      flush();
      ++i;
      ++j;
    } else if (j >= b.size() || (i < a.size() && lcs[i + 1][j] >= lcs[i][j + 1])) {
      cur.removed.push_back(a[i++]);
    } else {
      cur.added.push_back(b[j++]);
    }
  }
  flush();
  return out;
}

bool is_negation_word(std::string_view token) {
  const auto lower = text::to_lower(token);
  if (text::ends_with(lower, "n't")) return true;
  return std::find(kNegationWords.begin(), kNegationWords.end(), lower) != kNegationWords.end();
}

bool is_quantifier_word(std::string_view token) {
  const auto lower = text::to_lower(token);
  return std::find(kQuantifierWords.begin(), kQuantifierWords.end(), lower) != kQuantifierWords.end();
}

PerturbationType classify_perturbation(std::string_view original, std::string_view edited) {
  const auto a = text::split_whitespace(original);
  const auto b = text::split_whitespace(edited);
  const auto regions = edit_regions(a, b);
  if (regions.empty()) return PerturbationType::kUnchanged;
  for (const auto& r : regions) {
    if (negation_count(r.removed) != negation_count(r.added)) return PerturbationType::kNegation;
  }
  for (const auto& r : regions) {
    if (!r.removed.empty() && !r.added.empty() && (touches_quantifier(r.removed) || touches_quantifier(r.added))) {
      return PerturbationType::kQuantifier;
    }
  }
  auto sa = a;
  auto sb = b;
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  if (sa == sb) return PerturbationType::kRestructure;
  if (std::all_of(regions.begin(), regions.end(), [](const auto& r) { return r.removed.empty(); })) {
    return PerturbationType::kInsertion;
  }
  if (std::all_of(regions.begin(), regions.end(), [](const auto& r) { return r.added.empty(); })) {
    return PerturbationType::kDelete;
  }
  if (regions.size() == 1) {
    const auto& r = regions.front();
    if (r.removed.size() == 1 && r.added.size() == 1) return PerturbationType::kLexical;
    if (!r.removed.empty() && !r.added.empty()) return PerturbationType::kResemantic;
  }
  return PerturbationType::kUnk;
}

double bonferroni_threshold(std::size_t tests, double alpha) {
  if (tests == 0) throw ValidationError("bonferroni_threshold: no tests");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("bonferroni_threshold: alpha must lie in (0, 1)");
  const boost::math::normal standard;
  return boost::math::quantile(boost::math::complement(standard, alpha / (2.0 * static_cast<double>(tests))));
}

std::vector<TokenBiasEntry> z_statistics(std::span<const LabeledText> data, std::string_view designated_class,
                                         std::size_t min_count, double alpha) {
  if (data.empty()) throw ValidationError("z_statistics: empty dataset");
  std::set<std::string> labels;
  for (const auto& d : data) labels.insert(d.label);
  if (labels.size() > 2) throw ValidationError("z_statistics: labels are not binary (" + std::to_string(labels.size()) + " distinct)");
  std::size_t designated = 0;
  std::map<std::string, std::pair<std::size_t, std::size_t>> counts;
  for (const auto& d : data) {
    const bool hit = d.label == designated_class;
    designated += hit ? 1 : 0;
    const auto toks = text::normalized_tokens(d.text);
    const std::set<std::string> uniq(toks.begin(), toks.end());
    for (const auto& t : uniq) {
      auto& c = counts[t];
      ++c.first;
      c.second += hit ? 1 : 0;
    }
  }
  if (designated == 0 || designated == data.size()) {
    throw ValidationError("z_statistics: both labels must be present, with '" + std::string(designated_class) +
                          "' as one of them");
  }
  const double p0 = static_cast<double>(designated) / static_cast<double>(data.size());
  std::vector<TokenBiasEntry> out;
  for (const auto& [tok, c] : counts) {
    if (c.first < std::max<std::size_t>(min_count, 1)) continue;
    const double n = static_cast<double>(c.first);
    const double z = (static_cast<double>(c.second) - n * p0) / std::sqrt(n * p0 * (1.0 - p0));
    out.push_back({tok, c.first, c.second, z, false});
  }
  if (out.empty()) return out;
  const double threshold = bonferroni_threshold(out.size(), alpha);
  for (auto& e : out) e.flagged = std::abs(e.z) > threshold;
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
    if (std::abs(x.z) != std::abs(y.z)) return std::abs(x.z) > std::abs(y.z);
    return x.token < y.token;
  });
  return out;
}

void validate(std::span<const PairedExample> corpus) {
  if (corpus.empty()) throw ValidationError("paired corpus is empty");
  std::set<std::string> ids;
  for (const auto& p : corpus) {
    if (p.id.empty()) throw ValidationError("paired example with empty id");
    if (!ids.insert(p.id).second) throw ValidationError("duplicate paired example id '" + p.id + "'");
  }
}

PairMetrics pair_metrics(std::string_view original, std::string_view edited) {
  return {self_bleu(original, edited), norm_levenshtein(original, edited), classify_perturbation(original, edited)};
}

RecordMetrics to_record_metrics(const PairMetrics& m) {
  return {m.self_bleu, m.levenshtein, std::string(to_string(m.type))};
}

MetricsReport aggregate_report(std::span<const PairedExample> corpus, const std::optional<TokenBiasInput>& label_data,
                               int threads) {
  validate(corpus);
  std::vector<PairMetrics> per(corpus.size());
  const std::size_t workers = std::clamp<std::size_t>(threads < 1 ? 1 : static_cast<std::size_t>(threads), 1, corpus.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < corpus.size(); i += workers) per[i] = pair_metrics(corpus[i].original, corpus[i].edited);
    });
  }
  for (auto& t : pool) t.join();

  MetricsReport r;
  r.count = corpus.size();
  for (auto t : kPerturbationTypes) r.histogram[t] = 0;
  for (const auto& m : per) {
    r.mean_self_bleu += m.self_bleu;
    r.mean_levenshtein += m.levenshtein;
    ++r.histogram[m.type];
  }
  r.mean_self_bleu /= static_cast<double>(r.count);
  r.mean_levenshtein /= static_cast<double>(r.count);
  if (label_data) {
    r.token_bias = z_statistics(label_data->data, label_data->designated_class, label_data->min_count);
    r.designated_class = label_data->designated_class;
    if (!r.token_bias.empty()) r.bias_threshold = bonferroni_threshold(r.token_bias.size());
  }
  return r;
}

nlohmann::ordered_json to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["count"] = report.count;
  j["mean_self_bleu"] = report.mean_self_bleu;
  j["mean_levenshtein"] = report.mean_levenshtein;
  nlohmann::ordered_json hist = nlohmann::ordered_json::object();
  for (auto t : kPerturbationTypes) hist[std::string(to_string(t))] = report.histogram.count(t) ? report.histogram.at(t) : 0;
  j["perturbation_types"] = hist;
  if (report.designated_class) {
    nlohmann::ordered_json bias;
    bias["designated_class"] = *report.designated_class;
    bias["threshold"] = report.bias_threshold ? nlohmann::ordered_json(*report.bias_threshold) : nlohmann::ordered_json();
    bias["tokens"] = nlohmann::ordered_json::array();
    for (const auto& e : report.token_bias) {
      bias["tokens"].push_back(nlohmann::ordered_json{
          {"token", e.token}, {"count", e.count}, {"class_count", e.class_count}, {"z", e.z}, {"flagged", e.flagged}});
    }
    j["token_bias"] = bias;
  }
  return j;
}

std::string to_text_table(const MetricsReport& report, std::size_t max_bias_rows) {
  std::ostringstream os;
  os << std::left << std::setw(20) << "pairs" << report.count << "\n"
     << std::setw(20) << "self-BLEU" << fixed(report.mean_self_bleu, 3) << "\n"
     << std::setw(20) << "levenshtein" << fixed(report.mean_levenshtein, 3) << "\n\n";
  os << std::setw(14) << "perturbation" << std::right << std::setw(8) << "count" << "\n";
  for (auto t : kPerturbationTypes) {
    const auto it = report.histogram.find(t);
    os << std::left << std::setw(14) << to_string(t) << std::right << std::setw(8)
       << (it == report.histogram.end() ? 0 : it->second) << "\n";
  }
  if (report.designated_class) {
    os << "\n" << std::left << std::setw(20) << "token" << std::right << std::setw(8) << "n" << std::setw(8) << "c"
       << std::setw(10) << "z" << "  flag\n";
    for (std::size_t i = 0; i < std::min(max_bias_rows, report.token_bias.size()); ++i) {
      const auto& e = report.token_bias[i];
      os << std::left << std::setw(20) << e.token << std::right << std::setw(8) << e.count << std::setw(8)
         << e.class_count << std::setw(10) << fixed(e.z, 2) << (e.flagged ? "  *" : "") << "\n";
    }
  }
  return os.str();
}

std::string token_bias_csv(std::span<const TokenBiasEntry> rows) {
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + "\"";
  };
  std::ostringstream os;
  os << "token,count,class_count,z,flagged\n";
  for (const auto& e : rows) {
    os << quote(e.token) << "," << e.count << "," << e.class_count << "," << fixed(e.z, 6) << ","
       << (e.flagged ? "true" : "false") << "\n";
  }
  return os.str();
}

OrderingCheck check_intrinsic_ordering(double retrieved_only_self_bleu, double core_self_bleu) {
  OrderingCheck c;
  c.retrieved_only = retrieved_only_self_bleu;
  c.core = core_self_bleu;
  c.holds = retrieved_only_self_bleu < core_self_bleu && core_self_bleu < c.identity;
  return c;
}

std::vector<PairedExample> paired_corpus(std::span<const CounterfactualRecord> records) {
  std::vector<PairedExample> out;
  std::unordered_map<std::string, std::size_t> seen;
  for (const auto& r : records) {
    if (!r.ok()) continue;
    std::string id = r.source_id;
    if (const auto n = seen[r.source_id]++; n > 0) id += "#" + std::to_string(n);
    out.push_back({id, r.original_text, r.edited_text, r.original_label, r.target_label});
  }
  return out;
}

}  // namespace cfcore
