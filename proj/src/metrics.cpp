#include "argus/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace argus::metrics {

namespace {

using Tokens = std::vector<std::string>;
using NgramCounts = std::map<std::vector<std::string>, int>;

NgramCounts ngrams(const Tokens& toks, int n) {
  NgramCounts counts;
  if (n <= 0 || toks.size() < size_t(n)) return counts;
  for (size_t i = 0; i + n <= toks.size(); ++i) {
    std::vector<std::string> g(toks.begin() + i, toks.begin() + i + n);
    counts[g] += 1;
  }
  return counts;
}

int total(const NgramCounts& c) {
  int t = 0;
  for (const auto& [g, k] : c) t += k;
  return t;
}

}  // namespace

std::vector<std::string> tokenize_eval(const std::string& text) {
  Tokens out;
  std::string cur;
  const size_t n = text.size();
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (size_t i = 0; i < n; ++i) {
    const char c = text[i];
    if (std::isspace(uint8_t(c))) {
      flush();
    } else if (std::isalnum(uint8_t(c))) {
      cur.push_back(char(std::tolower(uint8_t(c))));
    } else if (c == '.' && i > 0 && i + 1 < n &&
               std::isdigit(uint8_t(text[i - 1])) &&
               std::isdigit(uint8_t(text[i + 1]))) {
      cur.push_back(c);  // decimal point stays inside the number
    } else {
      flush();
      out.push_back(std::string(1, c));
    }
  }
  flush();
  return out;
}

double bleu(const std::string& candidate,
            const std::vector<std::string>& references, int n) {
  if (n < 1 || n > 4) throw ValidationError("bleu: n must lie in 1..4");
  if (references.empty()) throw ValidationError("bleu: no references");
  const Tokens cand = tokenize_eval(candidate);
  if (cand.empty()) return 0.0;
  std::vector<Tokens> refs;
  refs.reserve(references.size());
  for (const auto& r : references) refs.push_back(tokenize_eval(r));

  double log_sum = 0.0;
  int orders = 0;
  for (int k = 1; k <= n; ++k) {
    const NgramCounts cc = ngrams(cand, k);
    const int denom = total(cc);
    if (denom == 0) continue;  // shorter than k: the order is vacuous
    int clipped = 0;
    for (const auto& [g, count] : cc) {
      int best = 0;
      for (const auto& rt : refs) {
        const NgramCounts rc = ngrams(rt, k);
        auto it = rc.find(g);
        if (it != rc.end()) best = std::max(best, it->second);
      }
      clipped += std::min(count, best);
    }
    if (clipped == 0) return 0.0;
    log_sum += std::log(double(clipped) / double(denom));
    ++orders;
  }
  if (orders == 0) return 0.0;

  // brevity penalty against the closest reference length
  const size_t c = cand.size();
  size_t r = refs[0].size();
  for (const auto& rt : refs) {
    const auto diff = [&](size_t len) {
      return len > c ? len - c : c - len;
    };
    if (diff(rt.size()) < diff(r) || (diff(rt.size()) == diff(r) && rt.size() < r)) {
      r = rt.size();
    }
  }
  const double bp = c > r ? 1.0 : std::exp(1.0 - double(r) / double(c));
  return bp * std::exp(log_sum / double(orders));
}

namespace {

double rouge_n_tokens(const Tokens& cand, const Tokens& ref, int n) {
  const NgramCounts cc = ngrams(cand, n);
  const NgramCounts rc = ngrams(ref, n);
  const int nc = total(cc), nr = total(rc);
  if (nc == 0 || nr == 0) return 0.0;
  int overlap = 0;
  for (const auto& [g, count] : cc) {
    auto it = rc.find(g);
    if (it != rc.end()) overlap += std::min(count, it->second);
  }
  if (overlap == 0) return 0.0;
  const double p = double(overlap) / nc;
  const double r = double(overlap) / nr;
  return 2.0 * p * r / (p + r);
}

size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1
                                    : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

double rouge_n(const std::string& candidate, const std::string& reference,
               int n) {
  if (n != 1 && n != 2) throw ValidationError("rouge_n: n must be 1 or 2");
  return rouge_n_tokens(tokenize_eval(candidate), tokenize_eval(reference), n);
}

double rouge_n_multi(const std::string& candidate,
                     const std::vector<std::string>& references, int n) {
  double best = 0.0;
  for (const auto& r : references) best = std::max(best, rouge_n(candidate, r, n));
  return best;
}

double rouge_l(const std::string& candidate, const std::string& reference) {
  const Tokens cand = tokenize_eval(candidate);
  const Tokens ref = tokenize_eval(reference);
  if (cand.empty() || ref.empty()) return 0.0;
  const size_t l = lcs_length(cand, ref);
  if (l == 0) return 0.0;
  const double p = double(l) / double(cand.size());
  const double r = double(l) / double(ref.size());
  return 2.0 * p * r / (p + r);
}

double rouge_l_multi(const std::string& candidate,
                     const std::vector<std::string>& references) {
  double best = 0.0;
  for (const auto& r : references) best = std::max(best, rouge_l(candidate, r));
  return best;
}

namespace {

// Branch-and-bound over maximum unigram matchings, minimizing chunk count.
// Every maximum matching pairs exactly min(count_cand, count_ref) occurrences
// of each word, so the search branches on which reference occurrence each
// matched candidate position takes. Chunk count never decreases along a
// branch, which makes the bound exact. A node budget keeps pathological
// repetition from blowing up; within budget the result is optimal.
struct ChunkSearch {
  const Tokens& cand;
  std::map<std::string, std::vector<int>> ref_positions;
  std::map<std::string, int> need;  // matches still to place per word
  std::vector<char> ref_used;
  int best_chunks;
  int total_matches;
  long budget = 2'000'000;

  ChunkSearch(const Tokens& c, const Tokens& r) : cand(c) {
    std::map<std::string, int> cand_counts, ref_counts;
    for (const auto& w : c) cand_counts[w] += 1;
    for (size_t i = 0; i < r.size(); ++i) {
      ref_positions[r[i]].push_back(int(i));
      ref_counts[r[i]] += 1;
    }
    total_matches = 0;
    for (const auto& [w, k] : cand_counts) {
      auto it = ref_counts.find(w);
      if (it != ref_counts.end()) {
        need[w] = std::min(k, it->second);
        total_matches += need[w];
      }
    }
    ref_used.assign(r.size(), 0);
    best_chunks = total_matches + 1;  // above any reachable value
  }

  // remaining candidate occurrences of cand[i]'s word at or after i
  std::map<std::string, std::vector<int>> cand_positions_cache;
  void build_cache() {
    for (size_t i = 0; i < cand.size(); ++i) {
      cand_positions_cache[cand[i]].push_back(int(i));
    }
  }

  void dfs(size_t i, int placed, int chunks, int prev_ref, bool prev_matched) {
    if (budget-- <= 0) return;
    // chunks never decreases; if the previous position was unmatched, any
    // remaining match must open a fresh chunk
    int bound = chunks;
    if (placed < total_matches && !prev_matched) bound += 1;
    if (bound >= best_chunks) return;
    if (placed == total_matches) {
      best_chunks = chunks;
      return;
    }
    if (i >= cand.size()) return;

    const std::string& w = cand[i];
    auto need_it = need.find(w);
    const int remaining_here = need_it == need.end() ? 0 : need_it->second;

    if (remaining_here > 0) {
      // occurrences of w left in the candidate including position i
      const auto& cps = cand_positions_cache[w];
      const int later = int(cps.end() -
                            std::lower_bound(cps.begin(), cps.end(), int(i)));
      // try matching position i to each free reference occurrence; adjacent
      // continuations first so the initial descent finds a good bound
      const auto& rps = ref_positions[w];
      std::vector<int> order(rps.begin(), rps.end());
      if (prev_matched) {
        std::stable_partition(order.begin(), order.end(),
                              [&](int rp) { return rp == prev_ref + 1; });
      }
      for (int rp : order) {
        if (ref_used[rp]) continue;
        const bool adjacent = prev_matched && rp == prev_ref + 1;
        ref_used[rp] = 1;
        need_it->second -= 1;
        dfs(i + 1, placed + 1, chunks + (adjacent ? 0 : 1), rp, true);
        need_it->second += 1;
        ref_used[rp] = 0;
      }
      // skipping position i is only legal if enough occurrences remain
      if (later - 1 >= remaining_here) {
        dfs(i + 1, placed, chunks, prev_ref, false);
      }
    } else {
      dfs(i + 1, placed, chunks, prev_ref, false);
    }
  }
};

}  // namespace

std::pair<int, int> meteor_alignment(const Tokens& cand, const Tokens& ref) {
  ChunkSearch search(cand, ref);
  if (search.total_matches == 0) return {0, 0};
  search.build_cache();
  search.dfs(0, 0, 0, -1, false);
  return {search.total_matches,
          std::min(search.best_chunks, search.total_matches)};
}

double meteor(const std::string& candidate, const std::string& reference) {
  const Tokens cand = tokenize_eval(candidate);
  const Tokens ref = tokenize_eval(reference);
  if (cand.empty() || ref.empty()) return 0.0;
  const auto [m, chunks] = meteor_alignment(cand, ref);
  if (m == 0) return 0.0;
  const double p = double(m) / double(cand.size());
  const double r = double(m) / double(ref.size());
  const double fmean = 10.0 * p * r / (r + 9.0 * p);
  const double frag = double(chunks) / double(m);
  const double penalty = 0.5 * frag * frag * frag;
  return fmean * (1.0 - penalty);
}

double meteor_multi(const std::string& candidate,
                    const std::vector<std::string>& references) {
  double best = 0.0;
  for (const auto& r : references) best = std::max(best, meteor(candidate, r));
  return best;
}

std::vector<double> cider(const std::vector<EvalPair>& corpus) {
  if (corpus.size() < 2) {
    throw ValidationError("cider: corpus must hold at least 2 items for idf");
  }
  const int max_n = 4;
  const double N = double(corpus.size());

  // document frequency per order: number of items whose reference set
  // contains the gram
  std::vector<std::map<std::vector<std::string>, int>> df(max_n);
  for (const auto& pair : corpus) {
    for (int k = 1; k <= max_n; ++k) {
      std::set<std::vector<std::string>> seen;
      for (const auto& ref : pair.references) {
        for (const auto& [g, c] : ngrams(tokenize_eval(ref), k)) seen.insert(g);
      }
      for (const auto& g : seen) df[k - 1][g] += 1;
    }
  }
  auto idf = [&](int k, const std::vector<std::string>& g) {
    auto it = df[k - 1].find(g);
    const double d = it == df[k - 1].end() ? 0.0 : double(it->second);
    return std::log(N / std::max(1.0, d));
  };

  std::vector<double> scores;
  scores.reserve(corpus.size());
  for (const auto& pair : corpus) {
    const Tokens cand = tokenize_eval(pair.candidate);
    double sum_orders = 0.0;
    for (int k = 1; k <= max_n; ++k) {
      // candidate vector
      std::map<std::vector<std::string>, double> cv;
      for (const auto& [g, c] : ngrams(cand, k)) cv[g] = c * idf(k, g);
      // mean reference vector
      std::map<std::vector<std::string>, double> rv;
      for (const auto& ref : pair.references) {
        for (const auto& [g, c] : ngrams(tokenize_eval(ref), k)) {
          rv[g] += c * idf(k, g);
        }
      }
      for (auto& [g, v] : rv) v /= double(pair.references.size());

      double dot = 0.0, nc = 0.0, nr = 0.0;
      for (const auto& [g, v] : cv) {
        nc += v * v;
        auto it = rv.find(g);
        if (it != rv.end()) dot += v * it->second;
      }
      for (const auto& [g, v] : rv) nr += v * v;
      if (nc > 0.0 && nr > 0.0) {
        sum_orders += std::max(0.0, dot / (std::sqrt(nc) * std::sqrt(nr)));
      }
    }
    scores.push_back(10.0 * sum_orders / double(max_n));
  }
  return scores;
}

double avg_nlp(const PairScores& s) {
  const double parts[9] = {s.bleu1,  s.bleu2,  s.bleu3,       s.bleu4,
                           s.rouge1, s.rouge2, s.rougeL,      s.meteor,
                           s.cider / 10.0};
  double sum = 0.0;
  for (double p : parts) sum += p;
  return sum / 9.0 * 100.0;
}

const char* MetricReport::variant_notes() {
  return "bleu=unsmoothed meteor=exact-match cider=vanilla-no-length-penalty";
}

MetricReport evaluate_corpus(const std::vector<EvalPair>& pairs) {
  MetricReport report;
  const std::vector<double> cider_scores = cider(pairs);
  report.per_id.reserve(pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    PairScores s;
    s.id = p.id;
    s.bleu1 = bleu(p.candidate, p.references, 1);
    s.bleu2 = bleu(p.candidate, p.references, 2);
    s.bleu3 = bleu(p.candidate, p.references, 3);
    s.bleu4 = bleu(p.candidate, p.references, 4);
    s.rouge1 = rouge_n_multi(p.candidate, p.references, 1);
    s.rouge2 = rouge_n_multi(p.candidate, p.references, 2);
    s.rougeL = rouge_l_multi(p.candidate, p.references);
    s.meteor = meteor_multi(p.candidate, p.references);
    s.cider = cider_scores[i];
    s.avg_nlp = avg_nlp(s);
    report.per_id.push_back(std::move(s));
  }

  auto mean_of = [&](auto getter) {
    double sum = 0.0;
    for (const auto& s : report.per_id) sum += getter(s);
    return report.per_id.empty() ? 0.0 : sum / double(report.per_id.size());
  };
  report.corpus_means["bleu1"] = mean_of([](const PairScores& s) { return s.bleu1; });
  report.corpus_means["bleu2"] = mean_of([](const PairScores& s) { return s.bleu2; });
  report.corpus_means["bleu3"] = mean_of([](const PairScores& s) { return s.bleu3; });
  report.corpus_means["bleu4"] = mean_of([](const PairScores& s) { return s.bleu4; });
  report.corpus_means["rouge1"] = mean_of([](const PairScores& s) { return s.rouge1; });
  report.corpus_means["rouge2"] = mean_of([](const PairScores& s) { return s.rouge2; });
  report.corpus_means["rougeL"] = mean_of([](const PairScores& s) { return s.rougeL; });
  report.corpus_means["meteor"] = mean_of([](const PairScores& s) { return s.meteor; });
  report.corpus_means["cider"] = mean_of([](const PairScores& s) { return s.cider; });
  report.corpus_means["avg_nlp"] = mean_of([](const PairScores& s) { return s.avg_nlp; });
  return report;
}

MetricReport merge_clinical(MetricReport report, const std::string& score_file) {
  std::ifstream in(score_file);
  if (!in) throw IoError("cannot open '" + score_file + "'");
  std::map<std::string, nlohmann::json> by_id;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError("bad score file " + score_file + ":" +
                    std::to_string(lineno) + ": " + e.what());
    }
    if (!j.contains("id")) {
      throw IoError("bad score file " + score_file + ":" +
                    std::to_string(lineno) + ": missing id");
    }
    const std::string id = j["id"].get<std::string>();
    if (by_id.count(id)) {
      throw ValidationError("duplicate id '" + id + "' in score file");
    }
    by_id[id] = j;
  }
  report.missing_clinical.clear();
  for (auto& s : report.per_id) {
    auto it = by_id.find(s.id);
    if (it == by_id.end()) {
      report.missing_clinical.push_back(s.id);
      continue;
    }
    const auto& j = it->second;
    if (j.contains("green")) s.green = j["green"].get<double>();
    if (j.contains("ratescore")) s.ratescore = j["ratescore"].get<double>();
    if (j.contains("radgraph")) s.radgraph = j["radgraph"].get<double>();
  }
  // corpus means over present values only
  auto optional_mean = [&](auto getter, const char* key) {
    double sum = 0.0;
    size_t n = 0;
    for (const auto& s : report.per_id) {
      if (auto v = getter(s)) {
        sum += *v;
        ++n;
      }
    }
    if (n > 0) report.corpus_means[key] = sum / double(n);
  };
  optional_mean([](const PairScores& s) { return s.green; }, "green");
  optional_mean([](const PairScores& s) { return s.ratescore; }, "ratescore");
  optional_mean([](const PairScores& s) { return s.radgraph; }, "radgraph");
  return report;
}

std::vector<EvalPair> read_pairs_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<EvalPair> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError("bad pairs file " + path + ":" + std::to_string(lineno) +
                    ": " + e.what());
    }
    EvalPair p;
    p.id = j.at("id").get<std::string>();
    p.candidate = j.at("candidate").get<std::string>();
    if (j.at("references").is_array()) {
      p.references = j["references"].get<std::vector<std::string>>();
    } else {
      p.references = {j["references"].get<std::string>()};
    }
    if (p.references.empty()) {
      throw ValidationError("pair '" + p.id + "' has no references");
    }
    out.push_back(std::move(p));
  }
  return out;
}

void write_pairs_jsonl(const std::vector<EvalPair>& pairs,
                       const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (const auto& p : pairs) {
    nlohmann::json j;
    j["id"] = p.id;
    j["candidate"] = p.candidate;
    j["references"] = p.references;
    out << j.dump() << "\n";
  }
}

void write_per_id_jsonl(const MetricReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (const auto& s : report.per_id) {
    nlohmann::json j;
    j["id"] = s.id;
    j["bleu1"] = s.bleu1;
    j["bleu2"] = s.bleu2;
    j["bleu3"] = s.bleu3;
    j["bleu4"] = s.bleu4;
    j["rouge1"] = s.rouge1;
    j["rouge2"] = s.rouge2;
    j["rougeL"] = s.rougeL;
    j["meteor"] = s.meteor;
    j["cider"] = s.cider;
    j["avg_nlp"] = s.avg_nlp;
    if (s.green) j["green"] = *s.green;
    if (s.ratescore) j["ratescore"] = *s.ratescore;
    if (s.radgraph) j["radgraph"] = *s.radgraph;
    out << j.dump() << "\n";
  }
}

void write_metrics_csv(
    const std::vector<std::tuple<std::string, std::string,
                                 std::map<std::string, double>>>& rows,
    const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "model,dataset,avg_nlp,green,ratescore,radgraphxl\n";
  auto cell = [](const std::map<std::string, double>& means, const char* key) {
    auto it = means.find(key);
    if (it == means.end()) return std::string();
    std::ostringstream oss;
    oss.precision(6);
    oss << std::fixed << it->second;
    return oss.str();
  };
  for (const auto& [model, dataset, means] : rows) {
    out << model << "," << dataset << "," << cell(means, "avg_nlp") << ","
        << cell(means, "green") << "," << cell(means, "ratescore") << ","
        << cell(means, "radgraph") << "\n";
  }
}

}  // namespace argus::metrics
