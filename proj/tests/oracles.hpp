// Test-only reference implementations, kept deliberately naive and separate
// from the library code paths they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "argus/metrics.hpp"
#include "argus/volume.hpp"

namespace oracle {

using Tokens = std::vector<std::string>;

inline std::map<std::string, int> count_ngrams(const Tokens& toks, int n) {
  std::map<std::string, int> out;
  for (size_t i = 0; i + size_t(n) <= toks.size(); ++i) {
    std::string key;
    for (int k = 0; k < n; ++k) {
      key += toks[i + size_t(k)];
      key += '\x1f';
    }
    out[key] += 1;
  }
  return out;
}

inline double bleu(const Tokens& cand, const std::vector<Tokens>& refs, int n) {
  if (cand.empty()) return 0.0;
  double logsum = 0.0;
  int orders = 0;
  for (int k = 1; k <= n; ++k) {
    const auto cc = count_ngrams(cand, k);
    int denom = 0, num = 0;
    for (const auto& [g, c] : cc) denom += c;
    if (denom == 0) continue;  // vacuous order: candidate shorter than k
    for (const auto& [g, c] : cc) {
      int best = 0;
      for (const auto& ref : refs) {
        const auto rc = count_ngrams(ref, k);
        auto it = rc.find(g);
        if (it != rc.end()) best = std::max(best, it->second);
      }
      num += std::min(c, best);
    }
    if (num == 0) return 0.0;
    logsum += std::log(double(num) / denom);
    ++orders;
  }
  if (orders == 0) return 0.0;
  size_t r = refs[0].size();
  const size_t c = cand.size();
  for (const auto& ref : refs) {
    const auto d = [&](size_t len) { return len > c ? len - c : c - len; };
    if (d(ref.size()) < d(r) || (d(ref.size()) == d(r) && ref.size() < r)) {
      r = ref.size();
    }
  }
  const double bp = c > r ? 1.0 : std::exp(1.0 - double(r) / double(c));
  return bp * std::exp(logsum / orders);
}

inline double rouge_n(const Tokens& cand, const Tokens& ref, int n) {
  const auto cc = count_ngrams(cand, n);
  const auto rc = count_ngrams(ref, n);
  int nc = 0, nr = 0, overlap = 0;
  for (const auto& [g, c] : cc) nc += c;
  for (const auto& [g, c] : rc) nr += c;
  if (nc == 0 || nr == 0) return 0.0;
  for (const auto& [g, c] : cc) {
    auto it = rc.find(g);
    if (it != rc.end()) overlap += std::min(c, it->second);
  }
  if (overlap == 0) return 0.0;
  const double p = double(overlap) / nc, r = double(overlap) / nr;
  return 2.0 * p * r / (p + r);
}

inline double rouge_l(const Tokens& cand, const Tokens& ref) {
  if (cand.empty() || ref.empty()) return 0.0;
  std::vector<std::vector<size_t>> dp(cand.size() + 1,
                                      std::vector<size_t>(ref.size() + 1, 0));
  for (size_t i = 1; i <= cand.size(); ++i) {
    for (size_t j = 1; j <= ref.size(); ++j) {
      dp[i][j] = cand[i - 1] == ref[j - 1]
                     ? dp[i - 1][j - 1] + 1
                     : std::max(dp[i - 1][j], dp[i][j - 1]);
    }
  }
  const size_t l = dp[cand.size()][ref.size()];
  if (l == 0) return 0.0;
  const double p = double(l) / cand.size(), r = double(l) / ref.size();
  return 2.0 * p * r / (p + r);
}

// Exhaustive search over injective word matchings: maximize matches, then
// minimize chunks. Only suitable for short fixtures.
struct MeteorSearch {
  const Tokens& cand;
  const Tokens& ref;
  std::vector<int> assign;  // per candidate position, ref index or -1
  std::vector<char> used;
  int best_matches = 0;
  int best_chunks = 1 << 20;

  MeteorSearch(const Tokens& c, const Tokens& r)
      : cand(c), ref(r), assign(c.size(), -1), used(r.size(), 0) {}

  void consider() {
    int matches = 0, chunks = 0;
    for (size_t i = 0; i < assign.size(); ++i) {
      if (assign[i] < 0) continue;
      ++matches;
      const bool continues =
          i > 0 && assign[i - 1] >= 0 && assign[i] == assign[i - 1] + 1;
      if (!continues) ++chunks;
    }
    if (matches > best_matches ||
        (matches == best_matches && chunks < best_chunks)) {
      best_matches = matches;
      best_chunks = chunks;
    }
  }

  void rec(size_t i) {
    if (i == cand.size()) {
      consider();
      return;
    }
    rec(i + 1);  // leave position unmatched
    for (size_t j = 0; j < ref.size(); ++j) {
      if (!used[j] && cand[i] == ref[j]) {
        used[j] = 1;
        assign[i] = int(j);
        rec(i + 1);
        assign[i] = -1;
        used[j] = 0;
      }
    }
  }
};

inline double meteor(const Tokens& cand, const Tokens& ref) {
  if (cand.empty() || ref.empty()) return 0.0;
  MeteorSearch search(cand, ref);
  search.rec(0);
  const int m = search.best_matches;
  if (m == 0) return 0.0;
  const double p = double(m) / cand.size(), r = double(m) / ref.size();
  const double fmean = 10.0 * p * r / (r + 9.0 * p);
  const double frag = double(search.best_chunks) / m;
  return fmean * (1.0 - 0.5 * frag * frag * frag);
}

inline std::vector<double> cider(
    const std::vector<Tokens>& cands,
    const std::vector<std::vector<Tokens>>& refs) {
  const double N = double(cands.size());
  std::vector<double> scores(cands.size(), 0.0);
  for (int n = 1; n <= 4; ++n) {
    std::map<std::string, int> df;
    for (const auto& ref_set : refs) {
      std::set<std::string> seen;
      for (const auto& ref : ref_set) {
        for (const auto& [g, c] : count_ngrams(ref, n)) seen.insert(g);
      }
      for (const auto& g : seen) df[g] += 1;
    }
    for (size_t i = 0; i < cands.size(); ++i) {
      std::map<std::string, double> cv, rv;
      for (const auto& [g, c] : count_ngrams(cands[i], n)) {
        const double d = df.count(g) ? double(df[g]) : 0.0;
        cv[g] = c * std::log(N / std::max(1.0, d));
      }
      for (const auto& ref : refs[i]) {
        for (const auto& [g, c] : count_ngrams(ref, n)) {
          const double d = df.count(g) ? double(df[g]) : 0.0;
          rv[g] += c * std::log(N / std::max(1.0, d));
        }
      }
      for (auto& [g, v] : rv) v /= double(refs[i].size());
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (const auto& [g, v] : cv) {
        na += v * v;
        if (rv.count(g)) dot += v * rv[g];
      }
      for (const auto& [g, v] : rv) nb += v * v;
      if (na > 0.0 && nb > 0.0) {
        scores[i] += std::max(0.0, dot / (std::sqrt(na) * std::sqrt(nb)));
      }
    }
  }
  for (auto& s : scores) s = 10.0 * s / 4.0;
  return scores;
}

/// Number of 6-connected components above `threshold`.
inline int connected_components(const argus::Volume& v, float threshold) {
  std::vector<char> visited(v.size(), 0);
  int components = 0;
  const int nx = int(v.dims[0]), ny = int(v.dims[1]), nz = int(v.dims[2]);
  for (size_t start = 0; start < v.size(); ++start) {
    if (visited[start] || v.voxels[start] <= threshold) continue;
    ++components;
    std::deque<size_t> queue{start};
    visited[start] = 1;
    while (!queue.empty()) {
      const size_t cur = queue.front();
      queue.pop_front();
      const int x = int(cur % v.dims[0]);
      const int y = int((cur / v.dims[0]) % v.dims[1]);
      const int z = int(cur / (size_t(v.dims[0]) * v.dims[1]));
      const int deltas[6][3] = {{1, 0, 0},  {-1, 0, 0}, {0, 1, 0},
                                {0, -1, 0}, {0, 0, 1},  {0, 0, -1}};
      for (const auto& d : deltas) {
        const int xx = x + d[0], yy = y + d[1], zz = z + d[2];
        if (xx < 0 || yy < 0 || zz < 0 || xx >= nx || yy >= ny || zz >= nz) {
          continue;
        }
        const size_t ni = v.index(uint32_t(xx), uint32_t(yy), uint32_t(zz));
        if (!visited[ni] && v.voxels[ni] > threshold) {
          visited[ni] = 1;
          queue.push_back(ni);
        }
      }
    }
  }
  return components;
}

}  // namespace oracle
