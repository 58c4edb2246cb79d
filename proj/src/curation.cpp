#include "argus/curation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "argus/rng.hpp"

namespace argus {

namespace {

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(uint8_t(s[b]))) ++b;
  while (e > b && std::isspace(uint8_t(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string lower(std::string s) {
  for (char& c : s) c = char(std::tolower(uint8_t(c)));
  return s;
}

std::vector<std::string> whitespace_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream iss(text);
  std::string tok;
  while (iss >> tok) out.push_back(tok);
  return out;
}

// Strips leading/trailing punctuation so "93," or "(38)" read as numbers.
std::string strip_punct(const std::string& tok) {
  size_t b = 0, e = tok.size();
  auto is_punct = [](char c) {
    return std::ispunct(uint8_t(c)) != 0;
  };
  while (b < e && is_punct(tok[b])) ++b;
  while (e > b && is_punct(tok[e - 1])) --e;
  return tok.substr(b, e - b);
}

bool is_number(const std::string& raw) {
  const std::string t = strip_punct(raw);
  if (t.empty()) return false;
  size_t i = (t[0] == '+' || t[0] == '-') ? 1 : 0;
  if (i == t.size()) return false;
  bool digit_seen = false, dot_seen = false;
  for (; i < t.size(); ++i) {
    if (std::isdigit(uint8_t(t[i]))) {
      digit_seen = true;
    } else if (t[i] == '.' && !dot_seen) {
      dot_seen = true;
    } else {
      return false;
    }
  }
  return digit_seen;
}

bool is_four_digit_year(const std::string& raw) {
  const std::string t = strip_punct(raw);
  if (t.size() != 4) return false;
  for (char c : t) {
    if (!std::isdigit(uint8_t(c))) return false;
  }
  return t[0] == '1' || t[0] == '2';
}

const std::set<std::string> kVitalKeywords = {
    "fever", "sat", "o2", "saturation", "bpm",
    "temperature", "pressure", "leukocytes"};

const std::set<std::string> kUnitTokens = {
    "mm", "cm", "mm.", "cm.", "millimeter", "millimeters",
    "centimeter", "centimeters"};

const std::vector<std::string> kPriorStudyPhrases = {
    "previous study", "prior study", "compared to the previous",
    "previous exam"};

const std::set<std::string> kMonthNames = {
    "january", "february", "march", "april", "may", "june", "july",
    "august", "september", "october", "november", "december"};

bool matches_r1(const std::vector<std::string>& toks) {
  for (size_t i = 0; i < toks.size(); ++i) {
    if (!kVitalKeywords.count(lower(strip_punct(toks[i])))) continue;
    const size_t lo = i >= 4 ? i - 4 : 0;
    const size_t hi = std::min(toks.size() - 1, i + 4);
    for (size_t j = lo; j <= hi; ++j) {
      if (is_number(toks[j])) return true;
    }
  }
  return false;
}

bool matches_r2(const std::vector<std::string>& toks) {
  for (size_t i = 0; i + 1 < toks.size(); ++i) {
    if (is_number(toks[i]) && kUnitTokens.count(lower(toks[i + 1]))) {
      return true;
    }
  }
  return false;
}

bool matches_r3(const std::string& sentence,
                const std::vector<std::string>& toks) {
  const std::string low = lower(sentence);
  for (const auto& phrase : kPriorStudyPhrases) {
    if (low.find(phrase) != std::string::npos) return true;
  }
  for (size_t i = 0; i + 1 < toks.size(); ++i) {
    if (kMonthNames.count(lower(strip_punct(toks[i]))) &&
        is_four_digit_year(toks[i + 1])) {
      return true;
    }
  }
  return false;
}

}  // namespace

std::string assemble_report(const RawRecord& r) {
  if (r.source == "CT-RATE") {
    const std::string f = r.findings.value_or("");
    const std::string im = r.impression.value_or("");
    if (f.empty() && im.empty() && !r.report) {
      throw ValidationError("empty record: '" + r.id +
                            "' has no findings, impression, or report");
    }
    if (f.empty()) return im;
    if (im.empty()) return f;
    return f + " " + im;
  }
  if (!r.report || r.report->empty()) {
    throw ValidationError("empty record: '" + r.id + "' has no report text");
  }
  return *r.report;
}

std::vector<std::string> split_sentences(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  const size_t n = text.size();
  for (size_t i = 0; i < n; ++i) {
    const char c = text[i];
    cur.push_back(c);
    const bool terminator = c == '.' || c == ';' || c == '!' || c == '?';
    if (!terminator) continue;
    // a decimal point between digits is part of the number
    if (c == '.' && i > 0 && i + 1 < n && std::isdigit(uint8_t(text[i - 1])) &&
        std::isdigit(uint8_t(text[i + 1]))) {
      continue;
    }
    if (i + 1 == n || std::isspace(uint8_t(text[i + 1]))) {
      const std::string s = trim(cur);
      if (!s.empty()) out.push_back(s);
      cur.clear();
    }
  }
  const std::string tail = trim(cur);
  if (!tail.empty()) out.push_back(tail);
  return out;
}

std::pair<std::vector<std::string>, std::vector<RemovedSentence>>
filter_sentences(const std::vector<std::string>& sentences) {
  std::vector<std::string> kept;
  std::vector<RemovedSentence> removed;
  for (const auto& s : sentences) {
    const auto toks = whitespace_tokens(s);
    if (matches_r1(toks)) {
      removed.push_back({s, "R1"});
    } else if (matches_r2(toks)) {
      removed.push_back({s, "R2"});
    } else if (matches_r3(s, toks)) {
      removed.push_back({s, "R3"});
    } else {
      kept.push_back(s);
    }
  }
  return {kept, removed};
}

int count_tokens(const std::string& text) {
  int n = 0;
  bool in_token = false;
  for (char c : text) {
    const bool ws = std::isspace(uint8_t(c)) != 0;
    if (!ws && !in_token) ++n;
    in_token = !ws;
  }
  return n;
}

namespace {

// CT-RATE volume ids carry a reconstruction suffix ("..._1", "..._2"); the
// sample key is the id with that final numeric segment removed.
std::string ctrate_sample_key(const std::string& id) {
  const auto us = id.find_last_of('_');
  if (us == std::string::npos || us + 1 == id.size()) return id;
  for (size_t i = us + 1; i < id.size(); ++i) {
    if (!std::isdigit(uint8_t(id[i]))) return id;
  }
  return id.substr(0, us);
}

}  // namespace

CurationResult curate(const std::vector<RawRecord>& records) {
  {
    std::set<std::string> seen;
    std::vector<std::string> dups;
    for (const auto& r : records) {
      if (!seen.insert(r.id).second) dups.push_back(r.id);
    }
    if (!dups.empty()) {
      std::string msg = "duplicate record ids:";
      for (const auto& d : dups) msg += " " + d;
      throw ValidationError(msg);
    }
  }

  // Collapse CT-RATE reconstruction duplicates, keeping the smallest id per
  // sample key. Order is then restored to the input order.
  std::map<std::string, std::string> keep_for_sample;
  for (const auto& r : records) {
    if (r.source != "CT-RATE") continue;
    const std::string key = ctrate_sample_key(r.id);
    auto it = keep_for_sample.find(key);
    if (it == keep_for_sample.end() || r.id < it->second) {
      keep_for_sample[key] = r.id;
    }
  }

  CurationResult result;
  for (const auto& r : records) {
    if (r.source == "CT-RATE" &&
        keep_for_sample.at(ctrate_sample_key(r.id)) != r.id) {
      continue;
    }
    const std::string assembled = assemble_report(r);

    CuratedRecord c;
    c.id = r.id;
    c.source = r.source;
    c.official_test = r.official_test;
    if (r.official_test) {
      c.report = assembled;  // byte-identical, no sentence filtering
    } else {
      auto [kept, removed] = filter_sentences(split_sentences(assembled));
      c.removed = std::move(removed);
      std::string joined;
      for (size_t i = 0; i < kept.size(); ++i) {
        if (i) joined += ' ';
        joined += kept[i];
      }
      c.report = joined;
    }
    c.token_count = count_tokens(c.report);
    if (c.token_count < 10) {
      result.dropped.push_back({c.id, "min-length"});
      continue;
    }
    result.curated.push_back(std::move(c));
  }
  return result;
}

namespace {

size_t round_count(double x) { return size_t(std::llround(x)); }

}  // namespace

DatasetManifest split_dataset(const std::vector<CuratedRecord>& records,
                              uint64_t seed) {
  DatasetManifest m;
  m.seed = seed;

  std::map<std::string, std::vector<std::string>> pool;  // source -> ids
  for (const auto& r : records) {
    if (r.official_test) {
      m.assignment[r.id] = "test";
      m.per_source[r.source].test += 1;
    } else {
      pool[r.source].push_back(r.id);
    }
  }

  for (auto& [source, ids] : pool) {
    std::sort(ids.begin(), ids.end());
    Rng rng(derive_seed(seed, source));
    rng.shuffle(ids);

    const size_t n = ids.size();
    const size_t n_val = round_count(0.1 * double(n));
    const size_t n_test =
        source == "CT-RATE" ? 0 : round_count(0.2 * double(n));
    auto& counts = m.per_source[source];
    for (size_t i = 0; i < n; ++i) {
      const char* split = i < n_val            ? "val"
                          : i < n_val + n_test ? "test"
                                               : "train";
      m.assignment[ids[i]] = split;
      if (i < n_val) {
        counts.val += 1;
      } else if (i < n_val + n_test) {
        counts.test += 1;
      } else {
        counts.train += 1;
      }
    }
  }
  return m;
}

const char* const kBaseInstruction =
    "Please generate a detailed description for the given 3D CT scan, "
    "including both normal and abnormal patterns.";

std::string build_instruction(const std::vector<std::string>& pool,
                              size_t index) {
  if (pool.empty()) throw ValidationError("build_instruction: empty pool");
  return pool[index % pool.size()];
}

std::vector<std::string> read_instruction_pool(const std::string& path) {
  if (path.empty()) return {kBaseInstruction};
  std::ifstream in(path);
  if (!in) throw IoError("cannot open instruction pool '" + path + "'");
  std::vector<std::string> pool;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (!t.empty()) pool.push_back(t);
  }
  if (pool.empty()) {
    throw ValidationError("instruction pool '" + path + "' holds no entries");
  }
  return pool;
}

namespace {

nlohmann::json raw_to_json(const RawRecord& r) {
  nlohmann::json j;
  j["id"] = r.id;
  j["source"] = r.source;
  if (r.findings) j["findings"] = *r.findings;
  if (r.impression) j["impression"] = *r.impression;
  if (r.report) j["report"] = *r.report;
  j["official_test"] = r.official_test;
  return j;
}

RawRecord raw_from_json(const nlohmann::json& j) {
  RawRecord r;
  r.id = j.at("id").get<std::string>();
  r.source = j.at("source").get<std::string>();
  if (j.contains("findings")) r.findings = j["findings"].get<std::string>();
  if (j.contains("impression")) r.impression = j["impression"].get<std::string>();
  if (j.contains("report")) r.report = j["report"].get<std::string>();
  r.official_test = j.value("official_test", false);
  return r;
}

std::vector<nlohmann::json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<nlohmann::json> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw IoError("bad JSON at " + path + ":" + std::to_string(lineno) +
                    ": " + e.what());
    }
  }
  return out;
}

}  // namespace

std::vector<RawRecord> read_raw_jsonl(const std::string& path) {
  std::vector<RawRecord> out;
  for (const auto& j : read_jsonl(path)) out.push_back(raw_from_json(j));
  return out;
}

void write_raw_jsonl(const std::vector<RawRecord>& records,
                     const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (const auto& r : records) out << raw_to_json(r).dump() << "\n";
}

std::vector<CuratedRecord> read_curated_jsonl(const std::string& path) {
  std::vector<CuratedRecord> out;
  for (const auto& j : read_jsonl(path)) {
    CuratedRecord c;
    c.id = j.at("id").get<std::string>();
    c.source = j.at("source").get<std::string>();
    c.report = j.at("report").get<std::string>();
    c.token_count = j.at("token_count").get<int>();
    c.official_test = j.value("official_test", false);
    out.push_back(std::move(c));
  }
  return out;
}

void write_curated_jsonl(const std::vector<CuratedRecord>& records,
                         const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (const auto& r : records) {
    nlohmann::json j;
    j["id"] = r.id;
    j["source"] = r.source;
    j["report"] = r.report;
    j["token_count"] = r.token_count;
    j["official_test"] = r.official_test;
    out << j.dump() << "\n";
  }
}

void write_curation_log(const CurationResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (const auto& r : result.curated) {
    for (const auto& rem : r.removed) {
      nlohmann::json j;
      j["id"] = r.id;
      j["sentence"] = rem.sentence;
      j["rule"] = rem.rule;
      out << j.dump() << "\n";
    }
  }
  for (const auto& d : result.dropped) {
    nlohmann::json j;
    j["id"] = d.id;
    j["dropped"] = d.reason;
    out << j.dump() << "\n";
  }
}

void write_manifest(const DatasetManifest& m, const std::string& path) {
  nlohmann::json j;
  j["seed"] = m.seed;
  j["assignment"] = m.assignment;
  nlohmann::json counts;
  for (const auto& [source, c] : m.per_source) {
    counts[source] = {{"train", c.train}, {"val", c.val}, {"test", c.test}};
  }
  j["counts"] = counts;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad manifest '" + path + "': " + e.what());
  }
  DatasetManifest m;
  m.seed = j.at("seed").get<uint64_t>();
  for (const auto& [id, split] : j.at("assignment").items()) {
    m.assignment[id] = split.get<std::string>();
  }
  for (const auto& [source, c] : j.at("counts").items()) {
    m.per_source[source] = {c.at("train").get<size_t>(),
                            c.at("val").get<size_t>(),
                            c.at("test").get<size_t>()};
  }
  return m;
}

}  // namespace argus
