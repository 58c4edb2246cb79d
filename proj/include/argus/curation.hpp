#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "argus/errors.hpp"

namespace argus {

/// One uncurated corpus entry. CT-RATE records carry findings and/or
/// impression; the other sources carry a single report field. SYNTHETIC is
/// accepted for generated fixtures and behaves like the single-report
/// sources.
struct RawRecord {
  std::string id;
  std::string source;  // BIMCV-R | CT-RATE | INSPECT | SYNTHETIC
  std::optional<std::string> findings;
  std::optional<std::string> impression;
  std::optional<std::string> report;
  bool official_test = false;
};

struct RemovedSentence {
  std::string sentence;
  std::string rule;  // R1 | R2 | R3
};

struct CuratedRecord {
  std::string id;
  std::string source;
  std::string report;
  int token_count = 0;
  bool official_test = false;
  std::vector<RemovedSentence> removed;
};

struct DroppedRecord {
  std::string id;
  std::string reason;  // "min-length"
};

struct CurationResult {
  std::vector<CuratedRecord> curated;
  std::vector<DroppedRecord> dropped;
};

struct SplitCounts {
  size_t train = 0, val = 0, test = 0;
};

struct DatasetManifest {
  uint64_t seed = 0;
  std::map<std::string, std::string> assignment;  // id -> train|val|test
  std::map<std::string, SplitCounts> per_source;
};

/// CT-RATE: findings and impression joined by a single space (either side may
/// be absent). Other sources: the report verbatim. A record with no text at
/// all is an error.
std::string assemble_report(const RawRecord& r);

/// Splits on '.', ';', '!', '?' followed by whitespace or end of text.
/// Decimal points between digits never split. Sentences are trimmed and
/// non-empty.
std::vector<std::string> split_sentences(const std::string& text);

/// Applies the removal rules:
///   R1  bare number within 4 tokens of a vital-sign/lab keyword
///   R2  number immediately followed by a measurement unit token
///   R3  prior-study reference (phrase or month-name + 4-digit year)
/// Returns kept sentences and (sentence, rule) pairs, first matching rule
/// wins.
std::pair<std::vector<std::string>, std::vector<RemovedSentence>>
filter_sentences(const std::vector<std::string>& sentences);

/// Count of maximal whitespace-delimited runs.
int count_tokens(const std::string& text);

/// Full curation: assemble, collapse CT-RATE reconstruction duplicates (one
/// record per sample id), sentence-filter (official-test records bypass the
/// filters and keep their text byte-identical), rejoin with single spaces,
/// drop reports under 10 tokens.
CurationResult curate(const std::vector<RawRecord>& records);

/// Deterministic split. official_test records go to test unconditionally.
/// Remaining records are grouped by source, shuffled by a seed-derived
/// Fisher-Yates over id-sorted order, then assigned val = round(0.1 N) and
/// test = round(0.2 N) with the remainder in train. CT-RATE draws only the
/// validation slice; its sampled remainder is all train.
DatasetManifest split_dataset(const std::vector<CuratedRecord>& records,
                              uint64_t seed);

/// The base training instruction and deterministic pool selection.
extern const char* const kBaseInstruction;
std::string build_instruction(const std::vector<std::string>& pool,
                              size_t index);

/// Loads an externally supplied instruction pool: one instruction per line,
/// blank lines skipped. An empty path yields the single-instruction default
/// pool.
std::vector<std::string> read_instruction_pool(const std::string& path);

/// JSON-lines corpus I/O and manifest/log serialization.
std::vector<RawRecord> read_raw_jsonl(const std::string& path);
void write_raw_jsonl(const std::vector<RawRecord>& records,
                     const std::string& path);
std::vector<CuratedRecord> read_curated_jsonl(const std::string& path);
void write_curated_jsonl(const std::vector<CuratedRecord>& records,
                         const std::string& path);
void write_curation_log(const CurationResult& result, const std::string& path);
void write_manifest(const DatasetManifest& m, const std::string& path);
DatasetManifest read_manifest(const std::string& path);

}  // namespace argus
