#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "argus/errors.hpp"

namespace argus::metrics {

struct EvalPair {
  std::string id;
  std::string candidate;
  std::vector<std::string> references;
};

/// Lowercases and splits punctuation into separate tokens, keeping decimal
/// points that sit between digits inside their number.
std::vector<std::string> tokenize_eval(const std::string& text);

/// Unsmoothed BLEU-n: geometric mean of clipped k-gram precisions for
/// k = 1..n times the brevity penalty (closest reference length, ties broken
/// toward the shorter reference). Zero if the candidate is empty or any
/// precision is zero. Orders the candidate is too short to form are skipped
/// rather than zeroed, so a candidate identical to its reference scores 1 at
/// every n.
double bleu(const std::string& candidate,
            const std::vector<std::string>& references, int n);

/// ROUGE-N F1 from clipped n-gram overlap. With several references the best
/// per-reference score is reported.
double rouge_n(const std::string& candidate, const std::string& reference,
               int n);
double rouge_n_multi(const std::string& candidate,
                     const std::vector<std::string>& references, int n);

/// ROUGE-L F1 from the longest common token subsequence.
double rouge_l(const std::string& candidate, const std::string& reference);
double rouge_l_multi(const std::string& candidate,
                     const std::vector<std::string>& references);

/// METEOR in its exact-match-only form: unigram alignment maximizing matches
/// then minimizing chunks, Fmean = 10PR/(R+9P), penalty 0.5*(chunks/m)^3.
double meteor(const std::string& candidate, const std::string& reference);
double meteor_multi(const std::string& candidate,
                    const std::vector<std::string>& references);

/// Exposed for tests: (matches, chunks) of the optimal alignment.
std::pair<int, int> meteor_alignment(const std::vector<std::string>& cand,
                                     const std::vector<std::string>& ref);

/// Corpus CIDEr (no CIDEr-D length penalty): for n = 1..4, cosine between
/// the candidate TF-IDF vector and the mean reference vector, scaled by 10.
/// idf = ln(corpus size / max(1, items whose references contain the gram)).
/// Needs at least 2 items.
std::vector<double> cider(const std::vector<EvalPair>& corpus);

struct PairScores {
  std::string id;
  double bleu1 = 0, bleu2 = 0, bleu3 = 0, bleu4 = 0;
  double rouge1 = 0, rouge2 = 0, rougeL = 0;
  double meteor = 0, cider = 0;
  double avg_nlp = 0;  // [0, 100]
  std::optional<double> green, ratescore, radgraph;
};

struct MetricReport {
  std::vector<PairScores> per_id;
  std::map<std::string, double> corpus_means;  // all nine + avg_nlp
  std::vector<std::string> missing_clinical;   // ids absent from score file
  // variant notes recorded alongside every report
  static const char* variant_notes();
};

/// The nine-score average mapped to [0, 100]: CIDEr contributes its value
/// divided by 10, everything else scales by 100.
double avg_nlp(const PairScores& s);

/// Scores a corpus of pairs with all nine metrics plus avg_nlp.
MetricReport evaluate_corpus(const std::vector<EvalPair>& pairs);

/// Attaches externally computed clinical scores keyed by id. Ids missing
/// from the file are flagged, never invented; a duplicate id is an error.
/// Score files are JSON-lines: {"id": ..., "green": ..., "ratescore": ...,
/// "radgraph": ...} with any subset of the three metrics per line.
MetricReport merge_clinical(MetricReport report, const std::string& score_file);

std::vector<EvalPair> read_pairs_jsonl(const std::string& path);
void write_pairs_jsonl(const std::vector<EvalPair>& pairs,
                       const std::string& path);
void write_per_id_jsonl(const MetricReport& report, const std::string& path);

/// One CSV row per (model, dataset): avg_nlp plus the clinical column family.
/// Cells absent from a row's means map stay blank.
void write_metrics_csv(
    const std::vector<std::tuple<std::string, std::string,
                                 std::map<std::string, double>>>& rows,
    const std::string& path);

}  // namespace argus::metrics
