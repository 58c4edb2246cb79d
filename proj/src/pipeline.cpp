#include "argus/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "argus/ctvol_io.hpp"
#include "argus/curation.hpp"
#include "argus/metrics.hpp"
#include "argus/nn/checkpoint.hpp"
#include "argus/nn/gradcheck.hpp"
#include "argus/nn/model.hpp"
#include "argus/nn/optimizer.hpp"
#include "argus/nn/text_embed.hpp"
#include "argus/rng.hpp"
#include "argus/thread_pool.hpp"
#include "argus/token_grid.hpp"

namespace fs = std::filesystem;

namespace argus::bench {

namespace {

void log_command(const RunConfig& cfg, const std::string& name) {
  // timestamps live here and only here, keeping other artifacts reproducible
  fs::create_directories(cfg.out_dir);
  std::ofstream log(fs::path(cfg.out_dir) / "run.log", std::ios::app);
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  log << "ts=" << std::chrono::duration_cast<std::chrono::seconds>(now).count()
      << " cmd=" << name << "\n";
}

std::string join(const std::string& dir, const std::string& leaf) {
  return (fs::path(dir) / leaf).string();
}

}  // namespace

RunConfig RunConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad config '" + path + "': " + e.what());
  }

  RunConfig cfg;
  cfg.seed = j.value("seed", cfg.seed);
  cfg.profile = j.value("profile", cfg.profile);
  cfg.compression = j.value("compression", cfg.compression);
  cfg.connector_depth = j.value("connector_depth", cfg.connector_depth);
  cfg.mask_ratio = j.value("mask_ratio", cfg.mask_ratio);
  cfg.pretrain = j.value("pretrain", cfg.pretrain);
  cfg.plan = j.value("plan", cfg.plan);

  if (j.contains("paths")) {
    const auto& p = j["paths"];
    cfg.out_dir = p.value("out_dir", cfg.out_dir);
    cfg.corpus = p.value("corpus", cfg.corpus);
    cfg.volumes_dir = p.value("volumes_dir", cfg.volumes_dir);
    cfg.pairs = p.value("pairs", cfg.pairs);
    cfg.scores = p.value("scores", cfg.scores);
  }
  cfg.input_scale = j.value("input_scale", cfg.input_scale);
  if (j.contains("encoder")) {
    const auto& e = j["encoder"];
    cfg.d_model = e.value("d_model", cfg.d_model);
    cfg.n_layers = e.value("n_layers", cfg.n_layers);
    cfg.n_heads = e.value("n_heads", cfg.n_heads);
    cfg.mlp_ratio = e.value("mlp_ratio", cfg.mlp_ratio);
    cfg.d_joint = e.value("d_joint", cfg.d_joint);
    cfg.d_llm = e.value("d_llm", cfg.d_llm);
    cfg.n_queries = e.value("n_queries", cfg.n_queries);
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    cfg.batch_size = t.value("batch_size", cfg.batch_size);
    cfg.epochs = t.value("epochs", cfg.epochs);
    cfg.pretrain_epochs = t.value("pretrain_epochs", cfg.pretrain_epochs);
    cfg.lr_stage1 = t.value("lr_stage1", cfg.lr_stage1);
    cfg.lr_stage2 = t.value("lr_stage2", cfg.lr_stage2);
    cfg.pretrain_lr = t.value("pretrain_lr", cfg.pretrain_lr);
    cfg.tau = t.value("tau", cfg.tau);
  }
  if (j.contains("synth")) {
    const auto& s = j["synth"];
    cfg.synth.n_samples = s.value("n_samples", cfg.synth.n_samples);
    if (s.contains("dims")) {
      for (int a = 0; a < 3; ++a) cfg.synth.dims[a] = s["dims"].at(a);
    }
    if (s.contains("spacing")) {
      for (int a = 0; a < 3; ++a) cfg.synth.spacing[a] = s["spacing"].at(a);
    }
    if (s.contains("lesions")) {
      cfg.synth.min_lesions = s["lesions"].at(0);
      cfg.synth.max_lesions = s["lesions"].at(1);
    }
    if (s.contains("extent")) {
      cfg.synth.min_extent = s["extent"].at(0);
      cfg.synth.max_extent = s["extent"].at(1);
    }
    if (s.contains("templates")) {
      cfg.synth.templates = s["templates"].get<std::vector<std::string>>();
    }
  }
  if (j.contains("sweep")) {
    const auto& s = j["sweep"];
    if (s.contains("mask_ratio")) {
      cfg.sweep.mask_ratio = s["mask_ratio"].get<std::vector<double>>();
    }
    if (s.contains("compression")) {
      cfg.sweep.compression = s["compression"].get<std::vector<std::string>>();
    }
    if (s.contains("connector_depth")) {
      cfg.sweep.connector_depth = s["connector_depth"].get<std::vector<int>>();
    }
    if (s.contains("data_fraction")) {
      cfg.sweep.data_fraction = s["data_fraction"].get<std::vector<double>>();
    }
  }
  if (j.contains("eval")) {
    cfg.eval_model = j["eval"].value("model", cfg.eval_model);
  }
  return cfg;
}

void RunConfig::validate() const {
  ResolutionProfile::by_name(profile);
  nn::compression_from_string(compression);
  if (connector_depth != 1 && connector_depth != 2) {
    throw ValidationError("connector depth must be 1 or 2");
  }
  if (!(mask_ratio >= 0.0 && mask_ratio <= 1.0)) {
    throw ValidationError("mask ratio must lie in [0, 1]");
  }
  nn::pretrain_plan(pretrain, pretrain_lr, 1);  // validates the names
}

ResolutionProfile RunConfig::resolution() const {
  return ResolutionProfile::by_name(profile);
}

nn::EncoderConfig RunConfig::encoder_config() const {
  const ResolutionProfile prof = resolution();
  nn::EncoderConfig enc;
  enc.d_model = d_model;
  enc.n_layers = n_layers;
  enc.n_heads = n_heads;
  enc.mlp_ratio = mlp_ratio;
  enc.d_joint = d_joint;
  enc.d_llm = d_llm;
  enc.n_queries = n_queries;
  enc.patch_dims = prof.patch_dims;
  for (int a = 0; a < 3; ++a) {
    enc.grid_dims[a] = prof.target_dims[a] / prof.patch_dims[a];
  }
  return enc;
}

std::string RunConfig::corpus_path() const {
  return corpus.empty() ? join(out_dir, "corpus.jsonl") : corpus;
}
std::string RunConfig::volumes_path() const {
  return volumes_dir.empty() ? join(out_dir, "volumes") : volumes_dir;
}
std::string RunConfig::curated_path() const {
  return join(out_dir, "curated.jsonl");
}
std::string RunConfig::curation_log_path() const {
  return join(out_dir, "curation_log.jsonl");
}
std::string RunConfig::manifest_path() const {
  return join(out_dir, "manifest.json");
}
std::string RunConfig::pre_dir() const { return join(out_dir, "pre"); }
std::string RunConfig::tok_dir() const { return join(out_dir, "tok"); }
std::string RunConfig::checkpoint_path(const std::string& tag) const {
  return join(out_dir, "ckpt_" + tag + ".avt");
}
std::string RunConfig::history_path() const {
  return join(out_dir, "loss_history.csv");
}

std::pair<size_t, size_t> token_ledger(const ResolutionProfile& profile,
                                       const std::string& compression,
                                       size_t n_queries) {
  const size_t raw = profile.raw_token_count();
  const nn::Compression c = nn::compression_from_string(compression);
  const size_t compressed =
      c == nn::Compression::Perceiver ? n_queries : raw / 8;
  return {raw, compressed};
}

void cmd_synth(const RunConfig& cfg) {
  log_command(cfg, "synth");
  SynthSpec spec = cfg.synth;
  if (spec.seed == 0) spec.seed = cfg.seed;
  synth_corpus(spec, cfg.out_dir);
  std::cout << "synth: wrote " << spec.n_samples << " samples to "
            << cfg.out_dir << "\n";
}

void cmd_curate(const RunConfig& cfg) {
  log_command(cfg, "curate");
  const auto records = read_raw_jsonl(cfg.corpus_path());
  const CurationResult result = curate(records);
  write_curated_jsonl(result.curated, cfg.curated_path());
  write_curation_log(result, cfg.curation_log_path());
  std::cout << "curate: kept " << result.curated.size() << ", dropped "
            << result.dropped.size() << "\n";
}

void cmd_split(const RunConfig& cfg) {
  log_command(cfg, "split");
  const auto curated = read_curated_jsonl(cfg.curated_path());
  const DatasetManifest manifest = split_dataset(curated, cfg.seed);
  write_manifest(manifest, cfg.manifest_path());
  for (const auto& [source, c] : manifest.per_source) {
    std::cout << "split: " << source << " " << c.train << "/" << c.val << "/"
              << c.test << "\n";
  }
}

namespace {

std::vector<std::string> manifest_ids(const DatasetManifest& m,
                                      const std::string& split = {}) {
  std::vector<std::string> ids;
  for (const auto& [id, s] : m.assignment) {
    if (split.empty() || s == split) ids.push_back(id);
  }
  return ids;  // map order: already sorted
}

}  // namespace

void cmd_preprocess(const RunConfig& cfg) {
  log_command(cfg, "preprocess");
  const DatasetManifest manifest = read_manifest(cfg.manifest_path());
  const ResolutionProfile prof = cfg.resolution();
  fs::create_directories(cfg.pre_dir());
  if (cfg.input_scale != "hu" && cfg.input_scale != "unit") {
    throw ValidationError("input_scale must be 'hu' or 'unit'");
  }
  const auto ids = manifest_ids(manifest);
  parallel_for(ids.size(), worker_count(), [&](size_t i) {
    Volume v = load_volume(join(cfg.volumes_path(), ids[i] + ".ctvol"));
    if (cfg.input_scale == "unit") {
      // synthetic volumes are already [0, 1]; lift them onto the HU scale so
      // the standard clip/normalize stages apply unchanged
      for (float& x : v.voxels) x = x * 2000.0f - 1000.0f;
    }
    const Volume out = preprocess(v, prof);
    write_ctvol(out, join(cfg.pre_dir(), ids[i] + ".ctvol"));
  });
  std::cout << "preprocess: " << ids.size() << " volumes -> "
            << prof.target_dims[0] << "x" << prof.target_dims[1] << "x"
            << prof.target_dims[2] << "\n";
}

void cmd_tokenize(const RunConfig& cfg) {
  log_command(cfg, "tokenize");
  const DatasetManifest manifest = read_manifest(cfg.manifest_path());
  const ResolutionProfile prof = cfg.resolution();
  fs::create_directories(cfg.tok_dir());
  const auto ids = manifest_ids(manifest);
  parallel_for(ids.size(), worker_count(), [&](size_t i) {
    const Volume v = read_ctvol(join(cfg.pre_dir(), ids[i] + ".ctvol"));
    write_tkg(patchify(v, prof.patch_dims), join(cfg.tok_dir(), ids[i] + ".tkg"));
  });
  const auto [raw, compressed] =
      token_ledger(prof, cfg.compression, cfg.n_queries);
  std::cout << "token ledger [" << prof.name << "/" << cfg.compression
            << "]: " << raw << " -> " << compressed << "\n";
}

namespace {

nn::TrainData load_train_data(const RunConfig& cfg,
                              const DatasetManifest& manifest,
                              const std::vector<CuratedRecord>& curated) {
  std::map<std::string, const CuratedRecord*> by_id;
  for (const auto& c : curated) by_id[c.id] = &c;

  nn::TrainData data;
  for (const auto& id : manifest_ids(manifest, "train")) {
    data.grids.push_back(read_tkg(join(cfg.tok_dir(), id + ".tkg")));
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      throw ValidationError("manifest id '" + id + "' missing from curated set");
    }
    data.text_embs.push_back(nn::embed_text(it->second->report, cfg.d_joint,
                                            derive_seed(cfg.seed, "text")));
  }
  if (data.grids.empty()) throw ValidationError("pretrain: empty train split");
  return data;
}

std::vector<nn::HistoryRow> renumber(std::vector<nn::HistoryRow> all,
                                     const std::vector<nn::HistoryRow>& next) {
  const size_t offset = all.size();
  for (auto row : next) {
    row.step = offset + row.step - next.front().step;
    all.push_back(row);
  }
  return all;
}

}  // namespace

void cmd_pretrain(const RunConfig& cfg) {
  log_command(cfg, "pretrain");
  const DatasetManifest manifest = read_manifest(cfg.manifest_path());
  const auto curated = read_curated_jsonl(cfg.curated_path());
  const nn::TrainData data = load_train_data(cfg, manifest, curated);

  nn::ParameterSet params =
      nn::init_params(cfg.encoder_config(), cfg.seed, cfg.connector_depth,
                      nn::compression_from_string(cfg.compression));
  nn::save_checkpoint(params, cfg.checkpoint_path("init"));

  nn::TrainPlan plan;
  plan.batch_size = cfg.batch_size;
  plan.mask_ratio = cfg.mask_ratio;
  plan.tau = cfg.tau;
  plan.seed = cfg.seed;

  std::vector<nn::HistoryRow> history;

  plan.stages = nn::pretrain_plan(cfg.pretrain, cfg.pretrain_lr,
                                  cfg.pretrain_epochs);
  history = renumber(std::move(history), nn::train(params, plan, data));
  nn::save_checkpoint(params, cfg.checkpoint_path("pretrain"));

  const auto schedule =
      nn::schedule_plan(cfg.plan, params, cfg.lr_stage1, cfg.lr_stage2,
                        cfg.epochs);
  for (size_t i = 0; i < schedule.size(); ++i) {
    plan.stages = {schedule[i]};
    history = renumber(std::move(history), nn::train(params, plan, data));
    nn::save_checkpoint(params,
                        cfg.checkpoint_path("stage" + std::to_string(i + 1)));
  }
  nn::save_checkpoint(params, cfg.checkpoint_path("final"));
  nn::write_history_csv(history, cfg.history_path());
  std::cout << "pretrain: " << history.size() << " steps, final loss "
            << (history.empty() ? 0.0 : history.back().loss) << "\n";
}

int cmd_gradcheck(const RunConfig& cfg) {
  log_command(cfg, "gradcheck");
  const nn::GradCheckReport report =
      nn::grad_check(nn::gradcheck_config(), cfg.seed);
  for (const auto& [key, err] : report.per_tensor) {
    std::cout << "gradcheck " << key << " " << err << "\n";
  }
  std::cout << "gradcheck max_rel_error " << report.max_rel_error << " over "
            << report.coordinates_checked << " coordinates\n";
  return report.max_rel_error < 1e-4 ? 0 : 1;
}

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0;
  for (size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return dot;  // inputs are unit vectors
}

std::vector<metrics::EvalPair> retrieval_pairs(const RunConfig& cfg,
                                               const nn::ParameterSet& params) {
  const DatasetManifest manifest = read_manifest(cfg.manifest_path());
  const auto curated = read_curated_jsonl(cfg.curated_path());
  std::map<std::string, const CuratedRecord*> by_id;
  for (const auto& c : curated) by_id[c.id] = &c;

  const auto train_ids = manifest_ids(manifest, "train");
  const auto test_ids = manifest_ids(manifest, "test");
  if (train_ids.empty() || test_ids.empty()) {
    throw ValidationError(
        "evaluate: retrieval mode needs non-empty train and test splits");
  }
  std::vector<std::vector<double>> train_embs(train_ids.size());
  parallel_for(train_ids.size(), worker_count(), [&](size_t i) {
    train_embs[i] = nn::joint_embedding(
        read_tkg(join(cfg.tok_dir(), train_ids[i] + ".tkg")), params);
  });

  std::vector<metrics::EvalPair> pairs(test_ids.size());
  parallel_for(test_ids.size(), worker_count(), [&](size_t i) {
    const auto emb = nn::joint_embedding(
        read_tkg(join(cfg.tok_dir(), test_ids[i] + ".tkg")), params);
    size_t best = 0;
    double best_sim = -2.0;
    for (size_t t = 0; t < train_embs.size(); ++t) {
      const double sim = cosine(emb, train_embs[t]);
      if (sim > best_sim) {
        best_sim = sim;
        best = t;
      }
    }
    pairs[i] = {test_ids[i], by_id.at(train_ids[best])->report,
                {by_id.at(test_ids[i])->report}};
  });
  return pairs;
}

}  // namespace

void cmd_evaluate(const RunConfig& cfg) {
  log_command(cfg, "evaluate");
  std::vector<metrics::EvalPair> pairs;
  std::map<std::string, std::string> source_of;  // id -> source, if known
  if (!cfg.pairs.empty()) {
    pairs = metrics::read_pairs_jsonl(cfg.pairs);
  } else {
    pairs = retrieval_pairs(cfg,
                            nn::load_checkpoint(cfg.checkpoint_path("final")));
    for (const auto& c : read_curated_jsonl(cfg.curated_path())) {
      source_of[c.id] = c.source;
    }
    metrics::write_pairs_jsonl(pairs, join(cfg.out_dir, "pairs.jsonl"));
  }

  metrics::MetricReport report = metrics::evaluate_corpus(pairs);
  if (!cfg.scores.empty()) {
    report = metrics::merge_clinical(std::move(report), cfg.scores);
  }
  metrics::write_per_id_jsonl(report, join(cfg.out_dir, "per_id_scores.jsonl"));

  // per-source rows plus macro (mean over sources) and micro (pooled)
  using Means = std::map<std::string, double>;
  std::vector<std::tuple<std::string, std::string, Means>> rows;
  std::map<std::string, std::vector<const metrics::PairScores*>> groups;
  for (const auto& s : report.per_id) {
    auto it = source_of.find(s.id);
    groups[it == source_of.end() ? "all" : it->second].push_back(&s);
  }
  auto group_means = [](const std::vector<const metrics::PairScores*>& g) {
    Means m;
    auto add = [&](const char* key, auto getter) {
      double sum = 0.0;
      size_t n = 0;
      for (const auto* s : g) {
        if (auto v = getter(*s)) {
          sum += *v;
          ++n;
        }
      }
      if (n) m[key] = sum / double(n);
    };
    add("avg_nlp", [](const metrics::PairScores& s) {
      return std::optional<double>(s.avg_nlp);
    });
    add("green", [](const metrics::PairScores& s) { return s.green; });
    add("ratescore", [](const metrics::PairScores& s) { return s.ratescore; });
    add("radgraph", [](const metrics::PairScores& s) { return s.radgraph; });
    return m;
  };
  Means macro;
  std::map<std::string, std::pair<double, size_t>> macro_acc;
  for (const auto& [source, group] : groups) {
    const Means m = group_means(group);
    rows.emplace_back(cfg.eval_model, source, m);
    for (const auto& [key, value] : m) {
      macro_acc[key].first += value;
      macro_acc[key].second += 1;
    }
  }
  for (const auto& [key, acc] : macro_acc) {
    macro[key] = acc.first / double(acc.second);
  }
  if (groups.size() > 1) {
    rows.emplace_back(cfg.eval_model, "macro_avg", macro);
  }
  std::vector<const metrics::PairScores*> all;
  for (const auto& s : report.per_id) all.push_back(&s);
  rows.emplace_back(cfg.eval_model, "micro_avg", group_means(all));
  metrics::write_metrics_csv(rows, join(cfg.out_dir, "metrics.csv"));
  {
    nlohmann::json meta;
    meta["variants"] = metrics::MetricReport::variant_notes();
    meta["missing_clinical"] = report.missing_clinical;
    std::ofstream out(join(cfg.out_dir, "eval_meta.json"), std::ios::trunc);
    out << meta.dump(2) << "\n";
  }
  std::cout << "evaluate: " << pairs.size() << " pairs, avg_nlp "
            << report.corpus_means.at("avg_nlp") << "\n";
}

namespace {

struct SweepCell {
  double mask_ratio;
  std::string compression;
  int connector_depth;
  double data_fraction;

  std::string key() const {
    std::ostringstream oss;
    oss << "m=" << mask_ratio << "|c=" << compression
        << "|d=" << connector_depth << "|f=" << data_fraction;
    return oss.str();
  }
};

}  // namespace

void cmd_sweep(const RunConfig& cfg) {
  log_command(cfg, "sweep");
  std::vector<SweepCell> grid;
  std::set<std::string> seen;
  for (double m : cfg.sweep.mask_ratio) {
    for (const auto& c : cfg.sweep.compression) {
      for (int d : cfg.sweep.connector_depth) {
        for (double f : cfg.sweep.data_fraction) {
          SweepCell cell{m, c, d, f};
          if (!seen.insert(cell.key()).second) {
            std::cout << "sweep: duplicate cell " << cell.key()
                      << " skipped\n";
            continue;
          }
          grid.push_back(cell);
        }
      }
    }
  }
  if (grid.empty()) throw ValidationError("sweep: empty axis grid");

  const std::string progress_path = join(cfg.out_dir, "sweep_progress.json");
  nlohmann::json progress;
  progress["cells"] = nlohmann::json::object();
  if (fs::exists(progress_path)) {
    std::ifstream in(progress_path);
    try {
      in >> progress;
    } catch (const nlohmann::json::exception&) {
      progress = nlohmann::json::object();
      progress["cells"] = nlohmann::json::object();
    }
  }
  // drop progress entries that reference cells outside the current grid
  {
    nlohmann::json kept = nlohmann::json::object();
    for (const auto& cell : grid) {
      const std::string k = cell.key();
      if (progress["cells"].contains(k)) kept[k] = progress["cells"][k];
    }
    progress["cells"] = kept;
  }
  auto save_progress = [&] {
    std::ofstream out(progress_path, std::ios::trunc);
    out << progress.dump(2) << "\n";
  };

  const DatasetManifest manifest = read_manifest(cfg.manifest_path());
  const auto curated = read_curated_jsonl(cfg.curated_path());
  const nn::TrainData full = load_train_data(cfg, manifest, curated);

  // fraction prefixes share one seeded shuffle so smaller subsets nest
  std::vector<size_t> order(full.grids.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  {
    Rng rng(derive_seed(cfg.seed, "sweep.fraction"));
    rng.shuffle(order);
  }

  for (const auto& cell : grid) {
    const std::string key = cell.key();
    const auto& entry = progress["cells"];
    if (entry.contains(key) && entry[key].value("status", "") == "done") {
      continue;  // resumable: completed cells are skipped
    }
    progress["cells"][key] = {{"status", "started"}};
    save_progress();

    RunConfig cell_cfg = cfg;
    cell_cfg.mask_ratio = cell.mask_ratio;
    cell_cfg.compression = cell.compression;
    cell_cfg.connector_depth = cell.connector_depth;

    const size_t take = std::max<size_t>(
        1, size_t(std::llround(cell.data_fraction * double(full.grids.size()))));
    nn::TrainData subset;
    for (size_t i = 0; i < take && i < order.size(); ++i) {
      subset.grids.push_back(full.grids[order[i]]);
      subset.text_embs.push_back(full.text_embs[order[i]]);
    }

    nn::ParameterSet params = nn::init_params(
        cell_cfg.encoder_config(), derive_seed(cfg.seed, "sweep." + key),
        cell_cfg.connector_depth,
        nn::compression_from_string(cell_cfg.compression));

    nn::TrainPlan plan;
    plan.batch_size = cfg.batch_size;
    plan.mask_ratio = cell.mask_ratio;
    plan.tau = cfg.tau;
    plan.seed = derive_seed(cfg.seed, "sweep.train." + key);
    plan.stages = nn::pretrain_plan(cfg.pretrain, cfg.pretrain_lr,
                                    cfg.pretrain_epochs);
    const auto schedule = nn::schedule_plan(cfg.plan, params, cfg.lr_stage1,
                                            cfg.lr_stage2, cfg.epochs);
    plan.stages.insert(plan.stages.end(), schedule.begin(), schedule.end());
    const auto history = nn::train(params, plan, subset);

    // retrieval evaluation of the cell's trained encoder on the test split
    const auto pairs = retrieval_pairs(cell_cfg, params);

    nlohmann::json row;
    row["mask_ratio"] = cell.mask_ratio;
    row["compression"] = cell.compression;
    row["connector_depth"] = cell.connector_depth;
    row["data_fraction"] = cell.data_fraction;
    row["subset_size"] = take;
    if (pairs.size() >= 2) {  // cider idf needs a 2-item corpus
      const metrics::MetricReport eval = metrics::evaluate_corpus(pairs);
      row["avg_nlp"] = eval.corpus_means.at("avg_nlp");
    }
    std::map<std::string, double> final_loss;
    for (const auto& h : history) final_loss[h.stage] = h.loss;
    for (const auto& [stage, loss] : final_loss) {
      row["final_loss_" + stage] = loss;
    }
    progress["cells"][key] = {{"status", "done"}, {"row", row}};
    save_progress();
  }

  // sweep.csv regenerates from progress in grid order
  std::ofstream csv(join(cfg.out_dir, "sweep.csv"), std::ios::trunc);
  if (!csv) throw IoError("cannot open sweep.csv for writing");
  csv << "mask_ratio,compression,connector_depth,data_fraction,subset_size,"
         "avg_nlp,final_losses\n";
  csv.precision(17);
  for (const auto& cell : grid) {
    const auto& entry = progress["cells"][cell.key()];
    if (entry.value("status", "") != "done") continue;
    const auto& row = entry["row"];
    csv << cell.mask_ratio << "," << cell.compression << ","
        << cell.connector_depth << "," << cell.data_fraction << ","
        << row["subset_size"].get<size_t>() << ",";
    if (row.contains("avg_nlp")) csv << row["avg_nlp"].get<double>();
    csv << ",";
    bool first = true;
    for (const auto& [k, v] : row.items()) {
      if (k.rfind("final_loss_", 0) != 0) continue;
      if (!first) csv << ";";
      csv << k.substr(11) << "=" << v.get<double>();
      first = false;
    }
    csv << "\n";
  }
  std::cout << "sweep: " << grid.size() << " cells complete\n";
}

void run_full_pipeline(const RunConfig& cfg) {
  cmd_synth(cfg);
  cmd_curate(cfg);
  cmd_split(cfg);
  cmd_preprocess(cfg);
  cmd_tokenize(cfg);
  cmd_pretrain(cfg);
  cmd_evaluate(cfg);
}

std::vector<std::string> pipeline_artifacts(const RunConfig& cfg) {
  std::vector<std::string> rel = {
      "corpus.jsonl",    "curated.jsonl",       "curation_log.jsonl",
      "manifest.json",   "ckpt_init.avt",       "ckpt_pretrain.avt",
      "ckpt_final.avt",  "loss_history.csv",    "pairs.jsonl",
      "per_id_scores.jsonl", "metrics.csv",     "eval_meta.json"};
  rel.push_back("ckpt_stage1.avt");
  if (cfg.plan != "1stage") rel.push_back("ckpt_stage2.avt");
  const DatasetManifest manifest = read_manifest(cfg.manifest_path());
  for (const auto& [id, split] : manifest.assignment) {
    rel.push_back("volumes/" + id + ".ctvol");
    rel.push_back("pre/" + id + ".ctvol");
    rel.push_back("tok/" + id + ".tkg");
  }
  return rel;
}

}  // namespace argus::bench
