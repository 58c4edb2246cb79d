#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "argus/ctvol_io.hpp"
#include "argus/curation.hpp"
#include "argus/nn/checkpoint.hpp"
#include "argus/pipeline.hpp"
#include "argus/token_grid.hpp"

using namespace argus;
using namespace argus::bench;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_run(const std::string& out_dir) {
  RunConfig cfg;
  cfg.seed = 21;
  cfg.out_dir = out_dir;
  cfg.profile = "normal";
  cfg.input_scale = "unit";
  cfg.d_model = 12;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.mlp_ratio = 2.0;
  cfg.d_joint = 12;
  cfg.d_llm = 16;
  cfg.batch_size = 4;
  cfg.synth.n_samples = 8;  // test split gets 2 samples, enough for cider idf
  cfg.synth.dims = {32, 32, 16};
  cfg.synth.spacing = {2.0, 2.0, 8.0};
  cfg.synth.min_extent = 3;
  cfg.synth.max_extent = 5;
  return cfg;
}

}  // namespace

TEST_CASE("token_ledger reproduces the published counts") {
  const auto normal = ResolutionProfile::normal();
  const auto high = ResolutionProfile::high();
  CHECK(token_ledger(normal, "pixel_shuffle") == std::pair<size_t, size_t>{2048, 256});
  CHECK(token_ledger(normal, "avg_pool") == std::pair<size_t, size_t>{2048, 256});
  CHECK(token_ledger(high, "pixel_shuffle") == std::pair<size_t, size_t>{4096, 512});
  CHECK(token_ledger(normal, "perceiver") == std::pair<size_t, size_t>{2048, 64});
  CHECK(token_ledger(high, "perceiver") == std::pair<size_t, size_t>{4096, 64});
  CHECK_THROWS_AS(token_ledger(normal, "bogus"), ValidationError);
}

TEST_CASE("run config parses JSON and validates enums") {
  const std::string path =
      (fs::temp_directory_path() / "argus_cfg.json").string();
  {
    std::ofstream out(path, std::ios::trunc);
    out << R"({
      "seed": 9,
      "profile": "high",
      "compression": "perceiver",
      "connector_depth": 1,
      "mask_ratio": 0.25,
      "paths": {"out_dir": "/tmp/argus_cfg_out"},
      "encoder": {"d_model": 24, "n_layers": 2},
      "train": {"batch_size": 2, "lr_stage1": 0.001},
      "synth": {"n_samples": 4, "dims": [32, 32, 32], "lesions": [0, 2]}
    })";
  }
  const RunConfig cfg = RunConfig::from_json_file(path);
  CHECK(cfg.seed == 9);
  CHECK(cfg.profile == "high");
  CHECK(cfg.compression == "perceiver");
  CHECK(cfg.connector_depth == 1);
  CHECK(cfg.mask_ratio == 0.25);
  CHECK(cfg.out_dir == "/tmp/argus_cfg_out");
  CHECK(cfg.d_model == 24);
  CHECK(cfg.batch_size == 2);
  CHECK(cfg.lr_stage1 == 0.001);
  CHECK(cfg.synth.n_samples == 4);
  CHECK(cfg.synth.min_lesions == 0);
  cfg.validate();

  RunConfig bad = cfg;
  bad.compression = "zip";
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  CHECK_THROWS_AS(RunConfig::from_json_file("/nonexistent/cfg.json"), IoError);
  std::remove(path.c_str());
}

TEST_CASE("encoder geometry derives from the resolution profile") {
  RunConfig cfg;
  cfg.profile = "normal";
  cfg.d_model = 24;
  const auto enc = cfg.encoder_config();
  CHECK(enc.patch_dims == std::array<uint32_t, 3>{16, 16, 8});
  CHECK(enc.grid_dims == std::array<uint32_t, 3>{16, 16, 8});
  CHECK(enc.n_tokens() == 2048);
  cfg.profile = "high";
  CHECK(cfg.encoder_config().n_tokens() == 4096);
}

TEST_CASE("pipeline stages compose end to end on a tiny corpus") {
  const std::string dir =
      (fs::temp_directory_path() / "argus_pipe_tiny").string();
  fs::remove_all(dir);
  RunConfig cfg = tiny_run(dir);

  cmd_synth(cfg);
  CHECK(fs::exists(cfg.corpus_path()));
  cmd_curate(cfg);
  CHECK(fs::exists(cfg.curated_path()));
  CHECK(fs::exists(cfg.curation_log_path()));
  cmd_split(cfg);
  const DatasetManifest manifest = read_manifest(cfg.manifest_path());
  CHECK(manifest.assignment.size() == 8);
  cmd_preprocess(cfg);
  cmd_tokenize(cfg);

  // every preprocessed volume obeys the profile contract
  for (const auto& [id, split] : manifest.assignment) {
    const Volume v = read_ctvol(cfg.pre_dir() + "/" + id + ".ctvol");
    CHECK(v.dims == std::array<uint32_t, 3>{256, 256, 64});
    for (float x : v.voxels) {
      REQUIRE(x >= 0.0f);
      REQUIRE(x <= 1.0f);
    }
    const TokenGrid g = read_tkg(cfg.tok_dir() + "/" + id + ".tkg");
    CHECK(g.n_tokens() == 2048);
  }

  cmd_pretrain(cfg);
  CHECK(fs::exists(cfg.checkpoint_path("init")));
  CHECK(fs::exists(cfg.checkpoint_path("pretrain")));
  CHECK(fs::exists(cfg.checkpoint_path("stage1")));
  CHECK(fs::exists(cfg.checkpoint_path("final")));
  CHECK(fs::exists(cfg.history_path()));

  // stage 1 touches only connector tensors
  const auto diff = nn::checkpoint_diff(cfg.checkpoint_path("pretrain"),
                                        cfg.checkpoint_path("stage1"));
  CHECK_FALSE(diff.empty());
  for (const auto& name : diff) {
    CHECK(name.rfind("connector.", 0) == 0);
  }

  cmd_evaluate(cfg);
  CHECK(fs::exists(dir + "/pairs.jsonl"));
  CHECK(fs::exists(dir + "/per_id_scores.jsonl"));
  CHECK(fs::exists(dir + "/metrics.csv"));
  CHECK(fs::exists(dir + "/eval_meta.json"));
  {
    std::ifstream in(dir + "/metrics.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "model,dataset,avg_nlp,green,ratescore,radgraphxl");
  }
  fs::remove_all(dir);
}

TEST_CASE("preprocess output is independent of the worker-pool size") {
  const std::string dir =
      (fs::temp_directory_path() / "argus_pipe_threads").string();
  fs::remove_all(dir);
  RunConfig cfg = tiny_run(dir);
  cfg.synth.n_samples = 4;
  cmd_synth(cfg);
  cmd_curate(cfg);
  cmd_split(cfg);

  auto hash_outputs = [&]() {
    std::string all;
    const DatasetManifest manifest = read_manifest(cfg.manifest_path());
    for (const auto& [id, split] : manifest.assignment) {
      std::ifstream in(cfg.pre_dir() + "/" + id + ".ctvol", std::ios::binary);
      all.append((std::istreambuf_iterator<char>(in)),
                 std::istreambuf_iterator<char>());
    }
    return all;
  };
  setenv("ARGUS_BENCH_THREADS", "1", 1);
  cmd_preprocess(cfg);
  const std::string single = hash_outputs();
  fs::remove_all(cfg.pre_dir());
  setenv("ARGUS_BENCH_THREADS", "3", 1);
  cmd_preprocess(cfg);
  const std::string pooled = hash_outputs();
  unsetenv("ARGUS_BENCH_THREADS");
  CHECK(single == pooled);
  CHECK_FALSE(single.empty());
  fs::remove_all(dir);
}

TEST_CASE("sweep dedupes cells, resumes, and tracks progress") {
  const std::string dir =
      (fs::temp_directory_path() / "argus_pipe_sweep").string();
  fs::remove_all(dir);
  RunConfig cfg = tiny_run(dir);
  cfg.epochs = 1;
  cfg.pretrain_epochs = 1;
  cmd_synth(cfg);
  cmd_curate(cfg);
  cmd_split(cfg);
  cmd_preprocess(cfg);
  cmd_tokenize(cfg);

  cfg.sweep.mask_ratio = {0.25, 0.25, 0.5};  // duplicate on purpose
  cfg.sweep.data_fraction = {0.5, 1.0};
  cmd_sweep(cfg);

  std::ifstream pin(dir + "/sweep_progress.json");
  nlohmann::json progress;
  pin >> progress;
  CHECK(progress["cells"].size() == 4);  // 2 ratios x 2 fractions after dedupe
  for (const auto& [key, cell] : progress["cells"].items()) {
    CHECK(cell["status"] == "done");
  }

  // resume is a no-op that regenerates the same csv
  std::ifstream c1(dir + "/sweep.csv");
  std::string csv1((std::istreambuf_iterator<char>(c1)),
                   std::istreambuf_iterator<char>());
  cmd_sweep(cfg);
  std::ifstream c2(dir + "/sweep.csv");
  std::string csv2((std::istreambuf_iterator<char>(c2)),
                   std::istreambuf_iterator<char>());
  CHECK(csv1 == csv2);

  // fraction subsets nest: 8 samples split 5 train, round(0.5 * 5) = 3
  bool saw_half = false;
  for (const auto& [key, cell] : progress["cells"].items()) {
    if (cell["row"]["data_fraction"].get<double>() == 0.5) {
      CHECK(cell["row"]["subset_size"].get<size_t>() == 3);
      saw_half = true;
    }
    CHECK(cell["row"].contains("avg_nlp"));  // metric scores per cell
  }
  CHECK(saw_half);
  {
    std::ifstream in(dir + "/sweep.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header ==
          "mask_ratio,compression,connector_depth,data_fraction,subset_size,"
          "avg_nlp,final_losses");
  }
  fs::remove_all(dir);
}

#ifdef ARGUS_BENCH_EXE
TEST_CASE("the CLI maps error classes onto exit codes") {
  const std::string exe = ARGUS_BENCH_EXE;
  const std::string dir =
      (fs::temp_directory_path() / "argus_cli_smoke").string();
  fs::remove_all(dir);
  fs::create_directories(dir);

  // validation error: bogus compression
  int rc = std::system(
      (exe + " tokenize --compression bogus --out " + dir + " 2>/dev/null")
          .c_str());
  CHECK(WEXITSTATUS(rc) == 1);

  // io error: missing config file
  rc = std::system(
      (exe + " curate --config /nonexistent.json 2>/dev/null").c_str());
  CHECK(WEXITSTATUS(rc) == 2);

  // happy path: synth a tiny corpus
  std::ofstream cfg_file(dir + "/cfg.json");
  cfg_file << R"({"seed": 3, "input_scale": "unit",
                  "paths": {"out_dir": ")" << dir << R"("},
                  "synth": {"n_samples": 2, "dims": [24, 24, 16],
                            "extent": [3, 4]}})";
  cfg_file.close();
  rc = std::system((exe + " synth --config " + dir + "/cfg.json").c_str());
  CHECK(WEXITSTATUS(rc) == 0);
  CHECK(fs::exists(dir + "/corpus.jsonl"));
  rc = std::system((exe + " curate --config " + dir + "/cfg.json").c_str());
  CHECK(WEXITSTATUS(rc) == 0);
  fs::remove_all(dir);
}
#endif
