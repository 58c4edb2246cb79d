#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "argus/pipeline.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<uint64_t> seed;
  std::optional<std::string> profile;
  std::optional<std::string> compression;
  std::optional<int> connector;
  std::optional<std::string> out;
};

argus::bench::RunConfig resolve(const Flags& flags) {
  argus::bench::RunConfig cfg;
  if (!flags.config.empty()) {
    cfg = argus::bench::RunConfig::from_json_file(flags.config);
  }
  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.profile) cfg.profile = *flags.profile;
  if (flags.compression) cfg.compression = *flags.compression;
  if (flags.connector) cfg.connector_depth = *flags.connector;
  if (flags.out) cfg.out_dir = *flags.out;
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, Flags& flags) {
  cmd->add_option("--config", flags.config, "JSON run configuration");
  cmd->add_option("--seed", flags.seed, "override the run seed");
  cmd->add_option("--profile", flags.profile,
                  "resolution profile (normal|high)");
  cmd->add_option("--compression", flags.compression,
                  "token compression (pixel_shuffle|avg_pool|perceiver)");
  cmd->add_option("--connector", flags.connector, "connector depth (1|2)");
  cmd->add_option("--out", flags.out, "output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"argus-bench: desk-scale 3D report-generation pipeline"};
  app.require_subcommand(1);

  Flags flags;
  const char* names[] = {"synth",    "curate",    "split",
                         "preprocess", "tokenize", "pretrain",
                         "gradcheck", "evaluate",  "sweep"};
  const char* descs[] = {
      "generate the synthetic octant-lesion corpus",
      "clean reports and log removed sentences",
      "assign train/val/test splits deterministically",
      "clip, normalize, resample, and resize volumes",
      "patchify preprocessed volumes into token grids",
      "run vision pretraining plus the schedule plan",
      "finite-difference check of mae/flip gradients",
      "score candidate reports with the NLP suite",
      "run the mask/compression/connector/data-fraction grid"};
  for (int i = 0; i < 9; ++i) {
    add_common(app.add_subcommand(names[i], descs[i]), flags);
  }

  CLI11_PARSE(app, argc, argv);

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const argus::bench::RunConfig cfg = resolve(flags);
    using namespace argus::bench;
    if (command == "synth") cmd_synth(cfg);
    else if (command == "curate") cmd_curate(cfg);
    else if (command == "split") cmd_split(cfg);
    else if (command == "preprocess") cmd_preprocess(cfg);
    else if (command == "tokenize") cmd_tokenize(cfg);
    else if (command == "pretrain") cmd_pretrain(cfg);
    else if (command == "gradcheck") return cmd_gradcheck(cfg);
    else if (command == "evaluate") cmd_evaluate(cfg);
    else if (command == "sweep") cmd_sweep(cfg);
  } catch (const argus::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const argus::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
