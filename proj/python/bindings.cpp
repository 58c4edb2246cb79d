#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "argus/ctvol_io.hpp"
#include "argus/curation.hpp"
#include "argus/metrics.hpp"
#include "argus/nn/checkpoint.hpp"
#include "argus/nn/gradcheck.hpp"
#include "argus/nn/model.hpp"
#include "argus/nn/optimizer.hpp"
#include "argus/nn/text_embed.hpp"
#include "argus/pipeline.hpp"
#include "argus/synth.hpp"
#include "argus/token_grid.hpp"
#include "argus/volume.hpp"

namespace py = pybind11;
using namespace argus;

namespace {

using FloatArray =
    py::array_t<float, py::array::c_style | py::array::forcecast>;

// Volumes cross the boundary as C-ordered [z, y, x] arrays, which matches the
// x-fastest internal layout byte for byte.
Volume volume_from_numpy(const FloatArray& arr, std::array<double, 3> spacing) {
  if (arr.ndim() != 3) {
    throw ValidationError("volume array must be 3D, indexed [z, y, x]");
  }
  Volume v;
  v.dims = {uint32_t(arr.shape(2)), uint32_t(arr.shape(1)),
            uint32_t(arr.shape(0))};
  v.spacing = spacing;
  v.voxels.assign(arr.data(), arr.data() + arr.size());
  v.validate();
  return v;
}

py::array_t<float> volume_to_numpy(const Volume& v) {
  py::array_t<float> arr({py::ssize_t(v.dims[2]), py::ssize_t(v.dims[1]),
                          py::ssize_t(v.dims[0])});
  std::memcpy(arr.mutable_data(), v.voxels.data(),
              v.voxels.size() * sizeof(float));
  return arr;
}

TokenGrid grid_from_numpy(const FloatArray& arr,
                          std::array<uint32_t, 3> grid_dims) {
  if (arr.ndim() != 2) {
    throw ValidationError("token array must be 2D [n_tokens, token_dim]");
  }
  TokenGrid g;
  g.grid_dims = grid_dims;
  g.token_dim = uint32_t(arr.shape(1));
  if (size_t(arr.shape(0)) != g.n_tokens()) {
    throw ValidationError("token count does not match grid_dims");
  }
  g.data.assign(arr.data(), arr.data() + arr.size());
  g.validate();
  return g;
}

py::array_t<float> grid_to_numpy(const TokenGrid& g) {
  py::array_t<float> arr(
      {py::ssize_t(g.n_tokens()), py::ssize_t(g.token_dim)});
  std::memcpy(arr.mutable_data(), g.data.data(), g.data.size() * sizeof(float));
  return arr;
}

py::array_t<double> mat_to_numpy(const nn::Mat& m) {
  py::array_t<double> arr({py::ssize_t(m.rows), py::ssize_t(m.cols)});
  std::memcpy(arr.mutable_data(), m.d.data(), m.d.size() * sizeof(double));
  return arr;
}

RawRecord record_from_dict(const py::dict& d) {
  RawRecord r;
  r.id = d["id"].cast<std::string>();
  r.source = d["source"].cast<std::string>();
  if (d.contains("findings")) r.findings = d["findings"].cast<std::string>();
  if (d.contains("impression")) {
    r.impression = d["impression"].cast<std::string>();
  }
  if (d.contains("report")) r.report = d["report"].cast<std::string>();
  if (d.contains("official_test")) {
    r.official_test = d["official_test"].cast<bool>();
  }
  return r;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "CT report-generation benchmark core: preprocessing, token "
            "geometry, micro 3D-ViT losses, curation, and NLP metrics";

  py::register_exception<ValidationError>(m, "ValidationError",
                                          PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_IOError);

  // ---- volumes ----
  py::class_<Volume>(m, "Volume")
      .def(py::init([](const FloatArray& arr, std::array<double, 3> spacing) {
             return volume_from_numpy(arr, spacing);
           }),
           py::arg("voxels"), py::arg("spacing"))
      .def_property_readonly(
          "dims", [](const Volume& v) { return v.dims; })
      .def_property_readonly(
          "spacing", [](const Volume& v) { return v.spacing; })
      .def("to_numpy", &volume_to_numpy, "voxels as a [z, y, x] float32 array");

  m.def("clip_hu", &clip_hu, py::arg("volume"), py::arg("lo") = -1000.0f,
        py::arg("hi") = 1000.0f);
  m.def("normalize_intensity", &normalize_intensity, py::arg("volume"),
        py::arg("lo") = -1000.0f, py::arg("hi") = 1000.0f);
  m.def("resample_spacing", &resample_spacing, py::arg("volume"),
        py::arg("target_spacing") = std::array<double, 3>{1.0, 1.0, 4.0});
  m.def("resize", &resize, py::arg("volume"), py::arg("target_dims"));
  m.def(
      "preprocess",
      [](const Volume& v, const std::string& profile) {
        return preprocess(v, ResolutionProfile::by_name(profile));
      },
      py::arg("volume"), py::arg("profile") = "normal");
  m.def("read_ctvol", &read_ctvol, py::arg("path"));
  m.def("write_ctvol", &write_ctvol, py::arg("volume"), py::arg("path"));

  // ---- token geometry ----
  py::class_<TokenGrid>(m, "TokenGrid")
      .def(py::init([](const FloatArray& arr, std::array<uint32_t, 3> dims) {
             return grid_from_numpy(arr, dims);
           }),
           py::arg("tokens"), py::arg("grid_dims"))
      .def_property_readonly(
          "grid_dims", [](const TokenGrid& g) { return g.grid_dims; })
      .def_property_readonly(
          "token_dim", [](const TokenGrid& g) { return g.token_dim; })
      .def_property_readonly(
          "n_tokens", [](const TokenGrid& g) { return g.n_tokens(); })
      .def("to_numpy", &grid_to_numpy,
           "tokens as an [n_tokens, token_dim] float32 array");

  m.def("patchify", &patchify, py::arg("volume"), py::arg("patch_dims"));
  m.def("unpatchify", &unpatchify, py::arg("grid"), py::arg("patch_dims"),
        py::arg("spacing") = std::array<double, 3>{1.0, 1.0, 1.0});
  m.def("pixel_shuffle_3d", &pixel_shuffle_3d, py::arg("grid"));
  m.def("pixel_unshuffle_3d", &pixel_unshuffle_3d, py::arg("grid"));
  m.def("avg_pool_3d", &avg_pool_3d, py::arg("grid"));
  m.def(
      "pos_embed_3d",
      [](std::array<uint32_t, 3> grid_dims, size_t d) {
        const auto table = pos_embed_3d(grid_dims, d);
        const size_t n = table.size() / d;
        py::array_t<double> arr({py::ssize_t(n), py::ssize_t(d)});
        std::memcpy(arr.mutable_data(), table.data(),
                    table.size() * sizeof(double));
        return arr;
      },
      py::arg("grid_dims"), py::arg("d"));
  m.def(
      "sample_mask",
      [](size_t n_tokens, double ratio, uint64_t seed) {
        return sample_mask(n_tokens, ratio, seed).masked;
      },
      py::arg("n_tokens"), py::arg("ratio"), py::arg("seed"));
  m.def("read_tkg", &read_tkg, py::arg("path"));
  m.def("write_tkg", &write_tkg, py::arg("grid"), py::arg("path"));

  // ---- curation ----
  m.def("split_sentences", &split_sentences, py::arg("text"));
  m.def("count_tokens", &count_tokens, py::arg("text"));
  m.def(
      "filter_sentences",
      [](const std::vector<std::string>& sentences) {
        auto [kept, removed] = filter_sentences(sentences);
        py::list removed_out;
        for (const auto& r : removed) {
          removed_out.append(py::make_tuple(r.sentence, r.rule));
        }
        return py::make_tuple(kept, removed_out);
      },
      py::arg("sentences"));
  m.def(
      "curate",
      [](const py::list& records) {
        std::vector<RawRecord> raw;
        for (const auto& item : records) {
          raw.push_back(record_from_dict(item.cast<py::dict>()));
        }
        const CurationResult result = curate(raw);
        py::list curated, dropped;
        for (const auto& c : result.curated) {
          py::dict d;
          d["id"] = c.id;
          d["source"] = c.source;
          d["report"] = c.report;
          d["token_count"] = c.token_count;
          d["official_test"] = c.official_test;
          py::list removed;
          for (const auto& r : c.removed) {
            removed.append(py::make_tuple(r.sentence, r.rule));
          }
          d["removed"] = removed;
          curated.append(d);
        }
        for (const auto& dr : result.dropped) {
          dropped.append(py::make_tuple(dr.id, dr.reason));
        }
        return py::make_tuple(curated, dropped);
      },
      py::arg("records"));
  m.def(
      "split_dataset",
      [](const py::list& curated, uint64_t seed) {
        std::vector<CuratedRecord> records;
        for (const auto& item : curated) {
          const py::dict d = item.cast<py::dict>();
          CuratedRecord c;
          c.id = d["id"].cast<std::string>();
          c.source = d["source"].cast<std::string>();
          c.report = d.contains("report") ? d["report"].cast<std::string>()
                                          : std::string();
          c.token_count = d.contains("token_count")
                              ? d["token_count"].cast<int>()
                              : count_tokens(c.report);
          c.official_test = d.contains("official_test") &&
                            d["official_test"].cast<bool>();
          records.push_back(std::move(c));
        }
        const DatasetManifest manifest = split_dataset(records, seed);
        py::dict counts;
        for (const auto& [source, sc] : manifest.per_source) {
          py::dict row;
          row["train"] = sc.train;
          row["val"] = sc.val;
          row["test"] = sc.test;
          counts[py::str(source)] = row;
        }
        py::dict assignment;
        for (const auto& [id, split] : manifest.assignment) {
          assignment[py::str(id)] = split;
        }
        py::dict out;
        out["seed"] = manifest.seed;
        out["assignment"] = assignment;
        out["counts"] = counts;
        return out;
      },
      py::arg("curated"), py::arg("seed"));
  m.def("build_instruction", &build_instruction, py::arg("pool"),
        py::arg("index"));
  m.def("read_instruction_pool", &read_instruction_pool, py::arg("path") = "");
  m.attr("BASE_INSTRUCTION") = kBaseInstruction;

  // ---- metrics ----
  m.def("tokenize_eval", &metrics::tokenize_eval, py::arg("text"));
  m.def("bleu", &metrics::bleu, py::arg("candidate"), py::arg("references"),
        py::arg("n"));
  m.def("rouge_n", &metrics::rouge_n, py::arg("candidate"),
        py::arg("reference"), py::arg("n"));
  m.def("rouge_l", &metrics::rouge_l, py::arg("candidate"),
        py::arg("reference"));
  m.def("meteor", &metrics::meteor, py::arg("candidate"), py::arg("reference"));
  m.def(
      "evaluate_pairs",
      [](const py::list& pairs) {
        std::vector<metrics::EvalPair> eval_pairs;
        for (const auto& item : pairs) {
          const py::dict d = item.cast<py::dict>();
          metrics::EvalPair p;
          p.id = d["id"].cast<std::string>();
          p.candidate = d["candidate"].cast<std::string>();
          p.references = d["references"].cast<std::vector<std::string>>();
          eval_pairs.push_back(std::move(p));
        }
        const metrics::MetricReport report =
            metrics::evaluate_corpus(eval_pairs);
        py::list per_id;
        for (const auto& s : report.per_id) {
          py::dict d;
          d["id"] = s.id;
          d["bleu1"] = s.bleu1;
          d["bleu2"] = s.bleu2;
          d["bleu3"] = s.bleu3;
          d["bleu4"] = s.bleu4;
          d["rouge1"] = s.rouge1;
          d["rouge2"] = s.rouge2;
          d["rougeL"] = s.rougeL;
          d["meteor"] = s.meteor;
          d["cider"] = s.cider;
          d["avg_nlp"] = s.avg_nlp;
          per_id.append(d);
        }
        py::dict means;
        for (const auto& [key, value] : report.corpus_means) {
          means[py::str(key)] = value;
        }
        return py::make_tuple(per_id, means);
      },
      py::arg("pairs"));

  // ---- micro model ----
  py::class_<nn::EncoderConfig>(m, "EncoderConfig")
      .def(py::init([](size_t d_model, size_t n_layers, size_t n_heads,
                       double mlp_ratio, std::array<uint32_t, 3> patch_dims,
                       std::array<uint32_t, 3> grid_dims, size_t d_joint,
                       size_t d_llm, size_t n_queries) {
             nn::EncoderConfig cfg;
             cfg.d_model = d_model;
             cfg.n_layers = n_layers;
             cfg.n_heads = n_heads;
             cfg.mlp_ratio = mlp_ratio;
             cfg.patch_dims = patch_dims;
             cfg.grid_dims = grid_dims;
             cfg.d_joint = d_joint;
             cfg.d_llm = d_llm;
             cfg.n_queries = n_queries;
             cfg.validate();
             return cfg;
           }),
           py::arg("d_model") = 24, py::arg("n_layers") = 2,
           py::arg("n_heads") = 2, py::arg("mlp_ratio") = 2.0,
           py::arg("patch_dims") = std::array<uint32_t, 3>{4, 4, 4},
           py::arg("grid_dims") = std::array<uint32_t, 3>{2, 2, 2},
           py::arg("d_joint") = 16, py::arg("d_llm") = 32,
           py::arg("n_queries") = 64)
      .def_readonly("d_model", &nn::EncoderConfig::d_model)
      .def_readonly("n_layers", &nn::EncoderConfig::n_layers)
      .def_property_readonly("n_tokens", &nn::EncoderConfig::n_tokens)
      .def_property_readonly("token_dim", &nn::EncoderConfig::token_dim);

  py::class_<nn::ParameterSet>(m, "Params")
      .def_property_readonly("config",
                             [](const nn::ParameterSet& p) { return p.cfg; })
      .def("tensor_names",
           [](const nn::ParameterSet& p) {
             std::vector<std::string> names;
             for (const auto& [name, t] : p.tensors) names.push_back(name);
             return names;
           })
      .def("tensor",
           [](const nn::ParameterSet& p, const std::string& name) {
             return mat_to_numpy(p.at(name).as_mat());
           })
      .def("frozen", [](const nn::ParameterSet& p,
                        const std::string& name) { return p.frozen(name); })
      .def("save",
           [](const nn::ParameterSet& p, const std::string& path) {
             nn::save_checkpoint(p, path);
           })
      .def_static("load", &nn::load_checkpoint);

  m.def(
      "init_params",
      [](const nn::EncoderConfig& cfg, uint64_t seed, int connector_depth,
         const std::string& compression) {
        return nn::init_params(cfg, seed, connector_depth,
                               nn::compression_from_string(compression));
      },
      py::arg("config"), py::arg("seed"), py::arg("connector_depth") = 2,
      py::arg("compression") = "pixel_shuffle");
  m.def(
      "encode",
      [](const TokenGrid& grid, const nn::ParameterSet& params,
         std::vector<uint32_t> visible) {
        if (visible.empty()) {
          visible.resize(grid.n_tokens());
          for (size_t i = 0; i < visible.size(); ++i) {
            visible[i] = uint32_t(i);
          }
        }
        return mat_to_numpy(nn::encode(grid, params, visible));
      },
      py::arg("grid"), py::arg("params"),
      py::arg("visible") = std::vector<uint32_t>{});
  m.def(
      "mae_loss",
      [](const TokenGrid& grid, const nn::ParameterSet& params, double ratio,
         uint64_t seed) {
        const nn::MaeResult r = nn::mae_loss_tokens(grid, params, ratio, seed);
        return py::make_tuple(r.loss, mat_to_numpy(r.reconstruction),
                              r.mask.masked);
      },
      py::arg("grid"), py::arg("params"), py::arg("ratio") = 0.5,
      py::arg("seed") = 0,
      "returns (loss, reconstruction [n_tokens, token_dim], masked indices)");
  m.def(
      "flip_loss",
      [](const std::vector<TokenGrid>& grids,
         const std::vector<std::vector<double>>& text_embs,
         const nn::ParameterSet& params, double ratio, double tau,
         uint64_t seed) {
        return nn::flip_loss_tokens(grids, text_embs, params, ratio, tau, seed);
      },
      py::arg("grids"), py::arg("text_embeddings"), py::arg("params"),
      py::arg("ratio") = 0.5, py::arg("tau") = 0.07, py::arg("seed") = 0);
  m.def("embed_text", &nn::embed_text, py::arg("text"), py::arg("d_joint"),
        py::arg("seed"));
  m.def(
      "joint_embedding",
      [](const TokenGrid& grid, const nn::ParameterSet& params) {
        return nn::joint_embedding(grid, params);
      },
      py::arg("grid"), py::arg("params"));
  m.def(
      "grad_check",
      [](uint64_t seed, double eps) {
        const nn::GradCheckReport r =
            nn::grad_check(nn::gradcheck_config(), seed, eps);
        py::dict per_tensor;
        for (const auto& [key, value] : r.per_tensor) {
          per_tensor[py::str(key)] = value;
        }
        py::dict out;
        out["max_rel_error"] = r.max_rel_error;
        out["coordinates_checked"] = r.coordinates_checked;
        out["per_tensor"] = per_tensor;
        return out;
      },
      py::arg("seed") = 0, py::arg("eps") = 1e-4);
  m.def(
      "train",
      [](nn::ParameterSet& params, const std::vector<TokenGrid>& grids,
         const std::vector<std::vector<double>>& text_embs,
         const std::string& pretrain, const std::string& plan, double lr,
         double lr_stage1, double lr_stage2, size_t epochs, size_t batch_size,
         double mask_ratio, double tau, uint64_t seed) {
        nn::TrainPlan tp;
        tp.batch_size = batch_size;
        tp.mask_ratio = mask_ratio;
        tp.tau = tau;
        tp.seed = seed;
        if (!pretrain.empty()) {
          tp.stages = nn::pretrain_plan(pretrain, lr, epochs);
        }
        if (!plan.empty()) {
          const auto schedule =
              nn::schedule_plan(plan, params, lr_stage1, lr_stage2, epochs);
          tp.stages.insert(tp.stages.end(), schedule.begin(), schedule.end());
        }
        nn::TrainData data;
        data.grids = grids;
        data.text_embs = text_embs;
        const auto history = nn::train(params, tp, data);
        py::list out;
        for (const auto& row : history) {
          py::dict d;
          d["step"] = row.step;
          d["stage"] = row.stage;
          d["lr"] = row.lr;
          d["loss"] = row.loss;
          out.append(d);
        }
        return out;
      },
      py::arg("params"), py::arg("grids"),
      py::arg("text_embeddings") = std::vector<std::vector<double>>{},
      py::arg("pretrain") = "mae", py::arg("plan") = "",
      py::arg("lr") = 1e-3, py::arg("lr_stage1") = 1e-4,
      py::arg("lr_stage2") = 1e-6, py::arg("epochs") = 1,
      py::arg("batch_size") = 8, py::arg("mask_ratio") = 0.5,
      py::arg("tau") = 0.07, py::arg("seed") = 0);

  // ---- synthetic data ----
  m.def(
      "synth_sample",
      [](size_t index, size_t n_samples, std::array<uint32_t, 3> dims,
         std::array<double, 3> spacing, uint32_t min_lesions,
         uint32_t max_lesions, uint32_t min_extent, uint32_t max_extent,
         uint64_t seed) {
        SynthSpec spec;
        spec.n_samples = n_samples;
        spec.dims = dims;
        spec.spacing = spacing;
        spec.min_lesions = min_lesions;
        spec.max_lesions = max_lesions;
        spec.min_extent = min_extent;
        spec.max_extent = max_extent;
        spec.seed = seed;
        const SynthSample s = synth_sample(spec, index);
        py::dict out;
        out["id"] = s.id;
        out["volume"] = volume_to_numpy(s.volume);
        out["spacing"] = s.volume.spacing;
        out["report"] = s.report;
        out["regions"] = s.regions;
        return out;
      },
      py::arg("index") = 0, py::arg("n_samples") = 1,
      py::arg("dims") = std::array<uint32_t, 3>{64, 64, 32},
      py::arg("spacing") = std::array<double, 3>{1.25, 1.25, 5.0},
      py::arg("min_lesions") = 1, py::arg("max_lesions") = 3,
      py::arg("min_extent") = 3, py::arg("max_extent") = 7,
      py::arg("seed") = 0);

  m.def(
      "token_ledger",
      [](const std::string& profile, const std::string& compression,
         size_t n_queries) {
        return bench::token_ledger(ResolutionProfile::by_name(profile),
                                   compression, n_queries);
      },
      py::arg("profile"), py::arg("compression"), py::arg("n_queries") = 64);
}
