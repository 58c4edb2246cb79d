#include "argus/nn/gradcheck.hpp"

#include <cmath>
#include <functional>

#include "argus/nn/model.hpp"
#include "argus/nn/reference_forward.hpp"
#include "argus/rng.hpp"

namespace argus::nn {

EncoderConfig gradcheck_config() {
  EncoderConfig cfg;
  cfg.d_model = 24;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.mlp_ratio = 2.0;
  cfg.patch_dims = {4, 4, 4};
  cfg.grid_dims = {2, 2, 2};
  cfg.d_joint = 8;
  cfg.d_llm = 16;
  cfg.n_queries = 4;
  return cfg;
}

namespace {

TokenGrid random_grid(const EncoderConfig& cfg, uint64_t seed) {
  TokenGrid g;
  g.grid_dims = cfg.grid_dims;
  g.token_dim = uint32_t(cfg.token_dim());
  g.data.resize(g.n_tokens() * g.token_dim);
  Rng rng(seed);
  for (float& x : g.data) x = float(rng.uniform());
  return g;
}

// Central differences evaluate the loss in long double: the f64 cancellation
// noise u*|L|/eps would otherwise swamp coordinates whose true gradient sits
// below the 1e-8 relative-error floor.
void check_loss(const std::string& tag, ParameterSet& params,
                const std::function<long double()>& loss_fn, double eps,
                uint64_t sample_seed, GradCheckReport& report,
                const std::map<std::string, Mat>& analytic) {
  for (const auto& [name, grad] : analytic) {
    Tensor& theta = params.at(name);
    std::vector<size_t> coords;
    if (theta.numel() > 10'000) {
      // seeded 10% sample for oversized tensors
      Rng rng(derive_seed(sample_seed, name));
      const size_t want = theta.numel() / 10;
      for (size_t i = 0; i < want; ++i) {
        coords.push_back(size_t(rng.below(theta.numel())));
      }
    } else {
      coords.resize(theta.numel());
      for (size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    }
    double tensor_max = 0.0;
    for (size_t i : coords) {
      const double saved = theta.data[i];
      theta.data[i] = saved + eps;
      const long double lp = loss_fn();
      theta.data[i] = saved - eps;
      const long double lm = loss_fn();
      theta.data[i] = saved;
      const double fd = double((lp - lm) / (2.0L * (long double)eps));
      const double rel =
          std::abs(grad.d[i] - fd) / std::max(std::abs(fd), 1e-8);
      tensor_max = std::max(tensor_max, rel);
      ++report.coordinates_checked;
    }
    report.per_tensor[tag + "/" + name] = tensor_max;
    report.max_rel_error = std::max(report.max_rel_error, tensor_max);
  }
}

}  // namespace

GradCheckReport grad_check(const EncoderConfig& cfg, uint64_t seed,
                           double eps) {
  GradCheckReport report;
  ParameterSet params = init_params(cfg, seed);

  // mae_loss at ratio 0.5
  {
    const TokenGrid grid = random_grid(cfg, derive_seed(seed, "gc.grid"));
    const MaskSet mask =
        sample_mask(grid.n_tokens(), 0.5, derive_seed(seed, "gc.mask"));
    std::map<std::string, Mat> analytic;
    {
      Graph g;
      MaeTrace trace = build_mae(g, params, grid, grid, mask);
      g.backward(trace.loss);
      analytic = g.named_grads();
    }
    auto loss_fn = [&]() {
      return ref::mae_loss<long double>(params, grid, grid, mask);
    };
    check_loss("mae", params, loss_fn, eps, derive_seed(seed, "gc.sample.mae"),
               report, analytic);
  }

  // flip_loss with B = 2 at ratio 0.5
  {
    const TokenGrid g0 = random_grid(cfg, derive_seed(seed, "gc.flip0"));
    const TokenGrid g1 = random_grid(cfg, derive_seed(seed, "gc.flip1"));
    std::vector<MaskSet> masks = {
        sample_mask(g0.n_tokens(), 0.5, derive_seed(seed, "gc.fm0")),
        sample_mask(g1.n_tokens(), 0.5, derive_seed(seed, "gc.fm1"))};
    std::vector<const TokenGrid*> items = {&g0, &g1};
    std::vector<std::vector<double>> texts(2,
                                           std::vector<double>(cfg.d_joint));
    Rng trng(derive_seed(seed, "gc.text"));
    for (auto& t : texts) {
      double norm = 0.0;
      for (double& x : t) {
        x = trng.normal();
        norm += x * x;
      }
      for (double& x : t) x /= std::sqrt(norm);
    }
    const double tau = 0.2;

    std::map<std::string, Mat> analytic;
    {
      Graph g;
      FlipTrace trace = build_flip(g, params, items, texts, masks, tau);
      g.backward(trace.loss);
      analytic = g.named_grads();
    }
    auto loss_fn = [&]() {
      return ref::flip_loss<long double>(params, items, texts, masks, tau);
    };
    check_loss("flip", params, loss_fn, eps,
               derive_seed(seed, "gc.sample.flip"), report, analytic);
  }

  return report;
}

}  // namespace argus::nn
