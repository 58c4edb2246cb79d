#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "argus/nn/tensor.hpp"

namespace argus::nn {

/// Reverse-mode tape over Mat values. Nodes are appended in topological
/// order; backward() walks them in reverse, accumulating gradients. All
/// reductions run sequentially in doubles, so results are bit-reproducible.
class Graph {
 public:
  /// Constant input (no gradient tracked unless needs_grad).
  int leaf(Mat v, bool needs_grad = false);

  /// Parameter leaf; gradients are collected under `name`.
  int param_leaf(const std::string& name, Mat v);

  int add(int a, int b);
  int sub(int a, int b);
  int scale(int a, double c);
  int matmul(int a, int b);     // [m,k] x [k,n]
  int matmul_nt(int a, int b);  // [m,k] x [n,k]^T
  int add_rowvec(int a, int v); // broadcast [1,c] over rows

  int layer_norm(int x, int gamma, int beta, double eps = 1e-8);
  int gelu(int x);
  int softmax_rows(int x);

  int slice_cols(int x, size_t from, size_t to);
  int concat_cols(const std::vector<int>& xs);
  int concat_rows(const std::vector<int>& xs);
  int gather_rows(int x, std::vector<uint32_t> idx);
  /// Copies `base`, then overwrites row idx[k] with row k of `rows`.
  int scatter_rows(int base, std::vector<uint32_t> idx, int rows);

  int mean_pool_rows(int x);      // [n,c] -> [1,c]
  int l2_normalize_rows(int x);   // error on zero-norm rows
  int detach(int x);              // value passthrough, gradient barrier

  /// Space-to-depth over rows ordered like TokenGrid tokens (x-fastest).
  int pixel_shuffle_rows(int x, std::array<uint32_t, 3> grid_dims);
  int avg_pool_rows(int x, std::array<uint32_t, 3> grid_dims);

  int mse(int a, int b);                 // mean over all entries
  int cross_entropy_diag(int s);         // symmetric InfoNCE on [B,B] logits
  int mean_scalars(const std::vector<int>& xs);

  const Mat& value(int id) const { return nodes_[size_t(id)].value; }
  const Mat& grad(int id) const { return nodes_[size_t(id)].grad; }

  /// Seeds d(loss)/d(loss) = 1 and runs the tape backward. The loss node
  /// must be 1x1.
  void backward(int loss);

  /// Gradients of parameter leaves, summed per name.
  std::map<std::string, Mat> named_grads() const;

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void(Graph&, int)> backward_fn;  // may be empty for leaves
    std::string param_name;
  };

  int push(Mat value, std::function<void(Graph&, int)> backward_fn,
           std::string param_name = {});

  Mat& grad_mut(int id) { return nodes_[size_t(id)].grad; }

  std::vector<Node> nodes_;

  friend struct GraphOps;
};

/// Exact GELU and its derivative, shared with tests.
double gelu_scalar(double x);
double gelu_grad_scalar(double x);

/// Normalizes one row in place helper used by layer_norm; exposed for the
/// LN mean/variance property tests.
void layer_norm_row(const double* x, size_t n, double eps, double* out,
                    double* inv_sd);

}  // namespace argus::nn
