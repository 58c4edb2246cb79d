#include "argus/nn/graph.hpp"

#include <cmath>

namespace argus::nn {

namespace {

void check(bool cond, const char* msg) {
  if (!cond) throw ValidationError(msg);
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

double gelu_scalar(double x) {
  return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
}

double gelu_grad_scalar(double x) {
  const double phi = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return phi + x * pdf;
}

void layer_norm_row(const double* x, size_t n, double eps, double* out,
                    double* inv_sd) {
  double mean = 0.0;
  for (size_t j = 0; j < n; ++j) mean += x[j];
  mean /= double(n);
  double var = 0.0;
  for (size_t j = 0; j < n; ++j) {
    const double d = x[j] - mean;
    var += d * d;
  }
  var /= double(n);
  const double is = 1.0 / std::sqrt(var + eps);
  for (size_t j = 0; j < n; ++j) out[j] = (x[j] - mean) * is;
  if (inv_sd) *inv_sd = is;
}

int Graph::push(Mat value, std::function<void(Graph&, int)> backward_fn,
                std::string param_name) {
  Node n;
  n.value = std::move(value);
  n.backward_fn = std::move(backward_fn);
  n.param_name = std::move(param_name);
  nodes_.push_back(std::move(n));
  return int(nodes_.size()) - 1;
}

int Graph::leaf(Mat v, bool /*needs_grad*/) { return push(std::move(v), {}); }

int Graph::param_leaf(const std::string& name, Mat v) {
  return push(std::move(v), {}, name);
}

int Graph::add(int a, int b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  check(A.rows == B.rows && A.cols == B.cols, "add: shape mismatch");
  Mat out(A.rows, A.cols);
  for (size_t i = 0; i < out.d.size(); ++i) out.d[i] = A.d[i] + B.d[i];
  return push(std::move(out), [a, b](Graph& g, int id) {
    const Mat& go = g.grad(id);
    Mat& ga = g.grad_mut(a);
    Mat& gb = g.grad_mut(b);
    for (size_t i = 0; i < go.d.size(); ++i) {
      ga.d[i] += go.d[i];
      gb.d[i] += go.d[i];
    }
  });
}

int Graph::sub(int a, int b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  check(A.rows == B.rows && A.cols == B.cols, "sub: shape mismatch");
  Mat out(A.rows, A.cols);
  for (size_t i = 0; i < out.d.size(); ++i) out.d[i] = A.d[i] - B.d[i];
  return push(std::move(out), [a, b](Graph& g, int id) {
    const Mat& go = g.grad(id);
    Mat& ga = g.grad_mut(a);
    Mat& gb = g.grad_mut(b);
    for (size_t i = 0; i < go.d.size(); ++i) {
      ga.d[i] += go.d[i];
      gb.d[i] -= go.d[i];
    }
  });
}

int Graph::scale(int a, double c) {
  const Mat& A = value(a);
  Mat out(A.rows, A.cols);
  for (size_t i = 0; i < out.d.size(); ++i) out.d[i] = A.d[i] * c;
  return push(std::move(out), [a, c](Graph& g, int id) {
    const Mat& go = g.grad(id);
    Mat& ga = g.grad_mut(a);
    for (size_t i = 0; i < go.d.size(); ++i) ga.d[i] += go.d[i] * c;
  });
}

int Graph::matmul(int a, int b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  check(A.cols == B.rows, "matmul: inner dims mismatch");
  Mat out(A.rows, B.cols);
  for (size_t i = 0; i < A.rows; ++i) {
    for (size_t k = 0; k < A.cols; ++k) {
      const double aik = A.at(i, k);
      if (aik == 0.0) continue;
      const double* brow = B.row(k);
      double* orow = out.row(i);
      for (size_t j = 0; j < B.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return push(std::move(out), [a, b](Graph& g, int id) {
    const Mat& go = g.grad(id);
    const Mat& A = g.value(a);
    const Mat& B = g.value(b);
    Mat& ga = g.grad_mut(a);
    Mat& gb = g.grad_mut(b);
    // dA = dY * B^T
    for (size_t i = 0; i < A.rows; ++i) {
      for (size_t k = 0; k < A.cols; ++k) {
        double s = 0.0;
        const double* gr = go.row(i);
        const double* br = B.row(k);
        for (size_t j = 0; j < B.cols; ++j) s += gr[j] * br[j];
        ga.at(i, k) += s;
      }
    }
    // dB = A^T * dY
    for (size_t k = 0; k < B.rows; ++k) {
      for (size_t i = 0; i < A.rows; ++i) {
        const double aik = A.at(i, k);
        if (aik == 0.0) continue;
        const double* gr = go.row(i);
        double* gbr = gb.row(k);
        for (size_t j = 0; j < B.cols; ++j) gbr[j] += aik * gr[j];
      }
    }
  });
}

int Graph::matmul_nt(int a, int b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  check(A.cols == B.cols, "matmul_nt: inner dims mismatch");
  Mat out(A.rows, B.rows);
  for (size_t i = 0; i < A.rows; ++i) {
    for (size_t j = 0; j < B.rows; ++j) {
      double s = 0.0;
      const double* ar = A.row(i);
      const double* br = B.row(j);
      for (size_t k = 0; k < A.cols; ++k) s += ar[k] * br[k];
      out.at(i, j) = s;
    }
  }
  return push(std::move(out), [a, b](Graph& g, int id) {
    const Mat& go = g.grad(id);
    const Mat& A = g.value(a);
    const Mat& B = g.value(b);
    Mat& ga = g.grad_mut(a);
    Mat& gb = g.grad_mut(b);
    // Y = A B^T: dA = dY B, dB = dY^T A
    for (size_t i = 0; i < A.rows; ++i) {
      for (size_t j = 0; j < B.rows; ++j) {
        const double gij = go.at(i, j);
        if (gij == 0.0) continue;
        const double* br = B.row(j);
        double* gar = ga.row(i);
        for (size_t k = 0; k < A.cols; ++k) gar[k] += gij * br[k];
        const double* ar = A.row(i);
        double* gbr = gb.row(j);
        for (size_t k = 0; k < A.cols; ++k) gbr[k] += gij * ar[k];
      }
    }
  });
}

int Graph::add_rowvec(int a, int v) {
  const Mat& A = value(a);
  const Mat& V = value(v);
  check(V.rows == 1 && V.cols == A.cols, "add_rowvec: bad vector shape");
  Mat out(A.rows, A.cols);
  for (size_t i = 0; i < A.rows; ++i) {
    for (size_t j = 0; j < A.cols; ++j) out.at(i, j) = A.at(i, j) + V.at(0, j);
  }
  return push(std::move(out), [a, v](Graph& g, int id) {
    const Mat& go = g.grad(id);
    Mat& ga = g.grad_mut(a);
    Mat& gv = g.grad_mut(v);
    for (size_t i = 0; i < go.rows; ++i) {
      for (size_t j = 0; j < go.cols; ++j) {
        ga.at(i, j) += go.at(i, j);
        gv.at(0, j) += go.at(i, j);
      }
    }
  });
}

int Graph::layer_norm(int x, int gamma, int beta, double eps) {
  const Mat& X = value(x);
  const Mat& G = value(gamma);
  const Mat& B = value(beta);
  check(G.rows == 1 && G.cols == X.cols, "layer_norm: bad gamma shape");
  check(B.rows == 1 && B.cols == X.cols, "layer_norm: bad beta shape");
  Mat out(X.rows, X.cols);
  Mat xhat(X.rows, X.cols);
  std::vector<double> inv_sd(X.rows);
  for (size_t i = 0; i < X.rows; ++i) {
    layer_norm_row(X.row(i), X.cols, eps, xhat.row(i), &inv_sd[i]);
    for (size_t j = 0; j < X.cols; ++j) {
      out.at(i, j) = G.at(0, j) * xhat.at(i, j) + B.at(0, j);
    }
  }
  return push(std::move(out),
              [x, gamma, beta, xhat = std::move(xhat),
               inv_sd = std::move(inv_sd)](Graph& g, int id) {
                const Mat& go = g.grad(id);
                const Mat& G = g.value(gamma);
                Mat& gx = g.grad_mut(x);
                Mat& gg = g.grad_mut(gamma);
                Mat& gb = g.grad_mut(beta);
                const size_t n = go.cols;
                for (size_t i = 0; i < go.rows; ++i) {
                  double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                  for (size_t j = 0; j < n; ++j) {
                    const double dy = go.at(i, j);
                    const double xh = xhat.at(i, j);
                    gg.at(0, j) += dy * xh;
                    gb.at(0, j) += dy;
                    const double dxh = dy * G.at(0, j);
                    mean_dxhat += dxh;
                    mean_dxhat_xhat += dxh * xh;
                  }
                  mean_dxhat /= double(n);
                  mean_dxhat_xhat /= double(n);
                  for (size_t j = 0; j < n; ++j) {
                    const double dxh = go.at(i, j) * G.at(0, j);
                    gx.at(i, j) += inv_sd[i] * (dxh - mean_dxhat -
                                                xhat.at(i, j) * mean_dxhat_xhat);
                  }
                }
              });
}

int Graph::gelu(int x) {
  const Mat& X = value(x);
  Mat out(X.rows, X.cols);
  for (size_t i = 0; i < X.d.size(); ++i) out.d[i] = gelu_scalar(X.d[i]);
  return push(std::move(out), [x](Graph& g, int id) {
    const Mat& go = g.grad(id);
    const Mat& X = g.value(x);
    Mat& gx = g.grad_mut(x);
    for (size_t i = 0; i < go.d.size(); ++i) {
      gx.d[i] += go.d[i] * gelu_grad_scalar(X.d[i]);
    }
  });
}

int Graph::softmax_rows(int x) {
  const Mat& X = value(x);
  Mat out(X.rows, X.cols);
  for (size_t i = 0; i < X.rows; ++i) {
    double mx = X.at(i, 0);
    for (size_t j = 1; j < X.cols; ++j) mx = std::max(mx, X.at(i, j));
    double sum = 0.0;
    for (size_t j = 0; j < X.cols; ++j) {
      const double e = std::exp(X.at(i, j) - mx);
      out.at(i, j) = e;
      sum += e;
    }
    for (size_t j = 0; j < X.cols; ++j) out.at(i, j) /= sum;
  }
  return push(std::move(out), [x](Graph& g, int id) {
    const Mat& go = g.grad(id);
    const Mat& Y = g.value(id);
    Mat& gx = g.grad_mut(x);
    for (size_t i = 0; i < go.rows; ++i) {
      double dot = 0.0;
      for (size_t j = 0; j < go.cols; ++j) dot += go.at(i, j) * Y.at(i, j);
      for (size_t j = 0; j < go.cols; ++j) {
        gx.at(i, j) += Y.at(i, j) * (go.at(i, j) - dot);
      }
    }
  });
}

int Graph::slice_cols(int x, size_t from, size_t to) {
  const Mat& X = value(x);
  check(from < to && to <= X.cols, "slice_cols: bad range");
  Mat out(X.rows, to - from);
  for (size_t i = 0; i < X.rows; ++i) {
    for (size_t j = from; j < to; ++j) out.at(i, j - from) = X.at(i, j);
  }
  return push(std::move(out), [x, from, to](Graph& g, int id) {
    const Mat& go = g.grad(id);
    Mat& gx = g.grad_mut(x);
    for (size_t i = 0; i < go.rows; ++i) {
      for (size_t j = from; j < to; ++j) gx.at(i, j) += go.at(i, j - from);
    }
  });
}

int Graph::concat_cols(const std::vector<int>& xs) {
  check(!xs.empty(), "concat_cols: empty input");
  const size_t rows = value(xs[0]).rows;
  size_t cols = 0;
  for (int x : xs) {
    check(value(x).rows == rows, "concat_cols: row mismatch");
    cols += value(x).cols;
  }
  Mat out(rows, cols);
  size_t off = 0;
  for (int x : xs) {
    const Mat& X = value(x);
    for (size_t i = 0; i < rows; ++i) {
      for (size_t j = 0; j < X.cols; ++j) out.at(i, off + j) = X.at(i, j);
    }
    off += X.cols;
  }
  return push(std::move(out), [xs](Graph& g, int id) {
    const Mat& go = g.grad(id);
    size_t off = 0;
    for (int x : xs) {
      Mat& gx = g.grad_mut(x);
      for (size_t i = 0; i < gx.rows; ++i) {
        for (size_t j = 0; j < gx.cols; ++j) gx.at(i, j) += go.at(i, off + j);
      }
      off += gx.cols;
    }
  });
}

int Graph::concat_rows(const std::vector<int>& xs) {
  check(!xs.empty(), "concat_rows: empty input");
  const size_t cols = value(xs[0]).cols;
  size_t rows = 0;
  for (int x : xs) {
    check(value(x).cols == cols, "concat_rows: col mismatch");
    rows += value(x).rows;
  }
  Mat out(rows, cols);
  size_t off = 0;
  for (int x : xs) {
    const Mat& X = value(x);
    for (size_t i = 0; i < X.rows; ++i) {
      for (size_t j = 0; j < cols; ++j) out.at(off + i, j) = X.at(i, j);
    }
    off += X.rows;
  }
  return push(std::move(out), [xs](Graph& g, int id) {
    const Mat& go = g.grad(id);
    size_t off = 0;
    for (int x : xs) {
      Mat& gx = g.grad_mut(x);
      for (size_t i = 0; i < gx.rows; ++i) {
        for (size_t j = 0; j < gx.cols; ++j) gx.at(i, j) += go.at(off + i, j);
      }
      off += gx.rows;
    }
  });
}

int Graph::gather_rows(int x, std::vector<uint32_t> idx) {
  const Mat& X = value(x);
  for (uint32_t i : idx) check(i < X.rows, "gather_rows: index out of range");
  Mat out(idx.size(), X.cols);
  for (size_t k = 0; k < idx.size(); ++k) {
    for (size_t j = 0; j < X.cols; ++j) out.at(k, j) = X.at(idx[k], j);
  }
  return push(std::move(out), [x, idx = std::move(idx)](Graph& g, int id) {
    const Mat& go = g.grad(id);
    Mat& gx = g.grad_mut(x);
    for (size_t k = 0; k < idx.size(); ++k) {
      for (size_t j = 0; j < go.cols; ++j) gx.at(idx[k], j) += go.at(k, j);
    }
  });
}

int Graph::scatter_rows(int base, std::vector<uint32_t> idx, int rows) {
  const Mat& B = value(base);
  const Mat& R = value(rows);
  check(R.rows == idx.size() && R.cols == B.cols, "scatter_rows: shape mismatch");
  for (uint32_t i : idx) check(i < B.rows, "scatter_rows: index out of range");
  Mat out = B;
  for (size_t k = 0; k < idx.size(); ++k) {
    for (size_t j = 0; j < B.cols; ++j) out.at(idx[k], j) = R.at(k, j);
  }
  return push(std::move(out),
              [base, rows, idx = std::move(idx)](Graph& g, int id) {
                const Mat& go = g.grad(id);
                Mat& gb = g.grad_mut(base);
                Mat& gr = g.grad_mut(rows);
                std::vector<char> overwritten(go.rows, 0);
                for (uint32_t i : idx) overwritten[i] = 1;
                for (size_t i = 0; i < go.rows; ++i) {
                  if (overwritten[i]) continue;
                  for (size_t j = 0; j < go.cols; ++j) gb.at(i, j) += go.at(i, j);
                }
                for (size_t k = 0; k < idx.size(); ++k) {
                  for (size_t j = 0; j < go.cols; ++j) {
                    gr.at(k, j) += go.at(idx[k], j);
                  }
                }
              });
}

int Graph::mean_pool_rows(int x) {
  const Mat& X = value(x);
  check(X.rows > 0, "mean_pool_rows: empty input");
  Mat out(1, X.cols);
  for (size_t j = 0; j < X.cols; ++j) {
    double s = 0.0;
    for (size_t i = 0; i < X.rows; ++i) s += X.at(i, j);
    out.at(0, j) = s / double(X.rows);
  }
  return push(std::move(out), [x](Graph& g, int id) {
    const Mat& go = g.grad(id);
    Mat& gx = g.grad_mut(x);
    const double inv = 1.0 / double(gx.rows);
    for (size_t i = 0; i < gx.rows; ++i) {
      for (size_t j = 0; j < gx.cols; ++j) gx.at(i, j) += go.at(0, j) * inv;
    }
  });
}

int Graph::l2_normalize_rows(int x) {
  const Mat& X = value(x);
  Mat out(X.rows, X.cols);
  std::vector<double> norms(X.rows);
  for (size_t i = 0; i < X.rows; ++i) {
    double s = 0.0;
    for (size_t j = 0; j < X.cols; ++j) s += X.at(i, j) * X.at(i, j);
    const double n = std::sqrt(s);
    if (!(n > 0.0)) {
      throw ValidationError("l2_normalize_rows: zero-norm embedding at row " +
                            std::to_string(i));
    }
    norms[i] = n;
    for (size_t j = 0; j < X.cols; ++j) out.at(i, j) = X.at(i, j) / n;
  }
  return push(std::move(out),
              [x, norms = std::move(norms)](Graph& g, int id) {
                const Mat& go = g.grad(id);
                const Mat& Y = g.value(id);
                Mat& gx = g.grad_mut(x);
                for (size_t i = 0; i < go.rows; ++i) {
                  double dot = 0.0;
                  for (size_t j = 0; j < go.cols; ++j) {
                    dot += go.at(i, j) * Y.at(i, j);
                  }
                  for (size_t j = 0; j < go.cols; ++j) {
                    gx.at(i, j) +=
                        (go.at(i, j) - Y.at(i, j) * dot) / norms[i];
                  }
                }
              });
}

int Graph::detach(int x) {
  Mat out = value(x);
  return push(std::move(out), {});  // no backward: gradient barrier
}

namespace {

// Maps output token t' and offset o = dz*4 + dy*2 + dx to the source token
// index in the full grid, matching the TokenGrid pixel shuffle convention.
size_t shuffle_source(std::array<uint32_t, 3> half, size_t t, uint32_t o) {
  const uint32_t X = uint32_t(t % half[0]);
  const uint32_t Y = uint32_t((t / half[0]) % half[1]);
  const uint32_t Z = uint32_t(t / (size_t(half[0]) * half[1]));
  const uint32_t dx = o & 1, dy = (o >> 1) & 1, dz = o >> 2;
  const uint32_t sx = 2 * X + dx, sy = 2 * Y + dy, sz = 2 * Z + dz;
  return size_t(sx) +
         2 * size_t(half[0]) * (size_t(sy) + 2 * size_t(half[1]) * sz);
}

}  // namespace

int Graph::pixel_shuffle_rows(int x, std::array<uint32_t, 3> grid_dims) {
  const Mat& X = value(x);
  const size_t n = size_t(grid_dims[0]) * grid_dims[1] * grid_dims[2];
  check(X.rows == n, "pixel_shuffle_rows: row count mismatch");
  for (int a = 0; a < 3; ++a) {
    check(grid_dims[a] % 2 == 0, "pixel_shuffle_rows: odd grid dim");
  }
  const std::array<uint32_t, 3> half{grid_dims[0] / 2, grid_dims[1] / 2,
                                     grid_dims[2] / 2};
  const size_t c = X.cols;
  Mat out(n / 8, 8 * c);
  for (size_t t = 0; t < out.rows; ++t) {
    for (uint32_t o = 0; o < 8; ++o) {
      const size_t src = shuffle_source(half, t, o);
      for (size_t j = 0; j < c; ++j) out.at(t, o * c + j) = X.at(src, j);
    }
  }
  return push(std::move(out), [x, half, c](Graph& g, int id) {
    const Mat& go = g.grad(id);
    Mat& gx = g.grad_mut(x);
    for (size_t t = 0; t < go.rows; ++t) {
      for (uint32_t o = 0; o < 8; ++o) {
        const size_t src = shuffle_source(half, t, o);
        for (size_t j = 0; j < c; ++j) gx.at(src, j) += go.at(t, o * c + j);
      }
    }
  });
}

int Graph::avg_pool_rows(int x, std::array<uint32_t, 3> grid_dims) {
  const Mat& X = value(x);
  const size_t n = size_t(grid_dims[0]) * grid_dims[1] * grid_dims[2];
  check(X.rows == n, "avg_pool_rows: row count mismatch");
  for (int a = 0; a < 3; ++a) {
    check(grid_dims[a] % 2 == 0, "avg_pool_rows: odd grid dim");
  }
  const std::array<uint32_t, 3> half{grid_dims[0] / 2, grid_dims[1] / 2,
                                     grid_dims[2] / 2};
  Mat out(n / 8, X.cols);
  for (size_t t = 0; t < out.rows; ++t) {
    for (uint32_t o = 0; o < 8; ++o) {
      const size_t src = shuffle_source(half, t, o);
      for (size_t j = 0; j < X.cols; ++j) out.at(t, j) += X.at(src, j);
    }
    for (size_t j = 0; j < X.cols; ++j) out.at(t, j) /= 8.0;
  }
  return push(std::move(out), [x, half](Graph& g, int id) {
    const Mat& go = g.grad(id);
    Mat& gx = g.grad_mut(x);
    for (size_t t = 0; t < go.rows; ++t) {
      for (uint32_t o = 0; o < 8; ++o) {
        const size_t src = shuffle_source(half, t, o);
        for (size_t j = 0; j < go.cols; ++j) {
          gx.at(src, j) += go.at(t, j) / 8.0;
        }
      }
    }
  });
}

int Graph::mse(int a, int b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  check(A.rows == B.rows && A.cols == B.cols, "mse: shape mismatch");
  check(A.numel() > 0, "mse: empty input");
  double sum = 0.0;
  for (size_t i = 0; i < A.d.size(); ++i) {
    const double d = A.d[i] - B.d[i];
    sum += d * d;
  }
  Mat out(1, 1);
  out.at(0, 0) = sum / double(A.numel());
  return push(std::move(out), [a, b](Graph& g, int id) {
    const double go = g.grad(id).at(0, 0);
    const Mat& A = g.value(a);
    const Mat& B = g.value(b);
    Mat& ga = g.grad_mut(a);
    Mat& gb = g.grad_mut(b);
    const double k = 2.0 * go / double(A.numel());
    for (size_t i = 0; i < A.d.size(); ++i) {
      const double d = k * (A.d[i] - B.d[i]);
      ga.d[i] += d;
      gb.d[i] -= d;
    }
  });
}

int Graph::cross_entropy_diag(int s) {
  const Mat& S = value(s);
  check(S.rows == S.cols && S.rows >= 2, "cross_entropy_diag: need square [B,B], B >= 2");
  const size_t B = S.rows;

  auto lse = [](const std::vector<double>& v) {
    double mx = v[0];
    for (double x : v) mx = std::max(mx, x);
    double sum = 0.0;
    for (double x : v) sum += std::exp(x - mx);
    return mx + std::log(sum);
  };

  double loss = 0.0;
  for (size_t i = 0; i < B; ++i) {
    std::vector<double> row(B), col(B);
    for (size_t j = 0; j < B; ++j) {
      row[j] = S.at(i, j);
      col[j] = S.at(j, i);
    }
    loss += lse(row) - S.at(i, i);
    loss += lse(col) - S.at(i, i);
  }
  Mat out(1, 1);
  out.at(0, 0) = loss / double(2 * B);
  return push(std::move(out), [s, B](Graph& g, int id) {
    const double go = g.grad(id).at(0, 0);
    const Mat& S = g.value(s);
    Mat& gs = g.grad_mut(s);
    const double k = go / double(2 * B);
    // row softmax term
    for (size_t i = 0; i < B; ++i) {
      double mx = S.at(i, 0);
      for (size_t j = 1; j < B; ++j) mx = std::max(mx, S.at(i, j));
      double sum = 0.0;
      for (size_t j = 0; j < B; ++j) sum += std::exp(S.at(i, j) - mx);
      for (size_t j = 0; j < B; ++j) {
        const double p = std::exp(S.at(i, j) - mx) / sum;
        gs.at(i, j) += k * (p - (i == j ? 1.0 : 0.0));
      }
    }
    // column softmax term
    for (size_t j = 0; j < B; ++j) {
      double mx = S.at(0, j);
      for (size_t i = 1; i < B; ++i) mx = std::max(mx, S.at(i, j));
      double sum = 0.0;
      for (size_t i = 0; i < B; ++i) sum += std::exp(S.at(i, j) - mx);
      for (size_t i = 0; i < B; ++i) {
        const double p = std::exp(S.at(i, j) - mx) / sum;
        gs.at(i, j) += k * (p - (i == j ? 1.0 : 0.0));
      }
    }
  });
}

int Graph::mean_scalars(const std::vector<int>& xs) {
  check(!xs.empty(), "mean_scalars: empty input");
  double sum = 0.0;
  for (int x : xs) {
    check(value(x).numel() == 1, "mean_scalars: inputs must be scalars");
    sum += value(x).at(0, 0);
  }
  Mat out(1, 1);
  out.at(0, 0) = sum / double(xs.size());
  return push(std::move(out), [xs](Graph& g, int id) {
    const double go = g.grad(id).at(0, 0) / double(xs.size());
    for (int x : xs) g.grad_mut(x).at(0, 0) += go;
  });
}

void Graph::backward(int loss) {
  check(loss >= 0 && size_t(loss) < nodes_.size(), "backward: bad node id");
  check(nodes_[size_t(loss)].value.numel() == 1, "backward: loss must be scalar");
  for (auto& n : nodes_) {
    n.grad = Mat(n.value.rows, n.value.cols);
  }
  nodes_[size_t(loss)].grad.at(0, 0) = 1.0;
  for (int id = loss; id >= 0; --id) {
    auto& n = nodes_[size_t(id)];
    if (n.backward_fn) n.backward_fn(*this, id);
  }
}

std::map<std::string, Mat> Graph::named_grads() const {
  std::map<std::string, Mat> out;
  for (const auto& n : nodes_) {
    if (n.param_name.empty()) continue;
    auto it = out.find(n.param_name);
    if (it == out.end()) {
      out[n.param_name] = n.grad;
    } else {
      for (size_t i = 0; i < n.grad.d.size(); ++i) {
        it->second.d[i] += n.grad.d[i];
      }
    }
  }
  return out;
}

}  // namespace argus::nn
