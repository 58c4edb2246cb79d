#pragma once

#include <cstddef>
#include <vector>

#include "argus/errors.hpp"

namespace argus::nn {

/// Dense row-major matrix of doubles. All model math runs at 64-bit.
struct Mat {
  size_t rows = 0, cols = 0;
  std::vector<double> d;

  Mat() = default;
  Mat(size_t r, size_t c) : rows(r), cols(c), d(r * c, 0.0) {}

  static Mat zeros(size_t r, size_t c) { return Mat(r, c); }

  size_t numel() const { return rows * cols; }
  double& at(size_t i, size_t j) { return d[i * cols + j]; }
  double at(size_t i, size_t j) const { return d[i * cols + j]; }
  double* row(size_t i) { return d.data() + i * cols; }
  const double* row(size_t i) const { return d.data() + i * cols; }
};

/// Named parameter storage: 1-D or 2-D shape plus flat data.
struct Tensor {
  std::vector<size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<size_t> s) : shape(std::move(s)) {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    data.assign(n, 0.0);
  }

  size_t numel() const { return data.size(); }

  /// 1-D tensors view as a single row.
  Mat as_mat() const {
    Mat m;
    if (shape.size() == 1) {
      m.rows = 1;
      m.cols = shape[0];
    } else if (shape.size() == 2) {
      m.rows = shape[0];
      m.cols = shape[1];
    } else {
      throw ValidationError("tensor rank must be 1 or 2");
    }
    m.d = data;
    return m;
  }
};

}  // namespace argus::nn
