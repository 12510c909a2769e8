#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "ttc/common.hpp"

namespace ttc::ad {

// Dense row-major shape, rank 1..3. Zero extents are allowed only for
// degenerate results (e.g. an embedding lookup of an empty index list).
using Shape = std::vector<int>;

inline int shape_size(const Shape& s) {
  int n = 1;
  for (const int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s);

// Value-semantic dense tensor of 64-bit reals. A Tensor is either a free
// constant (node_id < 0) or a handle to a node recorded on a Tape.
struct Tensor {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  int node_id = -1;
  std::uint64_t tape_tag = 0;  // identifies the owning tape, 0 for constants

  Tensor() = default;
  Tensor(Shape s, std::vector<double> v);

  static Tensor zeros(Shape s);
  static Tensor full(Shape s, double value);
  static Tensor scalar(double value) { return Tensor({1}, {value}); }
  static Tensor row_vector(std::initializer_list<double> v);

  int size() const { return static_cast<int>(values.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  bool on_tape() const { return node_id >= 0; }

  double item() const;  // value of a single-element tensor
  double at(int i) const { return values[static_cast<std::size_t>(i)]; }
  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * shape[1] + c]; }
  double& at(int i) { return values[static_cast<std::size_t>(i)]; }
  double& at(int r, int c) { return values[static_cast<std::size_t>(r) * shape[1] + c]; }

  bool all_finite() const;
};

}  // namespace ttc::ad
