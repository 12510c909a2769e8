#include "ttc/tensor.hpp"

#include <cmath>

namespace ttc::ad {

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  out += "]";
  return out;
}

Tensor::Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
  TTC_REQUIRE(!shape.empty() && shape.size() <= 3,
              "tensor rank must be 1..3, got " << shape.size());
  for (const int d : shape) TTC_REQUIRE(d >= 0, "negative extent in shape " << shape_str(shape));
  TTC_REQUIRE(static_cast<int>(values.size()) == shape_size(shape),
              "value count " << values.size() << " does not match shape " << shape_str(shape));
}

Tensor Tensor::zeros(Shape s) {
  const int n = shape_size(s);
  return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), 0.0));
}

Tensor Tensor::full(Shape s, double value) {
  const int n = shape_size(s);
  return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), value));
}

Tensor Tensor::row_vector(std::initializer_list<double> v) {
  return Tensor({static_cast<int>(v.size())}, std::vector<double>(v));
}

double Tensor::item() const {
  TTC_REQUIRE(size() == 1, "item() on non-scalar tensor of shape " << shape_str(shape));
  return values[0];
}

bool Tensor::all_finite() const {
  for (const double v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace ttc::ad
