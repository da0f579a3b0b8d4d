#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sdq/errors.hpp"

namespace sdq {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major double tensor. All math in this project runs on doubles;
// loops are plain and sequential so results are bit-reproducible.
struct Array {
  Shape shape;
  std::vector<double> data;

  Array() = default;
  explicit Array(Shape s) : shape(std::move(s)), data(numel(shape), 0.0) {}
  Array(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    check_contract(data.size() == numel(shape),
                   "Array: data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
  }

  static Array scalar(double v) { return Array({1}, {v}); }
  static Array full(Shape s, double v) {
    Array a(std::move(s));
    for (double& x : a.data) x = v;
    return a;
  }
  static Array zeros_like(const Array& other) { return Array(other.shape); }

  std::size_t size() const { return data.size(); }
  bool is_scalar() const { return data.size() == 1; }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  double item() const {
    check_contract(is_scalar(), "Array::item on non-scalar of shape " + shape_str(shape));
    return data[0];
  }
};

inline bool same_shape(const Array& a, const Array& b) { return a.shape == b.shape; }

}  // namespace sdq
