#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace sphynx {

// Dense row-major array of doubles. Rank 1 or 2 is all the search code needs.
struct Array {
  std::vector<int> shape;
  std::vector<double> data;

  Array() = default;
  explicit Array(std::vector<int> s) : shape(std::move(s)), data(count(shape), 0.0) {}
  Array(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != count(shape)) throw std::invalid_argument("array: shape/data mismatch");
  }

  static size_t count(const std::vector<int>& s) {
    size_t n = 1;
    for (int d : s) {
      if (d <= 0) throw std::invalid_argument("array: non-positive dim");
      n *= static_cast<size_t>(d);
    }
    return n;
  }

  static Array zeros(std::vector<int> s) { return Array(std::move(s)); }
  static Array full(std::vector<int> s, double v) {
    Array a(std::move(s));
    std::fill(a.data.begin(), a.data.end(), v);
    return a;
  }
  static Array scalar(double v) { return Array({1}, {v}); }

  size_t size() const { return data.size(); }
  int rows() const { return shape.empty() ? 1 : shape[0]; }
  int cols() const {
    if (shape.size() == 1) return 1;
    if (shape.size() == 2) return shape[1];
    throw std::logic_error("array: cols() on rank > 2");
  }

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }

  bool same_shape(const Array& o) const { return shape == o.shape; }

  bool operator==(const Array& o) const { return shape == o.shape && data == o.data; }
};

}  // namespace sphynx
