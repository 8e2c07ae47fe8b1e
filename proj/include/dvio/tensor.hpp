#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dvio::nn {

using Shape = std::vector<int>;

int shape_count(const Shape& s);
std::string shape_str(const Shape& s);

/// Dense row-major tensor of 64-bit reals. All layer math in this project is
/// done in doubles; speed at desk scale is not the constraint, tight oracle
/// comparisons are.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> values);
  explicit Tensor(Shape s);  // zero-filled

  static Tensor zeros(const Shape& s) { return Tensor(s); }
  static Tensor full(const Shape& s, double v);
  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor vector(std::vector<double> values);

  int size() const { return static_cast<int>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int extent(int axis) const { return shape[static_cast<size_t>(axis)]; }

  double& operator[](int i) { return data[static_cast<size_t>(i)]; }
  double operator[](int i) const { return data[static_cast<size_t>(i)]; }

  // Row-major index helpers for the ranks the model uses.
  double& at3(int a, int b, int c) {
    return data[static_cast<size_t>((a * shape[1] + b) * shape[2] + c)];
  }
  double at3(int a, int b, int c) const {
    return data[static_cast<size_t>((a * shape[1] + b) * shape[2] + c)];
  }
  double& at4(int a, int b, int c, int d) {
    return data[static_cast<size_t>(((a * shape[1] + b) * shape[2] + c) * shape[3] + d)];
  }
  double at4(int a, int b, int c, int d) const {
    return data[static_cast<size_t>(((a * shape[1] + b) * shape[2] + c) * shape[3] + d)];
  }
  double& at2(int a, int b) { return data[static_cast<size_t>(a * shape[1] + b)]; }
  double at2(int a, int b) const { return data[static_cast<size_t>(a * shape[1] + b)]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;

  void fill(double v);
};

}  // namespace dvio::nn
