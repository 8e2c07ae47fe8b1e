#include "dvio/tensor.hpp"

#include <cmath>
#include <sstream>

#include "dvio/util.hpp"

namespace dvio::nn {

int shape_count(const Shape& s) {
  int n = 1;
  for (int e : s) {
    if (e <= 0) fail(ErrorKind::InvalidArgument, "tensor extents must be positive");
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream out;
  out << "[";
  for (size_t i = 0; i < s.size(); ++i) out << (i ? "," : "") << s[i];
  out << "]";
  return out.str();
}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  if (shape_count(shape) != static_cast<int>(data.size()))
    fail(ErrorKind::DimensionMismatch,
         "tensor value count does not match shape " + shape_str(shape));
}

Tensor::Tensor(Shape s) : shape(std::move(s)) {
  data.assign(static_cast<size_t>(shape_count(shape)), 0.0);
}

Tensor Tensor::full(const Shape& s, double v) {
  Tensor t(s);
  t.fill(v);
  return t;
}

Tensor Tensor::vector(std::vector<double> values) {
  Shape s{static_cast<int>(values.size())};
  return Tensor(std::move(s), std::move(values));
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::fill(double v) {
  for (auto& x : data) x = v;
}

}  // namespace dvio::nn
