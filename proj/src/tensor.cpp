#include "ldgan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ldgan {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + shape_str(shape_) + " does not match data length " +
                         std::to_string(data_.size()));
  }
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  return Tensor(std::move(shape), data_);
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
Tensor<T> Tensor<T>::slice_batch(std::size_t first, std::size_t count) const {
  if (shape_.empty() || first + count > shape_[0]) {
    throw DimensionError("batch slice out of range for " + shape_str(shape_));
  }
  const std::size_t stride = shape_[0] ? data_.size() / shape_[0] : 0;
  Shape s = shape_;
  s[0] = count;
  std::vector<T> out(data_.begin() + static_cast<std::ptrdiff_t>(first * stride),
                     data_.begin() + static_cast<std::ptrdiff_t>((first + count) * stride));
  return Tensor(std::move(s), std::move(out));
}

template <typename T>
T dot(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "dot");
  T acc{0};
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

template <typename T>
Tensor<T> stack(std::span<const Tensor<T>> items) {
  if (items.empty()) throw DimensionError("stack: no tensors");
  Shape s;
  s.push_back(items.size());
  for (auto e : items.front().shape()) s.push_back(e);
  std::vector<T> out;
  out.reserve(shape_numel(s));
  for (const auto& t : items) {
    require_same_shape(t, items.front(), "stack");
    out.insert(out.end(), t.storage().begin(), t.storage().end());
  }
  return Tensor<T>(std::move(s), std::move(out));
}

template class Tensor<float>;
template class Tensor<double>;
template float dot(const Tensor<float>&, const Tensor<float>&);
template double dot(const Tensor<double>&, const Tensor<double>&);
template void require_same_shape(const Tensor<float>&, const Tensor<float>&, const char*);
template void require_same_shape(const Tensor<double>&, const Tensor<double>&, const char*);
template Tensor<float> stack(std::span<const Tensor<float>>);
template Tensor<double> stack(std::span<const Tensor<double>>);

}  // namespace ldgan
