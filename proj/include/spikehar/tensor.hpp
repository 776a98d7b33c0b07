#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace spikehar {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major tensor of doubles. The shape is fixed at construction;
// values are mutable through data(). No views, no broadcasting.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(const Shape& shape);
  static Tensor full(const Shape& shape, double value);
  static Tensor scalar(double value);
  static Tensor uniform(const Shape& shape, double lo, double hi,
                        std::mt19937_64& rng);

  const Shape& shape() const { return shape_; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  int64_t dim(size_t axis) const { return shape_.at(axis); }
  size_t rank() const { return shape_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool is_scalar() const { return size() == 1; }
  double scalar_value() const;

  void fill(double value);
  void add_(const Tensor& other);
  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Throws DimensionError unless both shapes are equal.
void check_same_shape(const Tensor& a, const Tensor& b, const char* op);

}  // namespace spikehar
