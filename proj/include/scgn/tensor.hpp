#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace scgn {

/// Dense row-major matrix of doubles. Vectors are 1xC or Rx1 tensors.
class Tensor2D {
 public:
  Tensor2D() = default;
  Tensor2D(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor2D from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor2D row_vector(std::span<const double> values);
  static Tensor2D identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Tensor2D& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const;

  Tensor2D transposed() const;
  Tensor2D rows_subset(std::span<const std::size_t> indices) const;
  void fill(double value);
  /// this += scale * other
  void axpy(double scale, const Tensor2D& other);

  friend bool operator==(const Tensor2D&, const Tensor2D&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Tensor2D matmul(const Tensor2D& a, const Tensor2D& b);
Tensor2D vstack(const Tensor2D& top, const Tensor2D& bottom);
double max_abs_diff(const Tensor2D& a, const Tensor2D& b);

}  // namespace scgn
