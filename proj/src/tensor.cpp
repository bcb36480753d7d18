#include "scgn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "scgn/errors.hpp"

namespace scgn {

Tensor2D::Tensor2D(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor2D::Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw DomainError("Tensor2D: data length does not match rows*cols");
  }
}

Tensor2D Tensor2D::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DomainError("Tensor2D::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor2D(r, c, std::move(data));
}

Tensor2D Tensor2D::row_vector(std::span<const double> values) {
  return Tensor2D(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Tensor2D Tensor2D::identity(std::size_t n) {
  Tensor2D t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

bool Tensor2D::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor2D Tensor2D::transposed() const {
  Tensor2D t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Tensor2D Tensor2D::rows_subset(std::span<const std::size_t> indices) const {
  Tensor2D out(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows_) throw DomainError("Tensor2D::rows_subset: index out of range");
    std::copy_n(row(indices[i]).begin(), cols_, out.row(i).begin());
  }
  return out;
}

void Tensor2D::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void Tensor2D::axpy(double scale, const Tensor2D& other) {
  if (!same_shape(other)) throw DomainError("Tensor2D::axpy: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += scale * other.data_[i];
}

Tensor2D matmul(const Tensor2D& a, const Tensor2D& b) {
  if (a.cols() != b.rows()) throw DomainError("matmul: inner dimensions differ");
  Tensor2D out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* dst = out.data().data() + i * n;
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      const double* src = b.data().data() + k * n;
      for (std::size_t j = 0; j < n; ++j) dst[j] += aik * src[j];
    }
  }
  return out;
}

Tensor2D vstack(const Tensor2D& top, const Tensor2D& bottom) {
  if (top.rows() == 0) return bottom;
  if (bottom.rows() == 0) return top;
  if (top.cols() != bottom.cols()) throw DomainError("vstack: column counts differ");
  std::vector<double> data = top.data();
  data.insert(data.end(), bottom.data().begin(), bottom.data().end());
  return Tensor2D(top.rows() + bottom.rows(), top.cols(), std::move(data));
}

double max_abs_diff(const Tensor2D& a, const Tensor2D& b) {
  if (!a.same_shape(b)) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace scgn
