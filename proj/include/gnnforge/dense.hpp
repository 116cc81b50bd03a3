#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace gnnforge {

/// Row-major FP32 matrix.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, float fill = 0.0f)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<float> data);
  DenseMatrix(std::initializer_list<std::initializer_list<float>> rows);

  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  float& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<float> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const float> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }
  float* data() noexcept { return data_.data(); }
  const float* data() const noexcept { return data_.data(); }

  void fill(float v);

  bool operator==(const DenseMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

DenseMatrix transpose(const DenseMatrix& m);

/// Largest |a-b| over all entries; shapes must agree.
double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b);

/// max |a-b| / max(|b|, floor) elementwise, a scale-aware relative error.
double max_rel_diff(const DenseMatrix& a, const DenseMatrix& b, double floor = 1e-6);

}  // namespace gnnforge
