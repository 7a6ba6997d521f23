#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "ccnn/errors.hpp"

namespace ccnn {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles. A batch of instances is stored one per row.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix row_vector(std::span<const double> v);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  void fill(double v);
  bool same_shape(const Matrix& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }
  bool all_finite() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);

// a (n x k) * b (k x m)
Matrix matmul(const Matrix& a, const Matrix& b);
// a (n x k) * b^T, with b given as (m x k)
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// a^T * b, with a given as (k x n) and b as (k x m)
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix hadamard(const Matrix& a, const Matrix& b);
// Adds `bias` (length cols) to every row.
void add_row_broadcast(Matrix& m, std::span<const double> bias);
// Column sums, i.e. the sum over the batch dimension.
Vector column_sums(const Matrix& m);

Vector relu(const Vector& v);
Vector sigmoid(const Vector& v);
Vector softmax(const Vector& v);
double sigmoid(double x);
double logit(double p);

// splitmix64. state += 0x9E3779B97F4A7C15, then the finalizer
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   z ^= z >> 31
// Uniform doubles use the top 53 bits. normal() draws two uniforms per call and
// returns the cosine branch of Box-Muller, so the whole state is one 64-bit word.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64();
  // [0, 1)
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  // [0, n)
  std::size_t below(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; }

 private:
  std::uint64_t state_;
};

// Glorot-uniform fill with bound sqrt(6 / (fan_in + fan_out)).
Matrix glorot_uniform(std::size_t fan_out, std::size_t fan_in, Rng& rng);

// Central differences (f(p + h e_i) - f(p - h e_i)) / 2h for every coordinate.
Vector finite_diff_grad(const std::function<double(const Vector&)>& f, const Vector& p, double h);

}  // namespace ccnn
