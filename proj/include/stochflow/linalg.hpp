#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace sflow {

/// Largest state or Brownian dimension handled by the library. Vectors and
/// matrices use fixed-capacity storage so the inner simulation loops never
/// touch the heap.
inline constexpr int kMaxDim = 4;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

/// Raised when a field or expression is evaluated outside its domain, or
/// produces a non-finite value where a finite one is required.
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void check_dimension(int d, const char* what) {
  if (d < 1 || d > kMaxDim) {
    throw std::invalid_argument(std::string(what) + " must be in [1, " +
                                std::to_string(kMaxDim) + "], got " + std::to_string(d));
  }
}

inline Vec zero_vec(int d) { return Vec::Zero(d); }
inline Mat zero_mat(int rows, int cols) { return Mat::Zero(rows, cols); }
inline Mat identity(int d) { return Mat::Identity(d, d); }

inline Vec scalar_vec(double v) {
  Vec out(1);
  out(0) = v;
  return out;
}

inline bool all_finite(const Vec& v) { return v.allFinite(); }
inline bool all_finite(const Mat& m) { return m.allFinite(); }

/// Largest singular value.
inline double op_norm(const Mat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues()(0);
}

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
/// Intended for the small matrices of the linear catalog systems.
inline Mat expm(const Mat& a) {
  const int n = static_cast<int>(a.rows());
  const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  const Mat scaled = a / std::ldexp(1.0, squarings);
  Mat term = identity(n);
  Mat sum = identity(n);
  for (int k = 1; k <= 20; ++k) {
    term = (term * scaled) / static_cast<double>(k);
    sum += term;
  }
  for (int i = 0; i < squarings; ++i) sum = sum * sum;
  return sum;
}

}  // namespace sflow
