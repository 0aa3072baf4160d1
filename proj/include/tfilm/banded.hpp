#pragma once

// Symmetric banded matrices and their LDL^T factorisation. The Newton system
// of one minimising-movement step is pentadiagonal, so a solve is O(N).

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "tfilm/errors.hpp"

namespace tfilm {

/// Symmetric matrix stored by its lower bands: band(k, i) = A(i + k, i) for
/// k = 0..bandwidth.
template <typename Scalar>
class SymmetricBandMatrix {
 public:
  SymmetricBandMatrix(Eigen::Index size, int bandwidth)
      : bands_(Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(
            bandwidth + 1, size)) {}

  Eigen::Index size() const { return bands_.cols(); }
  int bandwidth() const { return static_cast<int>(bands_.rows()) - 1; }

  /// Entry (row, col) with |row - col| <= bandwidth.
  Scalar& at(Eigen::Index row, Eigen::Index col) {
    if (row < col) std::swap(row, col);
    return bands_(row - col, col);
  }
  Scalar at(Eigen::Index row, Eigen::Index col) const {
    if (row < col) std::swap(row, col);
    if (row - col > bandwidth()) return Scalar(0);
    return bands_(row - col, col);
  }

  Scalar& diagonal(Eigen::Index i) { return bands_(0, i); }
  Scalar diagonal(Eigen::Index i) const { return bands_(0, i); }

  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> operator*(
      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x) const {
    const Eigen::Index n = size();
    const int kd = bandwidth();
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> y =
        Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(n);
    for (Eigen::Index c = 0; c < n; ++c) {
      y[c] += bands_(0, c) * x[c];
      for (int k = 1; k <= kd && c + k < n; ++k) {
        y[c + k] += bands_(k, c) * x[c];
        y[c] += bands_(k, c) * x[c + k];
      }
    }
    return y;
  }

  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> to_dense() const {
    const Eigen::Index n = size();
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> a =
        Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(n, n);
    for (Eigen::Index c = 0; c < n; ++c) {
      for (int k = 0; k <= bandwidth() && c + k < n; ++k) {
        a(c + k, c) = bands_(k, c);
        a(c, c + k) = bands_(k, c);
      }
    }
    return a;
  }

  const auto& bands() const { return bands_; }

 private:
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> bands_;
};

/// LDL^T of a symmetric positive-definite band matrix, no pivoting. The unit
/// lower factor keeps the bandwidth of the input.
template <typename Scalar>
class BandLDLT {
 public:
  explicit BandLDLT(const SymmetricBandMatrix<Scalar>& a) : factor_(a) {
    const Eigen::Index n = a.size();
    const int kd = a.bandwidth();
    for (Eigen::Index j = 0; j < n; ++j) {
      Scalar dj = factor_.at(j, j);
      const Eigen::Index k0 = std::max<Eigen::Index>(0, j - kd);
      for (Eigen::Index k = k0; k < j; ++k) {
        const Scalar l = factor_.at(j, k);
        dj -= l * l * factor_.at(k, k);
      }
      if (!(dj > Scalar(0))) {
        throw PreconditionError("band matrix is not positive definite");
      }
      factor_.at(j, j) = dj;
      const Eigen::Index iend = std::min<Eigen::Index>(n, j + kd + 1);
      for (Eigen::Index i = j + 1; i < iend; ++i) {
        Scalar s = factor_.at(i, j);
        const Eigen::Index kk0 = std::max<Eigen::Index>(0, i - kd);
        for (Eigen::Index k = kk0; k < j; ++k) {
          s -= factor_.at(i, k) * factor_.at(j, k) * factor_.at(k, k);
        }
        factor_.at(i, j) = s / dj;
      }
    }
  }

  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> solve(
      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& b) const {
    const Eigen::Index n = factor_.size();
    const int kd = factor_.bandwidth();
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x = b;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index k = std::max<Eigen::Index>(0, i - kd); k < i; ++k) {
        x[i] -= factor_.at(i, k) * x[k];
      }
    }
    for (Eigen::Index i = 0; i < n; ++i) x[i] /= factor_.at(i, i);
    for (Eigen::Index i = n - 1; i >= 0; --i) {
      const Eigen::Index kend = std::min<Eigen::Index>(n, i + kd + 1);
      for (Eigen::Index k = i + 1; k < kend; ++k) {
        x[i] -= factor_.at(k, i) * x[k];
      }
    }
    return x;
  }

 private:
  SymmetricBandMatrix<Scalar> factor_;
};

}  // namespace tfilm
