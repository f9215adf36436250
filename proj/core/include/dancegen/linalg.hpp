#pragma once

#include <cstddef>
#include <vector>

namespace dancegen {

// Small dense row-major matrix, just enough for kernel factorizations and
// distribution distances.  Not a general linear algebra library.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }

  static Mat identity(int n);
};

Mat mat_mul(const Mat& x, const Mat& y);
Mat mat_transpose(const Mat& x);
double mat_trace(const Mat& x);

// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
// Returns false (leaving `lower` untouched) when a pivot is not positive.
bool cholesky(const Mat& sym, Mat& lower);

// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
// Columns of `vectors` are eigenvectors; `values[i]` matches column i.
struct EighResult {
  std::vector<double> values;
  Mat vectors;
};
EighResult jacobi_eigh(const Mat& sym, int max_sweeps = 100);

// Symmetric positive semidefinite square root via eigendecomposition.
// Eigenvalues below `clamp_below` are treated as zero.
Mat psd_sqrt(const Mat& sym, double clamp_below = 1e-10);

}  // namespace dancegen
