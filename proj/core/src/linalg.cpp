#include "dancegen/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dancegen/errors.hpp"

namespace dancegen {

Mat Mat::identity(int n) {
  Mat m(n, n);
  for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
  return m;
}

Mat mat_mul(const Mat& x, const Mat& y) {
  if (x.cols != y.rows) throw ShapeError("mat_mul: inner dimensions differ");
  Mat out(x.rows, y.cols);
  for (int i = 0; i < x.rows; ++i) {
    for (int k = 0; k < x.cols; ++k) {
      double v = x.at(i, k);
      if (v == 0.0) continue;
      for (int j = 0; j < y.cols; ++j) {
        out.at(i, j) += v * y.at(k, j);
      }
    }
  }
  return out;
}

Mat mat_transpose(const Mat& x) {
  Mat out(x.cols, x.rows);
  for (int i = 0; i < x.rows; ++i)
    for (int j = 0; j < x.cols; ++j) out.at(j, i) = x.at(i, j);
  return out;
}

double mat_trace(const Mat& x) {
  double t = 0.0;
  int n = std::min(x.rows, x.cols);
  for (int i = 0; i < n; ++i) t += x.at(i, i);
  return t;
}

bool cholesky(const Mat& sym, Mat& lower) {
  if (sym.rows != sym.cols) throw ShapeError("cholesky: matrix not square");
  const int n = sym.rows;
  Mat l(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = sym.at(i, j);
      for (int k = 0; k < j; ++k) s -= l.at(i, k) * l.at(j, k);
      if (i == j) {
        if (s <= 0.0 || !std::isfinite(s)) return false;
        l.at(i, i) = std::sqrt(s);
      } else {
        l.at(i, j) = s / l.at(j, j);
      }
    }
  }
  lower = std::move(l);
  return true;
}

EighResult jacobi_eigh(const Mat& sym, int max_sweeps) {
  if (sym.rows != sym.cols) throw ShapeError("jacobi_eigh: matrix not square");
  const int n = sym.rows;
  Mat a = sym;
  // Work on the symmetrized copy so tiny asymmetries cannot stall rotation.
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < i; ++j) {
      double m = 0.5 * (a.at(i, j) + a.at(j, i));
      a.at(i, j) = m;
      a.at(j, i) = m;
    }
  Mat v = Mat::identity(n);

  double frob = 0.0;
  for (double x : a.a) frob += x * x;
  const double tol = 1e-14 * std::max(frob, 1.0);

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += a.at(i, j) * a.at(i, j);
    if (off <= tol) break;

    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        double apq = a.at(p, q);
        if (std::abs(apq) < 1e-300) continue;
        double app = a.at(p, p), aqq = a.at(q, q);
        double tau = (aqq - app) / (2.0 * apq);
        double t = (tau >= 0.0 ? 1.0 : -1.0) /
                   (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        double c = 1.0 / std::sqrt(1.0 + t * t);
        double s = t * c;
        for (int k = 0; k < n; ++k) {
          double akp = a.at(k, p), akq = a.at(k, q);
          a.at(k, p) = c * akp - s * akq;
          a.at(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          double apk = a.at(p, k), aqk = a.at(q, k);
          a.at(p, k) = c * apk - s * aqk;
          a.at(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          double vkp = v.at(k, p), vkq = v.at(k, q);
          v.at(k, p) = c * vkp - s * vkq;
          v.at(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  EighResult res;
  res.values.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) res.values[static_cast<std::size_t>(i)] = a.at(i, i);
  res.vectors = std::move(v);
  return res;
}

Mat psd_sqrt(const Mat& sym, double clamp_below) {
  EighResult e = jacobi_eigh(sym);
  const int n = sym.rows;
  Mat out(n, n);
  for (int k = 0; k < n; ++k) {
    double lam = e.values[static_cast<std::size_t>(k)];
    if (lam < clamp_below) lam = 0.0;
    double s = std::sqrt(lam);
    if (s == 0.0) continue;
    for (int i = 0; i < n; ++i) {
      double vis = e.vectors.at(i, k) * s;
      if (vis == 0.0) continue;
      for (int j = 0; j < n; ++j) {
        out.at(i, j) += vis * e.vectors.at(j, k);
      }
    }
  }
  return out;
}

}  // namespace dancegen
