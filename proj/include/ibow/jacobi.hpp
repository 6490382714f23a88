#pragma once

#include <cmath>

#include <Eigen/Core>

namespace ibow {

template <typename Scalar, int N>
struct SymmetricEigen {
  Eigen::Matrix<Scalar, N, 1> values;   // ascending
  Eigen::Matrix<Scalar, N, N> vectors;  // column i pairs with values(i)
  int sweeps = 0;
};

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix. Stops once the
/// off-diagonal Frobenius norm drops below `tolerance` times the matrix norm
/// or after `max_sweeps` full sweeps.
template <typename Scalar, int N>
SymmetricEigen<Scalar, N> jacobi_eigen(Eigen::Matrix<Scalar, N, N> a, Scalar tolerance = Scalar(1e-12),
                                       int max_sweeps = 100) {
  const Eigen::Index n = a.rows();
  SymmetricEigen<Scalar, N> out;
  out.vectors.setIdentity(n, n);
  const Scalar scale = a.norm();

  auto off_norm = [&] {
    Scalar s = 0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) s += 2 * a(p, q) * a(p, q);
    return std::sqrt(s);
  };

  for (; out.sweeps < max_sweeps; ++out.sweeps) {
    if (scale == Scalar(0) || off_norm() <= tolerance * scale) break;
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const Scalar apq = a(p, q);
        if (apq == Scalar(0)) continue;
        const Scalar theta = (a(q, q) - a(p, p)) / (2 * apq);
        const Scalar t = (theta >= 0 ? Scalar(1) : Scalar(-1)) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const Scalar c = 1 / std::sqrt(t * t + 1);
        const Scalar s = t * c;
        // a <- J^T a J with J the (p, q) plane rotation.
        for (Eigen::Index k = 0; k < n; ++k) {
          const Scalar akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const Scalar apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const Scalar vkp = out.vectors(k, p), vkq = out.vectors(k, q);
          out.vectors(k, p) = c * vkp - s * vkq;
          out.vectors(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  // Selection sort keeps the column pairing explicit.
  out.values = a.diagonal();
  for (Eigen::Index i = 0; i < n - 1; ++i) {
    Eigen::Index m = i;
    for (Eigen::Index j = i + 1; j < n; ++j)
      if (out.values(j) < out.values(m)) m = j;
    if (m != i) {
      std::swap(out.values(i), out.values(m));
      out.vectors.col(i).swap(out.vectors.col(m));
    }
  }
  return out;
}

}  // namespace ibow
