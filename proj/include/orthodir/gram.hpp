#pragma once

// Factorization of the n_h x n_h Gram matrix W^T W behind every projection.
// Dense problems use a Cholesky factorization; when the constraint declares
// a Jacobian bandwidth the Gram matrix is banded and factored in band storage.

#include "orthodir/core.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <optional>
#include <vector>

namespace orthodir {

class GramSolver {
 public:
  /// Relative eigenvalue floor: lambda_min < kRankTol * lambda_max is singular.
  static constexpr double kRankTol = 1e-10;
  /// Above this size the dense rank test uses the Cholesky pivots instead of
  /// a full eigendecomposition.
  static constexpr Index kEigenCheckLimit = 256;

  explicit GramSolver(const Mat& W, std::optional<Index> bandwidth = std::nullopt)
      : m_(W.cols()) {
    if (m_ == 0) throw SingularConstraintError("empty constraint matrix");
    if (bandwidth && *bandwidth < W.rows())
      factor_banded(W, *bandwidth);
    else
      factor_dense(W);
  }

  Index size() const { return m_; }
  bool banded() const { return banded_; }

  Vec solve(const Vec& rhs) const {
    if (!banded_) return llt_.solve(rhs);
    Vec y = rhs;
    // L y = rhs
    for (Index j = 0; j < m_; ++j) {
      y[j] /= band_(0, j);
      const Index last = std::min(m_ - 1, j + kd_);
      for (Index i = j + 1; i <= last; ++i) y[i] -= band_(i - j, j) * y[j];
    }
    // L^T x = y
    for (Index j = m_ - 1; j >= 0; --j) {
      const Index last = std::min(m_ - 1, j + kd_);
      for (Index i = j + 1; i <= last; ++i) y[j] -= band_(i - j, j) * y[i];
      y[j] /= band_(0, j);
    }
    return y;
  }

  /// (W^T W)^{-1}, column by column.
  Mat inverse() const {
    Mat out(m_, m_);
    for (Index j = 0; j < m_; ++j) out.col(j) = solve(Vec::Unit(m_, j));
    return out;
  }

  /// Half bandwidth of the Gram matrix (0 for dense factorizations).
  Index gram_half_bandwidth() const { return kd_; }

 private:
  void factor_dense(const Mat& W) {
    Mat G = Mat::Zero(m_, m_);
    G.selfadjointView<Eigen::Lower>().rankUpdate(W.transpose());
    G = G.selfadjointView<Eigen::Lower>();
    if (m_ <= kEigenCheckLimit) {
      Eigen::SelfAdjointEigenSolver<Mat> es(G, Eigen::EigenvaluesOnly);
      const Vec& ev = es.eigenvalues();
      if (!(ev[0] > kRankTol * ev[m_ - 1]))
        throw SingularConstraintError("rank-deficient constraint Jacobian");
    }
    llt_.compute(G);
    if (llt_.info() != Eigen::Success)
      throw SingularConstraintError("Gram matrix is not positive definite");
    if (m_ > kEigenCheckLimit) {
      const Vec piv = Mat(llt_.matrixL()).diagonal().cwiseAbs2();
      if (piv.minCoeff() < kRankTol * G.diagonal().maxCoeff())
        throw SingularConstraintError("rank-deficient constraint Jacobian");
    }
  }

  void factor_banded(const Mat& W, Index bandwidth) {
    banded_ = true;
    const Index n = W.rows();
    std::vector<Index> lo(m_), hi(m_);
    for (Index j = 0; j < m_; ++j) {
      Index a = 0;
      while (a < n && W(a, j) == 0.0) ++a;
      if (a == n) throw SingularConstraintError("zero constraint gradient");
      Index b = n - 1;
      while (W(b, j) == 0.0) --b;
      if (b - a + 1 > bandwidth)
        throw ConfigurationError("Jacobian column exceeds declared bandwidth");
      lo[j] = a;
      hi[j] = b;
    }
    kd_ = 0;
    for (Index i = 0; i < m_; ++i)
      for (Index j = i + 1; j < m_; ++j)
        if (lo[j] <= hi[i] && lo[i] <= hi[j]) kd_ = std::max(kd_, j - i);

    // Lower band storage: band_(d, j) holds G(j + d, j).
    band_ = Mat::Zero(kd_ + 1, m_);
    for (Index j = 0; j < m_; ++j) {
      const Index last = std::min(m_ - 1, j + kd_);
      for (Index i = j; i <= last; ++i) {
        const Index a = std::max(lo[i], lo[j]);
        const Index b = std::min(hi[i], hi[j]);
        if (a > b) continue;
        band_(i - j, j) = W.col(i).segment(a, b - a + 1).dot(
            W.col(j).segment(a, b - a + 1));
      }
    }
    const double diag_max = band_.row(0).maxCoeff();

    // Cholesky in band storage.
    for (Index j = 0; j < m_; ++j) {
      double d = band_(0, j);
      for (Index k = std::max<Index>(0, j - kd_); k < j; ++k)
        d -= band_(j - k, k) * band_(j - k, k);
      if (!(d > kRankTol * diag_max))
        throw SingularConstraintError("rank-deficient constraint Jacobian");
      const double ljj = std::sqrt(d);
      band_(0, j) = ljj;
      const Index last = std::min(m_ - 1, j + kd_);
      for (Index i = j + 1; i <= last; ++i) {
        double s = band_(i - j, j);
        for (Index k = std::max<Index>(0, i - kd_); k < j; ++k)
          s -= band_(i - k, k) * band_(j - k, k);
        band_(i - j, j) = s / ljj;
      }
    }
  }

  Index m_ = 0;
  bool banded_ = false;
  Index kd_ = 0;
  Eigen::LLT<Mat> llt_;
  Mat band_;
};

}  // namespace orthodir
