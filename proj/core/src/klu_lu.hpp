#pragma once

// Thin owner of KLU symbolic and numeric factorizations of a square CSC
// matrix with 32-bit indices. Internal to the library.

#include <cmath>
#include <limits>

#include <Eigen/SparseCore>
#include <klu.h>

namespace loadshed::detail {

using CscMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

class KluLu {
 public:
  KluLu() {
    klu_defaults(&common_);
    common_.scale = 0;  // keep U in the units of the matrix so pivot tests are absolute
    common_.halt_if_singular = 0;
  }
  ~KluLu() { release(); }
  KluLu(const KluLu&) = delete;
  KluLu& operator=(const KluLu&) = delete;

  /// Symbolic analysis; the pattern of later matrices passed to factor() must match.
  bool analyze(const CscMatrix& m) {
    release();
    n_ = static_cast<int>(m.rows());
    if (n_ == 0) return true;
    symbolic_ = klu_analyze(n_, const_cast<int*>(m.outerIndexPtr()), const_cast<int*>(m.innerIndexPtr()),
                            &common_);
    return symbolic_ != nullptr;
  }

  /// Numeric factorization. Returns false when KLU reports a singular matrix.
  bool factor(const CscMatrix& m) {
    if (numeric_) klu_free_numeric(&numeric_, &common_);
    ok_ = false;
    if (n_ == 0) return ok_ = true;
    if (!symbolic_) return false;
    numeric_ = klu_factor(const_cast<int*>(m.outerIndexPtr()), const_cast<int*>(m.innerIndexPtr()),
                          const_cast<double*>(m.valuePtr()), symbolic_, &common_);
    ok_ = numeric_ != nullptr && common_.status == KLU_OK;
    return ok_;
  }

  bool compute(const CscMatrix& m) { return analyze(m) && factor(m); }

  bool ok() const noexcept { return ok_; }
  bool has_factor() const noexcept { return numeric_ != nullptr || n_ == 0; }

  double min_pivot() const {
    if (n_ == 0) return std::numeric_limits<double>::infinity();
    if (!numeric_) return 0.0;
    const auto* u = static_cast<const double*>(numeric_->Udiag);
    double mn = std::numeric_limits<double>::infinity();
    for (int i = 0; i < numeric_->n; ++i) mn = std::min(mn, std::abs(u[i]));
    return mn;
  }

  /// 1-norm condition estimate; infinity when there is no factorization.
  double condest(const CscMatrix& m) {
    if (n_ == 0) return 1.0;
    if (!numeric_) return std::numeric_limits<double>::infinity();
    if (!klu_condest(const_cast<int*>(m.outerIndexPtr()), const_cast<double*>(m.valuePtr()), symbolic_, numeric_,
                     &common_)) {
      return std::numeric_limits<double>::infinity();
    }
    return common_.condest;
  }

  void solve_in_place(Eigen::VectorXd& rhs) {
    if (n_ == 0) return;
    klu_solve(symbolic_, numeric_, n_, 1, rhs.data(), &common_);
  }

 private:
  void release() {
    if (numeric_) klu_free_numeric(&numeric_, &common_);
    if (symbolic_) klu_free_symbolic(&symbolic_, &common_);
  }

  klu_common common_{};
  klu_symbolic* symbolic_ = nullptr;
  klu_numeric* numeric_ = nullptr;
  int n_ = 0;
  bool ok_ = false;
};

inline double inf_norm(const CscMatrix& m) {
  Eigen::VectorXd row_sums = Eigen::VectorXd::Zero(m.rows());
  for (int c = 0; c < m.outerSize(); ++c) {
    for (CscMatrix::InnerIterator it(m, c); it; ++it) row_sums[it.row()] += std::abs(it.value());
  }
  return row_sums.size() ? row_sums.maxCoeff() : 0.0;
}

}  // namespace loadshed::detail
