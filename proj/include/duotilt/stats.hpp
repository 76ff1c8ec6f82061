#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "duotilt/types.hpp"

namespace duotilt {

/// Neumaier compensated sum.
class NeumaierSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  void add(const NeumaierSum& o) noexcept {
    add(o.sum_);
    add(o.comp_);
  }
  void scale(double f) noexcept {
    sum_ *= f;
    comp_ *= f;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/**
 * @brief Moments of w_i = exp(l_i), accumulated without leaving log space.
 *
 * Sums are stored relative to the running maximum log value; l = -inf
 * encodes an exact zero (event missed). Optionally tracks weighted first
 * moments of a per-sample vector g (sum w g, sum w^2 g^2) and a weighted
 * second-moment matrix sum w (g g^T + h).
 */
class LogMoments {
 public:
  LogMoments() = default;
  explicit LogMoments(int vec_dim, bool with_matrix = false)
      : s1_(vec_dim), s11_(vec_dim), with_matrix_(with_matrix) {
    if (with_matrix_) s2_ = MatrixXd::Zero(vec_dim, vec_dim);
  }

  void add(double l) { add(l, nullptr, nullptr); }

  void add(double l, const VectorXd* g, const MatrixXd* h) {
    ++n_;
    if (l == -std::numeric_limits<double>::infinity()) return;
    ++hits_;
    if (l > shift_) rebase(l);
    const double w = std::exp(l - shift_);
    s0_.add(w);
    s00_.add(w * w);
    if (g) {
      for (int j = 0; j < g->size(); ++j) {
        s1_[j].add(w * (*g)[j]);
        s11_[j].add(w * w * (*g)[j] * (*g)[j]);
      }
      if (with_matrix_) {
        s2_.noalias() += w * (*g) * g->transpose();
        if (h) s2_.noalias() += w * (*h);
      }
    }
  }

  void merge(const LogMoments& o) {
    n_ += o.n_;
    hits_ += o.hits_;
    if (o.hits_ == 0) return;
    if (o.shift_ > shift_) rebase(o.shift_);
    const double f = std::exp(o.shift_ - shift_);
    auto add_scaled = [](NeumaierSum& dst, NeumaierSum src, double s) {
      src.scale(s);
      dst.add(src);
    };
    add_scaled(s0_, o.s0_, f);
    add_scaled(s00_, o.s00_, f * f);
    for (std::size_t j = 0; j < s1_.size() && j < o.s1_.size(); ++j) {
      add_scaled(s1_[j], o.s1_[j], f);
      add_scaled(s11_[j], o.s11_[j], f * f);
    }
    if (with_matrix_ && o.with_matrix_) s2_ += f * o.s2_;
  }

  std::size_t n() const { return n_; }
  std::size_t hits() const { return hits_; }

  /// log of the sample mean of w (-inf when no hits).
  double log_mean() const {
    if (hits_ == 0) return -std::numeric_limits<double>::infinity();
    return shift_ + std::log(s0_.value() / static_cast<double>(n_));
  }
  double mean() const { return hits_ == 0 ? 0.0 : std::exp(log_mean()); }

  /// Unbiased sample variance of w.
  double sample_variance() const {
    if (n_ < 2 || hits_ == 0) return 0.0;
    const double nn = static_cast<double>(n_);
    const double m = s0_.value() / nn;
    const double v = std::max(0.0, s00_.value() / nn - m * m) * nn / (nn - 1.0);
    return v * std::exp(2.0 * shift_);
  }
  double std_error() const {
    return n_ == 0 ? 0.0 : std::sqrt(sample_variance() / static_cast<double>(n_));
  }

  /// E[w g] / E[w]: the self-normalized weighted mean of g.
  VectorXd normalized_first() const {
    VectorXd r = VectorXd::Zero(static_cast<Eigen::Index>(s1_.size()));
    if (hits_ == 0) return r;
    const double z = s0_.value();
    for (std::size_t j = 0; j < s1_.size(); ++j) r[j] = s1_[j].value() / z;
    return r;
  }

  /// Standard error of E[w g_j] divided by E[w].
  VectorXd normalized_first_se() const {
    VectorXd r = VectorXd::Zero(static_cast<Eigen::Index>(s1_.size()));
    if (hits_ == 0 || n_ < 2) return r;
    const double nn = static_cast<double>(n_);
    const double m0 = s0_.value() / nn;
    for (std::size_t j = 0; j < s1_.size(); ++j) {
      const double m1 = s1_[j].value() / nn;
      const double v = std::max(0.0, s11_[j].value() / nn - m1 * m1) * nn / (nn - 1.0);
      r[j] = std::sqrt(v / nn) / m0;
    }
    return r;
  }

  /// E[w (g g^T + h)] / E[w].
  MatrixXd normalized_second() const {
    if (!with_matrix_ || hits_ == 0) return MatrixXd::Zero(s2_.rows(), s2_.cols());
    return s2_ / s0_.value();
  }

 private:
  void rebase(double new_shift) {
    if (hits_ > 0 && std::isfinite(shift_)) {
      const double f = std::exp(shift_ - new_shift);
      s0_.scale(f);
      s00_.scale(f * f);
      for (std::size_t j = 0; j < s1_.size(); ++j) {
        s1_[j].scale(f);
        s11_[j].scale(f * f);
      }
      if (with_matrix_) s2_ *= f;
    }
    shift_ = new_shift;
  }

  double shift_ = -std::numeric_limits<double>::infinity();
  std::size_t n_ = 0;
  std::size_t hits_ = 0;
  NeumaierSum s0_, s00_;
  std::vector<NeumaierSum> s1_, s11_;
  bool with_matrix_ = false;
  MatrixXd s2_;
};

}  // namespace duotilt
