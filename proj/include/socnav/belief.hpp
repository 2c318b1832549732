#pragma once

#include "socnav/nn.hpp"

namespace socnav {

/// N categorical factors over K values, one probability row per factor.
struct FactoredBelief {
  nn::Matrix factors;
  /// Relaxation temperature in effect when the belief was produced.
  double temperature = 1.0;

  FactoredBelief() = default;
  explicit FactoredBelief(nn::Matrix f, double tau = 1.0) : factors(std::move(f)), temperature(tau) {}

  int num_factors() const { return static_cast<int>(factors.rows()); }
  int num_values() const { return static_cast<int>(factors.cols()); }

  /// Every row non-negative and summing to one within `tol`.
  bool is_normalized(double tol = 1e-6) const;

  /// Row-major flattening (factor-major), 1 × N·K.
  nn::RowVector flatten() const;
  static FactoredBelief from_flat(const nn::RowVector& flat, int num_factors, double tau = 1.0);

  static FactoredBelief uniform(int num_factors, int num_values);

  friend bool operator==(const FactoredBelief& a, const FactoredBelief& b) {
    return a.temperature == b.temperature && a.factors.rows() == b.factors.rows() &&
           a.factors.cols() == b.factors.cols() && a.factors == b.factors;
  }
};

/// Σ over factors of KL(p_n ‖ q_n), in nats. Zero-probability entries of p
/// contribute nothing; q is floored at 1e-300 to keep the result finite.
double kl_divergence(const FactoredBelief& p, const FactoredBelief& q);

// Batched helpers: each row of a B × (N·K) matrix holds N groups of K logits.

nn::Matrix group_softmax(const nn::Matrix& logits, int k);
nn::Matrix group_log_softmax(const nn::Matrix& logits, int k);
/// Vector-Jacobian product of group_softmax given its output.
nn::Matrix group_softmax_backward(const nn::Matrix& probs, const nn::Matrix& dprobs, int k);

/// Gumbel-perturbed softmax, softmax((logits + noise) / tau) per group.
nn::Matrix gumbel_softmax(const nn::Matrix& logits, const nn::Matrix& noise, double tau, int k);

}  // namespace socnav
