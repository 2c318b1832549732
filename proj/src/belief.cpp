#include "socnav/belief.hpp"

#include <cmath>
#include <stdexcept>

namespace socnav {

bool FactoredBelief::is_normalized(double tol) const {
  if (factors.size() == 0) return false;
  for (Eigen::Index r = 0; r < factors.rows(); ++r) {
    if ((factors.row(r).array() < 0.0).any() || !factors.row(r).allFinite()) return false;
    if (std::abs(factors.row(r).sum() - 1.0) > tol) return false;
  }
  return true;
}

nn::RowVector FactoredBelief::flatten() const {
  return Eigen::Map<const nn::RowVector>(factors.data(), factors.size());
}

FactoredBelief FactoredBelief::from_flat(const nn::RowVector& flat, int num_factors, double tau) {
  if (flat.size() % num_factors != 0) throw std::invalid_argument("flat belief size mismatch");
  const auto k = flat.size() / num_factors;
  nn::Matrix m = Eigen::Map<const nn::Matrix>(flat.data(), num_factors, k);
  return FactoredBelief(std::move(m), tau);
}

FactoredBelief FactoredBelief::uniform(int num_factors, int num_values) {
  return FactoredBelief(nn::Matrix::Constant(num_factors, num_values, 1.0 / num_values));
}

double kl_divergence(const FactoredBelief& p, const FactoredBelief& q) {
  if (p.factors.rows() != q.factors.rows() || p.factors.cols() != q.factors.cols()) {
    throw std::invalid_argument("belief shapes differ");
  }
  double kl = 0.0;
  for (Eigen::Index i = 0; i < p.factors.size(); ++i) {
    const double pi = p.factors.data()[i];
    if (pi <= 0.0) continue;
    kl += pi * (std::log(pi) - std::log(std::max(q.factors.data()[i], 1e-300)));
  }
  return kl;
}

nn::Matrix group_log_softmax(const nn::Matrix& logits, int k) {
  if (logits.cols() % k != 0) throw std::invalid_argument("logit width is not a multiple of K");
  nn::Matrix out(logits.rows(), logits.cols());
  const auto groups = logits.cols() / k;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    for (Eigen::Index g = 0; g < groups; ++g) {
      const auto seg = logits.block(r, g * k, 1, k);
      const double m = seg.maxCoeff();
      const double lse = m + std::log((seg.array() - m).exp().sum());
      out.block(r, g * k, 1, k) = seg.array() - lse;
    }
  }
  return out;
}

nn::Matrix group_softmax(const nn::Matrix& logits, int k) {
  nn::Matrix out(logits.rows(), logits.cols());
  const auto groups = logits.cols() / k;
  if (logits.cols() % k != 0) throw std::invalid_argument("logit width is not a multiple of K");
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    for (Eigen::Index g = 0; g < groups; ++g) {
      const auto seg = logits.block(r, g * k, 1, k);
      const nn::RowVector e = (seg.array() - seg.maxCoeff()).exp();
      out.block(r, g * k, 1, k) = e / e.sum();
    }
  }
  return out;
}

nn::Matrix group_softmax_backward(const nn::Matrix& probs, const nn::Matrix& dprobs, int k) {
  nn::Matrix dlogits(probs.rows(), probs.cols());
  const auto groups = probs.cols() / k;
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    for (Eigen::Index g = 0; g < groups; ++g) {
      const auto p = probs.block(r, g * k, 1, k);
      const auto dp = dprobs.block(r, g * k, 1, k);
      const double inner = p.cwiseProduct(dp).sum();
      dlogits.block(r, g * k, 1, k) = p.array() * (dp.array() - inner);
    }
  }
  return dlogits;
}

nn::Matrix gumbel_softmax(const nn::Matrix& logits, const nn::Matrix& noise, double tau, int k) {
  if (!(tau > 0.0)) throw std::invalid_argument("temperature must be positive");
  return group_softmax((logits + noise) / tau, k);
}

}  // namespace socnav
