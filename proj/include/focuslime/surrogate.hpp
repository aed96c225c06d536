#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "focuslime/error.hpp"
#include "focuslime/perturb.hpp"

namespace focuslime {

struct KernelConfig {
  double sigma = 0.25;

  void validate() const {
    require(sigma > 0.0, ErrorCode::ConfigError, "kernel sigma must be > 0");
  }
};

// Proximity weight exp(-d^2 / sigma^2) with d = fraction of active units
// removed (normalized Hamming distance over the active coordinates).
inline double kernel_weight(const Mask& mask, const FocusMask& focus,
                            const KernelConfig& cfg) {
  require(mask.size() == focus.size(), ErrorCode::ContractViolation,
          "kernel_weight: mask/focus length mismatch");
  std::size_t active = 0, removed = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (focus.bits[i]) {
      ++active;
      if (!mask.bits[i]) ++removed;
    } else {
      require(mask.bits[i] == 1, ErrorCode::ContractViolation,
              "kernel_weight: frozen bit " + std::to_string(i) + " is not 1");
    }
  }
  require(active > 0, ErrorCode::DegenerateFocus, "kernel_weight: no active bits");
  const double d = static_cast<double>(removed) / static_cast<double>(active);
  return std::exp(-(d * d) / (cfg.sigma * cfg.sigma));
}

struct WeightedSample {
  Mask mask;
  double prediction = 0.0;
  double weight = 1.0;
};

struct SurrogateFit {
  std::vector<double> coefficients;  // one per active coordinate, document order
  double intercept = 0.0;
  double lambda = 0.0;
  double weighted_r2 = 0.0;
  std::size_t sample_count = 0;
  bool lambda_bumped = false;  // condition guard fired and lambda was raised x10
};

// Token-level attribution: frozen coordinates are exactly 0.
struct Attribution {
  std::vector<double> scores;
  FocusMask focus;  // provenance: active bits were fitted, frozen bits pinned to 0
};

namespace detail {

inline std::vector<std::size_t> active_indices(const FocusMask& focus) {
  std::vector<std::size_t> indices;
  for (std::size_t i = 0; i < focus.size(); ++i) {
    if (focus.bits[i]) indices.push_back(i);
  }
  return indices;
}

// Ridge solve on weighted, centered data. Primal normal equations when the
// feature count is small, dual (Gram) form when K < m and lambda > 0; the two
// are algebraically identical for lambda > 0.
inline bool solve_ridge(const Eigen::MatrixXd& Xw, const Eigen::VectorXd& yw,
                        double lambda, Eigen::VectorXd& beta) {
  const Eigen::Index K = Xw.rows();
  const Eigen::Index m = Xw.cols();
  if (lambda > 0.0 && K < m) {
    Eigen::MatrixXd gram = Xw * Xw.transpose();
    gram.diagonal().array() += lambda;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    if (ldlt.info() != Eigen::Success) return false;
    Eigen::VectorXd alpha = ldlt.solve(yw);
    beta = Xw.transpose() * alpha;
  } else {
    Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(m, m);
    normal.selfadjointView<Eigen::Lower>().rankUpdate(Xw.transpose());
    normal = normal.selfadjointView<Eigen::Lower>();
    normal.diagonal().array() += lambda;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
    if (ldlt.info() != Eigen::Success) return false;
    Eigen::VectorXd rhs = Xw.transpose() * yw;
    beta = ldlt.solve(rhs);
    if ((normal * beta - rhs).norm() > 1e-6 * std::max(1.0, rhs.norm())) return false;
  }
  return beta.allFinite();
}

// Greedy forward selection for original-LIME parity: pick up to max_features
// coordinates by residual correlation, refit ridge on the selected set.
inline Eigen::VectorXd forward_selection(const Eigen::MatrixXd& Xw,
                                         const Eigen::VectorXd& yw, double lambda,
                                         std::size_t max_features) {
  const Eigen::Index m = Xw.cols();
  std::vector<Eigen::Index> selected;
  std::vector<bool> used(m, false);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd residual = yw;
  while (selected.size() < std::min<std::size_t>(max_features, m)) {
    Eigen::Index best = -1;
    double best_score = -1.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (used[j]) continue;
      double score = std::abs(Xw.col(j).dot(residual));
      if (score > best_score) {
        best_score = score;
        best = j;
      }
    }
    if (best < 0) break;
    used[best] = true;
    selected.push_back(best);

    Eigen::MatrixXd sub(Xw.rows(), selected.size());
    for (std::size_t s = 0; s < selected.size(); ++s) sub.col(s) = Xw.col(selected[s]);
    Eigen::VectorXd sub_beta;
    if (!solve_ridge(sub, yw, std::max(lambda, 1e-12), sub_beta)) break;
    beta.setZero();
    for (std::size_t s = 0; s < selected.size(); ++s) beta[selected[s]] = sub_beta[s];
    residual = yw - Xw * beta;
  }
  return beta;
}

}  // namespace detail

// Weighted ridge over the active coordinates only; intercept unpenalized
// (handled by weighted centering). Deterministic closed-form solve.
inline SurrogateFit fit(const std::vector<WeightedSample>& samples,
                        const FocusMask& focus, double lambda,
                        std::size_t max_features = 0) {
  require(samples.size() >= 2, ErrorCode::InsufficientSamples,
          "fit: need at least 2 samples, got " + std::to_string(samples.size()));
  require(lambda >= 0.0, ErrorCode::ContractViolation, "fit: lambda must be >= 0");

  const std::vector<std::size_t> active = detail::active_indices(focus);
  const std::size_t m = active.size();
  require(m >= 1, ErrorCode::DegenerateFocus, "fit: no active coordinates");

  const std::size_t K = samples.size();
  Eigen::MatrixXd X(K, m);
  Eigen::VectorXd y(K), w(K);
  for (std::size_t k = 0; k < K; ++k) {
    const WeightedSample& sample = samples[k];
    require(sample.mask.size() == focus.size(), ErrorCode::ContractViolation,
            "fit: sample mask length mismatch");
    require(std::isfinite(sample.prediction), ErrorCode::ContractViolation,
            "fit: non-finite prediction at sample " + std::to_string(k));
    require(std::isfinite(sample.weight) && sample.weight > 0.0,
            ErrorCode::ContractViolation, "fit: sample weight must be finite and > 0");
    for (std::size_t j = 0; j < m; ++j) {
      X(k, j) = static_cast<double>(sample.mask.bits[active[j]]);
    }
    y[k] = sample.prediction;
    w[k] = sample.weight;
  }

  const double weight_sum = w.sum();
  const Eigen::RowVectorXd x_mean = (w.transpose() * X) / weight_sum;
  const double y_mean = w.dot(y) / weight_sum;
  const Eigen::VectorXd sqrt_w = w.array().sqrt();
  Eigen::MatrixXd Xw = (X.rowwise() - x_mean).array().colwise() * sqrt_w.array();
  Eigen::VectorXd yw = (y.array() - y_mean) * sqrt_w.array();

  SurrogateFit result;
  result.lambda = lambda;
  result.sample_count = K;

  Eigen::VectorXd beta;
  if (max_features > 0 && max_features < m) {
    beta = detail::forward_selection(Xw, yw, lambda, max_features);
  } else if (!detail::solve_ridge(Xw, yw, lambda, beta)) {
    result.lambda = lambda > 0.0 ? lambda * 10.0 : 1e-8;
    result.lambda_bumped = true;
    require(detail::solve_ridge(Xw, yw, result.lambda, beta),
            ErrorCode::ContractViolation, "fit: factorization failed after lambda bump");
  }

  result.intercept = y_mean - x_mean.transpose().dot(beta);
  result.coefficients.assign(beta.data(), beta.data() + beta.size());

  const Eigen::VectorXd residual = yw - Xw * beta;
  const double sse = residual.squaredNorm();
  const double sst = yw.squaredNorm();
  result.weighted_r2 = sst > 0.0 ? 1.0 - sse / sst : 1.0;
  return result;
}

// Scatter active coefficients back to document positions; frozen = exactly 0.
inline Attribution to_attribution(const SurrogateFit& fitted, const FocusMask& focus) {
  const std::vector<std::size_t> active = detail::active_indices(focus);
  require(fitted.coefficients.size() == active.size(), ErrorCode::ContractViolation,
          "to_attribution: coefficient count does not match active coordinates");
  Attribution attribution;
  attribution.scores.assign(focus.size(), 0.0);
  attribution.focus = focus;
  for (std::size_t j = 0; j < active.size(); ++j) {
    attribution.scores[active[j]] = fitted.coefficients[j];
  }
  return attribution;
}

// Indices of the k largest scores, descending; ties broken by ascending
// position. k beyond n truncates to n; k = 0 yields the empty list.
inline std::vector<std::size_t> top_k_features(const Attribution& attribution,
                                               std::size_t k) {
  const std::size_t n = attribution.scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return attribution.scores[a] > attribution.scores[b];
  });
  order.resize(std::min(k, n));
  return order;
}

}  // namespace focuslime
