#pragma once

#include "drm/model.hpp"

#include <optional>

namespace drm {

struct FitOptions {
  double tol = 1e-8;             // max |score component|
  double loglik_rel_tol = 1e-12;
  int max_iter = 200;
  bool standardize = true;       // fit on centered/scaled coordinates
  bool fix_beta = false;         // hold every beta_j at zero, solve alphas only
  std::optional<Vec> theta0;     // packed start, raw coordinates; default zero
};

// Result of maximizing the profile empirical log-likelihood. Parameters are
// reported in the raw data coordinates regardless of FitOptions::standardize.
// Instances are immutable value types.
struct FittedModel {
  ModelParams params;
  Vec p_hat;                          // baseline masses, combined order
  Mat combined;                       // n x L, non-reference groups first
  std::vector<int> group_of_row;      // original group index per combined row
  std::vector<std::string> labels;    // per original group index
  std::vector<Eigen::Index> group_sizes;
  std::vector<std::size_t> tilt_order;
  std::size_t reference = 0;
  Vec rho;
  Vec center, scale;                  // pooled per-coordinate moments
  double log_lik = 0.0;
  bool converged = false;
  int iterations = 0;
  double grad_norm = 0.0;             // max |score| at the final iterate

  Eigen::Index n() const { return combined.rows(); }
  Eigen::Index dimension() const { return combined.cols(); }
  Eigen::Index num_tilts() const { return params.alpha.size(); }
  std::size_t num_groups() const { return labels.size(); }

  std::size_t tilt_of_group(std::size_t g) const;
  std::size_t group_of_tilt(std::size_t j) const { return tilt_order.at(j); }
  std::size_t group_by_label(const std::string& label) const;
  // Rows of `combined` belonging to group g (contiguous block).
  Mat group_points(std::size_t g) const;

  // n x q matrix of fitted tilts w_j(t_i).
  Mat tilts() const { return tilt_matrix(params, combined); }
};

// Profile empirical log-likelihood and its gradient at arbitrary parameters,
// in the coordinates of `data`. Returns -inf instead of overflowing.
double profile_loglik(const ModelParams& params, const SampleSet& data);
Vec profile_score(const ModelParams& params, const SampleSet& data);

// Baseline masses p_i = (1/n_ref) / (1 + sum_j rho_j w_j(t_i)).
Vec p_hat(const ModelParams& params, const SampleSet& data);

FittedModel fit(const SampleSet& data, const FitOptions& opts = {});

// Assemble a FittedModel at the given parameters without optimizing; used for
// evaluating diagnostics away from the maximizer.
FittedModel evaluate_at(const ModelParams& params, const SampleSet& data);

// Finite discrete distribution. The mass vector is stored as given; it is
// not rescaled, so off-solution inputs report their raw total.
struct StepCdf {
  Mat points;
  Vec masses;

  // P(T <= t) componentwise.
  double operator()(const Vec& t) const;
  double total_mass() const { return masses.sum(); }
};

StepCdf reference_cdf(const FittedModel& model);
// Distribution of group g under the fitted tilt; the reference group yields
// reference_cdf.
StepCdf tilted_cdf(const FittedModel& model, std::size_t group);

}  // namespace drm
