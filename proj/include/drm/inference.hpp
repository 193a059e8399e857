#pragma once

#include "drm/estimation.hpp"

namespace drm {

// Which covariance to report for sqrt(n)(theta_hat - theta). The sandwich
// form S^{-1} V S^{-1} is the default; the alternative S^{-1} V S is kept
// for comparison.
enum class SigmaForm { sandwich, alternative };

struct AsymptoticCovariance {
  Mat S;          // plug-in estimate of -(1/n) E[Hessian]
  Mat V;          // plug-in estimate of Var[(1/sqrt n) score]
  Mat sigma;      // selected form
  Mat sigma_alt;  // the other form
  SigmaForm form = SigmaForm::sandwich;
  double n = 0.0;
};

struct WaldTest {
  std::string group;
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
};

// Intermediate moments of the appendix covariance formulas, exposed for
// testing. Column r runs over the q tilts followed by the reference, whose
// weight function is identically one.
struct VBlocks {
  Mat A0;                            // q x (q+1)
  std::vector<Mat> A1;               // per tilt j: L x (q+1)
  std::vector<std::vector<Mat>> A2;  // per tilt pair (j, k): L x L
  Mat E;                             // L x q, E.col(j) = E_j
};

VBlocks v_building_blocks(const FittedModel& model);

Mat estimate_S(const FittedModel& model);
Mat estimate_V(const FittedModel& model);

AsymptoticCovariance asymptotic_covariance(
    const FittedModel& model, SigmaForm form = SigmaForm::sandwich);

// Standard errors of the packed parameter vector: sqrt(diag(sigma) / n).
Vec standard_errors(const FittedModel& model, const AsymptoticCovariance& cov);

// H0: beta_j = 0 for one non-reference group (by original group index).
WaldTest wald_test(const FittedModel& model, const AsymptoticCovariance& cov,
                   std::size_t group);
// H0: all beta_j = 0 jointly.
WaldTest wald_joint(const FittedModel& model, const AsymptoticCovariance& cov);

// P(chi^2_dof > x).
double chi_square_upper_tail(double x, int dof);

// Upper quantile of the standard normal.
double normal_quantile(double p);

}  // namespace drm
