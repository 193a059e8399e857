#pragma once

#include "drm/estimation.hpp"
#include "drm/regression.hpp"

#include <optional>

namespace drm {

enum class BandKind { binomial, dkw };
enum class GapVariant { max, median, meansq };

struct GofOptions {
  double alpha = 0.10;             // band level for r2_alpha_k
  double k = 2.0;                  // exponent of the count-based measure
  BandKind band = BandKind::binomial;
  bool per_group_n = false;        // use n_i instead of n in the gap measures
  double bandwidth = 0.3;          // conditional-mean bandwidth
  Kernel kernel = Kernel::gaussian;
  CandidateSet candidates = CandidateSet::combined;
  bool regression = true;          // include prediction scores
  bool nw = true;                  // include the Nadaraya-Watson baseline
  std::optional<Mat> eval_points;  // default: each group's own points
};

struct GroupGof {
  std::string label;
  bool reference = false;
  Eigen::Index size = 0;
  int x_count = 0;                 // points inside the pointwise band
  double r2_alpha_k = 0.0;
  double r2_1 = std::numeric_limits<double>::quiet_NaN();
  double r2_2 = std::numeric_limits<double>::quiet_NaN();
  double r2_3 = 0.0;               // max-gap variant
  double r2_3_median = 0.0;
  double r2_3_meansq = 0.0;
  double max_abs_gap = 0.0;
  // (empirical, semiparametric) CDF pairs at the evaluation points.
  std::vector<std::pair<double, double>> plot_pairs;
  Vec predictions;                 // semiparametric, at the group's points
  Vec residuals;
  PredictionScore drm_score, ols_score, nw_score;
};

struct GofReport {
  std::vector<GroupGof> groups;    // original group order
  double alpha = 0.0;
  double k = 0.0;
};

// Multivariate empirical CDF of one sample at t (componentwise ordering).
double empirical_cdf(const Mat& sample, const Vec& t);

// Count of evaluation points whose fitted CDF value falls inside the
// pointwise 1-alpha band around the group's empirical CDF.
int band_hit_count(const FittedModel& model, const Mat& group_sample,
                   std::size_t group, double alpha, BandKind band);

// 1 - exp(-(x/(n_i - x))^k), with x = n_i mapping to 1.
double r2_alpha_k(const FittedModel& model, const Mat& group_sample,
                  std::size_t group, double alpha, double k,
                  BandKind band = BandKind::binomial);

// Regression fit measures against the recorded responses.
double r2_1(const Vec& truth, const Vec& predicted);
double r2_2(const Vec& truth, const Vec& predicted);

// exp(-sqrt(n) * gap) for a summary of |empirical - fitted| CDF gaps.
double r2_3(const FittedModel& model, const Mat& group_sample,
            std::size_t group, GapVariant variant = GapVariant::max,
            bool per_group_n = false);

// Full per-group diagnostics of a fitted model against a dataset with the
// same groups (typically the training data).
GofReport gof_report(const FittedModel& model, const SampleSet& data,
                     const GofOptions& opts = {});

}  // namespace drm
