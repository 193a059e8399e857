#pragma once

#include "drm/estimation.hpp"

namespace drm {

enum class Kernel { gaussian, epanechnikov };

enum class CandidateSet { combined, group };

// Kernel density estimate of one group's distribution, built from the fitted
// baseline masses and tilts over the combined points. With standardized=true
// distances are measured in pooled-moment coordinates and the density is
// reported back on the raw scale; the bandwidth is then a multiple of one
// pooled standard deviation in every direction.
class TiltedKde {
 public:
  TiltedKde(const FittedModel& model, std::size_t group, double bandwidth,
            Kernel kernel = Kernel::gaussian, bool standardized = true);

  // Density at an L-dimensional point of the raw coordinate space.
  double operator()(const Vec& z0) const;

  double bandwidth() const { return h_; }

 private:
  Mat pts_;
  Vec weights_;
  Vec center_, scale_;
  double h_;
  Kernel kernel_;
  double norm_;
};

struct RegressionPrediction {
  double y_hat = 0.0;
  Vec weights;     // over candidates, sums to one
  Vec candidates;  // candidate responses, raw scale
};

// Conditional mean of the response given the covariates under the fitted
// tilted density. Candidates are the observed responses, kept with
// multiplicity; the kernel sum always runs over the full combined cloud.
RegressionPrediction predict(const FittedModel& model, const Vec& x,
                             std::size_t group, double bandwidth = 0.3,
                             Kernel kernel = Kernel::gaussian,
                             CandidateSet candidates = CandidateSet::combined,
                             bool standardized = true);

// Same estimator evaluated at many covariate rows. With `ok` supplied,
// points without effective support yield NaN and a false flag instead of
// throwing.
Vec predict_batch(const FittedModel& model, const Mat& queries,
                  std::size_t group, double bandwidth = 0.3,
                  Kernel kernel = Kernel::gaussian,
                  CandidateSet candidates = CandidateSet::combined,
                  bool standardized = true,
                  std::vector<bool>* ok = nullptr);

// Classical Nadaraya-Watson smoother on one raw sample, product kernel over
// the covariate columns.
double nadaraya_watson(const Mat& sample, const Vec& x, const Vec& bandwidths,
                       Kernel kernel = Kernel::gaussian);

// Normal-reference (Silverman) bandwidth per covariate column.
Vec nw_default_bandwidths(const Mat& sample);

struct OlsFit {
  Vec coef;  // intercept first, then one slope per covariate
  Vec fitted;
  Vec residuals;
};

// Least squares of the last column on the others plus an intercept.
OlsFit ols_fit(const Mat& sample);
double ols_predict(const OlsFit& fit, const Vec& x);

struct PredictionScore {
  double mse = 0.0;
  double mae = 0.0;
};

PredictionScore score_predictions(const Vec& truth, const Vec& predicted);

}  // namespace drm
