#include "drm/regression.hpp"

#include <cmath>
#include <limits>

namespace drm {

namespace {

const double kLogMinDouble = std::log(std::numeric_limits<double>::min());

// Unnormalized 1-d kernel and the log normalizing constant per dimension.
double kernel_raw(Kernel k, double u) {
  if (k == Kernel::gaussian) return std::exp(-0.5 * u * u);
  const double s = 1.0 - u * u;
  return s > 0.0 ? s : 0.0;
}

double kernel_log_const(Kernel k) {
  if (k == Kernel::gaussian) return -0.5 * std::log(2.0 * M_PI);
  return std::log(0.75);
}

// log of the unnormalized product kernel across coordinates; -inf outside
// the support of a compact kernel.
double log_kernel_raw(Kernel k, const Vec& u) {
  if (k == Kernel::gaussian) return -0.5 * u.squaredNorm();
  double s = 0.0;
  for (Eigen::Index c = 0; c < u.size(); ++c) {
    const double v = 1.0 - u[c] * u[c];
    if (v <= 0.0) return -std::numeric_limits<double>::infinity();
    s += std::log(v);
  }
  return s;
}

void check_bandwidth(double h) {
  if (!(h > 0.0)) throw InputError("bandwidth must be positive");
}

Vec group_log_tilt(const FittedModel& model, std::size_t group) {
  if (group >= model.num_groups()) {
    throw InputError("group index " + std::to_string(group) + " out of range");
  }
  Vec lw = model.p_hat.array().log();
  if (group != model.reference) {
    const std::size_t j = model.tilt_of_group(group);
    const Mat& beta = model.params.beta;
    lw += (model.combined * beta.row(j).transpose()).array().matrix();
    lw.array() += model.params.alpha[static_cast<Eigen::Index>(j)];
  }
  return lw;
}

Eigen::Index group_row_start(const FittedModel& model, std::size_t group) {
  const std::size_t j = model.tilt_of_group(group);
  Eigen::Index start = 0;
  for (std::size_t k = 0; k < j; ++k) {
    start += model.group_sizes[model.tilt_order[k]];
  }
  return start;
}

// Shared state for evaluating the conditional-mean estimator at many
// covariate points: the response-kernel matrix over candidates is fixed once
// the model, group, and bandwidth are chosen.
struct ConditionalMeanEngine {
  Mat xstd;        // n x (L-1)
  Vec lw;          // n, log p_hat_i + log w_j(t_i)
  Mat ky;          // ncand x n response kernel values
  Vec ycand;       // ncand raw responses
  Vec xcenter, xscale;
  double h;
  Kernel kernel;
  double log_norm;

  ConditionalMeanEngine(const FittedModel& model, std::size_t group, double h_,
                        Kernel kernel_, CandidateSet candidates,
                        bool standardized)
      : h(h_), kernel(kernel_) {
    check_bandwidth(h);
    const Eigen::Index n = model.n();
    const Eigen::Index L = model.dimension();
    Vec center = standardized ? model.center : Vec::Zero(L);
    Vec scale = standardized ? model.scale : Vec::Ones(L);
    Mat z = (model.combined.rowwise() - center.transpose()).array().rowwise() /
            scale.transpose().array();
    xstd = z.leftCols(L - 1);
    xcenter = center.head(L - 1);
    xscale = scale.head(L - 1);
    lw = group_log_tilt(model, group);

    Eigen::Index cand_start = 0, cand_len = n;
    if (candidates == CandidateSet::group) {
      cand_start = group_row_start(model, group);
      cand_len = model.group_sizes[group];
    }
    const Vec ystd = z.col(L - 1);
    ycand = model.combined.col(L - 1).segment(cand_start, cand_len);
    ky.resize(cand_len, n);
    for (Eigen::Index c = 0; c < cand_len; ++c) {
      for (Eigen::Index i = 0; i < n; ++i) {
        ky(c, i) = kernel_raw(kernel, (ystd[i] - ystd[cand_start + c]) / h);
      }
    }
    log_norm = L * (kernel_log_const(kernel) - std::log(h)) -
               scale.array().log().sum();
  }

  RegressionPrediction at(const Vec& x) const {
    if (x.size() != xstd.cols()) {
      throw InputError("query has " + std::to_string(x.size()) +
                       " covariates, expected " + std::to_string(xstd.cols()));
    }
    const Eigen::Index n = xstd.rows();
    Vec xq = (x - xcenter).array() / xscale.array();
    Vec e(n);
    double emax = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
      e[i] = lw[i] +
             log_kernel_raw(kernel, ((xstd.row(i).transpose() - xq) / h));
      emax = std::max(emax, e[i]);
    }
    if (!std::isfinite(emax)) {
      throw NumericError("no effective support at the query point");
    }
    Vec a = (e.array() - emax).exp();
    Vec g = ky * a;
    const double total = g.sum();
    if (!(total > 0.0) ||
        emax + std::log(total) + log_norm < kLogMinDouble) {
      throw NumericError("no effective support at the query point");
    }
    RegressionPrediction out;
    out.weights = g / total;
    out.candidates = ycand;
    out.y_hat = out.weights.dot(ycand);
    return out;
  }
};

}  // namespace

TiltedKde::TiltedKde(const FittedModel& model, std::size_t group,
                     double bandwidth, Kernel kernel, bool standardized)
    : h_(bandwidth), kernel_(kernel) {
  check_bandwidth(h_);
  const Eigen::Index L = model.dimension();
  center_ = standardized ? model.center : Vec::Zero(L);
  scale_ = standardized ? model.scale : Vec::Ones(L);
  pts_ = (model.combined.rowwise() - center_.transpose()).array().rowwise() /
         scale_.transpose().array();
  weights_ = group_log_tilt(model, group).array().exp();
  norm_ = 1.0 / (std::pow(h_, static_cast<double>(L)) * scale_.prod());
}

double TiltedKde::operator()(const Vec& z0) const {
  if (z0.size() != pts_.cols()) {
    throw InputError("query dimension " + std::to_string(z0.size()) +
                     " does not match data dimension " +
                     std::to_string(pts_.cols()));
  }
  Vec z = (z0 - center_).array() / scale_.array();
  const double logc = pts_.cols() * kernel_log_const(kernel_);
  double total = 0.0;
  for (Eigen::Index i = 0; i < pts_.rows(); ++i) {
    const double lk =
        log_kernel_raw(kernel_, (pts_.row(i).transpose() - z) / h_);
    if (std::isfinite(lk)) total += weights_[i] * std::exp(lk + logc);
  }
  return total * norm_;
}

RegressionPrediction predict(const FittedModel& model, const Vec& x,
                             std::size_t group, double bandwidth,
                             Kernel kernel, CandidateSet candidates,
                             bool standardized) {
  ConditionalMeanEngine engine(model, group, bandwidth, kernel, candidates,
                               standardized);
  return engine.at(x);
}

Vec predict_batch(const FittedModel& model, const Mat& queries,
                  std::size_t group, double bandwidth, Kernel kernel,
                  CandidateSet candidates, bool standardized,
                  std::vector<bool>* ok) {
  ConditionalMeanEngine engine(model, group, bandwidth, kernel, candidates,
                               standardized);
  Vec out(queries.rows());
  if (ok != nullptr) ok->assign(queries.rows(), true);
  for (Eigen::Index r = 0; r < queries.rows(); ++r) {
    try {
      out[r] = engine.at(queries.row(r).transpose()).y_hat;
    } catch (const NumericError&) {
      if (ok == nullptr) throw;
      out[r] = std::numeric_limits<double>::quiet_NaN();
      (*ok)[static_cast<std::size_t>(r)] = false;
    }
  }
  return out;
}

double nadaraya_watson(const Mat& sample, const Vec& x, const Vec& bandwidths,
                       Kernel kernel) {
  const Eigen::Index d = sample.cols() - 1;
  if (x.size() != d) {
    throw InputError("query has " + std::to_string(x.size()) +
                     " covariates, expected " + std::to_string(d));
  }
  if (bandwidths.size() != d) {
    throw InputError("need one bandwidth per covariate");
  }
  for (Eigen::Index c = 0; c < d; ++c) check_bandwidth(bandwidths[c]);

  const Eigen::Index n = sample.rows();
  Vec e(n);
  double emax = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    Vec u = (sample.row(i).head(d).transpose() - x).array() /
            bandwidths.array();
    e[i] = log_kernel_raw(kernel, u);
    emax = std::max(emax, e[i]);
  }
  if (!std::isfinite(emax)) {
    throw NumericError("no effective support at the query point");
  }
  Vec a = (e.array() - emax).exp();
  const double total = a.sum();
  const double log_norm =
      d * kernel_log_const(kernel) - bandwidths.array().log().sum();
  if (!(total > 0.0) || emax + std::log(total) + log_norm < kLogMinDouble) {
    throw NumericError("no effective support at the query point");
  }
  return a.dot(sample.col(d)) / total;
}

Vec nw_default_bandwidths(const Mat& sample) {
  const Eigen::Index d = sample.cols() - 1;
  const double n = static_cast<double>(sample.rows());
  Vec h(d);
  for (Eigen::Index c = 0; c < d; ++c) {
    const double mean = sample.col(c).mean();
    const double sd = std::sqrt(
        (sample.col(c).array() - mean).square().sum() / std::max(n - 1, 1.0));
    h[c] = sd > 0.0
               ? sd * std::pow(4.0 / ((d + 2.0) * n), 1.0 / (d + 4.0))
               : 1.0;
  }
  return h;
}

OlsFit ols_fit(const Mat& sample) {
  const Eigen::Index n = sample.rows();
  const Eigen::Index p = sample.cols();  // intercept + covariates
  Mat X(n, p);
  X.col(0).setOnes();
  X.rightCols(p - 1) = sample.leftCols(p - 1);
  Eigen::ColPivHouseholderQR<Mat> qr(X);
  if (qr.rank() < p) {
    throw InputError("design matrix is rank deficient");
  }
  OlsFit f;
  f.coef = qr.solve(sample.col(p - 1));
  f.fitted = X * f.coef;
  f.residuals = sample.col(p - 1) - f.fitted;
  return f;
}

double ols_predict(const OlsFit& fit, const Vec& x) {
  if (x.size() != fit.coef.size() - 1) {
    throw InputError("query has " + std::to_string(x.size()) +
                     " covariates, expected " +
                     std::to_string(fit.coef.size() - 1));
  }
  return fit.coef[0] + fit.coef.tail(x.size()).dot(x);
}

PredictionScore score_predictions(const Vec& truth, const Vec& predicted) {
  if (truth.size() == 0 || truth.size() != predicted.size()) {
    throw InputError("need matching nonempty truth and prediction vectors");
  }
  PredictionScore s;
  Vec d = truth - predicted;
  s.mse = d.squaredNorm() / d.size();
  s.mae = d.cwiseAbs().mean();
  return s;
}

}  // namespace drm
