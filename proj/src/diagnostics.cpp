#include "drm/diagnostics.hpp"

#include "drm/inference.hpp"

#include <algorithm>
#include <cmath>

namespace drm {

namespace {

double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct CdfComparison {
  std::vector<double> empirical;
  std::vector<double> fitted;
  std::vector<double> gaps;
};

CdfComparison compare_cdfs(const FittedModel& model, const Mat& group_sample,
                           std::size_t group, const Mat& eval_points) {
  if (group_sample.cols() != model.dimension() ||
      eval_points.cols() != model.dimension()) {
    throw InputError("sample dimension does not match the model");
  }
  const StepCdf fitted = tilted_cdf(model, group);
  CdfComparison c;
  for (Eigen::Index r = 0; r < eval_points.rows(); ++r) {
    const Vec t = eval_points.row(r).transpose();
    const double ge = empirical_cdf(group_sample, t);
    const double gh = fitted(t);
    c.empirical.push_back(ge);
    c.fitted.push_back(gh);
    c.gaps.push_back(std::abs(ge - gh));
  }
  return c;
}

int count_in_band(const CdfComparison& c, Eigen::Index n_i, double alpha,
                  BandKind band) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw InputError("band level alpha must be in (0, 1)");
  }
  const double ni = static_cast<double>(n_i);
  const double z = normal_quantile(1.0 - alpha / 2.0);
  const double dkw = std::sqrt(std::log(2.0 / alpha) / (2.0 * ni));
  int x = 0;
  for (std::size_t k = 0; k < c.gaps.size(); ++k) {
    double half;
    if (band == BandKind::binomial) {
      const double g = c.empirical[k];
      half = z * std::sqrt(g * (1.0 - g) / ni);
    } else {
      half = dkw;
    }
    if (c.gaps[k] <= half + 1e-9) ++x;
  }
  return x;
}

double r2_from_count(int x, Eigen::Index n_pts, double k) {
  if (x >= n_pts) return 1.0;
  const double ratio = static_cast<double>(x) / (n_pts - x);
  return 1.0 - std::exp(-std::pow(ratio, k));
}

double r2_from_gaps(const std::vector<double>& gaps, GapVariant variant,
                    double n_factor) {
  if (gaps.empty()) throw InputError("no evaluation points");
  switch (variant) {
    case GapVariant::max:
      return std::exp(-std::sqrt(n_factor) *
                      *std::max_element(gaps.begin(), gaps.end()));
    case GapVariant::median:
      return std::exp(-std::sqrt(n_factor) * median_of(gaps));
    case GapVariant::meansq: {
      double s = 0.0;
      for (double g : gaps) s += g * g;
      return std::exp(-s / n_factor);
    }
  }
  throw InputError("unknown gap variant");
}

}  // namespace

double empirical_cdf(const Mat& sample, const Vec& t) {
  if (t.size() != sample.cols()) {
    throw InputError("query dimension " + std::to_string(t.size()) +
                     " does not match sample dimension " +
                     std::to_string(sample.cols()));
  }
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < sample.rows(); ++i) {
    if ((sample.row(i).transpose().array() <= t.array()).all()) ++count;
  }
  return static_cast<double>(count) / static_cast<double>(sample.rows());
}

int band_hit_count(const FittedModel& model, const Mat& group_sample,
                   std::size_t group, double alpha, BandKind band) {
  const CdfComparison c = compare_cdfs(model, group_sample, group,
                                       group_sample);
  return count_in_band(c, group_sample.rows(), alpha, band);
}

double r2_alpha_k(const FittedModel& model, const Mat& group_sample,
                  std::size_t group, double alpha, double k, BandKind band) {
  if (!(k > 0.0)) throw InputError("exponent k must be positive");
  const int x = band_hit_count(model, group_sample, group, alpha, band);
  return r2_from_count(x, group_sample.rows(), k);
}

double r2_1(const Vec& truth, const Vec& predicted) {
  if (truth.size() == 0 || truth.size() != predicted.size()) {
    throw InputError("need matching nonempty truth and prediction vectors");
  }
  const double mean = truth.mean();
  const double denom = (truth.array() - mean).square().sum();
  if (denom <= 0.0) throw InputError("response is constant");
  const double num = (predicted.array() - mean).square().sum();
  return std::min(num / denom, 1.0);
}

double r2_2(const Vec& truth, const Vec& predicted) {
  if (truth.size() == 0 || truth.size() != predicted.size()) {
    throw InputError("need matching nonempty truth and prediction vectors");
  }
  const Vec ty = truth.array() - truth.mean();
  const Vec tp = predicted.array() - predicted.mean();
  const double sy = ty.norm(), sp = tp.norm();
  if (sy <= 0.0) throw InputError("response is constant");
  if (sp <= 0.0) throw InputError("predictions are constant");
  const double r = ty.dot(tp) / (sy * sp);
  return std::min(r * r, 1.0);
}

double r2_3(const FittedModel& model, const Mat& group_sample,
            std::size_t group, GapVariant variant, bool per_group_n) {
  const CdfComparison c = compare_cdfs(model, group_sample, group,
                                       group_sample);
  const double n_factor = per_group_n
                              ? static_cast<double>(group_sample.rows())
                              : static_cast<double>(model.n());
  return r2_from_gaps(c.gaps, variant, n_factor);
}

GofReport gof_report(const FittedModel& model, const SampleSet& data,
                     const GofOptions& opts) {
  if (data.num_groups() != model.num_groups() ||
      data.dimension() != model.dimension() ||
      data.reference() != model.reference) {
    throw InputError("dataset layout does not match the model");
  }
  for (std::size_t g = 0; g < model.num_groups(); ++g) {
    if (data.group(g).label != model.labels[g]) {
      throw InputError("group label '" + data.group(g).label +
                       "' does not match the model's '" + model.labels[g] +
                       "'");
    }
  }

  GofReport report;
  report.alpha = opts.alpha;
  report.k = opts.k;
  const Eigen::Index L = model.dimension();
  for (std::size_t g = 0; g < model.num_groups(); ++g) {
    const Mat& sample = data.group(g).points;
    const Mat eval = opts.eval_points ? *opts.eval_points : sample;
    GroupGof gg;
    gg.label = model.labels[g];
    gg.reference = g == model.reference;
    gg.size = sample.rows();

    const CdfComparison c = compare_cdfs(model, sample, g, eval);
    gg.x_count = count_in_band(c, sample.rows(), opts.alpha, opts.band);
    gg.r2_alpha_k = r2_from_count(gg.x_count, eval.rows(), opts.k);
    gg.max_abs_gap = *std::max_element(c.gaps.begin(), c.gaps.end());
    const double n_factor = opts.per_group_n
                                ? static_cast<double>(sample.rows())
                                : static_cast<double>(model.n());
    gg.r2_3 = r2_from_gaps(c.gaps, GapVariant::max, n_factor);
    gg.r2_3_median = r2_from_gaps(c.gaps, GapVariant::median, n_factor);
    gg.r2_3_meansq = r2_from_gaps(c.gaps, GapVariant::meansq, n_factor);
    for (std::size_t k = 0; k < c.gaps.size(); ++k) {
      gg.plot_pairs.emplace_back(c.empirical[k], c.fitted[k]);
    }

    if (opts.regression) {
      const Mat queries = sample.leftCols(L - 1);
      const Vec truth = sample.col(L - 1);
      gg.predictions = predict_batch(model, queries, g, opts.bandwidth,
                                     opts.kernel, opts.candidates);
      gg.residuals = truth - gg.predictions;
      gg.drm_score = score_predictions(truth, gg.predictions);
      gg.r2_1 = r2_1(truth, gg.predictions);
      gg.r2_2 = r2_2(truth, gg.predictions);

      const OlsFit ols = ols_fit(sample);
      gg.ols_score = score_predictions(truth, ols.fitted);

      if (opts.nw) {
        const Vec bw = nw_default_bandwidths(sample);
        Vec nw_pred(sample.rows());
        for (Eigen::Index i = 0; i < sample.rows(); ++i) {
          nw_pred[i] = nadaraya_watson(sample, queries.row(i).transpose(), bw,
                                       opts.kernel);
        }
        gg.nw_score = score_predictions(truth, nw_pred);
      }
    }
    report.groups.push_back(std::move(gg));
  }
  return report;
}

}  // namespace drm
