#include <doctest.h>

#include "drm/regression.hpp"
#include "drm/simulation.hpp"

#include <cmath>
#include <vector>

using drm::CandidateSet;
using drm::FittedModel;
using drm::InputError;
using drm::Kernel;
using drm::Mat;
using drm::ModelParams;
using drm::NumericError;
using drm::RngStream;
using drm::Sample;
using drm::SampleSet;
using drm::Vec;

namespace {

constexpr double kGaussAtZero = 0.3989422804014327;
constexpr double kGaussAtOne = 0.24197072451914337;

double kernel_value(Kernel k, double u) {
  if (k == Kernel::gaussian) {
    return std::exp(-0.5 * u * u) / std::sqrt(2.0 * M_PI);
  }
  return std::abs(u) < 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
}

// Direct triple-loop evaluation of the conditional mean: candidates are
// observed responses, each weighted by the tilted kde of (x, y_c).
double naive_eq13(const FittedModel& m, const Vec& x, std::size_t group,
                  double h, Kernel kern, CandidateSet cs, bool standardized) {
  const Eigen::Index n = m.n();
  const Eigen::Index L = m.dimension();
  Vec center = standardized ? m.center : Vec::Zero(L);
  Vec scale = standardized ? m.scale : Vec::Ones(L);
  Mat w = m.tilts();
  const std::size_t j = m.tilt_of_group(group);
  Vec gw(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    gw[i] = m.p_hat[i] *
            (j < static_cast<std::size_t>(m.num_tilts()) ? w(i, j) : 1.0);
  }

  std::vector<Eigen::Index> cand;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (cs == CandidateSet::combined ||
        m.group_of_row[i] == static_cast<int>(group)) {
      cand.push_back(i);
    }
  }

  double num = 0.0, den = 0.0;
  for (Eigen::Index c : cand) {
    const double yc = m.combined(c, L - 1);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double prod = gw[i];
      for (Eigen::Index d = 0; d + 1 < L; ++d) {
        prod *= kernel_value(kern,
                             (x[d] - m.combined(i, d)) / scale[d] / h);
      }
      prod *= kernel_value(
          kern, (yc - m.combined(i, L - 1)) / scale[L - 1] / h);
      sum += prod;
    }
    num += yc * sum;
    den += sum;
  }
  return num / den;
}

double naive_kde(const FittedModel& m, const Vec& z0, std::size_t group,
                 double h, Kernel kern, bool standardized) {
  const Eigen::Index n = m.n();
  const Eigen::Index L = m.dimension();
  Vec center = standardized ? m.center : Vec::Zero(L);
  Vec scale = standardized ? m.scale : Vec::Ones(L);
  Mat w = m.tilts();
  const std::size_t j = m.tilt_of_group(group);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double prod =
        m.p_hat[i] *
        (j < static_cast<std::size_t>(m.num_tilts()) ? w(i, j) : 1.0);
    for (Eigen::Index d = 0; d < L; ++d) {
      prod *= kernel_value(kern, (z0[d] - m.combined(i, d)) / scale[d] / h);
    }
    sum += prod;
  }
  return sum / (std::pow(h, static_cast<double>(L)) * scale.prod());
}

Mat normal_block(RngStream& rng, Eigen::Index n, Eigen::Index L,
                 double shift = 0.0) {
  Mat m(n, L);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < L; ++j) m(i, j) = rng.normal() + shift;
  }
  return m;
}

}  // namespace

TEST_CASE("nadaraya-watson matches hand-computed kernel weights") {
  Mat sample(2, 2);
  sample << 0, 1, 1, 3;
  Vec x = Vec::Zero(1);

  double expect = (kGaussAtZero * 1 + kGaussAtOne * 3) /
                  (kGaussAtZero + kGaussAtOne);
  CHECK(drm::nadaraya_watson(sample, x, Vec::Ones(1)) ==
        doctest::Approx(expect).epsilon(1e-14));

  // epanechnikov with h = 2: weights 0.75 and 0.5625, mean 13/7
  CHECK(drm::nadaraya_watson(sample, x, Vec::Constant(1, 2.0),
                             Kernel::epanechnikov) ==
        doctest::Approx(13.0 / 7.0).epsilon(1e-14));

  // compact support: no neighbour in range
  CHECK_THROWS_AS(drm::nadaraya_watson(sample, Vec::Constant(1, 50.0),
                                       Vec::Ones(1), Kernel::epanechnikov),
                  NumericError);

  Mat wide(2, 3);
  wide << 0, 0, 1, 1, 2, 3;
  Vec bw(2);
  bw << 1.0, 2.0;
  const double w0 = kernel_value(Kernel::gaussian, 0.0) *
                    kernel_value(Kernel::gaussian, 0.0);
  const double w1 = kernel_value(Kernel::gaussian, 1.0) *
                    kernel_value(Kernel::gaussian, 1.0);
  CHECK(drm::nadaraya_watson(wide, Vec::Zero(2), bw) ==
        doctest::Approx((w0 * 1 + w1 * 3) / (w0 + w1)).epsilon(1e-14));
}

TEST_CASE("conditional mean equals the direct triple-loop evaluation") {
  RngStream r1 = RngStream::substream(81, 0, 0);
  RngStream r2 = RngStream::substream(81, 0, 1);
  RngStream r3 = RngStream::substream(81, 0, 2);
  SampleSet data({Sample{"a", normal_block(r1, 14, 3, 0.5)},
                  Sample{"b", normal_block(r2, 12, 3)},
                  Sample{"c", normal_block(r3, 10, 3, -0.3)}},
                 1);
  FittedModel m = drm::fit(data);
  REQUIRE(m.converged);

  Vec x(2);
  for (Kernel kern : {Kernel::gaussian, Kernel::epanechnikov}) {
    for (CandidateSet cs : {CandidateSet::combined, CandidateSet::group}) {
      for (bool std_coords : {true, false}) {
        for (std::size_t g : {0u, 1u, 2u}) {
          x << 0.3, -0.2;
          const double got =
              drm::predict(m, x, g, 0.5, kern, cs, std_coords).y_hat;
          const double want = naive_eq13(m, x, g, 0.5, kern, cs, std_coords);
          CHECK(got == doctest::Approx(want).epsilon(1e-10));
        }
      }
    }
  }
}

TEST_CASE("prediction weights sum to one over the candidate responses") {
  RngStream r1 = RngStream::substream(82, 0, 0);
  RngStream r2 = RngStream::substream(82, 0, 1);
  SampleSet data({Sample{"a", normal_block(r1, 20, 2, 0.4)},
                  Sample{"b", normal_block(r2, 15, 2)}},
                 1);
  FittedModel m = drm::fit(data);
  drm::RegressionPrediction p =
      drm::predict(m, Vec::Zero(1), 0, 0.3, Kernel::gaussian,
                   CandidateSet::group);
  CHECK(p.candidates.size() == 20);
  CHECK(p.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.y_hat == doctest::Approx(p.weights.dot(p.candidates)));
  CHECK(p.y_hat >= p.candidates.minCoeff());
  CHECK(p.y_hat <= p.candidates.maxCoeff());
}

TEST_CASE("batch prediction flags queries without support") {
  RngStream r1 = RngStream::substream(83, 0, 0);
  RngStream r2 = RngStream::substream(83, 0, 1);
  SampleSet data({Sample{"a", normal_block(r1, 15, 2)},
                  Sample{"b", normal_block(r2, 15, 2)}},
                 1);
  FittedModel m = drm::fit(data);

  CHECK_THROWS_AS(drm::predict(m, Vec::Constant(1, 40.0), 0, 0.3,
                               Kernel::epanechnikov),
                  NumericError);
  CHECK_THROWS_AS(drm::predict(m, Vec::Constant(1, 1e8), 0), NumericError);

  Mat queries(3, 1);
  queries << 0.0, 40.0, 0.5;
  std::vector<bool> ok;
  Vec out = drm::predict_batch(m, queries, 0, 0.3, Kernel::epanechnikov,
                               CandidateSet::combined, true, &ok);
  REQUIRE(out.size() == 3);
  CHECK(ok == std::vector<bool>{true, false, true});
  CHECK(std::isnan(out[1]));
  CHECK(out[0] == doctest::Approx(drm::predict(m, Vec::Zero(1), 0, 0.3,
                                               Kernel::epanechnikov)
                                      .y_hat));

  // without the flag vector the same batch throws
  CHECK_THROWS_AS(drm::predict_batch(m, queries, 0, 0.3,
                                     Kernel::epanechnikov),
                  NumericError);
}

TEST_CASE("constant response predicts the constant") {
  Mat a(6, 2), b(6, 2);
  for (int i = 0; i < 6; ++i) {
    a(i, 0) = 0.3 * i;
    b(i, 0) = 0.3 * i + 0.1;
    a(i, 1) = 2.5;
    b(i, 1) = 2.5;
  }
  ModelParams zero;
  zero.alpha = Vec::Zero(1);
  zero.beta = Mat::Zero(1, 2);
  FittedModel m =
      drm::evaluate_at(zero, SampleSet({Sample{"a", a}, Sample{"b", b}}, 1));
  for (double xq : {0.0, 0.7, 1.4}) {
    CHECK(drm::predict(m, Vec::Constant(1, xq), 0).y_hat ==
          doctest::Approx(2.5).epsilon(1e-12));
  }
}

TEST_CASE("symmetric responses at a common covariate reduce to the mean") {
  // all covariates equal and responses symmetric: the response-kernel
  // weighting is symmetric, so both the tilted estimate and plain
  // nadaraya-watson return the central value
  Mat a(4, 2), b(4, 2);
  a << 0, -2, 0, -1, 0, 1, 0, 2;
  b = a;
  ModelParams zero;
  zero.alpha = Vec::Zero(1);
  zero.beta = Mat::Zero(1, 2);
  FittedModel m =
      drm::evaluate_at(zero, SampleSet({Sample{"a", a}, Sample{"b", b}}, 1));

  const double eq13 =
      drm::predict(m, Vec::Zero(1), 0, 0.8, Kernel::gaussian,
                   CandidateSet::combined, false)
          .y_hat;
  const double nw =
      drm::nadaraya_watson(a, Vec::Zero(1), Vec::Constant(1, 0.8));
  CHECK(eq13 == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(nw == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("tilted kde matches the direct weighted sum") {
  RngStream r1 = RngStream::substream(84, 0, 0);
  RngStream r2 = RngStream::substream(84, 0, 1);
  SampleSet data({Sample{"a", normal_block(r1, 18, 2, 0.6)},
                  Sample{"b", normal_block(r2, 14, 2)}},
                 1);
  FittedModel m = drm::fit(data);

  Vec z(2);
  for (Kernel kern : {Kernel::gaussian, Kernel::epanechnikov}) {
    for (bool std_coords : {true, false}) {
      for (std::size_t g : {0u, 1u}) {
        drm::TiltedKde kde(m, g, 0.45, kern, std_coords);
        z << 0.2, -0.4;
        CHECK(kde(z) == doctest::Approx(
                            naive_kde(m, z, g, 0.45, kern, std_coords))
                            .epsilon(1e-12));
        z << 1.1, 0.7;
        CHECK(kde(z) == doctest::Approx(
                            naive_kde(m, z, g, 0.45, kern, std_coords))
                            .epsilon(1e-12));
      }
    }
  }

  CHECK_THROWS_AS(drm::TiltedKde(m, 0, 0.0), InputError);
  CHECK_THROWS_AS(drm::TiltedKde(m, 0, -1.0), InputError);
}

TEST_CASE("one-dimensional tilted kde integrates to one") {
  RngStream r1 = RngStream::substream(85, 0, 0);
  RngStream r2 = RngStream::substream(85, 0, 1);
  SampleSet data({Sample{"a", normal_block(r1, 40, 1, 0.5)},
                  Sample{"b", normal_block(r2, 40, 1)}},
                 1);
  FittedModel m = drm::fit(data);
  for (std::size_t g : {0u, 1u}) {
    drm::TiltedKde kde(m, g, 0.4);
    const int grid = 4001;
    const double lo = -9, hi = 9, dz = (hi - lo) / (grid - 1);
    double integral = 0.0;
    for (int i = 0; i < grid; ++i) {
      const double w = (i == 0 || i == grid - 1) ? 0.5 : 1.0;
      integral += w * kde(Vec::Constant(1, lo + i * dz));
    }
    integral *= dz;
    CHECK(integral == doctest::Approx(1.0).epsilon(0.01));
  }
}

TEST_CASE("silverman bandwidths follow the normal reference rule") {
  RngStream rng(86);
  Mat sample = normal_block(rng, 120, 3);
  sample.col(1) *= 2.5;
  Vec h = drm::nw_default_bandwidths(sample);
  REQUIRE(h.size() == 2);  // covariate columns only
  const double n = 120.0, d = 2.0;
  for (Eigen::Index j = 0; j < 2; ++j) {
    const double mu = sample.col(j).mean();
    const double sd = std::sqrt((sample.col(j).array() - mu).square().sum() /
                                (n - 1));
    CHECK(h[j] == doctest::Approx(
                      sd * std::pow(4.0 / ((d + 2.0) * n), 1.0 / (d + 4.0)))
                      .epsilon(1e-12));
  }

  Mat degenerate(5, 2);
  degenerate << 1, 0, 1, 1, 1, 2, 1, 3, 1, 4;
  CHECK(drm::nw_default_bandwidths(degenerate)[0] == 1.0);
}

TEST_CASE("ols recovers an exact linear relation") {
  Mat sample(5, 3);
  for (int i = 0; i < 5; ++i) {
    sample(i, 0) = i;
    sample(i, 1) = i * i - 3;
    sample(i, 2) = 1.0 + 2.0 * sample(i, 0) - 0.5 * sample(i, 1);
  }
  drm::OlsFit f = drm::ols_fit(sample);
  REQUIRE(f.coef.size() == 3);
  CHECK(f.coef[0] == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(f.coef[1] == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(f.coef[2] == doctest::Approx(-0.5).epsilon(1e-10));
  CHECK(f.residuals.cwiseAbs().maxCoeff() < 1e-10);

  Vec x(2);
  x << 10.0, 4.0;
  CHECK(drm::ols_predict(f, x) == doctest::Approx(1.0 + 20.0 - 2.0));

  Mat rankdef(4, 3);
  rankdef << 1, 2, 0, 1, 2, 1, 1, 2, 2, 1, 2, 3;
  CHECK_THROWS_AS(drm::ols_fit(rankdef), InputError);
}

TEST_CASE("prediction scores are the usual mse and mae") {
  Vec truth(3), pred(3);
  truth << 1, 2, 3;
  pred << 1, 2, 4;
  drm::PredictionScore s = drm::score_predictions(truth, pred);
  CHECK(s.mse == doctest::Approx(1.0 / 3.0));
  CHECK(s.mae == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS(drm::score_predictions(truth, Vec::Ones(2)), InputError);
}
