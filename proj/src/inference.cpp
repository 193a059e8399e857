#include "drm/inference.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>

namespace drm {

namespace {

// Solve A x = b for symmetric positive definite A, with a condition check.
Mat spd_inverse(const Mat& A, const char* what) {
  Eigen::SelfAdjointEigenSolver<Mat> es(A);
  const Vec ev = es.eigenvalues();
  if (ev.minCoeff() <= 1e-12 * std::abs(ev.maxCoeff())) {
    throw NumericError(std::string(what) + " is numerically singular");
  }
  return es.eigenvectors() * ev.cwiseInverse().asDiagonal() *
         es.eigenvectors().transpose();
}

Mat symmetrize(const Mat& A) { return 0.5 * (A + A.transpose()); }

}  // namespace

VBlocks v_building_blocks(const FittedModel& model) {
  const Eigen::Index n = model.n();
  const Eigen::Index q = model.num_tilts();
  const Eigen::Index L = model.dimension();
  Mat wext(n, q + 1);
  wext.leftCols(q) = model.tilts();
  wext.col(q).setOnes();
  Vec D = (wext.leftCols(q) * model.rho).array() + 1.0;
  Vec pd = model.p_hat.array() / D.array();
  const Mat& t = model.combined;

  VBlocks b;
  b.A0.resize(q, q + 1);
  b.A1.assign(q, Mat(L, q + 1));
  b.A2.assign(q, std::vector<Mat>(q));
  b.E.resize(L, q);
  for (Eigen::Index j = 0; j < q; ++j) {
    for (Eigen::Index r = 0; r <= q; ++r) {
      Vec c = (pd.array() * wext.col(j).array() * wext.col(r).array());
      b.A0(j, r) = c.sum();
      b.A1[j].col(r) = t.transpose() * c;
    }
    for (Eigen::Index k = 0; k < q; ++k) {
      Vec c = (pd.array() * wext.col(j).array() * wext.col(k).array());
      b.A2[j][k] = t.transpose() * c.asDiagonal() * t;
    }
    b.E.col(j) = t.transpose() * (model.p_hat.array() *
                                  wext.col(j).array()).matrix();
  }
  return b;
}

Mat estimate_S(const FittedModel& model) {
  const Eigen::Index q = model.num_tilts();
  const Eigen::Index L = model.dimension();
  const Mat& t = model.combined;
  const VBlocks b = v_building_blocks(model);
  const double c = 1.0 / (1.0 + model.rho.sum());
  Mat w = model.tilts();

  Mat S = Mat::Zero(q * (1 + L), q * (1 + L));
  for (Eigen::Index j = 0; j < q; ++j) {
    const Vec pw = (model.p_hat.array() * w.col(j).array()).matrix();
    const double Wj = pw.sum();
    const Vec Ej = t.transpose() * pw;
    const Mat Mj = t.transpose() * pw.asDiagonal() * t;
    for (Eigen::Index k = 0; k < q; ++k) {
      const double rr = model.rho[j] * model.rho[k];
      if (j == k) {
        S(j, j) = c * model.rho[j] * (Wj - model.rho[j] * b.A0(j, j));
        S.block(j, q + j * L, 1, L) =
            c * model.rho[j] *
            (Ej - model.rho[j] * b.A1[j].col(j)).transpose();
        S.block(q + j * L, q + j * L, L, L) =
            c * model.rho[j] * (Mj - model.rho[j] * b.A2[j][j]);
      } else {
        S(j, k) = -c * rr * b.A0(j, k);
        S.block(j, q + k * L, 1, L) = -c * rr * b.A1[j].col(k).transpose();
        S.block(q + j * L, q + k * L, L, L) = -c * rr * b.A2[j][k];
      }
      S.block(q + k * L, j, L, 1) = S.block(j, q + k * L, 1, L).transpose();
    }
  }
  return symmetrize(S);
}

Mat estimate_V(const FittedModel& model) {
  const Eigen::Index q = model.num_tilts();
  const Eigen::Index L = model.dimension();
  const Mat& t = model.combined;
  const VBlocks b = v_building_blocks(model);
  const double c = 1.0 / (1.0 + model.rho.sum());
  Vec rho_ext(q + 1);
  rho_ext.head(q) = model.rho;
  rho_ext[q] = 1.0;
  Mat w = model.tilts();

  Mat V = Mat::Zero(q * (1 + L), q * (1 + L));
  for (Eigen::Index j = 0; j < q; ++j) {
    for (Eigen::Index k = 0; k < q; ++k) {
      const double rr = c * model.rho[j] * model.rho[k];
      double a = b.A0(j, k);
      Eigen::RowVectorXd ab = (b.A0(j, k) * b.E.col(k)).transpose();
      Mat bb = -b.A2[j][k] + b.E.col(j) * b.A1[k].col(j).transpose() +
               b.A1[j].col(k) * b.E.col(k).transpose();
      for (Eigen::Index r = 0; r <= q; ++r) {
        a -= rho_ext[r] * b.A0(j, r) * b.A0(k, r);
        ab -= rho_ext[r] * b.A0(j, r) * b.A1[k].col(r).transpose();
        bb -= rho_ext[r] * b.A1[j].col(r) * b.A1[k].col(r).transpose();
      }
      V(j, k) = rr * a;
      V.block(j, q + k * L, 1, L) = rr * ab;
      V.block(q + k * L, j, L, 1) = (rr * ab).transpose();
      V.block(q + j * L, q + k * L, L, L) = rr * bb;
      if (j == k) {
        const Vec pw = (model.p_hat.array() * w.col(j).array()).matrix();
        const Mat Mj = t.transpose() * pw.asDiagonal() * t;
        const Mat var_j = Mj - b.E.col(j) * b.E.col(j).transpose();
        V.block(q + j * L, q + j * L, L, L) += c * model.rho[j] * var_j;
      }
    }
  }
  return symmetrize(V);
}

AsymptoticCovariance asymptotic_covariance(const FittedModel& model,
                                           SigmaForm form) {
  AsymptoticCovariance out;
  out.S = estimate_S(model);
  out.V = estimate_V(model);
  out.form = form;
  out.n = static_cast<double>(model.n());
  const Mat Sinv = spd_inverse(out.S, "information matrix S");
  const Mat sandwich = symmetrize(Sinv * out.V * Sinv);
  const Mat alt = Sinv * out.V * out.S;
  if (form == SigmaForm::sandwich) {
    out.sigma = sandwich;
    out.sigma_alt = alt;
  } else {
    out.sigma = alt;
    out.sigma_alt = sandwich;
  }
  return out;
}

Vec standard_errors(const FittedModel& model,
                    const AsymptoticCovariance& cov) {
  return (cov.sigma.diagonal().array() / cov.n).sqrt();
}

namespace {

WaldTest wald_block(const FittedModel& model, const AsymptoticCovariance& cov,
                    Eigen::Index start, Eigen::Index len,
                    const std::string& name) {
  const Vec beta = model.params.pack().segment(start, len);
  const Mat block = symmetrize(cov.sigma.block(start, start, len, len));
  const Mat inv = spd_inverse(block, "Wald covariance block");
  WaldTest t;
  t.group = name;
  t.statistic = cov.n * beta.dot(inv * beta);
  t.dof = static_cast<int>(len);
  t.p_value = chi_square_upper_tail(t.statistic, t.dof);
  return t;
}

}  // namespace

WaldTest wald_test(const FittedModel& model, const AsymptoticCovariance& cov,
                   std::size_t group) {
  if (group == model.reference) {
    throw InputError("the reference group carries no tilt parameters");
  }
  const Eigen::Index q = model.num_tilts();
  const Eigen::Index L = model.dimension();
  const Eigen::Index j =
      static_cast<Eigen::Index>(model.tilt_of_group(group));
  return wald_block(model, cov, q + j * L, L, model.labels[group]);
}

WaldTest wald_joint(const FittedModel& model,
                    const AsymptoticCovariance& cov) {
  const Eigen::Index q = model.num_tilts();
  const Eigen::Index L = model.dimension();
  return wald_block(model, cov, q, q * L, "joint");
}

double chi_square_upper_tail(double x, int dof) {
  if (dof < 1) throw InputError("chi-square dof must be positive");
  if (!(x >= 0.0)) throw InputError("chi-square statistic must be >= 0");
  return boost::math::gamma_q(0.5 * dof, 0.5 * x);
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw InputError("normal quantile requires p in (0, 1)");
  }
  return boost::math::quantile(boost::math::normal_distribution<>(), p);
}

}  // namespace drm
