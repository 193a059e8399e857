#include "drm/estimation.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>

namespace drm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Data rearranged for the optimizer, in fitting coordinates.
struct Workspace {
  Mat t;          // n x L, combined order
  Vec rho;        // q
  Vec counts;     // n_j per tilt slot
  double n_ref = 0.0;
  Mat group_sums;  // q x L, sum of t over tilt group j
};

Workspace make_workspace(const Mat& combined, const SampleSet& data) {
  Workspace ws;
  ws.t = combined;
  ws.rho = data.rho();
  const std::size_t q = data.num_tilts();
  ws.counts.resize(q);
  ws.group_sums = Mat::Zero(q, combined.cols());
  ws.n_ref =
      static_cast<double>(data.group(data.reference()).points.rows());
  Eigen::Index row = 0;
  for (std::size_t j = 0; j < data.tilt_order().size(); ++j) {
    const Eigen::Index nj = data.group(data.tilt_order()[j]).points.rows();
    if (j < q) {
      ws.counts[j] = static_cast<double>(nj);
      ws.group_sums.row(j) = ws.t.middleRows(row, nj).colwise().sum();
    }
    row += nj;
  }
  return ws;
}

// exp(alpha_j + beta_j' t_i); empty if any exponent would overflow.
bool tilt_exponents(const Workspace& ws, const ModelParams& p, Mat& w) {
  Mat e = (ws.t * p.beta.transpose()).rowwise() + p.alpha.transpose();
  if (!e.allFinite() || e.maxCoeff() > kMaxTiltExponent) return false;
  w = e.array().exp();
  return true;
}

double loglik(const Workspace& ws, const ModelParams& p) {
  Mat w;
  if (!tilt_exponents(ws, p, w)) return kNegInf;
  Vec D = (w * ws.rho).array() + 1.0;
  double l = -(D.array().log() + std::log(ws.n_ref)).sum();
  l += ws.counts.dot(p.alpha);
  l += (ws.group_sums.array() * p.beta.array()).sum();
  return l;
}

// u(i, j) = rho_j w_j(t_i) / D_i.
Mat u_matrix(const Mat& w, const Vec& rho) {
  Vec D = (w * rho).array() + 1.0;
  return (w.array().rowwise() * rho.transpose().array()).colwise() / D.array();
}

Vec score(const Workspace& ws, const Mat& u) {
  const Eigen::Index q = u.cols(), L = ws.t.cols();
  Vec s(q * (1 + L));
  s.head(q) = ws.counts - u.colwise().sum().transpose();
  for (Eigen::Index j = 0; j < q; ++j) {
    s.segment(q + j * L, L) =
        ws.group_sums.row(j).transpose() - ws.t.transpose() * u.col(j);
  }
  return s;
}

Mat hessian(const Workspace& ws, const Mat& u) {
  const Eigen::Index q = u.cols(), L = ws.t.cols();
  Mat H = Mat::Zero(q * (1 + L), q * (1 + L));
  H.topLeftCorner(q, q) = u.transpose() * u;
  H.topLeftCorner(q, q).diagonal() -= u.colwise().sum().transpose();
  for (Eigen::Index j = 0; j < q; ++j) {
    for (Eigen::Index k = 0; k < q; ++k) {
      Vec c = (u.col(j).array() * u.col(k).array()).matrix();
      if (j == k) c -= u.col(j);
      Eigen::RowVectorXd tj = c.transpose() * ws.t;
      H.block(j, q + k * L, 1, L) = tj;
      H.block(q + k * L, j, L, 1) = tj.transpose();
      H.block(q + j * L, q + k * L, L, L) =
          ws.t.transpose() * c.asDiagonal() * ws.t;
    }
  }
  return H;
}

// Newton step for the concave objective: solve (-H) d = s.
Vec ascent_direction(const Mat& H, const Vec& s) {
  Mat A = -H;
  Eigen::LDLT<Mat> ldlt(A);
  Vec d;
  bool ok = ldlt.info() == Eigen::Success;
  if (ok) {
    const Vec dvec = ldlt.vectorD();
    ok = dvec.minCoeff() > 1e-14 * std::max(1.0, dvec.maxCoeff());
  }
  if (ok) {
    d = ldlt.solve(s);
    ok = d.allFinite();
  }
  if (!ok) {
    Eigen::SelfAdjointEigenSolver<Mat> es(A);
    const Vec ev = es.eigenvalues();
    const double cond =
        ev.minCoeff() > 0 ? ev.maxCoeff() / ev.minCoeff()
                          : std::numeric_limits<double>::infinity();
    throw NumericError("singular Hessian in Newton step; condition estimate " +
                       std::to_string(cond));
  }
  return d;
}

struct Moments {
  Vec center;
  Vec scale;
};

Moments pooled_moments(const Mat& t) {
  Moments m;
  m.center = t.colwise().mean();
  Mat c = t.rowwise() - m.center.transpose();
  const double denom = static_cast<double>(t.rows() > 1 ? t.rows() - 1 : 1);
  m.scale = (c.array().square().colwise().sum() / denom).sqrt();
  // a constant column (possible off the fitting path) keeps its raw scale
  for (Eigen::Index j = 0; j < m.scale.size(); ++j) {
    if (m.scale[j] == 0.0) m.scale[j] = 1.0;
  }
  return m;
}

void check_identifiable(const SampleSet& data, const Mat& combined) {
  const Eigen::Index q = static_cast<Eigen::Index>(data.num_tilts());
  const Eigen::Index L = data.dimension();
  if (combined.rows() < q * (1 + L) + 1) {
    throw InputError("need at least " + std::to_string(q * (1 + L) + 1) +
                     " observations for " + std::to_string(q * (1 + L)) +
                     " parameters, got " + std::to_string(combined.rows()));
  }
  for (Eigen::Index c = 0; c < L; ++c) {
    if (combined.col(c).maxCoeff() == combined.col(c).minCoeff()) {
      throw InputError("coordinate " + std::to_string(c) +
                       " is constant across the combined data; the tilt in "
                       "that direction is not identifiable");
    }
  }
}

FittedModel assemble(const SampleSet& data, const Mat& combined,
                     const ModelParams& raw_params, const Moments& mom) {
  FittedModel m;
  m.params = raw_params;
  m.combined = combined;
  m.group_of_row = data.combined_groups();
  for (const Sample& s : data.groups()) {
    m.labels.push_back(s.label);
    m.group_sizes.push_back(s.points.rows());
  }
  m.tilt_order = data.tilt_order();
  m.reference = data.reference();
  m.rho = data.rho();
  m.center = mom.center;
  m.scale = mom.scale;
  Mat w = tilt_matrix(raw_params, combined);
  Vec D = (w * m.rho).array() + 1.0;
  const double n_ref =
      static_cast<double>(data.group(data.reference()).points.rows());
  m.p_hat = (1.0 / n_ref) / D.array();
  return m;
}

}  // namespace

double profile_loglik(const ModelParams& params, const SampleSet& data) {
  return loglik(make_workspace(data.combined(), data), params);
}

Vec profile_score(const ModelParams& params, const SampleSet& data) {
  Workspace ws = make_workspace(data.combined(), data);
  Mat w;
  if (!tilt_exponents(ws, params, w)) {
    throw NumericError("tilt overflow while evaluating the score");
  }
  return score(ws, u_matrix(w, ws.rho));
}

Vec p_hat(const ModelParams& params, const SampleSet& data) {
  TiltWeights tw = tilt_weights(params, data);
  Vec D = (tw.w * tw.rho).array() + 1.0;
  const double n_ref =
      static_cast<double>(data.group(data.reference()).points.rows());
  return (1.0 / n_ref) / D.array();
}

FittedModel fit(const SampleSet& data, const FitOptions& opts) {
  const Eigen::Index q = static_cast<Eigen::Index>(data.num_tilts());
  const Eigen::Index L = data.dimension();
  const Eigen::Index P = q * (1 + L);
  Mat raw = data.combined();
  check_identifiable(data, raw);
  const Moments mom = pooled_moments(raw);

  Mat t = raw;
  if (opts.standardize) {
    t = (raw.rowwise() - mom.center.transpose()).array().rowwise() /
        mom.scale.transpose().array();
  }
  Workspace ws = make_workspace(t, data);

  Vec theta = Vec::Zero(P);
  if (opts.theta0) {
    ModelParams p0 = ModelParams::unpack(*opts.theta0, q, L);
    if (opts.standardize) {
      p0.alpha += p0.beta * mom.center;
      p0.beta = p0.beta.array().rowwise() * mom.scale.transpose().array();
    }
    theta = p0.pack();
  }

  // Active coordinates: everything, or just the alphas under fix_beta.
  const Eigen::Index na = opts.fix_beta ? q : P;
  auto unpack = [&](const Vec& th) { return ModelParams::unpack(th, q, L); };

  double l = loglik(ws, unpack(theta));
  if (l == kNegInf) {
    throw NumericError("tilt overflow at the starting parameters");
  }

  bool converged = false;
  int iter = 0;
  double rel_dl = std::numeric_limits<double>::infinity();
  double gnorm = 0.0;
  while (true) {
    Mat w;
    tilt_exponents(ws, unpack(theta), w);
    Mat u = u_matrix(w, ws.rho);
    Vec s = score(ws, u);
    gnorm = s.head(na).cwiseAbs().maxCoeff();
    if (gnorm <= opts.tol && (iter == 0 || rel_dl <= opts.loglik_rel_tol)) {
      converged = true;
      break;
    }
    if (iter >= opts.max_iter) break;

    Mat H = hessian(ws, u);
    Vec d = ascent_direction(H.topLeftCorner(na, na), s.head(na));
    double step = 1.0;
    double l_new = kNegInf;
    bool accepted = false;
    while (step >= 1e-14) {
      Vec cand = theta;
      cand.head(na) += step * d;
      l_new = loglik(ws, unpack(cand));
      if (l_new > l) {
        theta = cand;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // The likelihood is maximized to float resolution; the improvement from
      // a Newton step underflows while the score may sit marginally above
      // tol. Take the full step anyway when it clearly sharpens the score
      // residual, otherwise stop and judge convergence by the score alone.
      rel_dl = 0.0;
      Vec cand = theta;
      cand.head(na) += d;
      const double l_full = loglik(ws, unpack(cand));
      bool moved = false;
      if (l_full >= l - 1e-10 * (1.0 + std::abs(l))) {
        Mat wf;
        tilt_exponents(ws, unpack(cand), wf);
        Vec sf = score(ws, u_matrix(wf, ws.rho));
        if (sf.head(na).cwiseAbs().maxCoeff() <= 0.5 * gnorm) {
          theta = cand;
          l = std::max(l, l_full);
          moved = true;
        }
      }
      if (!moved) {
        converged = gnorm <= opts.tol;
        break;
      }
      ++iter;
      continue;
    }
    rel_dl = std::abs(l_new - l) / (1.0 + std::abs(l_new));
    l = l_new;
    ++iter;
  }

  ModelParams p = unpack(theta);
  if (opts.standardize) {
    p.beta = p.beta.array().rowwise() / mom.scale.transpose().array();
    p.alpha -= p.beta * mom.center;
  }
  FittedModel m = assemble(data, raw, p, mom);
  m.log_lik = profile_loglik(p, data);
  m.converged = converged;
  m.iterations = iter;
  m.grad_norm = gnorm;
  return m;
}

FittedModel evaluate_at(const ModelParams& params, const SampleSet& data) {
  const Eigen::Index q = static_cast<Eigen::Index>(data.num_tilts());
  if (params.num_tilts() != q || params.dimension() != data.dimension()) {
    throw InputError("parameter shape does not match the data");
  }
  Mat raw = data.combined();
  FittedModel m = assemble(data, raw, params, pooled_moments(raw));
  Workspace ws = make_workspace(raw, data);
  m.log_lik = loglik(ws, params);
  if (m.log_lik == kNegInf) {
    throw NumericError("tilt overflow at the supplied parameters");
  }
  Vec s = profile_score(params, data);
  m.grad_norm = s.cwiseAbs().maxCoeff();
  m.converged = m.grad_norm <= FitOptions{}.tol;
  m.iterations = 0;
  return m;
}

std::size_t FittedModel::tilt_of_group(std::size_t g) const {
  for (std::size_t j = 0; j < tilt_order.size(); ++j) {
    if (tilt_order[j] == g) return j;
  }
  throw InputError("group index " + std::to_string(g) + " out of range");
}

std::size_t FittedModel::group_by_label(const std::string& label) const {
  for (std::size_t g = 0; g < labels.size(); ++g) {
    if (labels[g] == label) return g;
  }
  throw InputError("unknown group label '" + label + "'");
}

Mat FittedModel::group_points(std::size_t g) const {
  const std::size_t j = tilt_of_group(g);
  Eigen::Index start = 0;
  for (std::size_t k = 0; k < j; ++k) {
    start += group_sizes[tilt_order[k]];
  }
  return combined.middleRows(start, group_sizes[g]);
}

double StepCdf::operator()(const Vec& t) const {
  if (t.size() != points.cols()) {
    throw InputError("query dimension " + std::to_string(t.size()) +
                     " does not match support dimension " +
                     std::to_string(points.cols()));
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    if ((points.row(i).transpose().array() <= t.array()).all()) {
      total += masses[i];
    }
  }
  return total;
}

StepCdf reference_cdf(const FittedModel& model) {
  return StepCdf{model.combined, model.p_hat};
}

StepCdf tilted_cdf(const FittedModel& model, std::size_t group) {
  if (group >= model.num_groups()) {
    throw InputError("group index " + std::to_string(group) + " out of range");
  }
  if (group == model.reference) return reference_cdf(model);
  const std::size_t j = model.tilt_of_group(group);
  Mat w = model.tilts();
  return StepCdf{model.combined,
                 (model.p_hat.array() * w.col(j).array()).matrix()};
}

}  // namespace drm
