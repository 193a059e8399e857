#include "drm/model.hpp"

#include <cmath>
#include <set>

namespace drm {

SampleSet::SampleSet(std::vector<Sample> groups, std::size_t reference)
    : groups_(std::move(groups)), reference_(reference) {
  if (groups_.size() < 2) {
    throw InputError("need at least two groups, got " +
                     std::to_string(groups_.size()));
  }
  if (reference_ >= groups_.size()) {
    throw InputError("reference index " + std::to_string(reference_) +
                     " out of range for " + std::to_string(groups_.size()) +
                     " groups");
  }
  const Eigen::Index L = groups_[0].points.cols();
  if (L < 1) throw InputError("observations must have at least one column");
  std::set<std::string> seen;
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    const Sample& s = groups_[g];
    if (s.label.empty()) {
      throw InputError("group " + std::to_string(g) + " has an empty label");
    }
    if (!seen.insert(s.label).second) {
      throw InputError("duplicate group label '" + s.label + "'");
    }
    if (s.points.rows() == 0) {
      throw InputError("group '" + s.label + "' is empty");
    }
    if (s.points.cols() != L) {
      throw InputError("group '" + s.label + "' has dimension " +
                       std::to_string(s.points.cols()) + ", expected " +
                       std::to_string(L));
    }
    if (!s.points.allFinite()) {
      throw InputError("group '" + s.label + "' contains non-finite values");
    }
  }
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    if (g != reference_) tilt_order_.push_back(g);
  }
  tilt_order_.push_back(reference_);
}

Eigen::Index SampleSet::total_size() const {
  Eigen::Index n = 0;
  for (const Sample& s : groups_) n += s.points.rows();
  return n;
}

Vec SampleSet::rho() const {
  const double n_ref = static_cast<double>(groups_[reference_].points.rows());
  Vec r(num_tilts());
  for (std::size_t j = 0; j < num_tilts(); ++j) {
    r[j] = static_cast<double>(groups_[tilt_order_[j]].points.rows()) / n_ref;
  }
  return r;
}

Mat SampleSet::combined() const {
  Mat t(total_size(), dimension());
  Eigen::Index row = 0;
  for (std::size_t g : tilt_order_) {
    const Mat& pts = groups_[g].points;
    t.middleRows(row, pts.rows()) = pts;
    row += pts.rows();
  }
  return t;
}

std::vector<int> SampleSet::combined_groups() const {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(total_size()));
  for (std::size_t g : tilt_order_) {
    out.insert(out.end(), static_cast<std::size_t>(groups_[g].points.rows()),
               static_cast<int>(g));
  }
  return out;
}

std::size_t SampleSet::tilt_of_group(std::size_t g) const {
  for (std::size_t j = 0; j < tilt_order_.size(); ++j) {
    if (tilt_order_[j] == g) return j;
  }
  throw InputError("group index " + std::to_string(g) + " out of range");
}

Vec ModelParams::pack() const {
  Vec theta(alpha.size() + beta.size());
  theta.head(alpha.size()) = alpha;
  for (Eigen::Index j = 0; j < beta.rows(); ++j) {
    theta.segment(alpha.size() + j * beta.cols(), beta.cols()) =
        beta.row(j).transpose();
  }
  return theta;
}

ModelParams ModelParams::unpack(const Vec& theta, Eigen::Index q,
                                Eigen::Index L) {
  if (theta.size() != q * (1 + L)) {
    throw InputError("parameter vector has length " +
                     std::to_string(theta.size()) + ", expected " +
                     std::to_string(q * (1 + L)));
  }
  ModelParams p;
  p.alpha = theta.head(q);
  p.beta.resize(q, L);
  for (Eigen::Index j = 0; j < q; ++j) {
    p.beta.row(j) = theta.segment(q + j * L, L).transpose();
  }
  return p;
}

Mat tilt_matrix(const ModelParams& params, const Mat& points) {
  if (params.dimension() != points.cols()) {
    throw InputError("parameter dimension " +
                     std::to_string(params.dimension()) +
                     " does not match data dimension " +
                     std::to_string(points.cols()));
  }
  if (!params.alpha.allFinite() || !params.beta.allFinite()) {
    throw NumericError("non-finite tilt parameters");
  }
  Mat e = (points * params.beta.transpose()).rowwise() +
          params.alpha.transpose();
  const double emax = e.size() > 0 ? e.maxCoeff() : 0.0;
  if (emax > kMaxTiltExponent) {
    Eigen::Index i, j;
    e.maxCoeff(&i, &j);
    throw NumericError("tilt overflow: exponent " + std::to_string(emax) +
                       " at observation " + std::to_string(i) + ", tilt " +
                       std::to_string(j));
  }
  return e.array().exp();
}

TiltWeights tilt_weights(const ModelParams& params, const SampleSet& data) {
  if (params.num_tilts() != static_cast<Eigen::Index>(data.num_tilts())) {
    throw InputError("parameter count " + std::to_string(params.num_tilts()) +
                     " does not match " + std::to_string(data.num_tilts()) +
                     " non-reference groups");
  }
  return TiltWeights{tilt_matrix(params, data.combined()), data.rho()};
}

}  // namespace drm
