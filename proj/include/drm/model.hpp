#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace drm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Invalid user input: dimensions, labels, file contents.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure: overflow, singular systems, no effective support.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One labeled sample. Rows are observations (x_1, ..., x_{L-1}, y) with the
// response in the last column.
struct Sample {
  std::string label;
  Mat points;
};

// The m = q+1 samples entering the model, one of which is the reference.
// Construction validates shapes once; instances are immutable afterwards and
// safe to share across threads.
class SampleSet {
 public:
  SampleSet(std::vector<Sample> groups, std::size_t reference);

  const std::vector<Sample>& groups() const { return groups_; }
  const Sample& group(std::size_t g) const { return groups_.at(g); }
  std::size_t reference() const { return reference_; }

  std::size_t num_groups() const { return groups_.size(); }         // m
  std::size_t num_tilts() const { return groups_.size() - 1; }      // q
  Eigen::Index dimension() const { return groups_[0].points.cols(); }  // L
  Eigen::Index total_size() const;                                  // n

  // Group indices in combined order: non-reference groups first (original
  // order preserved), reference last. rho_j = n_{tilt_order[j]} / n_ref.
  const std::vector<std::size_t>& tilt_order() const { return tilt_order_; }
  Vec rho() const;

  // Pooled data in combined order, n x L.
  Mat combined() const;
  // Original group index of each combined row.
  std::vector<int> combined_groups() const;

  // Tilt slot of a group: j in [0, q) for non-reference groups, q for the
  // reference.
  std::size_t tilt_of_group(std::size_t g) const;

 private:
  std::vector<Sample> groups_;
  std::size_t reference_;
  std::vector<std::size_t> tilt_order_;
};

// Tilt parameters. Row j of beta is beta_j', so the density ratio of
// non-reference group j to the reference is exp(alpha_j + beta_j' t).
struct ModelParams {
  Vec alpha;  // q
  Mat beta;   // q x L

  Eigen::Index num_tilts() const { return alpha.size(); }
  Eigen::Index dimension() const { return beta.cols(); }

  // theta = (alpha_1..alpha_q, beta_1', ..., beta_q')'.
  Vec pack() const;
  static ModelParams unpack(const Vec& theta, Eigen::Index q, Eigen::Index L);
};

// w(i, j) = exp(alpha_j + beta_j' t_i) over the combined points.
struct TiltWeights {
  Mat w;    // n x q
  Vec rho;  // q
};

// Exponents larger than this overflow a double; evaluation refuses to
// saturate and reports the offending term instead.
inline constexpr double kMaxTiltExponent = 700.0;

TiltWeights tilt_weights(const ModelParams& params, const SampleSet& data);

// Same computation on a raw point matrix (rows = observations).
Mat tilt_matrix(const ModelParams& params, const Mat& points);

}  // namespace drm
