#pragma once

#include "drm/diagnostics.hpp"

#include <cstdint>
#include <iosfwd>

namespace drm {

// Deterministic random stream. Substreams for (seed, replication, group)
// triples are derived with SplitMix64 so that results do not depend on how
// replications are scheduled across threads, and the variate transforms are
// fixed here rather than delegated to the standard library distributions,
// which keeps output identical across implementations.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);
  static RngStream substream(std::uint64_t seed, std::uint64_t replication,
                             std::uint64_t group);

  double uniform();  // [0, 1)
  double normal();   // Box-Muller

 private:
  std::uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;

  std::uint64_t next_u64();
};

Mat sample_mvn(const Vec& mu, const Mat& cov, Eigen::Index n, RngStream& rng);
// Multivariate Cauchy: mu + L z / |u| with z standard normal and u an
// independent standard normal, L the Cholesky factor of the scale matrix.
Mat sample_mvcauchy(const Vec& mu, const Mat& scale, Eigen::Index n,
                    RngStream& rng);
// Uniform on a triangle via the square-root reflection map.
Mat sample_triangle_uniform(const Vec& v1, const Vec& v2, const Vec& v3,
                            Eigen::Index n, RngStream& rng);

struct GroupSpec {
  std::string label;
  std::string family;  // mvn | mvcauchy | triangle_uniform
  Vec mean;
  Mat cov;
  Mat vertices;  // 3 x 2 for triangle_uniform
  Eigen::Index size = 0;
  bool reference = false;

  Mat draw(RngStream& rng) const;
};

struct Scenario {
  std::vector<GroupSpec> groups;
  std::size_t reference = 0;
  int replications = 1;
  std::uint64_t seed = 0;
  double bandwidth = 0.3;
  Kernel kernel = Kernel::gaussian;
  CandidateSet candidates = CandidateSet::combined;
  double gof_alpha = 0.10;
  double gof_k = 2.0;
  BandKind band = BandKind::binomial;
  bool gof = true;
  bool regression = true;
  bool nw = true;
};

Scenario parse_scenario(std::istream& in);
Scenario parse_scenario_text(const std::string& text);
Scenario parse_scenario_file(const std::string& path);

struct StudyRow {
  int replication = 0;           // -1 for aggregate rows
  std::string group;
  std::string kind;              // "rep", "mean" or "median"
  bool fit_ok = false;
  bool converged = false;
  std::vector<double> values;    // aligned with StudyTable::measure_names
};

struct StudyTable {
  std::vector<std::string> measure_names;
  std::vector<StudyRow> rows;    // replication-major, then aggregates
  int failures = 0;              // replications whose fit threw
  int non_converged = 0;

  std::string to_csv() const;
};

// Run the Monte Carlo study. Output is a deterministic function of the
// scenario alone; `threads` only changes the wall time.
StudyTable run_study(const Scenario& scenario, int threads = 1);

}  // namespace drm
