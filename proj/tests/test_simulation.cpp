#include <doctest.h>

#include "drm/simulation.hpp"

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

using drm::InputError;
using drm::Mat;
using drm::RngStream;
using drm::Scenario;
using drm::StudyTable;
using drm::Vec;

namespace {

const char* kToyScenario = R"(# toy two-gaussian study
replications = 4
seed = 99
bandwidth = 0.25
candidates = group
gof_alpha = 0.05
gof_k = 3
band = dkw

[group case]
family = mvn
mean = 0 0
cov = 2 0.5; 0.5 1
n = 40

[group control]
family = mvn
mean = 0.5 0.5
cov = 2 0.5; 0.5 1
n = 35
reference = true
)";

std::vector<std::string> split_lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string tok;
  while (std::getline(in, tok, ',')) out.push_back(tok);
  return out;
}

}  // namespace

TEST_CASE("rng streams are deterministic and order independent") {
  RngStream a(12345), b(12345);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.uniform() == b.uniform());
  }

  RngStream s1 = RngStream::substream(7, 3, 1);
  double first = s1.uniform();
  RngStream s0 = RngStream::substream(7, 0, 0);
  (void)s0.uniform();
  RngStream s1_again = RngStream::substream(7, 3, 1);
  CHECK(s1_again.uniform() == first);

  // distinct triples give distinct streams
  CHECK(RngStream::substream(7, 3, 2).uniform() != first);
  CHECK(RngStream::substream(7, 4, 1).uniform() != first);
  CHECK(RngStream::substream(8, 3, 1).uniform() != first);
}

TEST_CASE("uniform and normal variates have the right shape") {
  RngStream rng(31415);
  double mean = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    mean += u;
    sq += u * u;
  }
  mean /= n;
  CHECK(std::abs(mean - 0.5) < 0.01);
  CHECK(std::abs(sq / n - 1.0 / 3.0) < 0.01);

  double nmean = 0.0, nsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    nmean += z;
    nsq += z * z;
  }
  nmean /= n;
  CHECK(std::abs(nmean) < 0.03);
  CHECK(std::abs(nsq / n - 1.0) < 0.05);
}

TEST_CASE("gaussian sampler reproduces its moments") {
  Vec mu(2);
  mu << 1.0, -2.0;
  Mat cov(2, 2);
  cov << 4.0, 1.5, 1.5, 2.0;
  RngStream rng(271828);
  Mat x = drm::sample_mvn(mu, cov, 40000, rng);
  REQUIRE(x.rows() == 40000);

  Vec mean = x.colwise().mean().transpose();
  CHECK(std::abs(mean[0] - 1.0) < 0.05);
  CHECK(std::abs(mean[1] + 2.0) < 0.05);
  Mat c = x.rowwise() - mean.transpose();
  Mat sample_cov = c.transpose() * c / (x.rows() - 1.0);
  CHECK(std::abs(sample_cov(0, 0) - 4.0) < 0.15);
  CHECK(std::abs(sample_cov(0, 1) - 1.5) < 0.10);
  CHECK(std::abs(sample_cov(1, 1) - 2.0) < 0.10);
}

TEST_CASE("cauchy sampler centers at its location") {
  Vec mu(2);
  mu << 1.0, -1.0;
  Mat scale = Mat::Identity(2, 2);
  RngStream rng(161803);
  Mat x = drm::sample_mvcauchy(mu, scale, 20001, rng);

  for (int j = 0; j < 2; ++j) {
    std::vector<double> col(x.col(j).data(), x.col(j).data() + x.rows());
    std::nth_element(col.begin(), col.begin() + 10000, col.end());
    CHECK(std::abs(col[10000] - mu[j]) < 0.05);
  }
}

TEST_CASE("triangle sampler stays inside and centers at the centroid") {
  Vec v1(2), v2(2), v3(2);
  v1 << 0, 0;
  v2 << 6, 0;
  v3 << -3, 4;
  RngStream rng(141421);
  Mat x = drm::sample_triangle_uniform(v1, v2, v3, 20000, rng);

  // barycentric membership
  Mat T(2, 2);
  T.col(0) = v2 - v1;
  T.col(1) = v3 - v1;
  Mat Tinv = T.inverse();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Vec lambda = Tinv * (x.row(i).transpose() - v1);
    CHECK(lambda[0] >= -1e-12);
    CHECK(lambda[1] >= -1e-12);
    CHECK(lambda[0] + lambda[1] <= 1.0 + 1e-12);
  }
  Vec centroid = (v1 + v2 + v3) / 3.0;
  Vec mean = x.colwise().mean().transpose();
  CHECK(std::abs(mean[0] - centroid[0]) < 0.05);
  CHECK(std::abs(mean[1] - centroid[1]) < 0.05);
}

TEST_CASE("scenario parser reads every key") {
  Scenario sc = drm::parse_scenario_text(kToyScenario);
  CHECK(sc.replications == 4);
  CHECK(sc.seed == 99);
  CHECK(sc.bandwidth == 0.25);
  CHECK(sc.candidates == drm::CandidateSet::group);
  CHECK(sc.gof_alpha == 0.05);
  CHECK(sc.gof_k == 3.0);
  CHECK(sc.band == drm::BandKind::dkw);
  REQUIRE(sc.groups.size() == 2);
  CHECK(sc.groups[0].label == "case");
  CHECK(sc.groups[0].family == "mvn");
  CHECK(sc.groups[0].size == 40);
  CHECK(sc.groups[0].cov(0, 1) == 0.5);
  CHECK(sc.groups[1].mean[0] == 0.5);
  CHECK(sc.reference == 1);
}

TEST_CASE("scenario parser defaults the reference to the last group") {
  std::string text = R"(replications = 1
[group a]
family = mvn
mean = 0
cov = 1
n = 10
[group b]
family = mvn
mean = 0
cov = 1
n = 10
)";
  CHECK(drm::parse_scenario_text(text).reference == 1);
}

TEST_CASE("scenario parser reports the offending line") {
  auto message_of = [](const std::string& text) -> std::string {
    try {
      drm::parse_scenario_text(text);
      return "";
    } catch (const InputError& e) {
      return e.what();
    }
  };

  CHECK(message_of("bogus = 1\n") ==
        "scenario line 1: unknown key 'bogus'");
  CHECK(message_of("replications = 2\nseed = x\n") ==
        "scenario line 2: cannot parse number 'x'");
  CHECK(message_of("band = wide\n").find("binomial or dkw") !=
        std::string::npos);
  CHECK(message_of("candidates = all\n").find("combined or group") !=
        std::string::npos);
  CHECK(message_of("kernel = box\n").find("gaussian or epanechnikov") !=
        std::string::npos);
  CHECK(message_of("[group a\n").find("line 1") != std::string::npos);
  CHECK(message_of("replications = 1\n").find("at least two") !=
        std::string::npos);
  CHECK(message_of("[group a]\nfamily = mvn\nwat = 1\n") ==
        "scenario line 3: unknown group key 'wat'");
}

TEST_CASE("studies are reproducible across runs and thread counts") {
  Scenario sc = drm::parse_scenario_text(kToyScenario);
  StudyTable one = drm::run_study(sc, 1);
  StudyTable again = drm::run_study(sc, 1);
  StudyTable threaded = drm::run_study(sc, 3);
  CHECK(one.to_csv() == again.to_csv());
  CHECK(one.to_csv() == threaded.to_csv());
  CHECK(one.failures == 0);
}

TEST_CASE("study tables carry rows, aggregates, and the documented header") {
  Scenario sc = drm::parse_scenario_text(kToyScenario);
  StudyTable t = drm::run_study(sc, 1);
  std::vector<std::string> lines = split_lines(t.to_csv());

  // 4 reps x 2 groups + mean and median rows per group, plus the header
  REQUIRE(lines.size() == 1 + 8 + 4);
  std::vector<std::string> head = split_csv(lines[0]);
  REQUIRE(head.size() >= 5);
  CHECK(head[0] == "replication");
  CHECK(head[1] == "group");
  CHECK(head[2] == "fit_ok");
  CHECK(head[3] == "converged");
  CHECK(head[4] == "r2_alpha_k");

  // aggregate of one column recomputed from the replication rows
  const std::size_t col = 4;
  std::vector<double> case_vals;
  for (std::size_t i = 1; i <= 8; ++i) {
    std::vector<std::string> f = split_csv(lines[i]);
    if (f[1] == "case") case_vals.push_back(std::stod(f[col]));
  }
  REQUIRE(case_vals.size() == 4);
  double mean = 0.0;
  for (double v : case_vals) mean += v;
  mean /= 4.0;
  std::sort(case_vals.begin(), case_vals.end());
  const double median = 0.5 * (case_vals[1] + case_vals[2]);

  bool saw_mean = false, saw_median = false;
  for (std::size_t i = 9; i < lines.size(); ++i) {
    std::vector<std::string> f = split_csv(lines[i]);
    if (f[1] != "case") continue;
    if (f[0] == "mean") {
      CHECK(std::stod(f[col]) == doctest::Approx(mean).epsilon(1e-10));
      saw_mean = true;
    }
    if (f[0] == "median") {
      CHECK(std::stod(f[col]) == doctest::Approx(median).epsilon(1e-10));
      saw_median = true;
    }
  }
  CHECK(saw_mean);
  CHECK(saw_median);
}

TEST_CASE("failed replications are recorded, not fatal") {
  // both groups live on the same line, so one tilt direction is
  // unidentified and the hessian is singular in every replication
  std::string text = R"(replications = 3
seed = 5
regression = off
nw = off
[group flat]
family = triangle_uniform
vertices = 0 0; 1 1; 2 2
n = 30
[group ref]
family = triangle_uniform
vertices = -3 -3; -1 -1; 1 1
n = 30
)";
  Scenario sc = drm::parse_scenario_text(text);
  StudyTable t = drm::run_study(sc, 1);
  CHECK(t.failures == 3);

  std::vector<std::string> lines = split_lines(t.to_csv());
  std::vector<std::string> row = split_csv(lines[1]);
  CHECK(row[2] == "0");  // fit_ok
  bool has_nan = false;
  for (std::size_t i = 4; i < row.size(); ++i) {
    if (row[i] == "nan") has_nan = true;
  }
  CHECK(has_nan);
}
