#include "drm/simulation.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

namespace drm {

namespace {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed) : state_(mix64(seed + kGamma)) {}

RngStream RngStream::substream(std::uint64_t seed, std::uint64_t replication,
                               std::uint64_t group) {
  std::uint64_t s = mix64(seed + kGamma);
  s = mix64(s ^ (replication + 0xBF58476D1CE4E5B9ULL));
  s = mix64(s ^ (group + 0x94D049BB133111EBULL));
  RngStream r(0);
  r.state_ = s;
  return r;
}

std::uint64_t RngStream::next_u64() {
  state_ += kGamma;
  return mix64(state_);
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * M_PI * u2;
  cached_ = r * std::sin(a);
  has_cached_ = true;
  return r * std::cos(a);
}

namespace {

Mat cholesky_factor(const Mat& cov, const char* what) {
  if (cov.rows() != cov.cols()) {
    throw InputError(std::string(what) + " matrix must be square");
  }
  Eigen::LLT<Mat> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw InputError(std::string(what) + " matrix is not positive definite");
  }
  return llt.matrixL();
}

}  // namespace

Mat sample_mvn(const Vec& mu, const Mat& cov, Eigen::Index n,
               RngStream& rng) {
  const Eigen::Index d = mu.size();
  if (cov.rows() != d) {
    throw InputError("mean and covariance dimensions do not match");
  }
  const Mat L = cholesky_factor(cov, "covariance");
  Mat out(n, d);
  Vec z(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < d; ++c) z[c] = rng.normal();
    out.row(i) = (mu + L * z).transpose();
  }
  return out;
}

Mat sample_mvcauchy(const Vec& mu, const Mat& scale, Eigen::Index n,
                    RngStream& rng) {
  const Eigen::Index d = mu.size();
  if (scale.rows() != d) {
    throw InputError("location and scale dimensions do not match");
  }
  const Mat L = cholesky_factor(scale, "scale");
  Mat out(n, d);
  Vec z(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < d; ++c) z[c] = rng.normal();
    double u = rng.normal();
    while (u == 0.0) u = rng.normal();
    out.row(i) = (mu + (L * z) / std::abs(u)).transpose();
  }
  return out;
}

Mat sample_triangle_uniform(const Vec& v1, const Vec& v2, const Vec& v3,
                            Eigen::Index n, RngStream& rng) {
  if (v1.size() != 2 || v2.size() != 2 || v3.size() != 2) {
    throw InputError("triangle vertices must be two-dimensional");
  }
  Mat out(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = std::sqrt(rng.uniform());
    const double r2 = rng.uniform();
    out.row(i) =
        ((1.0 - s) * v1 + s * (1.0 - r2) * v2 + s * r2 * v3).transpose();
  }
  return out;
}

Mat GroupSpec::draw(RngStream& rng) const {
  if (family == "mvn") return sample_mvn(mean, cov, size, rng);
  if (family == "mvcauchy") return sample_mvcauchy(mean, cov, size, rng);
  if (family == "triangle_uniform") {
    return sample_triangle_uniform(vertices.row(0).transpose(),
                                   vertices.row(1).transpose(),
                                   vertices.row(2).transpose(), size, rng);
  }
  throw InputError("unknown family '" + family + "'");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& tok, int line) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw InputError("scenario line " + std::to_string(line) +
                     ": cannot parse number '" + tok + "'");
  }
}

Vec parse_vector(const std::string& value, int line) {
  std::istringstream ss(value);
  std::vector<double> vals;
  std::string tok;
  while (ss >> tok) vals.push_back(parse_double(tok, line));
  if (vals.empty()) {
    throw InputError("scenario line " + std::to_string(line) +
                     ": expected numbers");
  }
  return Eigen::Map<Vec>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

Mat parse_matrix(const std::string& value, int line) {
  std::vector<Vec> rows;
  std::size_t start = 0;
  while (start <= value.size()) {
    const std::size_t semi = value.find(';', start);
    const std::string part =
        value.substr(start, semi == std::string::npos ? std::string::npos
                                                      : semi - start);
    rows.push_back(parse_vector(part, line));
    if (semi == std::string::npos) break;
    start = semi + 1;
  }
  Mat m(static_cast<Eigen::Index>(rows.size()), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) {
      throw InputError("scenario line " + std::to_string(line) +
                       ": ragged matrix rows");
    }
    m.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
  }
  return m;
}

bool parse_bool(const std::string& value, int line) {
  if (value == "on" || value == "true" || value == "1") return true;
  if (value == "off" || value == "false" || value == "0") return false;
  throw InputError("scenario line " + std::to_string(line) +
                   ": expected on/off, got '" + value + "'");
}

}  // namespace

Scenario parse_scenario(std::istream& in) {
  Scenario sc;
  GroupSpec* current = nullptr;
  bool have_reference = false;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string s = raw;
    const auto hash = s.find('#');
    if (hash != std::string::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') {
        throw InputError("scenario line " + std::to_string(line) +
                         ": unterminated section header");
      }
      std::istringstream head(s.substr(1, s.size() - 2));
      std::string kw, label;
      head >> kw >> label;
      if (kw != "group" || label.empty()) {
        throw InputError("scenario line " + std::to_string(line) +
                         ": expected [group LABEL]");
      }
      sc.groups.emplace_back();
      current = &sc.groups.back();
      current->label = label;
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw InputError("scenario line " + std::to_string(line) +
                       ": expected key = value");
    }
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (current == nullptr) {
      if (key == "replications") {
        sc.replications = static_cast<int>(parse_double(value, line));
      } else if (key == "seed") {
        sc.seed = static_cast<std::uint64_t>(parse_double(value, line));
      } else if (key == "bandwidth") {
        sc.bandwidth = parse_double(value, line);
      } else if (key == "kernel") {
        if (value == "gaussian") {
          sc.kernel = Kernel::gaussian;
        } else if (value == "epanechnikov") {
          sc.kernel = Kernel::epanechnikov;
        } else {
          throw InputError("scenario line " + std::to_string(line) +
                           ": kernel must be gaussian or epanechnikov");
        }
      } else if (key == "candidates") {
        if (value == "combined") {
          sc.candidates = CandidateSet::combined;
        } else if (value == "group") {
          sc.candidates = CandidateSet::group;
        } else {
          throw InputError("scenario line " + std::to_string(line) +
                           ": candidates must be combined or group");
        }
      } else if (key == "gof_alpha") {
        sc.gof_alpha = parse_double(value, line);
      } else if (key == "gof_k") {
        sc.gof_k = parse_double(value, line);
      } else if (key == "band") {
        if (value == "binomial") {
          sc.band = BandKind::binomial;
        } else if (value == "dkw") {
          sc.band = BandKind::dkw;
        } else {
          throw InputError("scenario line " + std::to_string(line) +
                           ": band must be binomial or dkw");
        }
      } else if (key == "gof") {
        sc.gof = parse_bool(value, line);
      } else if (key == "regression") {
        sc.regression = parse_bool(value, line);
      } else if (key == "nw") {
        sc.nw = parse_bool(value, line);
      } else {
        throw InputError("scenario line " + std::to_string(line) +
                         ": unknown key '" + key + "'");
      }
    } else {
      if (key == "family") {
        current->family = value;
      } else if (key == "mean") {
        current->mean = parse_vector(value, line);
      } else if (key == "cov") {
        current->cov = parse_matrix(value, line);
      } else if (key == "vertices") {
        current->vertices = parse_matrix(value, line);
      } else if (key == "n") {
        current->size = static_cast<Eigen::Index>(parse_double(value, line));
      } else if (key == "reference") {
        current->reference = parse_bool(value, line);
      } else {
        throw InputError("scenario line " + std::to_string(line) +
                         ": unknown group key '" + key + "'");
      }
    }
  }

  if (sc.groups.size() < 2) {
    throw InputError("scenario needs at least two [group ...] sections");
  }
  if (sc.replications < 1) throw InputError("replications must be positive");
  for (std::size_t g = 0; g < sc.groups.size(); ++g) {
    GroupSpec& gs = sc.groups[g];
    if (gs.size < 1) {
      throw InputError("group '" + gs.label + "' needs n >= 1");
    }
    if (gs.family == "mvn" || gs.family == "mvcauchy") {
      if (gs.mean.size() == 0 || gs.cov.size() == 0) {
        throw InputError("group '" + gs.label + "' needs mean and cov");
      }
    } else if (gs.family == "triangle_uniform") {
      if (gs.vertices.rows() != 3 || gs.vertices.cols() != 2) {
        throw InputError("group '" + gs.label +
                         "' needs vertices = x1 y1 ; x2 y2 ; x3 y3");
      }
    } else {
      throw InputError("group '" + gs.label + "': unknown family '" +
                       gs.family + "'");
    }
    if (gs.reference) {
      if (have_reference) {
        throw InputError("more than one group marked as reference");
      }
      have_reference = true;
      sc.reference = g;
    }
  }
  if (!have_reference) sc.reference = sc.groups.size() - 1;
  return sc;
}

Scenario parse_scenario_text(const std::string& text) {
  std::istringstream ss(text);
  return parse_scenario(ss);
}

Scenario parse_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open scenario file '" + path + "'");
  return parse_scenario(in);
}

namespace {

std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

double nan_mean(const std::vector<double>& v) {
  double s = 0.0;
  int c = 0;
  for (double x : v) {
    if (!std::isnan(x)) {
      s += x;
      ++c;
    }
  }
  return c > 0 ? s / c : std::numeric_limits<double>::quiet_NaN();
}

double nan_median(const std::vector<double>& v) {
  std::vector<double> w;
  for (double x : v) {
    if (!std::isnan(x)) w.push_back(x);
  }
  if (w.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(w.begin(), w.end());
  const std::size_t n = w.size();
  return n % 2 == 1 ? w[n / 2] : 0.5 * (w[n / 2 - 1] + w[n / 2]);
}

}  // namespace

StudyTable run_study(const Scenario& scenario, int threads) {
  if (threads < 1) threads = 1;
  StudyTable table;
  if (scenario.gof) {
    table.measure_names.insert(table.measure_names.end(),
                               {"r2_alpha_k", "x_count", "r2_3", "r2_3_median",
                                "r2_3_meansq", "max_abs_gap"});
  }
  if (scenario.regression) {
    table.measure_names.insert(table.measure_names.end(),
                               {"r2_1", "r2_2", "mse_drm", "mae_drm",
                                "mse_ols", "mae_ols"});
    if (scenario.nw) {
      table.measure_names.insert(table.measure_names.end(),
                                 {"mse_nw", "mae_nw"});
    }
  }

  const std::size_t m = scenario.groups.size();
  const std::size_t ncols = table.measure_names.size();
  const int R = scenario.replications;
  std::vector<std::vector<StudyRow>> per_rep(static_cast<std::size_t>(R));

  auto run_one = [&](int r) {
    std::vector<StudyRow> rows(m);
    for (std::size_t g = 0; g < m; ++g) {
      rows[g].replication = r;
      rows[g].kind = "rep";
      rows[g].group = scenario.groups[g].label;
      rows[g].values.assign(ncols,
                            std::numeric_limits<double>::quiet_NaN());
    }
    try {
      std::vector<Sample> samples;
      for (std::size_t g = 0; g < m; ++g) {
        RngStream rng = RngStream::substream(
            scenario.seed, static_cast<std::uint64_t>(r),
            static_cast<std::uint64_t>(g));
        samples.push_back(
            Sample{scenario.groups[g].label, scenario.groups[g].draw(rng)});
      }
      SampleSet data(samples, scenario.reference);
      FittedModel model = fit(data);
      GofOptions opts;
      opts.alpha = scenario.gof_alpha;
      opts.k = scenario.gof_k;
      opts.band = scenario.band;
      opts.bandwidth = scenario.bandwidth;
      opts.kernel = scenario.kernel;
      opts.candidates = scenario.candidates;
      opts.regression = scenario.regression;
      opts.nw = scenario.nw;
      const GofReport report =
          (scenario.gof || scenario.regression)
              ? gof_report(model, data, opts)
              : GofReport{};
      for (std::size_t g = 0; g < m; ++g) {
        StudyRow& row = rows[g];
        row.fit_ok = true;
        row.converged = model.converged;
        if (scenario.gof || scenario.regression) {
          const GroupGof& gg = report.groups[g];
          std::vector<double> vals;
          if (scenario.gof) {
            vals.insert(vals.end(),
                        {gg.r2_alpha_k, static_cast<double>(gg.x_count),
                         gg.r2_3, gg.r2_3_median, gg.r2_3_meansq,
                         gg.max_abs_gap});
          }
          if (scenario.regression) {
            vals.insert(vals.end(),
                        {gg.r2_1, gg.r2_2, gg.drm_score.mse, gg.drm_score.mae,
                         gg.ols_score.mse, gg.ols_score.mae});
            if (scenario.nw) {
              vals.insert(vals.end(), {gg.nw_score.mse, gg.nw_score.mae});
            }
          }
          row.values = std::move(vals);
        }
      }
    } catch (const std::runtime_error&) {
      // Row stays marked as failed; the study carries on.
    }
    per_rep[static_cast<std::size_t>(r)] = std::move(rows);
  };

  if (threads == 1) {
    for (int r = 0; r < R; ++r) run_one(r);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        while (true) {
          const int r = next.fetch_add(1);
          if (r >= R) break;
          run_one(r);
        }
      });
    }
    for (std::thread& t : pool) t.join();
  }

  for (auto& rows : per_rep) {
    for (auto& row : rows) {
      if (!row.fit_ok) ++table.failures;
      if (row.fit_ok && !row.converged) ++table.non_converged;
      table.rows.push_back(std::move(row));
    }
  }
  table.failures /= static_cast<int>(m);
  table.non_converged /= static_cast<int>(m);

  for (std::size_t g = 0; g < m; ++g) {
    std::vector<double> ok, conv;
    std::vector<std::vector<double>> cols(ncols);
    for (int r = 0; r < R; ++r) {
      const StudyRow& row =
          table.rows[static_cast<std::size_t>(r) * m + g];
      ok.push_back(row.fit_ok ? 1.0 : 0.0);
      conv.push_back(row.converged ? 1.0 : 0.0);
      for (std::size_t c = 0; c < ncols; ++c) {
        cols[c].push_back(row.values[c]);
      }
    }
    for (const char* kind : {"mean", "median"}) {
      StudyRow row;
      row.replication = -1;
      row.kind = kind;
      row.group = scenario.groups[g].label;
      const bool is_mean = std::string(kind) == "mean";
      row.fit_ok = true;
      row.converged = true;
      row.values.push_back(is_mean ? nan_mean(ok) : nan_median(ok));
      row.values.push_back(is_mean ? nan_mean(conv) : nan_median(conv));
      for (std::size_t c = 0; c < ncols; ++c) {
        row.values.push_back(is_mean ? nan_mean(cols[c])
                                     : nan_median(cols[c]));
      }
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

std::string StudyTable::to_csv() const {
  std::string out = "replication,group,fit_ok,converged";
  for (const std::string& m : measure_names) out += "," + m;
  out += "\n";
  for (const StudyRow& row : rows) {
    if (row.kind == "rep") {
      out += std::to_string(row.replication);
      out += "," + row.group;
      out += row.fit_ok ? ",1" : ",0";
      out += row.converged ? ",1" : ",0";
      for (double v : row.values) out += "," + fmt_double(v);
    } else {
      out += row.kind + "," + row.group;
      for (double v : row.values) out += "," + fmt_double(v);
    }
    out += "\n";
  }
  return out;
}

}  // namespace drm
