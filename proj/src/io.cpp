#include "drm/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace drm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(trim(line.substr(start)));
      break;
    }
    fields.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return fields;
}

bool try_parse_double(const std::string& tok, double& out) {
  const char* begin = tok.data();
  const char* end = tok.data() + tok.size();
  if (begin != end && *begin == '+') ++begin;  // from_chars rejects '+'
  const auto res = std::from_chars(begin, end, out);
  return res.ec == std::errc() && res.ptr == end && begin != end;
}

double parse_field(const std::string& tok, const std::string& name,
                   int line) {
  double v;
  if (!try_parse_double(tok, v)) {
    throw InputError(name + ":" + std::to_string(line) +
                     ": cannot parse number '" + tok + "'");
  }
  if (!std::isfinite(v)) {
    throw InputError(name + ":" + std::to_string(line) +
                     ": non-finite value '" + tok + "'");
  }
  return v;
}

std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

nlohmann::json matrix_to_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat matrix_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) {
    throw InputError("model file: '" + what + "' must be a nonempty array");
  }
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].size();
  Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) {
      throw InputError("model file: '" + what + "' is ragged");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          j[r][c].get<double>();
    }
  }
  return m;
}

Vec vector_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array()) {
    throw InputError("model file: '" + what + "' must be an array");
  }
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

nlohmann::json vector_to_json(const Vec& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

const nlohmann::json& require(const nlohmann::json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) {
    throw InputError(std::string("model file: missing field '") + key + "'");
  }
  return *it;
}

}  // namespace

std::vector<std::string> Dataset::group_labels() const {
  std::vector<std::string> labels;
  for (const std::string& g : group_of_row) {
    bool found = false;
    for (const std::string& l : labels) {
      if (l == g) {
        found = true;
        break;
      }
    }
    if (!found) labels.push_back(g);
  }
  return labels;
}

Dataset parse_data_csv(std::istream& in, const std::string& name) {
  std::string line;
  if (!std::getline(in, line)) {
    throw InputError(name + ":1: empty file");
  }
  const std::vector<std::string> header = split_csv_line(line);
  int group_col = -1;
  Dataset data;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "group") {
      if (group_col >= 0) {
        throw InputError(name + ":1: more than one 'group' column");
      }
      group_col = static_cast<int>(c);
    } else {
      data.column_names.push_back(header[c]);
    }
  }
  if (group_col < 0) {
    throw InputError(name + ":1: no 'group' column in header");
  }
  if (data.column_names.empty()) {
    throw InputError(name + ":1: no numeric columns in header");
  }

  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw InputError(name + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    }
    std::vector<double> row;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (static_cast<int>(c) == group_col) {
        if (fields[c].empty()) {
          throw InputError(name + ":" + std::to_string(lineno) +
                           ": empty group label");
        }
        data.group_of_row.push_back(fields[c]);
      } else {
        row.push_back(parse_field(fields[c], name, lineno));
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) {
    throw InputError(name + ": no data rows");
  }
  data.values.resize(static_cast<Eigen::Index>(rows.size()),
                     static_cast<Eigen::Index>(data.column_names.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      data.values(static_cast<Eigen::Index>(r),
                  static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return data;
}

Dataset read_data_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  return parse_data_csv(in, path);
}

SampleSet make_sample_set(const Dataset& data,
                          const std::string& reference_label) {
  const std::vector<std::string> labels = data.group_labels();
  if (labels.size() < 2) {
    throw InputError("need at least two distinct groups, got " +
                     std::to_string(labels.size()));
  }
  std::vector<Sample> samples;
  for (const std::string& label : labels) {
    std::vector<Eigen::Index> idx;
    for (std::size_t r = 0; r < data.group_of_row.size(); ++r) {
      if (data.group_of_row[r] == label) {
        idx.push_back(static_cast<Eigen::Index>(r));
      }
    }
    Mat pts(static_cast<Eigen::Index>(idx.size()), data.values.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      pts.row(static_cast<Eigen::Index>(i)) = data.values.row(idx[i]);
    }
    samples.push_back(Sample{label, std::move(pts)});
  }
  std::size_t ref = labels.size() - 1;
  if (!reference_label.empty()) {
    bool found = false;
    for (std::size_t g = 0; g < labels.size(); ++g) {
      if (labels[g] == reference_label) {
        ref = g;
        found = true;
        break;
      }
    }
    if (!found) {
      throw InputError("reference label '" + reference_label +
                       "' not present in the data");
    }
  }
  return SampleSet(std::move(samples), ref);
}

Mat read_query_csv(const std::string& path, Eigen::Index expected_cols) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::string line;
  std::vector<std::vector<double>> rows;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::vector<std::string> fields = split_csv_line(line);
    std::vector<double> row;
    bool numeric = true;
    for (const std::string& f : fields) {
      double v;
      if (!try_parse_double(f, v)) {
        numeric = false;
        break;
      }
      row.push_back(v);
    }
    if (!numeric) {
      if (lineno == 1) continue;  // header
      throw InputError(path + ":" + std::to_string(lineno) +
                       ": cannot parse numeric row");
    }
    if (static_cast<Eigen::Index>(row.size()) != expected_cols) {
      throw InputError(path + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(expected_cols) + " columns, got " +
                       std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) {
    throw InputError(path + ": no query rows");
  }
  Mat queries(static_cast<Eigen::Index>(rows.size()), expected_cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (Eigen::Index c = 0; c < expected_cols; ++c) {
      queries(static_cast<Eigen::Index>(r), c) =
          rows[r][static_cast<std::size_t>(c)];
    }
  }
  return queries;
}

nlohmann::json model_to_json(const FittedModel& model,
                             const std::vector<std::string>& column_names) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["dimension"] = model.dimension();
  j["log_lik"] = model.log_lik;
  j["converged"] = model.converged;
  j["iterations"] = model.iterations;
  j["grad_norm"] = model.grad_norm;
  j["alpha"] = vector_to_json(model.params.alpha);
  j["beta"] = matrix_to_json(model.params.beta);
  j["rho"] = vector_to_json(model.rho);
  j["p_hat"] = vector_to_json(model.p_hat);
  j["center"] = vector_to_json(model.center);
  j["scale"] = vector_to_json(model.scale);
  if (!column_names.empty()) j["column_names"] = column_names;
  nlohmann::json groups = nlohmann::json::array();
  for (std::size_t g = 0; g < model.num_groups(); ++g) {
    nlohmann::json jg;
    jg["label"] = model.labels[g];
    jg["size"] = model.group_sizes[g];
    jg["reference"] = g == model.reference;
    jg["points"] = matrix_to_json(model.group_points(g));
    groups.push_back(std::move(jg));
  }
  j["groups"] = groups;
  return j;
}

FittedModel model_from_json(const nlohmann::json& j) {
  FittedModel m;
  const nlohmann::json& groups = require(j, "groups");
  if (!groups.is_array() || groups.size() < 2) {
    throw InputError("model file: need at least two groups");
  }
  std::vector<Sample> samples;
  std::size_t ref = groups.size();
  for (std::size_t g = 0; g < groups.size(); ++g) {
    Sample s;
    s.label = require(groups[g], "label").get<std::string>();
    s.points = matrix_from_json(require(groups[g], "points"), "points");
    if (require(groups[g], "reference").get<bool>()) {
      if (ref != groups.size()) {
        throw InputError("model file: more than one reference group");
      }
      ref = g;
    }
    samples.push_back(std::move(s));
  }
  if (ref == groups.size()) {
    throw InputError("model file: no group marked as reference");
  }
  SampleSet data(samples, ref);

  m.params.alpha = vector_from_json(require(j, "alpha"), "alpha");
  m.params.beta = matrix_from_json(require(j, "beta"), "beta");
  m.p_hat = vector_from_json(require(j, "p_hat"), "p_hat");
  m.rho = vector_from_json(require(j, "rho"), "rho");
  m.center = vector_from_json(require(j, "center"), "center");
  m.scale = vector_from_json(require(j, "scale"), "scale");
  m.combined = data.combined();
  m.group_of_row = data.combined_groups();
  for (const Sample& s : data.groups()) {
    m.labels.push_back(s.label);
    m.group_sizes.push_back(s.points.rows());
  }
  m.tilt_order = data.tilt_order();
  m.reference = ref;
  m.log_lik = require(j, "log_lik").get<double>();
  m.converged = require(j, "converged").get<bool>();
  m.iterations = j.value("iterations", 0);
  m.grad_norm = j.value("grad_norm", 0.0);

  const Eigen::Index dim = require(j, "dimension").get<Eigen::Index>();
  if (dim != m.combined.cols()) {
    throw InputError("model file: dimension does not match the points");
  }
  if (m.params.alpha.size() !=
          static_cast<Eigen::Index>(groups.size()) - 1 ||
      m.params.beta.rows() != m.params.alpha.size() ||
      m.params.beta.cols() != dim) {
    throw InputError("model file: parameter shapes do not match");
  }
  if (m.p_hat.size() != m.combined.rows()) {
    throw InputError("model file: p_hat length does not match the points");
  }
  return m;
}

void save_model(const FittedModel& model, const std::string& path,
                const std::vector<std::string>& column_names,
                const nlohmann::json& extra) {
  nlohmann::json j = model_to_json(model, column_names);
  if (!extra.is_null()) {
    for (auto it = extra.begin(); it != extra.end(); ++it) {
      j[it.key()] = it.value();
    }
  }
  write_text_file(path, j.dump(2) + "\n");
}

namespace {

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("cannot parse '" + path + "': " + e.what());
  }
}

}  // namespace

FittedModel load_model(const std::string& path) {
  return model_from_json(read_json_file(path));
}

std::vector<std::string> model_column_names(const std::string& path) {
  const nlohmann::json j = read_json_file(path);
  std::vector<std::string> names;
  if (j.contains("column_names")) {
    for (const auto& n : j["column_names"]) {
      names.push_back(n.get<std::string>());
    }
  }
  return names;
}

nlohmann::json inference_to_json(const FittedModel& model,
                                 const AsymptoticCovariance& cov) {
  nlohmann::json j;
  j["sigma_form"] =
      cov.form == SigmaForm::sandwich ? "sandwich" : "alternative";
  j["se"] = vector_to_json(standard_errors(model, cov));
  j["S"] = matrix_to_json(cov.S);
  j["V"] = matrix_to_json(cov.V);
  j["sigma"] = matrix_to_json(cov.sigma);
  nlohmann::json wald = nlohmann::json::array();
  for (std::size_t g = 0; g < model.num_groups(); ++g) {
    if (g == model.reference) continue;
    const WaldTest t = wald_test(model, cov, g);
    wald.push_back({{"group", t.group},
                    {"statistic", t.statistic},
                    {"dof", t.dof},
                    {"p_value", t.p_value}});
  }
  j["wald"] = wald;
  const WaldTest tj = wald_joint(model, cov);
  j["wald_joint"] = {{"statistic", tj.statistic},
                     {"dof", tj.dof},
                     {"p_value", tj.p_value}};
  return j;
}

nlohmann::json gof_to_json(const GofReport& report) {
  nlohmann::json j;
  j["alpha"] = report.alpha;
  j["k"] = report.k;
  nlohmann::json groups = nlohmann::json::array();
  for (const GroupGof& g : report.groups) {
    nlohmann::json jg;
    jg["label"] = g.label;
    jg["reference"] = g.reference;
    jg["size"] = g.size;
    jg["x_count"] = g.x_count;
    jg["r2_alpha_k"] = g.r2_alpha_k;
    jg["r2_1"] = g.r2_1;
    jg["r2_2"] = g.r2_2;
    jg["r2_3"] = g.r2_3;
    jg["r2_3_median"] = g.r2_3_median;
    jg["r2_3_meansq"] = g.r2_3_meansq;
    jg["max_abs_gap"] = g.max_abs_gap;
    jg["mse"] = {{"semiparametric", g.drm_score.mse},
                 {"ols", g.ols_score.mse},
                 {"nw", g.nw_score.mse}};
    jg["mae"] = {{"semiparametric", g.drm_score.mae},
                 {"ols", g.ols_score.mae},
                 {"nw", g.nw_score.mae}};
    jg["residuals"] = vector_to_json(g.residuals);
    groups.push_back(std::move(jg));
  }
  j["groups"] = groups;
  return j;
}

std::string plot_pairs_csv(const GofReport& report) {
  std::string out = "group,point_index,empirical,semiparametric\n";
  for (const GroupGof& g : report.groups) {
    for (std::size_t k = 0; k < g.plot_pairs.size(); ++k) {
      out += g.label + "," + std::to_string(k) + "," +
             fmt_double(g.plot_pairs[k].first) + "," +
             fmt_double(g.plot_pairs[k].second) + "\n";
    }
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw InputError("failed writing '" + path + "'");
}

}  // namespace drm
