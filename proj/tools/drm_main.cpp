#include "drm/io.hpp"
#include "drm/simulation.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>

namespace {

using drm::Mat;
using drm::Vec;

std::string fmt(double v, const char* spec = "%.6g") {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::string fmt_full(double v) { return fmt(v, "%.12g"); }

drm::Kernel parse_kernel(const std::string& s) {
  if (s == "gaussian") return drm::Kernel::gaussian;
  if (s == "epanechnikov") return drm::Kernel::epanechnikov;
  throw drm::InputError("unknown kernel '" + s + "'");
}

drm::CandidateSet parse_candidates(const std::string& s) {
  if (s == "combined") return drm::CandidateSet::combined;
  if (s == "group") return drm::CandidateSet::group;
  throw drm::InputError("unknown candidate set '" + s + "'");
}

drm::BandKind parse_band(const std::string& s) {
  if (s == "binomial") return drm::BandKind::binomial;
  if (s == "dkw") return drm::BandKind::dkw;
  throw drm::InputError("unknown band '" + s + "'");
}

struct FitArgs {
  std::string data_path, out_path, reference, sigma_form = "sandwich";
  double tol = 1e-8;
  int max_iter = 200;
  bool no_standardize = false;
  bool no_inference = false;
};

int cmd_fit(const FitArgs& a) {
  const drm::Dataset data = drm::read_data_csv(a.data_path);
  const drm::SampleSet set = drm::make_sample_set(data, a.reference);
  drm::FitOptions opts;
  opts.tol = a.tol;
  opts.max_iter = a.max_iter;
  opts.standardize = !a.no_standardize;
  const drm::FittedModel model = drm::fit(set, opts);

  const double sum_p = model.p_hat.sum();
  Mat w = model.tilts();
  double max_tilt_gap = 0.0;
  for (Eigen::Index j = 0; j < model.num_tilts(); ++j) {
    max_tilt_gap = std::max(
        max_tilt_gap, std::abs((w.col(j).array() * model.p_hat.array()).sum() -
                               1.0));
  }

  std::cout << "fitted density ratio model: L=" << model.dimension()
            << ", m=" << model.num_groups() << " groups, n=" << model.n()
            << " (reference: " << model.labels[model.reference] << ")\n";
  std::cout << "converged: " << (model.converged ? "yes" : "NO") << " ("
            << model.iterations << " iterations, max|score| = "
            << fmt(model.grad_norm, "%.3e") << ")\n";
  std::cout << "log-likelihood: " << fmt_full(model.log_lik) << "\n";
  std::cout << "constraint residuals: |sum p - 1| = "
            << fmt(std::abs(sum_p - 1.0), "%.3e")
            << ", max_j |sum w_j p - 1| = " << fmt(max_tilt_gap, "%.3e")
            << "\n\n";

  nlohmann::json extra;
  std::optional<drm::AsymptoticCovariance> cov;
  if (!a.no_inference) {
    try {
      cov = drm::asymptotic_covariance(
          model, a.sigma_form == "alternative" ? drm::SigmaForm::alternative
                                               : drm::SigmaForm::sandwich);
      extra["inference"] = drm::inference_to_json(model, *cov);
    } catch (const drm::NumericError& e) {
      std::cout << "warning: covariance estimation failed: " << e.what()
                << "\n";
    }
  }

  const Eigen::Index q = model.num_tilts();
  const Eigen::Index L = model.dimension();
  Vec se;
  if (cov) se = drm::standard_errors(model, *cov);
  std::printf("%-12s %-10s %12s %12s %8s\n", "group", "param", "estimate",
              "std.err", "z");
  const Vec theta = model.params.pack();
  for (Eigen::Index j = 0; j < q; ++j) {
    const std::string label = model.labels[model.group_of_tilt(j)];
    for (Eigen::Index c = 0; c <= L; ++c) {
      const Eigen::Index idx = c == 0 ? j : q + j * L + (c - 1);
      const std::string pname =
          c == 0 ? "alpha" : "beta[" + std::to_string(c - 1) + "]";
      std::string se_s = "-", z_s = "-";
      if (cov) {
        se_s = fmt(se[idx]);
        z_s = fmt(theta[idx] / se[idx], "%.3f");
      }
      std::printf("%-12s %-10s %12s %12s %8s\n", label.c_str(), pname.c_str(),
                  fmt(theta[idx]).c_str(), se_s.c_str(), z_s.c_str());
    }
  }
  if (cov) {
    for (std::size_t g = 0; g < model.num_groups(); ++g) {
      if (g == model.reference) continue;
      const drm::WaldTest t = drm::wald_test(model, *cov, g);
      std::cout << "Wald (" << t.group << "): W = " << fmt(t.statistic)
                << ", dof = " << t.dof << ", p = " << fmt(t.p_value, "%.4g")
                << "\n";
    }
    const drm::WaldTest t = drm::wald_joint(model, *cov);
    std::cout << "Wald (joint): W = " << fmt(t.statistic)
              << ", dof = " << t.dof << ", p = " << fmt(t.p_value, "%.4g")
              << "\n";
  }

  if (!model.converged) {
    std::cout << "warning: maximization did not converge; estimates are the "
                 "best iterate\n";
  }
  drm::save_model(model, a.out_path, data.column_names, extra);
  std::cout << "wrote " << a.out_path << "\n";
  return 0;
}

struct PredictArgs {
  std::string model_path, query_path, out_path, group;
  std::string method = "drm", kernel = "gaussian", candidates = "combined";
  std::string nw_bandwidths;
  double bandwidth = 0.3;
  bool raw_coords = false;
};

int cmd_predict(const PredictArgs& a) {
  const drm::FittedModel model = drm::load_model(a.model_path);
  const Eigen::Index d = model.dimension() - 1;
  if (d == 0) {
    throw drm::InputError("the model has no covariate columns to predict from");
  }
  const Mat queries = drm::read_query_csv(a.query_path, d);
  const std::size_t group = model.group_by_label(a.group);

  Vec pred(queries.rows());
  std::vector<bool> ok(queries.rows(), true);
  if (a.method == "drm") {
    pred = drm::predict_batch(model, queries, group, a.bandwidth,
                              parse_kernel(a.kernel),
                              parse_candidates(a.candidates), !a.raw_coords,
                              &ok);
  } else if (a.method == "nw") {
    const Mat sample = model.group_points(group);
    Vec bw;
    if (a.nw_bandwidths.empty()) {
      bw = drm::nw_default_bandwidths(sample);
    } else {
      std::vector<double> vals;
      std::istringstream ss(a.nw_bandwidths);
      std::string tok;
      while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
      if (static_cast<Eigen::Index>(vals.size()) != d) {
        throw drm::InputError("need one NW bandwidth per covariate");
      }
      bw = Eigen::Map<Vec>(vals.data(), d);
    }
    for (Eigen::Index r = 0; r < queries.rows(); ++r) {
      try {
        pred[r] = drm::nadaraya_watson(sample, queries.row(r).transpose(), bw,
                                       parse_kernel(a.kernel));
      } catch (const drm::NumericError&) {
        pred[r] = std::numeric_limits<double>::quiet_NaN();
        ok[static_cast<std::size_t>(r)] = false;
      }
    }
  } else if (a.method == "ols") {
    const drm::OlsFit f = drm::ols_fit(model.group_points(group));
    for (Eigen::Index r = 0; r < queries.rows(); ++r) {
      pred[r] = drm::ols_predict(f, queries.row(r).transpose());
    }
  } else {
    throw drm::InputError("unknown method '" + a.method + "'");
  }

  std::vector<std::string> names = drm::model_column_names(a.model_path);
  std::string csv;
  for (Eigen::Index c = 0; c < d; ++c) {
    csv += (static_cast<Eigen::Index>(names.size()) > c
                ? names[static_cast<std::size_t>(c)]
                : "x" + std::to_string(c + 1)) +
           ",";
  }
  csv += "group,method,prediction\n";
  for (Eigen::Index r = 0; r < queries.rows(); ++r) {
    for (Eigen::Index c = 0; c < d; ++c) csv += fmt_full(queries(r, c)) + ",";
    csv += a.group + "," + a.method + "," + fmt_full(pred[r]) + "\n";
  }
  drm::write_text_file(a.out_path, csv);

  Eigen::Index failed = 0;
  for (bool b : ok) failed += b ? 0 : 1;
  std::cout << "wrote " << a.out_path << ": " << queries.rows()
            << " predictions (" << failed << " without support)\n";
  if (failed == queries.rows()) {
    throw drm::NumericError("no query point had effective support");
  }
  if (failed > 0) {
    std::cerr << "drm: E_PARTIAL: " << failed << " of " << queries.rows()
              << " query points had no effective support\n";
    return 4;
  }
  return 0;
}

struct GofArgs {
  std::string model_path, data_path, out_path, plot_path;
  std::string band = "binomial", variant = "max", kernel = "gaussian";
  std::string candidates = "combined";
  double alpha = 0.10, k = 2.0, bandwidth = 0.3;
  bool per_group_n = false, no_regression = false, no_nw = false;
};

int cmd_gof(const GofArgs& a) {
  const drm::FittedModel model = drm::load_model(a.model_path);
  const drm::Dataset data = drm::read_data_csv(a.data_path);
  const drm::SampleSet set =
      drm::make_sample_set(data, model.labels[model.reference]);
  drm::GofOptions opts;
  opts.alpha = a.alpha;
  opts.k = a.k;
  opts.band = parse_band(a.band);
  opts.per_group_n = a.per_group_n;
  opts.bandwidth = a.bandwidth;
  opts.kernel = parse_kernel(a.kernel);
  opts.candidates = parse_candidates(a.candidates);
  opts.regression = !a.no_regression;
  opts.nw = !a.no_nw;
  const drm::GofReport report = drm::gof_report(model, set, opts);

  std::printf("%-12s %6s %6s %10s %8s %8s %8s %10s %10s\n", "group", "n", "x",
              "r2_alpha_k", "r2_1", "r2_2", "r2_3", "mse_drm", "mse_ols");
  for (const drm::GroupGof& g : report.groups) {
    const double r23 = a.variant == "median"   ? g.r2_3_median
                       : a.variant == "meansq" ? g.r2_3_meansq
                                               : g.r2_3;
    std::printf("%-12s %6lld %6d %10s %8s %8s %8s %10s %10s\n",
                g.label.c_str(), static_cast<long long>(g.size), g.x_count,
                fmt(g.r2_alpha_k, "%.4f").c_str(), fmt(g.r2_1, "%.4f").c_str(),
                fmt(g.r2_2, "%.4f").c_str(), fmt(r23, "%.4f").c_str(),
                fmt(g.drm_score.mse).c_str(), fmt(g.ols_score.mse).c_str());
  }

  nlohmann::json j = drm::gof_to_json(report);
  j["band"] = a.band;
  j["bandwidth"] = a.bandwidth;
  j["variant"] = a.variant;
  drm::write_text_file(a.out_path, j.dump(2) + "\n");
  std::cout << "wrote " << a.out_path << "\n";
  if (!a.plot_path.empty()) {
    drm::write_text_file(a.plot_path, drm::plot_pairs_csv(report));
    std::cout << "wrote " << a.plot_path << "\n";
  }
  return 0;
}

struct SimArgs {
  std::string scenario_path, out_path;
  std::uint64_t seed = 0;
  bool has_seed = false;
  int replications = 0;
  int threads = 1;
};

int cmd_simulate(const SimArgs& a) {
  drm::Scenario sc = drm::parse_scenario_file(a.scenario_path);
  if (a.has_seed) sc.seed = a.seed;
  if (a.replications > 0) sc.replications = a.replications;
  const drm::StudyTable table = drm::run_study(sc, a.threads);
  drm::write_text_file(a.out_path, table.to_csv());
  std::cout << "wrote " << a.out_path << ": " << sc.replications
            << " replications x " << sc.groups.size() << " groups, "
            << table.failures << " failed fits, " << table.non_converged
            << " non-converged\n";
  if (table.failures > 0) {
    std::cerr << "drm: E_PARTIAL: " << table.failures << " of "
              << sc.replications << " replications failed\n";
    return 4;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Multi-sample density ratio model estimation, semiparametric "
      "regression, and diagnostics"};
  app.require_subcommand(1);

  FitArgs fa;
  CLI::App* fit = app.add_subcommand("fit", "Fit the model to labeled data");
  fit->add_option("data", fa.data_path, "data.csv with a 'group' column")
      ->required();
  fit->add_option("--out", fa.out_path, "output model.json")->required();
  fit->add_option("--reference", fa.reference,
                  "reference group label (default: last in file order)");
  fit->add_option("--tol", fa.tol, "score tolerance");
  fit->add_option("--max-iter", fa.max_iter, "iteration cap");
  fit->add_flag("--no-standardize", fa.no_standardize,
                "optimize in raw coordinates");
  fit->add_flag("--no-inference", fa.no_inference,
                "skip covariance and Wald tests");
  fit->add_option("--sigma-form", fa.sigma_form,
                  "sandwich (default) or alternative")
      ->check(CLI::IsMember({"sandwich", "alternative"}));

  PredictArgs pa;
  CLI::App* predict = app.add_subcommand(
      "predict", "Conditional mean predictions at covariate points");
  predict->add_option("model", pa.model_path, "model.json from fit")
      ->required();
  predict->add_option("queries", pa.query_path, "CSV of covariate rows")
      ->required();
  predict->add_option("--out", pa.out_path, "output predictions CSV")
      ->required();
  predict->add_option("--group", pa.group, "group label")->required();
  predict->add_option("--method", pa.method, "drm (default), nw, or ols")
      ->check(CLI::IsMember({"drm", "nw", "ols"}));
  predict->add_option("--bandwidth", pa.bandwidth, "kernel bandwidth");
  predict->add_option("--kernel", pa.kernel, "gaussian or epanechnikov")
      ->check(CLI::IsMember({"gaussian", "epanechnikov"}));
  predict->add_option("--candidate-set", pa.candidates,
                      "candidate responses: combined or group")
      ->check(CLI::IsMember({"combined", "group"}));
  predict->add_option("--nw-bandwidth", pa.nw_bandwidths,
                      "comma-separated NW bandwidths per covariate");
  predict->add_flag("--raw-coords", pa.raw_coords,
                    "kernel distances in raw coordinates");

  GofArgs ga;
  CLI::App* gof =
      app.add_subcommand("gof", "Goodness of fit report for a fitted model");
  gof->add_option("model", ga.model_path, "model.json from fit")->required();
  gof->add_option("data", ga.data_path, "data.csv with a 'group' column")
      ->required();
  gof->add_option("--out", ga.out_path, "output report JSON")->required();
  gof->add_option("--plot-data", ga.plot_path,
                  "CSV of (empirical, fitted) CDF pairs");
  gof->add_option("--alpha", ga.alpha, "band level");
  gof->add_option("--k", ga.k, "exponent of the count measure");
  gof->add_option("--band", ga.band, "binomial (default) or dkw")
      ->check(CLI::IsMember({"binomial", "dkw"}));
  gof->add_option("--variant", ga.variant, "r2_3 summary: max, median, meansq")
      ->check(CLI::IsMember({"max", "median", "meansq"}));
  gof->add_option("--bandwidth", ga.bandwidth, "regression bandwidth");
  gof->add_option("--kernel", ga.kernel, "gaussian or epanechnikov")
      ->check(CLI::IsMember({"gaussian", "epanechnikov"}));
  gof->add_option("--candidate-set", ga.candidates, "combined or group")
      ->check(CLI::IsMember({"combined", "group"}));
  gof->add_flag("--per-group-n", ga.per_group_n,
                "scale gap measures by the group size");
  gof->add_flag("--no-regression", ga.no_regression,
                "skip prediction scores");
  gof->add_flag("--no-nw", ga.no_nw, "skip the Nadaraya-Watson baseline");

  SimArgs sa;
  CLI::App* sim =
      app.add_subcommand("simulate", "Run a Monte Carlo study scenario");
  sim->add_option("scenario", sa.scenario_path, "scenario config file")
      ->required();
  sim->add_option("--out", sa.out_path, "output study CSV")->required();
  sim->add_option("--seed", sa.seed, "override the scenario seed")
      ->each([&](const std::string&) { sa.has_seed = true; });
  sim->add_option("--replications", sa.replications,
                  "override the replication count");
  sim->add_option("--threads", sa.threads, "worker threads");

  try {
    app.parse(argc, argv);
    if (*fit) return cmd_fit(fa);
    if (*predict) return cmd_predict(pa);
    if (*gof) return cmd_gof(ga);
    if (*sim) return cmd_simulate(sa);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "drm: E_INPUT: " << e.what() << "\n";
    return 2;
  } catch (const drm::InputError& e) {
    std::cerr << "drm: E_INPUT: " << e.what() << "\n";
    return 2;
  } catch (const drm::NumericError& e) {
    std::cerr << "drm: E_NUMERIC: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "drm: E_INTERNAL: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
