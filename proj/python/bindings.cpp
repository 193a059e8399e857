#include "drm/io.hpp"
#include "drm/simulation.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;

namespace {

using drm::FittedModel;
using drm::Mat;
using drm::Vec;

drm::Kernel kernel_from(const std::string& s) {
  if (s == "gaussian") return drm::Kernel::gaussian;
  if (s == "epanechnikov") return drm::Kernel::epanechnikov;
  throw drm::InputError("unknown kernel '" + s + "'");
}

drm::CandidateSet candidates_from(const std::string& s) {
  if (s == "combined") return drm::CandidateSet::combined;
  if (s == "group") return drm::CandidateSet::group;
  throw drm::InputError("unknown candidate set '" + s + "'");
}

drm::BandKind band_from(const std::string& s) {
  if (s == "binomial") return drm::BandKind::binomial;
  if (s == "dkw") return drm::BandKind::dkw;
  throw drm::InputError("unknown band '" + s + "'");
}

std::size_t resolve_group(const FittedModel& m, const py::object& group) {
  if (py::isinstance<py::str>(group)) {
    return m.group_by_label(group.cast<std::string>());
  }
  const long long g = group.cast<long long>();
  if (g < 0 || g >= static_cast<long long>(m.num_groups())) {
    throw drm::InputError("group index out of range");
  }
  return static_cast<std::size_t>(g);
}

drm::SampleSet build_sample_set(const std::vector<Mat>& groups,
                                std::vector<std::string> labels,
                                long long reference) {
  if (labels.empty()) {
    for (std::size_t g = 0; g < groups.size(); ++g) {
      labels.push_back("g" + std::to_string(g + 1));
    }
  }
  if (labels.size() != groups.size()) {
    throw drm::InputError("need one label per group");
  }
  std::vector<drm::Sample> samples;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    samples.push_back(drm::Sample{labels[g], groups[g]});
  }
  const std::size_t ref =
      reference < 0 ? groups.size() - 1 : static_cast<std::size_t>(reference);
  return drm::SampleSet(std::move(samples), ref);
}

py::dict gof_group_dict(const drm::GroupGof& g) {
  py::dict d;
  d["label"] = g.label;
  d["reference"] = g.reference;
  d["size"] = g.size;
  d["x_count"] = g.x_count;
  d["r2_alpha_k"] = g.r2_alpha_k;
  d["r2_1"] = g.r2_1;
  d["r2_2"] = g.r2_2;
  d["r2_3"] = g.r2_3;
  d["r2_3_median"] = g.r2_3_median;
  d["r2_3_meansq"] = g.r2_3_meansq;
  d["max_abs_gap"] = g.max_abs_gap;
  d["mse"] = py::dict(py::arg("semiparametric") = g.drm_score.mse,
                      py::arg("ols") = g.ols_score.mse,
                      py::arg("nw") = g.nw_score.mse);
  d["mae"] = py::dict(py::arg("semiparametric") = g.drm_score.mae,
                      py::arg("ols") = g.ols_score.mae,
                      py::arg("nw") = g.nw_score.mae);
  d["predictions"] = g.predictions;
  d["residuals"] = g.residuals;
  py::list pairs;
  for (const auto& p : g.plot_pairs) {
    pairs.append(py::make_tuple(p.first, p.second));
  }
  d["plot_pairs"] = pairs;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, mod) {
  mod.doc() =
      "Multi-sample density ratio model estimation, semiparametric "
      "regression, and diagnostics";

  py::register_exception<drm::InputError>(mod, "InputError",
                                          PyExc_ValueError);
  py::register_exception<drm::NumericError>(mod, "NumericError",
                                            PyExc_ArithmeticError);

  py::class_<FittedModel>(mod, "Model")
      .def_property_readonly(
          "alpha", [](const FittedModel& m) { return m.params.alpha; })
      .def_property_readonly(
          "beta", [](const FittedModel& m) { return m.params.beta; })
      .def_readonly("p_hat", &FittedModel::p_hat)
      .def_readonly("rho", &FittedModel::rho)
      .def_readonly("combined", &FittedModel::combined)
      .def_readonly("group_of_row", &FittedModel::group_of_row)
      .def_readonly("labels", &FittedModel::labels)
      .def_readonly("reference", &FittedModel::reference)
      .def_readonly("center", &FittedModel::center)
      .def_readonly("scale", &FittedModel::scale)
      .def_readonly("log_lik", &FittedModel::log_lik)
      .def_readonly("converged", &FittedModel::converged)
      .def_readonly("iterations", &FittedModel::iterations)
      .def_readonly("grad_norm", &FittedModel::grad_norm)
      .def_property_readonly("n", &FittedModel::n)
      .def_property_readonly("dimension", &FittedModel::dimension)
      .def_property_readonly("num_groups", &FittedModel::num_groups)
      .def("tilts", &FittedModel::tilts)
      .def("group_points",
           [](const FittedModel& m, const py::object& g) {
             return m.group_points(resolve_group(m, g));
           })
      .def("save",
           [](const FittedModel& m, const std::string& path) {
             drm::save_model(m, path);
           })
      .def("to_json",
           [](const FittedModel& m) { return drm::model_to_json(m).dump(2); })
      .def("__repr__", [](const FittedModel& m) {
        return "<drmkit.Model: " + std::to_string(m.num_groups()) +
               " groups, L=" + std::to_string(m.dimension()) +
               ", n=" + std::to_string(m.n()) +
               (m.converged ? ", converged>" : ", NOT converged>");
      });

  py::class_<drm::StepCdf>(mod, "StepCdf")
      .def_readonly("points", &drm::StepCdf::points)
      .def_readonly("masses", &drm::StepCdf::masses)
      .def("total_mass", &drm::StepCdf::total_mass)
      .def("__call__", &drm::StepCdf::operator());

  py::class_<drm::TiltedKde>(mod, "TiltedKde")
      .def("__call__", &drm::TiltedKde::operator())
      .def_property_readonly("bandwidth", &drm::TiltedKde::bandwidth);

  mod.def(
      "fit",
      [](const std::vector<Mat>& groups, std::vector<std::string> labels,
         long long reference, bool standardize, double tol, int max_iter) {
        drm::FitOptions opts;
        opts.standardize = standardize;
        opts.tol = tol;
        opts.max_iter = max_iter;
        return drm::fit(build_sample_set(groups, std::move(labels), reference),
                        opts);
      },
      py::arg("groups"), py::arg("labels") = std::vector<std::string>{},
      py::arg("reference") = -1, py::arg("standardize") = true,
      py::arg("tol") = 1e-8, py::arg("max_iter") = 200);

  mod.def("load", &drm::load_model, py::arg("path"));

  mod.def(
      "reference_cdf",
      [](const FittedModel& m) { return drm::reference_cdf(m); },
      py::arg("model"));
  mod.def(
      "tilted_cdf",
      [](const FittedModel& m, const py::object& group) {
        return drm::tilted_cdf(m, resolve_group(m, group));
      },
      py::arg("model"), py::arg("group"));

  mod.def(
      "tilted_kde",
      [](const FittedModel& m, const py::object& group, double bandwidth,
         const std::string& kernel, bool standardized) {
        return drm::TiltedKde(m, resolve_group(m, group), bandwidth,
                              kernel_from(kernel), standardized);
      },
      py::arg("model"), py::arg("group"), py::arg("bandwidth") = 0.3,
      py::arg("kernel") = "gaussian", py::arg("standardized") = true);

  mod.def(
      "predict",
      [](const FittedModel& m, const Vec& x, const py::object& group,
         double bandwidth, const std::string& kernel,
         const std::string& candidates, bool standardized) {
        return drm::predict(m, x, resolve_group(m, group), bandwidth,
                            kernel_from(kernel), candidates_from(candidates),
                            standardized)
            .y_hat;
      },
      py::arg("model"), py::arg("x"), py::arg("group"),
      py::arg("bandwidth") = 0.3, py::arg("kernel") = "gaussian",
      py::arg("candidates") = "combined", py::arg("standardized") = true);

  mod.def(
      "predict_detail",
      [](const FittedModel& m, const Vec& x, const py::object& group,
         double bandwidth, const std::string& kernel,
         const std::string& candidates, bool standardized) {
        const drm::RegressionPrediction p =
            drm::predict(m, x, resolve_group(m, group), bandwidth,
                         kernel_from(kernel), candidates_from(candidates),
                         standardized);
        py::dict d;
        d["y_hat"] = p.y_hat;
        d["weights"] = p.weights;
        d["candidates"] = p.candidates;
        return d;
      },
      py::arg("model"), py::arg("x"), py::arg("group"),
      py::arg("bandwidth") = 0.3, py::arg("kernel") = "gaussian",
      py::arg("candidates") = "combined", py::arg("standardized") = true);

  mod.def(
      "predict_batch",
      [](const FittedModel& m, const Mat& queries, const py::object& group,
         double bandwidth, const std::string& kernel,
         const std::string& candidates, bool standardized) {
        return drm::predict_batch(m, queries, resolve_group(m, group),
                                  bandwidth, kernel_from(kernel),
                                  candidates_from(candidates), standardized);
      },
      py::arg("model"), py::arg("queries"), py::arg("group"),
      py::arg("bandwidth") = 0.3, py::arg("kernel") = "gaussian",
      py::arg("candidates") = "combined", py::arg("standardized") = true);

  mod.def(
      "nadaraya_watson",
      [](const Mat& sample, const Vec& x, py::object bandwidths,
         const std::string& kernel) {
        Vec bw = bandwidths.is_none() ? drm::nw_default_bandwidths(sample)
                                      : bandwidths.cast<Vec>();
        return drm::nadaraya_watson(sample, x, bw, kernel_from(kernel));
      },
      py::arg("sample"), py::arg("x"), py::arg("bandwidths") = py::none(),
      py::arg("kernel") = "gaussian");

  mod.def("nw_default_bandwidths", &drm::nw_default_bandwidths,
          py::arg("sample"));

  mod.def(
      "ols_fit",
      [](const Mat& sample) {
        const drm::OlsFit f = drm::ols_fit(sample);
        py::dict d;
        d["coef"] = f.coef;
        d["fitted"] = f.fitted;
        d["residuals"] = f.residuals;
        return d;
      },
      py::arg("sample"));

  mod.def(
      "asymptotic_covariance",
      [](const FittedModel& m, const std::string& form) {
        const drm::AsymptoticCovariance cov = drm::asymptotic_covariance(
            m, form == "alternative" ? drm::SigmaForm::alternative
                                     : drm::SigmaForm::sandwich);
        py::dict d;
        d["S"] = cov.S;
        d["V"] = cov.V;
        d["sigma"] = cov.sigma;
        d["sigma_alt"] = cov.sigma_alt;
        d["se"] = drm::standard_errors(m, cov);
        d["n"] = cov.n;
        return d;
      },
      py::arg("model"), py::arg("form") = "sandwich");

  mod.def(
      "wald_tests",
      [](const FittedModel& m, const std::string& form) {
        const drm::AsymptoticCovariance cov = drm::asymptotic_covariance(
            m, form == "alternative" ? drm::SigmaForm::alternative
                                     : drm::SigmaForm::sandwich);
        py::list tests;
        for (std::size_t g = 0; g < m.num_groups(); ++g) {
          if (g == m.reference) continue;
          const drm::WaldTest t = drm::wald_test(m, cov, g);
          tests.append(py::dict(py::arg("group") = t.group,
                                py::arg("statistic") = t.statistic,
                                py::arg("dof") = t.dof,
                                py::arg("p_value") = t.p_value));
        }
        const drm::WaldTest tj = drm::wald_joint(m, cov);
        py::dict d;
        d["per_group"] = tests;
        d["joint"] = py::dict(py::arg("statistic") = tj.statistic,
                              py::arg("dof") = tj.dof,
                              py::arg("p_value") = tj.p_value);
        return d;
      },
      py::arg("model"), py::arg("form") = "sandwich");

  mod.def(
      "gof_report",
      [](const FittedModel& m, py::object groups,
         std::vector<std::string> labels, double alpha, double k,
         const std::string& band, bool per_group_n, double bandwidth,
         const std::string& kernel, const std::string& candidates,
         bool regression, bool nw) {
        drm::GofOptions opts;
        opts.alpha = alpha;
        opts.k = k;
        opts.band = band_from(band);
        opts.per_group_n = per_group_n;
        opts.bandwidth = bandwidth;
        opts.kernel = kernel_from(kernel);
        opts.candidates = candidates_from(candidates);
        opts.regression = regression;
        opts.nw = nw;

        std::vector<drm::Sample> samples;
        if (groups.is_none()) {
          for (std::size_t g = 0; g < m.num_groups(); ++g) {
            samples.push_back(drm::Sample{m.labels[g], m.group_points(g)});
          }
        } else {
          const auto mats = groups.cast<std::vector<Mat>>();
          if (labels.empty()) labels = m.labels;
          if (mats.size() != labels.size()) {
            throw drm::InputError("need one label per group");
          }
          for (std::size_t g = 0; g < mats.size(); ++g) {
            samples.push_back(drm::Sample{labels[g], mats[g]});
          }
        }
        drm::SampleSet data(std::move(samples), m.reference);
        const drm::GofReport rep = drm::gof_report(m, data, opts);
        py::dict d;
        d["alpha"] = rep.alpha;
        d["k"] = rep.k;
        py::list gs;
        for (const drm::GroupGof& g : rep.groups) gs.append(gof_group_dict(g));
        d["groups"] = gs;
        return d;
      },
      py::arg("model"), py::arg("groups") = py::none(),
      py::arg("labels") = std::vector<std::string>{}, py::arg("alpha") = 0.10,
      py::arg("k") = 2.0, py::arg("band") = "binomial",
      py::arg("per_group_n") = false, py::arg("bandwidth") = 0.3,
      py::arg("kernel") = "gaussian", py::arg("candidates") = "combined",
      py::arg("regression") = true, py::arg("nw") = true);

  mod.def(
      "sample_mvn",
      [](const Vec& mu, const Mat& cov, Eigen::Index n, std::uint64_t seed,
         std::uint64_t replication, std::uint64_t group) {
        drm::RngStream rng =
            drm::RngStream::substream(seed, replication, group);
        return drm::sample_mvn(mu, cov, n, rng);
      },
      py::arg("mu"), py::arg("cov"), py::arg("n"), py::arg("seed"),
      py::arg("replication") = 0, py::arg("group") = 0);

  mod.def(
      "sample_mvcauchy",
      [](const Vec& mu, const Mat& scale, Eigen::Index n, std::uint64_t seed,
         std::uint64_t replication, std::uint64_t group) {
        drm::RngStream rng =
            drm::RngStream::substream(seed, replication, group);
        return drm::sample_mvcauchy(mu, scale, n, rng);
      },
      py::arg("mu"), py::arg("scale"), py::arg("n"), py::arg("seed"),
      py::arg("replication") = 0, py::arg("group") = 0);

  mod.def(
      "sample_triangle_uniform",
      [](const Vec& v1, const Vec& v2, const Vec& v3, Eigen::Index n,
         std::uint64_t seed, std::uint64_t replication, std::uint64_t group) {
        drm::RngStream rng =
            drm::RngStream::substream(seed, replication, group);
        return drm::sample_triangle_uniform(v1, v2, v3, n, rng);
      },
      py::arg("v1"), py::arg("v2"), py::arg("v3"), py::arg("n"),
      py::arg("seed"), py::arg("replication") = 0, py::arg("group") = 0);

  mod.def(
      "run_study",
      [](const std::string& scenario_text, py::object seed, int threads) {
        drm::Scenario sc = drm::parse_scenario_text(scenario_text);
        if (!seed.is_none()) sc.seed = seed.cast<std::uint64_t>();
        return drm::run_study(sc, threads).to_csv();
      },
      py::arg("scenario_text"), py::arg("seed") = py::none(),
      py::arg("threads") = 1);
}
