#pragma once

#include "drm/diagnostics.hpp"
#include "drm/estimation.hpp"
#include "drm/inference.hpp"

#include <nlohmann/json.hpp>

#include <string>

namespace drm {

// Rows of a labeled dataset: one `group` column plus numeric columns in
// (x_1, ..., x_{L-1}, y) order.
struct Dataset {
  std::vector<std::string> column_names;  // numeric columns only
  std::vector<std::string> group_of_row;
  Mat values;

  // Groups in order of first appearance.
  std::vector<std::string> group_labels() const;
};

Dataset read_data_csv(const std::string& path);
Dataset parse_data_csv(std::istream& in, const std::string& name);

// Assemble the dataset into samples; empty reference label means the last
// label in order of first appearance.
SampleSet make_sample_set(const Dataset& data,
                          const std::string& reference_label = "");

// Numeric query rows; the column count must match `expected_cols`.
Mat read_query_csv(const std::string& path, Eigen::Index expected_cols);

nlohmann::json model_to_json(const FittedModel& model,
                             const std::vector<std::string>& column_names = {});
FittedModel model_from_json(const nlohmann::json& j);

void save_model(const FittedModel& model, const std::string& path,
                const std::vector<std::string>& column_names = {},
                const nlohmann::json& extra = {});
FittedModel load_model(const std::string& path);
// Numeric column names stored alongside the model, if any.
std::vector<std::string> model_column_names(const std::string& path);

nlohmann::json inference_to_json(const FittedModel& model,
                                 const AsymptoticCovariance& cov);
nlohmann::json gof_to_json(const GofReport& report);

// (group, point_index, empirical, semiparametric) rows.
std::string plot_pairs_csv(const GofReport& report);

void write_text_file(const std::string& path, const std::string& text);

}  // namespace drm
