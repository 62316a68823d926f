#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "personadb/infer.hpp"
#include "personadb/method.hpp"
#include "personadb/predict.hpp"

namespace personadb {

/// Metric bundle over one set of predictions. Correlations, F1, alignment
/// and MSE are computed on response-forecast tasks (intensity and polarity);
/// when only opinion-choice tasks are present F1 runs over choice indices.
/// Accuracy is exact label match over all scored tasks.
struct EvalReport {
  std::optional<double> spearman;  // nullopt when undefined (constant series)
  std::optional<double> pearson;
  std::optional<double> micro_f1;
  std::optional<double> macro_f1;
  std::optional<double> accuracy;
  std::optional<double> alignment_w1;
  std::optional<double> mse;
  std::size_t n = 0;
  std::size_t excluded = 0;  // tasks without gold or without a prediction
  double defaulted_rate = 0.0;
  std::vector<std::string> notes;

  ordered_json to_json() const;
  /// Aligned-column table with percentages (x100, two decimals).
  std::string to_table(const std::string& row_label) const;
};

EvalReport evaluate(const std::vector<QueryTask>& tasks, const std::vector<Prediction>& predictions);

/// Most frequent gold label per field; ties go to the smallest value.
Label majority_label(const std::vector<QueryTask>& tasks, TaskKind kind);

struct TaskFailure {
  std::string task_id;
  ErrorCode code;
  std::string message;
};

struct RunResult {
  std::vector<Prediction> predictions;  // task order
  std::vector<TaskFailure> failures;
  EvalReport report;
};

struct RunOptions {
  std::size_t max_parallel_tasks = 1;
};

/// Predicts every task not marked `train` and scores the result. Tasks marked
/// `train` only feed the majority baseline; without any, the majority comes
/// from the evaluated tasks and the report says so.
RunResult run_method(Predictor& predictor, const MethodConfig& method, const std::vector<QueryTask>& tasks,
                     Journal& journal, const RunOptions& options = {});

struct SweepCell {
  std::size_t r = 0;
  double x = 0.0;
  std::optional<double> pearson;
  std::optional<double> accuracy;
  std::size_t n = 0;
  std::string reason;  // set when the cell produced no scored tasks
};

std::vector<SweepCell> sweep(Predictor& predictor, const MethodConfig& base, const std::vector<QueryTask>& tasks,
                             const std::vector<std::size_t>& r_values, const std::vector<double>& x_values,
                             Journal& journal, const RunOptions& options = {});
/// Header `r,x,pearson,accuracy,n`; failed cells leave metric fields empty.
std::string sweep_csv(const std::vector<SweepCell>& cells);
/// `r,x,reason` rows for failed cells.
std::string sweep_failures_csv(const std::vector<SweepCell>& cells);

struct Cohorts {
  std::vector<std::string> lurkers;   // history length <= lurker_max_records
  std::vector<std::string> frequent;  // the top_n longest histories among the rest
  std::vector<std::string> regular;
};

/// Partitions users by history length. Ties in length are broken by user id.
Cohorts slice_cohorts(const std::map<std::string, std::size_t>& history_lengths, std::size_t lurker_max_records,
                      std::size_t frequent_top_n);

std::map<std::string, EvalReport> cohort_reports(const std::vector<QueryTask>& tasks,
                                                 const std::vector<Prediction>& predictions, const Cohorts& cohorts);

}  // namespace personadb
