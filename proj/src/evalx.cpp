#include "personadb/evalx.hpp"

#include <atomic>
#include <cstdio>
#include <set>
#include <thread>
#include <unordered_map>

#include "personadb/metrics.hpp"

namespace personadb {

namespace {

ordered_json opt(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

std::string pct(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *v * 100.0);
  return buf;
}

std::string num(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

template <typename F>
std::optional<double> defined(F&& f, const char* name, std::vector<std::string>& notes) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DegenerateSeries && e.code() != ErrorCode::EmptySeries) throw;
    notes.push_back(std::string(name) + " undefined: " + e.detail());
    return std::nullopt;
  }
}

}  // namespace

ordered_json EvalReport::to_json() const {
  ordered_json j;
  j["spearman"] = opt(spearman);
  j["pearson"] = opt(pearson);
  j["micro_f1"] = opt(micro_f1);
  j["macro_f1"] = opt(macro_f1);
  j["accuracy"] = opt(accuracy);
  j["alignment_w1"] = opt(alignment_w1);
  j["mse"] = opt(mse);
  j["n"] = n;
  j["excluded"] = excluded;
  j["defaulted_rate"] = defaulted_rate;
  j["notes"] = notes;
  return j;
}

std::string EvalReport::to_table(const std::string& row_label) const {
  const std::vector<std::string> head = {"r_s", "r", "MiF1", "MaF1", "Acc", "Align", "MSE", "n"};
  const std::vector<std::string> vals = {pct(spearman), pct(pearson),      pct(micro_f1), pct(macro_f1),
                                         pct(accuracy), pct(alignment_w1), num(mse),      std::to_string(n)};
  const std::size_t label_w = std::max<std::size_t>(row_label.size(), 6);
  std::string out = std::string("method") + std::string(label_w - 6, ' ');
  for (const auto& h : head) out += pad(h, 9);
  out += "\n" + row_label + std::string(label_w - row_label.size(), ' ');
  for (const auto& v : vals) out += pad(v, 9);
  return out + "\n";
}

EvalReport evaluate(const std::vector<QueryTask>& tasks, const std::vector<Prediction>& predictions) {
  EvalReport rep;
  std::unordered_map<std::string, const Prediction*> by_task;
  for (const auto& p : predictions) by_task.emplace(p.task_id, &p);

  std::vector<double> int_pred, int_gold;
  std::vector<int> int_pred_i, int_gold_i;
  std::vector<std::string> pol_pred, pol_gold;
  std::vector<std::size_t> ch_pred, ch_gold;
  std::vector<std::uint8_t> hits;
  std::size_t defaulted = 0;
  for (const auto& t : tasks) {
    auto it = by_task.find(t.task_id);
    if (!t.gold || it == by_task.end()) {
      ++rep.excluded;
      continue;
    }
    const auto& p = *it->second;
    ++rep.n;
    if (p.parse_status == ParseStatus::Defaulted) ++defaulted;
    hits.push_back(p.label == *t.gold ? 1 : 0);
    if (t.kind == TaskKind::ResponseForecast) {
      int_pred.push_back(p.label.intensity.value_or(0));
      int_gold.push_back(*t.gold->intensity);
      int_pred_i.push_back(p.label.intensity.value_or(0));
      int_gold_i.push_back(*t.gold->intensity);
      pol_pred.emplace_back(to_string(p.label.polarity.value_or(Polarity::Neutral)));
      pol_gold.emplace_back(to_string(*t.gold->polarity));
    } else {
      ch_pred.push_back(p.label.choice_index.value_or(0));
      ch_gold.push_back(*t.gold->choice_index);
    }
  }
  if (rep.excluded > 0) rep.notes.push_back(std::to_string(rep.excluded) + " tasks excluded (no gold or no prediction)");
  if (rep.n == 0) {
    rep.notes.push_back("no scored tasks");
    return rep;
  }
  rep.defaulted_rate = static_cast<double>(defaulted) / static_cast<double>(rep.n);
  std::size_t hit_count = 0;
  for (auto h : hits) hit_count += h;
  rep.accuracy = static_cast<double>(hit_count) / static_cast<double>(rep.n);

  if (!int_pred.empty()) {
    rep.spearman = defined([&] { return spearman(int_pred, int_gold); }, "spearman", rep.notes);
    rep.pearson = defined([&] { return pearson(int_pred, int_gold); }, "pearson", rep.notes);
    const auto f1 = micro_macro_f1<std::string>(pol_pred, pol_gold);
    rep.micro_f1 = f1.micro;
    rep.macro_f1 = f1.macro;
    const auto am = alignment_and_mse(int_pred_i, int_gold_i);
    rep.alignment_w1 = am.alignment;
    rep.mse = am.mse;
  } else {
    const auto f1 = micro_macro_f1<std::size_t>(ch_pred, ch_gold);
    rep.micro_f1 = f1.micro;
    rep.macro_f1 = f1.macro;
  }
  return rep;
}

Label majority_label(const std::vector<QueryTask>& tasks, TaskKind kind) {
  std::map<int, std::size_t> ints;
  std::map<Polarity, std::size_t> pols;
  std::map<std::size_t, std::size_t> choices;
  for (const auto& t : tasks) {
    if (t.kind != kind || !t.gold) continue;
    if (t.gold->intensity) ++ints[*t.gold->intensity];
    if (t.gold->polarity) ++pols[*t.gold->polarity];
    if (t.gold->choice_index) ++choices[*t.gold->choice_index];
  }
  auto mode = [](const auto& counts) {
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    return best->first;
  };
  Label l = default_label(kind);
  if (kind == TaskKind::ResponseForecast) {
    if (!ints.empty()) l.intensity = mode(ints);
    if (!pols.empty()) l.polarity = mode(pols);
  } else if (!choices.empty()) {
    l.choice_index = mode(choices);
  }
  return l;
}

RunResult run_method(Predictor& predictor, const MethodConfig& method, const std::vector<QueryTask>& tasks,
                     Journal& journal, const RunOptions& options) {
  if (options.max_parallel_tasks == 0) throw Error(ErrorCode::PreconditionViolation, "max_parallel_tasks must be >= 1");
  std::vector<QueryTask> train, eval;
  for (const auto& t : tasks) (t.split == "train" ? train : eval).push_back(t);

  RunResult result;
  if (method.name == MethodName::Majority) {
    const auto& source = train.empty() ? eval : train;
    if (train.empty()) {
      const std::string caveat = "majority computed from the evaluated split (no train split)";
      result.report.notes.push_back(caveat);
      journal.note("MajorityFromEvalSplit", caveat);
    }
    for (auto kind : {TaskKind::ResponseForecast, TaskKind::OpinionChoice}) {
      predictor.set_majority(kind, majority_label(source, kind));
    }
  }

  std::vector<std::optional<Prediction>> slots(eval.size());
  std::vector<std::optional<TaskFailure>> errors(eval.size());
  auto run_one = [&](std::size_t i) {
    try {
      slots[i] = predictor.predict(eval[i], method);
    } catch (const Error& e) {
      errors[i] = TaskFailure{eval[i].task_id, e.code(), e.detail()};
    }
  };
  if (options.max_parallel_tasks == 1) {
    for (std::size_t i = 0; i < eval.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < std::min(options.max_parallel_tasks, eval.size()); ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < eval.size(); i = next++) run_one(i);
      });
    }
  }

  for (std::size_t i = 0; i < eval.size(); ++i) {
    if (slots[i]) result.predictions.push_back(std::move(*slots[i]));
    if (errors[i]) {
      journal.warn("TaskFailed", errors[i]->message,
                   {{"task_id", errors[i]->task_id}, {"code", std::string(to_string(errors[i]->code))}});
      result.failures.push_back(std::move(*errors[i]));
    }
  }
  auto notes = std::move(result.report.notes);
  result.report = evaluate(eval, result.predictions);
  notes.insert(notes.end(), result.report.notes.begin(), result.report.notes.end());
  if (!result.failures.empty()) notes.push_back(std::to_string(result.failures.size()) + " tasks failed");
  result.report.notes = std::move(notes);
  return result;
}

std::vector<SweepCell> sweep(Predictor& predictor, const MethodConfig& base, const std::vector<QueryTask>& tasks,
                             const std::vector<std::size_t>& r_values, const std::vector<double>& x_values,
                             Journal& journal, const RunOptions& options) {
  if (r_values.empty() || x_values.empty()) throw Error(ErrorCode::InvalidConfig, "sweep grids must not be empty");
  std::vector<SweepCell> cells;
  for (auto r : r_values) {
    for (auto x : x_values) {
      SweepCell cell{r, x, std::nullopt, std::nullopt, 0, {}};
      MethodConfig m = base;
      m.composition.r = r;
      m.composition.x = x;
      try {
        m.resolved().composition.validate();
        const auto res = run_method(predictor, m, tasks, journal, options);
        cell.n = res.report.n;
        cell.pearson = res.report.pearson;
        cell.accuracy = res.report.accuracy;
        if (res.report.n == 0) {
          cell.reason = res.failures.empty() ? "no scored tasks" : std::string(to_string(res.failures.front().code));
        }
      } catch (const Error& e) {
        cell.reason = std::string(to_string(e.code()));
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

namespace {
std::string fmt(double v, const char* spec) {
  char buf[48];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}
}  // namespace

std::string sweep_csv(const std::vector<SweepCell>& cells) {
  std::string out = "r,x,pearson,accuracy,n\n";
  for (const auto& c : cells) {
    out += std::to_string(c.r) + "," + fmt(c.x, "%g") + ",";
    if (c.reason.empty()) {
      out += (c.pearson ? fmt(*c.pearson, "%.6f") : "") + "," + (c.accuracy ? fmt(*c.accuracy, "%.6f") : "") + "," +
             std::to_string(c.n);
    } else {
      out += ",,";
    }
    out += "\n";
  }
  return out;
}

std::string sweep_failures_csv(const std::vector<SweepCell>& cells) {
  std::string out = "r,x,reason\n";
  for (const auto& c : cells) {
    if (!c.reason.empty()) out += std::to_string(c.r) + "," + fmt(c.x, "%g") + "," + c.reason + "\n";
  }
  return out;
}

Cohorts slice_cohorts(const std::map<std::string, std::size_t>& history_lengths, std::size_t lurker_max_records,
                      std::size_t frequent_top_n) {
  Cohorts out;
  std::vector<std::pair<std::string, std::size_t>> rest;
  for (const auto& [user, len] : history_lengths) {
    if (len <= lurker_max_records) {
      out.lurkers.push_back(user);
    } else {
      rest.emplace_back(user, len);
    }
  }
  std::stable_sort(rest.begin(), rest.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  for (std::size_t i = 0; i < rest.size(); ++i) (i < frequent_top_n ? out.frequent : out.regular).push_back(rest[i].first);
  std::sort(out.frequent.begin(), out.frequent.end());
  std::sort(out.regular.begin(), out.regular.end());
  return out;
}

std::map<std::string, EvalReport> cohort_reports(const std::vector<QueryTask>& tasks,
                                                 const std::vector<Prediction>& predictions, const Cohorts& cohorts) {
  std::map<std::string, EvalReport> out;
  auto slice = [&](const std::string& name, const std::vector<std::string>& users) {
    const std::set<std::string> members(users.begin(), users.end());
    std::vector<QueryTask> sub;
    for (const auto& t : tasks) {
      if (members.count(t.user_id)) sub.push_back(t);
    }
    out[name] = evaluate(sub, predictions);
  };
  slice("lurkers", cohorts.lurkers);
  slice("frequent", cohorts.frequent);
  slice("regular", cohorts.regular);
  return out;
}

}  // namespace personadb
