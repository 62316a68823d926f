#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "personadb/cli.hpp"
#include "personadb/engine.hpp"
#include "personadb/metrics.hpp"
#include "personadb/refine.hpp"
#include "personadb/synth.hpp"

namespace py = pybind11;
using namespace personadb;

namespace {

// Results cross the boundary as JSON text; the Python package decodes them.
class Session {
 public:
  Session(const std::optional<std::string>& config, const std::vector<std::string>& overrides)
      : cfg_(RunConfig::resolve(config ? std::optional<std::filesystem::path>(*config) : std::nullopt, overrides)),
        journal_(std::make_shared<Journal>()),
        engine_(cfg_, journal_) {}

  std::string config_json() const { return cfg_.resolved.dump(); }
  const std::string& digest() const { return cfg_.digest; }
  std::vector<std::string> user_ids() { return engine_.store().user_ids(); }

  std::size_t ingest(const std::string& corpus) {
    std::vector<UserRecord> fresh;
    for (auto& r : read_records_jsonl(corpus)) {
      if (!engine_.store().has_record(r.record_id)) fresh.push_back(std::move(r));
    }
    return engine_.store().ingest_records(fresh);
  }

  std::string refine() {
    py::gil_scoped_release release;
    const auto users = engine_.store().user_ids();
    return refine_all(engine_.store(), engine_.gateway(), users, cfg_.refine, cfg_.max_parallel_users).to_json().dump();
  }

  std::string join(const std::string& user) {
    return engine_.joins().join(user, cfg_.method.resolved().join).summary_json().dump();
  }

  std::string retrieve(const std::string& user, const std::string& query) {
    const auto m = cfg_.method.resolved();
    return engine_.retriever().retrieve_for_query(user, query, m.composition, m.join).to_json().dump();
  }

  std::string evaluate(const std::optional<std::string>& method) {
    auto m = cfg_.method;
    if (method) m.name = method_from_string(*method);
    if (!cfg_.tasks) throw Error(ErrorCode::ConfigError, "data.tasks is not set");
    const auto tasks = read_tasks_jsonl(*cfg_.tasks);
    py::gil_scoped_release release;
    const auto res = run_method(engine_.predictor(), m, tasks, *journal_, {cfg_.workers});
    ordered_json out;
    out["method"] = std::string(to_string(m.name));
    out["report"] = res.report.to_json();
    out["predictions"] = ordered_json::array();
    for (const auto& p : res.predictions) out["predictions"].push_back(to_json(p));
    out["failed"] = res.failures.size();
    return out.dump();
  }

  std::size_t journal_size() const { return journal_->size(); }

 private:
  RunConfig cfg_;
  std::shared_ptr<Journal> journal_;
  Engine engine_;
};

py::tuple run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  int status;
  {
    py::gil_scoped_release release;
    status = cli::run(args, out, err);
  }
  return py::make_tuple(status, out.str(), err.str());
}

std::string synth(const std::string& out_dir, const std::vector<std::string>& overrides) {
  const auto cfg = RunConfig::resolve(std::nullopt, overrides);
  const auto pop = generate_population(cfg.synth);
  pop.write(out_dir);
  ordered_json s;
  s["users"] = pop.users.size();
  s["records"] = pop.records.size();
  s["tasks"] = pop.tasks.size();
  return s.dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "personadb native core";

  static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetObject(error.ptr(), py::make_tuple(std::string(to_string(e.code())), e.detail()).ptr());
    }
  });

  m.def("run_cli", &run_cli, py::arg("args"), "Run a CLI command line; returns (status, stdout, stderr).");
  m.def("synth", &synth, py::arg("out_dir"), py::arg("overrides") = std::vector<std::string>{});
  m.def("resolve_config", [](const std::optional<std::string>& file, const std::vector<std::string>& overrides) {
    const auto cfg = RunConfig::resolve(file ? std::optional<std::filesystem::path>(*file) : std::nullopt, overrides);
    return py::make_tuple(cfg.resolved.dump(), cfg.digest);
  }, py::arg("config") = py::none(), py::arg("overrides") = std::vector<std::string>{});

  m.def("pearson", [](const std::vector<double>& x, const std::vector<double>& y) { return pearson(x, y); });
  m.def("spearman", [](const std::vector<double>& x, const std::vector<double>& y) { return spearman(x, y); });
  m.def("micro_macro_f1", [](const std::vector<int>& p, const std::vector<int>& g) {
    const auto f = micro_macro_f1<int>(std::span<const int>(p), std::span<const int>(g));
    return py::make_tuple(f.micro, f.macro);
  });
  m.def("alignment_and_mse", [](const std::vector<int>& p, const std::vector<int>& g) {
    const auto a = alignment_and_mse(p, g);
    return py::make_tuple(a.alignment, a.mse);
  });
  m.def("similarity", [](const std::vector<double>& a, const std::vector<double>& b) {
    return similarity(make_embedding(a, "py"), make_embedding(b, "py"));
  });
  m.def("collaborative_quota", &collaborative_quota, py::arg("r"), py::arg("x"));

  py::class_<Session>(m, "Session")
      .def(py::init<const std::optional<std::string>&, const std::vector<std::string>&>(),
           py::arg("config") = py::none(), py::arg("overrides") = std::vector<std::string>{})
      .def_property_readonly("digest", &Session::digest)
      .def("config_json", &Session::config_json)
      .def("user_ids", &Session::user_ids)
      .def("ingest", &Session::ingest, py::arg("corpus"))
      .def("refine", &Session::refine)
      .def("join", &Session::join, py::arg("user"))
      .def("retrieve", &Session::retrieve, py::arg("user"), py::arg("query"))
      .def("evaluate", &Session::evaluate, py::arg("method") = py::none())
      .def("journal_size", &Session::journal_size);
}
