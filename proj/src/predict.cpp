#include "personadb/predict.hpp"

#include <random>

#include "personadb/digest.hpp"

namespace personadb {

Label random_label(const QueryTask& task, std::uint64_t seed) {
  const auto h = sha256_hex(std::to_string(seed) + "\n" + task.task_id);
  std::mt19937_64 rng(std::stoull(h.substr(0, 16), nullptr, 16));
  Label l;
  if (task.kind == TaskKind::ResponseForecast) {
    l.intensity = static_cast<int>(rng() % 4);
    l.polarity = static_cast<Polarity>(rng() % 3);
  } else {
    l.choice_index = static_cast<std::size_t>(rng() % task.options.size());
  }
  return l;
}

Predictor::Predictor(const PersonaStore& store, Gateway& gateway, Retriever& retriever, IntSumCache& intsum,
                     PromptSet prompts, PredictOptions options)
    : store_(store),
      gateway_(gateway),
      retriever_(retriever),
      intsum_(intsum),
      prompts_(std::move(prompts)),
      options_(options) {}

namespace {

std::string retrieval_query(const QueryTask& task) {
  std::string q = task.stimulus;
  for (const auto& o : task.options) q += "\n" + o;
  return q;
}

// History records in chronological order; newer records score higher so a
// budget cut removes the oldest first.
RetrievalSet history_context(const PersonaDatabase& db, std::size_t limit) {
  RetrievalSet out;
  const std::size_t n = std::min(limit, db.history.size());
  const std::size_t first = db.history.size() - n;
  for (std::size_t i = first; i < db.history.size(); ++i) {
    const auto& r = db.history[i];
    out.items.push_back({r.text, Source::Self, db.user_id, Layer::History, r.record_id,
                         static_cast<double>(i - first + 1) / static_cast<double>(n)});
  }
  out.n_self = n;
  return out;
}

}  // namespace

RetrievalSet Predictor::context_for(const QueryTask& task, const MethodConfig& method) {
  const auto m = method.resolved();
  RetrievalSet out;
  switch (m.name) {
    case MethodName::HRecency:
      out = history_context(store_.load_database(task.user_id), m.composition.r);
      break;
    case MethodName::HistoryFull: {
      const auto db = store_.load_database(task.user_id);
      out = history_context(db, db.history.size());
      break;
    }
    case MethodName::IntSum: {
      const auto db = store_.load_database(task.user_id);
      out.items.push_back({intsum_.summary(db, task.kind), Source::Self, db.user_id, Layer::History, "intsum", 1.0});
      out.n_self = 1;
      break;
    }
    case MethodName::Random:
    case MethodName::Majority:
      return out;
    default:
      return retriever_.retrieve_for_query(task.user_id, retrieval_query(task), m.composition, m.join);
  }
  out.query_digest = sha256_hex(retrieval_query(task));
  return out;
}

std::string Predictor::prompt_for(const QueryTask& task, const MethodConfig& method, RetrievalSet* context_out) {
  auto ctx = context_for(task, method);
  auto prompt = assemble_prompt(task, ctx, prompts_.get(method.template_name()), options_.budget, &gateway_.journal());
  if (context_out) *context_out = std::move(ctx);
  return prompt;
}

Prediction Predictor::predict(const QueryTask& task, const MethodConfig& method) {
  validate_task(task);
  Prediction p;
  p.task_id = task.task_id;
  p.user_id = task.user_id;
  p.method = std::string(to_string(method.name));

  if (!method.uses_analyzer()) {
    if (method.name == MethodName::Random) {
      p.label = random_label(task, method.seed);
    } else {
      auto it = majority_.find(task.kind);
      if (it == majority_.end()) throw Error(ErrorCode::PreconditionViolation, "majority label not set");
      p.label = it->second;
    }
    p.raw_output = format_label(p.label, task.kind, task.options.size());
  } else {
    RetrievalSet ctx;
    AnalyzerRequest req;
    req.prompt_name = method.template_name();
    req.rendered_prompt = prompt_for(task, method, &ctx);
    req.temperature = options_.temperature;
    req.seed = options_.seed;
    req.max_output_tokens = options_.max_output_tokens;
    p.raw_output = gateway_.analyze(req);
    p.retrieval_digest = ctx.digest();
    p.prompt_digest = sha256_hex(req.rendered_prompt);
    const auto parsed = parse_prediction(p.raw_output, task.kind, task.options.size());
    p.label = parsed.label;
    p.parse_status = parsed.status;
  }

  ordered_json j;
  j["kind"] = "prediction";
  j["task_id"] = p.task_id;
  j["user_id"] = p.user_id;
  j["method"] = p.method;
  j["retrieval_digest"] = p.retrieval_digest;
  j["prompt_digest"] = p.prompt_digest;
  j["parse_status"] = std::string(to_string(p.parse_status));
  j["raw_output"] = p.raw_output;
  gateway_.journal().append(j);
  if (p.parse_status == ParseStatus::Defaulted) {
    gateway_.journal().warn("PredictionDefaulted", "analyzer output unparseable; default label used",
                            {{"task_id", p.task_id}});
  }
  return p;
}

}  // namespace personadb
