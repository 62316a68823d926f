#include "personadb/template.hpp"

#include "personadb/error.hpp"
#include "personadb/store.hpp"
#include "personadb/text.hpp"

namespace personadb {

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    out.append(tmpl.substr(pos, open - pos));
    const auto close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) throw Error(ErrorCode::TemplateError, "unterminated placeholder");
    const auto name = std::string(text::trim(tmpl.substr(open + 2, close - open - 2)));
    auto it = vars.find(name);
    if (it == vars.end()) throw Error(ErrorCode::TemplateError, "unresolved placeholder {{" + name + "}}");
    out += it->second;
    pos = close + 2;
  }
  return out;
}

PromptSet PromptSet::defaults() {
  PromptSet set;
  set.templates_ = {
      {"distill",
       "You analyze a social media user's activity.\n"
       "Extract persona-related facts from the records below: stated opinions, attitudes toward entities,\n"
       "recurring topics and behavioral patterns. Stay close to the evidence.\n\n"
       "Records:\n{{items}}\n\n"
       "Write one fact per line in exactly this form:\n"
       "- <fact> (sources: <record id>, <record id>)\n"},
      {"merge",
       "The facts below were extracted from separate batches of one user's records.\n"
       "Merge duplicates and near-duplicates into single facts; keep every distinct fact.\n\n"
       "Facts:\n{{items}}\n\n"
       "Write one fact per line in exactly this form:\n"
       "- <fact> (sources: <fact id>, <fact id>)\n"},
      {"induce",
       "From the observations below about one user, infer higher-level persona statements: values,\n"
       "beliefs, dispositions and broad concerns that would generalize to new situations.\n\n"
       "Observations:\n{{items}}\n\n"
       "Write one declarative statement per line in exactly this form:\n"
       "- <statement> (sources: <id>, <id>)\n"},
      {"cache",
       "Summarize the user described below under each persona category.\n"
       "Categories: {{taxonomy}}\n\n"
       "Evidence:\n{{items}}\n\n"
       "Write one line per category in exactly this form, using \"unknown\" when there is no evidence:\n"
       "- [<category>] <short description>\n"},
      {"repair",
       "{{original}}\n\n"
       "Your previous answer did not follow the required format. Answer again using only lines that\n"
       "start with \"- \" in the form shown above, with no other text.\n"},
      {"predict_baseline",
       "[task {{task_id}}]\n"
       "Predict how this user responds to the message below.\n\n"
       "This user's history:\n{{self_block}}\n\n"
       "Message: {{stimulus}}\n{{options}}\n"
       "{{answer_format}}\n"},
      {"predict_wo_join",
       "[task {{task_id}}]\n"
       "Predict how this user responds to the message below.\n\n"
       "This user's persona:\n{{self_block}}\n\n"
       "Message: {{stimulus}}\n{{options}}\n"
       "{{answer_format}}\n"},
      {"predict_full",
       "[task {{task_id}}]\n"
       "Predict how this user responds to the message below.\n\n"
       "This user's persona:\n{{self_block}}\n\n"
       "Insights from similar users:\n{{collab_block}}\n\n"
       "Message: {{stimulus}}\n{{options}}\n"
       "{{answer_format}}\n"},
      {"intsum",
       "Summarize what the records below reveal about this user that is useful for the task: {{task_kind}}.\n"
       "Focus on opinions, values and likely reactions.\n\n"
       "Records:\n{{items}}\n\n"
       "Write the summary as a short paragraph.\n"},
  };
  return set;
}

PromptSet PromptSet::load_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::ConfigError, "prompt dir not found: " + dir.string());
  auto set = defaults();
  set.name_ = dir.filename().string();
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".txt") set.templates_[entry.path().stem().string()] = read_file(entry.path());
  }
  return set;
}

const std::string& PromptSet::get(const std::string& name) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) throw Error(ErrorCode::TemplateError, "no template named '" + name + "'");
  return it->second;
}

}  // namespace personadb
