#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace personadb {

/// Substitutes `{{name}}` placeholders. Any placeholder without a value, or
/// an unterminated `{{`, raises TemplateError.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& vars);

/// Named prompt templates. The built-in set covers refinement (distill,
/// merge, induce, cache), their repair suffix, prediction and IntSum.
class PromptSet {
 public:
  static PromptSet defaults();
  /// Loads `<name>.txt` files from `dir` over the defaults; the set name is
  /// the directory name.
  static PromptSet load_dir(const std::filesystem::path& dir);

  const std::string& get(const std::string& name) const;
  void set(const std::string& name, std::string text) { templates_[name] = std::move(text); }
  bool has(const std::string& name) const { return templates_.count(name) > 0; }

  const std::string& name() const noexcept { return name_; }
  void set_name(std::string name) { name_ = std::move(name); }
  const std::map<std::string, std::string>& all() const noexcept { return templates_; }

 private:
  std::string name_ = "default";
  std::map<std::string, std::string> templates_;
};

}  // namespace personadb
