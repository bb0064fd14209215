#include "modeldisc/prompts.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "modeldisc/errors.hpp"

namespace modeldisc {

std::filesystem::path default_prompts_dir() {
  if (const char* env = std::getenv("MODELDISC_PROMPTS_DIR"); env && *env) return env;
  return MODELDISC_PROMPTS_DIR;
}

std::string substitute(std::string text, const std::map<std::string, std::string>& vars) {
  for (const auto& [key, value] : vars) {
    const std::string token = "{{" + key + "}}";
    for (auto pos = text.find(token); pos != std::string::npos;
         pos = text.find(token, pos + value.size())) {
      text.replace(pos, token.size(), value);
    }
  }
  return text;
}

std::string load_prompt(const std::filesystem::path& dir, const std::string& name,
                        const std::map<std::string, std::string>& vars) {
  const auto path = dir / name;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("prompt asset missing: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return substitute(ss.str(), vars);
}

}  // namespace modeldisc
