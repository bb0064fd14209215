#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace modeldisc {

/// Directory holding the shipped prompt assets. MODELDISC_PROMPTS_DIR in the
/// environment overrides the build-time location.
std::filesystem::path default_prompts_dir();

/// Loads `{dir}/{name}` and substitutes every `{{key}}` from `vars`.
/// Unknown placeholders are left as-is. Throws ConfigError if the asset is missing.
std::string load_prompt(const std::filesystem::path& dir, const std::string& name,
                        const std::map<std::string, std::string>& vars = {});

std::string substitute(std::string text, const std::map<std::string, std::string>& vars);

}  // namespace modeldisc
