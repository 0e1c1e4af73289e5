#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "rrda/pipeline.hpp"

namespace rrda {

/// Bad key or value in a configuration file or `--set` override. `line` is 0
/// for overrides.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, std::size_t line, const std::string& message);
  const std::string& key() const noexcept { return key_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string key_;
  std::size_t line_;
};

/// Every recognised `section.key`, in the order `format_config` writes them.
std::vector<std::string> config_keys();

/// Assigns one `section.key` from its textual value.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value, std::size_t line = 0);

/// Applies a `section.key=value` override.
void apply_override(RunConfig& config, const std::string& assignment);

/// INI-style text: `[section]` headers, `key = value` lines, `#` or `;`
/// comments. Keys not listed in the file keep the defaults of `base`.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

/// Writes every key; parse_config(format_config(c)) reproduces c.
std::string format_config(const RunConfig& config);

}  // namespace rrda
