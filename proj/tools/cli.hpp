#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace ltx::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs one `ltx` command. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Parses a flat `key=value` file: blank lines and `#` comments are skipped,
/// surrounding double quotes are removed from values. Throws ContractError on
/// a line without `=`, an empty key or a repeated key.
std::map<std::string, std::string> parse_run_config(const std::string& text);

}  // namespace ltx::cli
