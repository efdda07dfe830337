#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nits::cli {

/// Exit codes of the command-line tool.
enum Exit : int { kOk = 0, kFailure = 1, kUsage = 2 };

/// Runs one invocation. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Lines of `key=value` (blank lines and '#' comments ignored) turned into
/// `--key=value` arguments for keys not already given on the command line.
std::vector<std::string> merge_config(const std::vector<std::string>& args,
                                      const std::string& config_text);

/// Closest candidate by edit distance, or empty when nothing is close.
std::string suggest(const std::string& word, const std::vector<std::string>& candidates);

}  // namespace nits::cli
