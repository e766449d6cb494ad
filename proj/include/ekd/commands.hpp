#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

namespace ekd {

struct CommandLine {
  std::string command;
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> trials;
  std::filesystem::path out_dir = "reports";
  std::vector<std::filesystem::path> inputs;  // report-merge only
};

// Rows plus summary for one run. `ok` is false iff an asserted check
// failed; observed rows never affect it.
struct CommandResult {
  std::string name;
  std::vector<nlohmann::json> rows;
  std::string summary;
  bool ok = true;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitError = 2;

const std::vector<std::string>& command_names();

// Runs the command in memory without touching the output directory.
CommandResult execute(const CommandLine& cmd);

// execute() + writes <out>/<command>.jsonl and <out>/<command>_summary.txt,
// echoing the summary to `echo` when given. Errors are reported on stderr
// and mapped to kExitError.
int run_command(const CommandLine& cmd, std::ostream* echo = nullptr);

// Built-in ensembles for the distill command, keyed by preset name.
nlohmann::json preset_ensemble(const std::string& name);
std::vector<std::string> preset_names();

}  // namespace ekd
