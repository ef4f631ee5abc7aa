#pragma once

#include "config.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace tsm::cli {

struct RunOptions {
  std::filesystem::path out_dir = "out";
  unsigned workers = 0;
};

/// Names accepted by run_command, in help order.
const std::vector<std::string>& command_names();

/// Runs one subcommand, writing CSV tables plus a manifest into the output
/// directory. Returns the process exit status (0 success, 2 failed checks);
/// errors propagate as exceptions.
int run_command(const std::string& name, const Config& cfg, const RunOptions& opt);

}  // namespace tsm::cli
