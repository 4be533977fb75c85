#pragma once

#include <string>
#include <vector>

namespace bwdq::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kFormat = 3,
  kNumeric = 4,
};

// Runs one command line. args[0] is the program name.
int run(const std::vector<std::string>& args);

}  // namespace bwdq::cli
