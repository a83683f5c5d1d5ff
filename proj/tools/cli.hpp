#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace biasly::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kIo = 3,
  kSchema = 4,
  kInvalidArgument = 5,
  kNumeric = 6,
};

// Runs one subcommand. Results go to `out`; failures print a single JSON line
// {"error":{"code":..,"kind":..,"message":..}} to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace biasly::cli
