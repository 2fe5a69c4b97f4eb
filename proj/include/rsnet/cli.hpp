#ifndef RSNET_CLI_HPP_
#define RSNET_CLI_HPP_

#include <iosfwd>
#include <string>
#include <vector>

namespace rsnet::cli {

// Exit codes, stable for scripting:
//   0 success, 2 usage, 3 I/O or parse failure, 4 numerical failure,
//   5 spec/weights mismatch.
constexpr int kOk = 0;
constexpr int kUsage = 2;
constexpr int kIoError = 3;
constexpr int kNumericalError = 4;
constexpr int kWeightsMismatch = 5;

/// Runs one subcommand (anchors / train / detect / eval). args excludes
/// the program name. Output goes to the given streams so tests can run
/// commands in-process.
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace rsnet::cli

#endif  // RSNET_CLI_HPP_
