#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "kmap/error.hpp"
#include "kmap/transport.hpp"

namespace kmap::cli {

enum ExitCode : int {
  kOk = 0,
  kInputError = 1,
  kUsage = 2,
  kConnectivity = 3,
  kCoherenceViolation = 4,
};

int exit_code_for(ErrorCode code) noexcept;

// Runs one `kmap` invocation. `args` excludes the program name. When
// `connector` is null, addresses are reached over TCP.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err,
        Connector* connector = nullptr);

// Makes a running `serve` flush and return; also triggered by SIGTERM/SIGINT.
void request_stop() noexcept;

}  // namespace kmap::cli
