#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vidctl::util {

struct ProcessResult {
  int exit_code = -1;
  std::string err;  // captured stderr
};

// Runs argv[0] with the given arguments, streaming `input` to its stdin and
// capturing stderr. Blocks until the child exits.
ProcessResult run_process(const std::vector<std::string>& argv,
                          const std::vector<uint8_t>& input);

}  // namespace vidctl::util
