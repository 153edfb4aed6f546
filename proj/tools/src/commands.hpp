#pragma once

#include <string>
#include <vector>

namespace latent::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumerical = 4,
};

/// Entry point of `latent-base`; returns the process exit code.
int run(const std::vector<std::string>& args);

}  // namespace latent::cli
