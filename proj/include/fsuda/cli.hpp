#ifndef FSUDA_CLI_HPP
#define FSUDA_CLI_HPP

namespace fsuda {

/// Entry point of the fsuda command. Returns the process exit status:
/// 0 on success, 1 on a failed run or check, 2 on a usage error.
int run_cli(int argc, char** argv);

}  // namespace fsuda

#endif  // FSUDA_CLI_HPP
