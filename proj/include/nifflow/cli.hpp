#ifndef NIFFLOW_CLI_HPP
#define NIFFLOW_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace nifflow::cli {

/// Runs one `nifflow` invocation. `args` excludes the program name.
/// Artifacts go to the paths named by --out / --report ("-" means `out`);
/// logs and the machine-readable error line go to `err`.
/// Returns 0 on success, 1 on a runtime failure and 2 on a usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nifflow::cli

#endif  // NIFFLOW_CLI_HPP
