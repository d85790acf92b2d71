#pragma once

namespace hazard::cli {

/// Runs the hazard command line. Returns the process exit status:
/// 0 success, 1 usage error, 2 configuration error, 3 data error,
/// 4 numeric failure, 5 IO failure.
int run(int argc, char** argv);

}  // namespace hazard::cli
