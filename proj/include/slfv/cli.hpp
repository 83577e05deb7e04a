#pragma once

namespace slfv {

/// Entry point of the command-line tool, callable in-process for tests.
/// Returns the process exit code: 0 success, 1 verification failure,
/// 2 configuration error, 3 I/O error.
int cli_main(int argc, const char* const* argv);

} // namespace slfv
