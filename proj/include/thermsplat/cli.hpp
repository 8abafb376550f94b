#pragma once

#include <iosfwd>

namespace thermsplat::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Entry point of the `thermsplat` executable. Returns 0 on success, 1 on usage errors and 2 on
/// data errors.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace thermsplat::cli
