#pragma once

#include <iosfwd>

namespace lmscore::cli {

// Exit codes: 0 success, 1 data/model error, 2 usage error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitData = 1;
inline constexpr int kExitUsage = 2;

int run(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace lmscore::cli
