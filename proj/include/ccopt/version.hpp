#pragma once

namespace ccopt {

#ifndef CCOPT_GIT_DESCRIBE
#define CCOPT_GIT_DESCRIBE "unknown"
#endif

inline constexpr const char* kVersion = "0.1.0+" CCOPT_GIT_DESCRIBE;

}  // namespace ccopt
