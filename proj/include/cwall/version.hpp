#pragma once

namespace cwall {

inline constexpr const char* kHarnessVersion = "0.1.0";

}  // namespace cwall
