#pragma once

namespace firelgcp {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace firelgcp
