#pragma once

namespace microricci {

inline constexpr const char* kLibraryVersion = "0.1.0";

}  // namespace microricci
