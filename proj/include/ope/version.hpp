#pragma once

namespace ope {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace ope
