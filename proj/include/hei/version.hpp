#pragma once

namespace hei {

inline constexpr const char* kVersion = "hei 0.1.0";

}  // namespace hei
