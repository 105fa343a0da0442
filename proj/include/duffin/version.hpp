#pragma once

namespace duffin {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace duffin
