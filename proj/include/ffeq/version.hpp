#pragma once

namespace ffeq {

inline constexpr const char* version = "0.1.0";

} // namespace ffeq
