#pragma once

namespace cse_lab {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kSchema = "cse-lab/1";

}  // namespace cse_lab
