#pragma once

namespace markovsde {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace markovsde
