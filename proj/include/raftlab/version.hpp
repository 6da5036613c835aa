#pragma once

namespace raftlab {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace raftlab
