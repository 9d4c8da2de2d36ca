#pragma once

#define PDNPULSE_VERSION_MAJOR 0
#define PDNPULSE_VERSION_MINOR 1
#define PDNPULSE_VERSION_PATCH 0

namespace pdnpulse {

inline constexpr const char* version_string() { return "0.1.0"; }

// Version stamped into serialized files.  Readers reject anything newer
// than what they understand.
inline constexpr int format_version = 1;

}  // namespace pdnpulse
