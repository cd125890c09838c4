#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace tlsfd {

/// Whole seconds since 1970-01-01T00:00:00Z.
using EpochSeconds = std::int64_t;

inline constexpr EpochSeconds kSecondsPerDay = 86400;

/// Formats as "YYYY-MM-DDTHH:MM:SSZ".
std::string format_utc(EpochSeconds t);

/// Accepts "YYYY-MM-DDTHH:MM:SSZ" (the only form the engine writes) and the
/// same with a "+00:00" suffix. Throws ValidationError otherwise.
EpochSeconds parse_utc(std::string_view text);

}  // namespace tlsfd
