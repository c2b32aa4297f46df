#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace kceval {

// Seconds since the Unix epoch, UTC. Log timestamps carry second precision.
using EpochSeconds = std::int64_t;

// Parses an RFC 3339 timestamp such as "2024-01-15T08:30:00Z" or
// "2024-01-15T08:30:00.250-07:00". Fractional seconds are truncated.
// Returns nullopt on malformed input.
std::optional<EpochSeconds> parse_rfc3339(const std::string& text);

// Formats as UTC with a trailing 'Z'.
std::string format_rfc3339(EpochSeconds t);

}  // namespace kceval
