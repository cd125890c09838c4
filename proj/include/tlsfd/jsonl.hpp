#pragma once

// Helpers for the engine's line-delimited file formats: one JSON object per
// line, the first line a header {"format": ..., "version": ...}.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <fstream>
#include <string>

#include <json.hpp>

namespace tlsfd::jsonl {

using nlohmann::json;

/// Reads `path`, checks the header's format tag and version, then calls
/// `on_record(record, line_number)` for every following non-blank line.
/// Returns the parsed header. Malformed lines raise ParseError with the line.
json read_file(const std::filesystem::path& path, std::string_view format, int version,
               const std::function<void(const json&, std::size_t)>& on_record);

/// Same as read_file but from an already opened stream.
json read_stream(std::istream& in, std::string_view format, int version,
                 const std::function<void(const json&, std::size_t)>& on_record);

/// Opens `path` for writing (truncating) and throws Error on failure.
std::ofstream open_for_write(const std::filesystem::path& path);

/// Writes `record` as one compact line.
void write_line(std::ostream& out, const json& record);

/// Field accessors that turn nlohmann type errors into ParseError.
const json& require(const json& record, const char* key, std::size_t line);
std::string require_string(const json& record, const char* key, std::size_t line);
double require_number(const json& record, const char* key, std::size_t line);

}  // namespace tlsfd::jsonl
