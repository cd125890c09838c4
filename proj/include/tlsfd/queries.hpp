#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tlsfd/fault_class.hpp"

namespace tlsfd {

/// A free-text query, optionally tied to the fault class it is meant to find.
struct ClassQuery {
    std::string text;
    std::optional<FaultClass> fault_class;

    bool operator==(const ClassQuery&) const = default;
};

/// One query per class of the default synthetic corpus.
std::vector<ClassQuery> canonical_queries();

/// The five analyst queries used on the mill data: "BPFO low levels",
/// "WO cable replacement", "Replace sensor", "DC FS", "Breakdown".
/// Only the first three name a class.
std::vector<ClassQuery> analyst_queries();

/// Line-delimited: header {"format":"tlsfd-queries","version":1}, then
/// {"query": "...", "class": "BPFO"} rows ("class" optional or null).
std::vector<ClassQuery> load_queries(const std::filesystem::path& path);
void save_queries(const std::vector<ClassQuery>& queries, const std::filesystem::path& path);

}  // namespace tlsfd
