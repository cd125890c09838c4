#include "tlsfd/queries.hpp"

#include "tlsfd/errors.hpp"
#include "tlsfd/jsonl.hpp"
#include "tlsfd/text_embed.hpp"

namespace tlsfd {

namespace {
constexpr const char* kQueriesFormat = "tlsfd-queries";
constexpr int kQueriesVersion = 1;
}  // namespace

std::vector<ClassQuery> canonical_queries() {
    return {{"BPFO low levels", FaultClass::BPFO},
            {"WO cable replacement", FaultClass::CableFault},
            {"Replace sensor", FaultClass::SensorFault},
            {"Looseness check bolts", FaultClass::Looseness},
            {"Normal condition", FaultClass::Healthy}};
}

std::vector<ClassQuery> analyst_queries() {
    return {{"BPFO low levels", FaultClass::BPFO},
            {"WO cable replacement", FaultClass::CableFault},
            {"Replace sensor", FaultClass::SensorFault},
            {"DC FS", std::nullopt},
            {"Breakdown", std::nullopt}};
}

std::vector<ClassQuery> load_queries(const std::filesystem::path& path) {
    using jsonl::json;
    std::vector<ClassQuery> out;
    jsonl::read_file(path, kQueriesFormat, kQueriesVersion, [&](const json& rec, std::size_t line) {
        ClassQuery q;
        q.text = jsonl::require_string(rec, "query", line);
        if (normalize_text(q.text).empty()) throw ParseError(line, "query text is empty");
        if (const auto c = rec.find("class"); c != rec.end() && !c->is_null()) {
            if (!c->is_string()) throw ParseError(line, "class must be a string or null");
            q.fault_class = parse_fault_class(c->get<std::string>());
            if (!q.fault_class) throw ParseError(line, "unknown fault class '" + c->get<std::string>() + "'");
        }
        out.push_back(std::move(q));
    });
    return out;
}

void save_queries(const std::vector<ClassQuery>& queries, const std::filesystem::path& path) {
    using jsonl::json;
    auto out = jsonl::open_for_write(path);
    jsonl::write_line(out, {{"format", kQueriesFormat}, {"version", kQueriesVersion}});
    for (const auto& q : queries) {
        json rec = {{"query", q.text}};
        rec["class"] = q.fault_class ? json(std::string(to_string(*q.fault_class))) : json(nullptr);
        jsonl::write_line(out, rec);
    }
}

}  // namespace tlsfd
