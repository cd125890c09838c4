#include "tlsfd/jsonl.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include "tlsfd/errors.hpp"

namespace tlsfd::jsonl {

namespace {

bool is_blank(const std::string& line) {
    return line.find_first_not_of(" \t\r\n") == std::string::npos;
}

}  // namespace

json read_stream(std::istream& in, std::string_view format, int version,
                 const std::function<void(const json&, std::size_t)>& on_record) {
    std::string line;
    std::size_t line_no = 0;
    json header;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) continue;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(line_no, std::string("malformed record: ") + e.what());
        }
        if (!record.is_object()) throw ParseError(line_no, "record is not an object");
        if (!have_header) {
            const auto f = record.find("format");
            if (f == record.end() || !f->is_string() || f->get<std::string>() != format) {
                throw ParseError(line_no, "expected header with format \"" + std::string(format) + "\"");
            }
            const auto v = record.find("version");
            if (v == record.end() || !v->is_number_integer() || v->get<int>() != version) {
                throw ParseError(line_no, "unsupported version (expected " + std::to_string(version) + ")");
            }
            header = std::move(record);
            have_header = true;
            continue;
        }
        on_record(record, line_no);
    }
    if (!have_header) throw ParseError(line_no == 0 ? 1 : line_no, "missing header record");
    return header;
}

json read_file(const std::filesystem::path& path, std::string_view format, int version,
               const std::function<void(const json&, std::size_t)>& on_record) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    return read_stream(in, format, version, on_record);
}

std::ofstream open_for_write(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::out | std::ios::trunc);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    return out;
}

void write_line(std::ostream& out, const json& record) {
    out << record.dump() << '\n';
}

const json& require(const json& record, const char* key, std::size_t line) {
    const auto it = record.find(key);
    if (it == record.end()) throw ParseError(line, std::string("missing field \"") + key + "\"");
    return *it;
}

std::string require_string(const json& record, const char* key, std::size_t line) {
    const json& v = require(record, key, line);
    if (!v.is_string()) throw ParseError(line, std::string("field \"") + key + "\" must be a string");
    return v.get<std::string>();
}

double require_number(const json& record, const char* key, std::size_t line) {
    const json& v = require(record, key, line);
    if (!v.is_number()) throw ParseError(line, std::string("field \"") + key + "\" must be a number");
    return v.get<double>();
}

}  // namespace tlsfd::jsonl
