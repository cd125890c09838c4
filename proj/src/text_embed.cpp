#include "tlsfd/text_embed.hpp"

#include <cctype>
#include <cmath>

#include "tlsfd/errors.hpp"
#include "tlsfd/jsonl.hpp"
#include "tlsfd/seed.hpp"

namespace tlsfd {

namespace {

constexpr const char* kEmbeddingFormat = "tlsfd-embeddings";
constexpr int kEmbeddingVersion = 1;

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

std::string normalize_text(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

TrigramSlot trigram_slot(std::string_view trigram) {
    const std::uint64_t h = fnv1a(trigram);
    return {static_cast<std::size_t>(h % kTextEmbeddingDim), (mix64(h) >> 63) ? -1.0 : 1.0};
}

std::vector<double> hash_embed(std::string_view text) {
    const std::string norm = normalize_text(text);
    if (norm.empty()) throw EmbeddingError("cannot embed empty text");
    const std::string padded = " " + norm + " ";
    std::vector<double> v(kTextEmbeddingDim, 0.0);
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
        const TrigramSlot slot = trigram_slot(std::string_view(padded).substr(i, 3));
        v[slot.bucket] += slot.sign;
    }
    double norm2 = 0.0;
    for (double x : v) norm2 += x * x;
    if (norm2 == 0.0) {
        // Every trigram cancelled out; fall back to the bucket of the whole text.
        const TrigramSlot slot = trigram_slot(padded);
        v[slot.bucket] = slot.sign;
        return v;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : v) x *= inv;
    return v;
}

EmbeddingTable::EmbeddingTable(const EmbeddingTable& other)
    : entries_(other.entries_), misses_(other.misses_.load(std::memory_order_relaxed)) {}

EmbeddingTable& EmbeddingTable::operator=(const EmbeddingTable& other) {
    if (this != &other) {
        entries_ = other.entries_;
        misses_.store(other.misses_.load(std::memory_order_relaxed), std::memory_order_relaxed);
    }
    return *this;
}

void EmbeddingTable::insert(std::string_view text, std::vector<double> vector) {
    if (vector.size() != kTextEmbeddingDim) {
        throw EmbeddingError("embedding has " + std::to_string(vector.size()) + " values, expected " +
                             std::to_string(kTextEmbeddingDim));
    }
    for (double x : vector) {
        if (!std::isfinite(x)) throw EmbeddingError("embedding contains a non-finite value");
    }
    std::string key = normalize_text(text);
    if (key.empty()) throw EmbeddingError("embedding row has empty text");
    const auto [it, inserted] = entries_.try_emplace(std::move(key), std::move(vector));
    if (!inserted && it->second != vector) {
        throw EmbeddingError("conflicting vectors for text '" + it->first + "'");
    }
}

const std::vector<double>* EmbeddingTable::find(std::string_view text) const {
    const auto it = entries_.find(normalize_text(text));
    return it == entries_.end() ? nullptr : &it->second;
}

std::vector<double> EmbeddingTable::embed(std::string_view text) const {
    if (const auto* hit = find(text)) return *hit;
    std::vector<double> v = hash_embed(text);
    misses_.fetch_add(1, std::memory_order_relaxed);
    return v;
}

std::vector<double> embed_annotation(const EmbeddingTable& table, std::string_view text) {
    return table.embed(text);
}

EmbeddingTable load_embedding_table(const std::filesystem::path& path) {
    using jsonl::json;
    EmbeddingTable table;
    const json header = jsonl::read_file(path, kEmbeddingFormat, kEmbeddingVersion, [&](const json& rec, std::size_t line) {
        const std::string text = jsonl::require_string(rec, "text", line);
        const json& vec = jsonl::require(rec, "vector", line);
        if (!vec.is_array()) throw ParseError(line, "vector must be an array");
        if (vec.size() != kTextEmbeddingDim) {
            throw ParseError(line, "vector has " + std::to_string(vec.size()) + " values, expected " +
                                       std::to_string(kTextEmbeddingDim));
        }
        std::vector<double> v;
        v.reserve(kTextEmbeddingDim);
        for (const json& x : vec) {
            if (!x.is_number()) throw ParseError(line, "vector values must be numbers");
            v.push_back(x.get<double>());
        }
        try {
            table.insert(text, std::move(v));
        } catch (const EmbeddingError& e) {
            throw ParseError(line, e.what());
        }
    });
    const auto dim = header.find("dim");
    if (dim == header.end() || !dim->is_number_integer() || dim->get<std::size_t>() != kTextEmbeddingDim) {
        throw ParseError(1, "header dim must be " + std::to_string(kTextEmbeddingDim));
    }
    return table;
}

void save_embedding_table(const std::map<std::string, std::vector<double>>& rows, const std::filesystem::path& path) {
    auto out = jsonl::open_for_write(path);
    jsonl::write_line(out, {{"format", kEmbeddingFormat}, {"version", kEmbeddingVersion}, {"dim", kTextEmbeddingDim}});
    for (const auto& [text, vec] : rows) jsonl::write_line(out, {{"text", text}, {"vector", vec}});
}

}  // namespace tlsfd
