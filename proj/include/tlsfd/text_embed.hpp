#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace tlsfd {

inline constexpr std::size_t kTextEmbeddingDim = 768;

/// Trim, collapse internal whitespace runs to one space, ASCII lower-case.
std::string normalize_text(std::string_view text);

/// Deterministic encoder-free embedding: signed hashing of the character
/// trigrams of " " + normalize_text(text) + " " into 768 buckets, then L2
/// normalisation. Throws EmbeddingError for empty text.
std::vector<double> hash_embed(std::string_view text);

/// Bucket and sign a trigram contributes to in hash_embed.
struct TrigramSlot {
    std::size_t bucket;
    double sign;
};
TrigramSlot trigram_slot(std::string_view trigram);

/// Precomputed sentence embeddings keyed by normalised text, with a hashing
/// fallback for texts the table does not hold.
class EmbeddingTable {
public:
    enum class Source { Loaded, Fallback };

    EmbeddingTable() = default;
    EmbeddingTable(const EmbeddingTable& other);
    EmbeddingTable& operator=(const EmbeddingTable& other);

    /// Adds a row. Re-inserting the same vector is a no-op; a different
    /// vector under the same normalised key throws EmbeddingError.
    void insert(std::string_view text, std::vector<double> vector);

    Source source() const noexcept { return entries_.empty() ? Source::Fallback : Source::Loaded; }
    std::size_t size() const noexcept { return entries_.size(); }
    const std::vector<double>* find(std::string_view text) const;

    /// Stored vector on a hit, hash_embed(text) on a miss (counted).
    std::vector<double> embed(std::string_view text) const;
    std::uint64_t fallback_count() const noexcept { return misses_.load(std::memory_order_relaxed); }

private:
    std::map<std::string, std::vector<double>, std::less<>> entries_;
    mutable std::atomic<std::uint64_t> misses_{0};
};

std::vector<double> embed_annotation(const EmbeddingTable& table, std::string_view text);

/// Reads the line-delimited embedding file (header dim must be 768).
EmbeddingTable load_embedding_table(const std::filesystem::path& path);
void save_embedding_table(const std::map<std::string, std::vector<double>>& rows,
                          const std::filesystem::path& path);

}  // namespace tlsfd
