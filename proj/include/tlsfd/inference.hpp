#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tlsfd/corpus.hpp"
#include "tlsfd/model.hpp"
#include "tlsfd/text_embed.hpp"

namespace tlsfd {

/// Which projections are unit-normalised before taking inner products.
enum class NormalizationMode {
    Train,  // both text and spectrum (as during training)
    Paper,  // text only; spectrum projections keep their length
    None,
};

inline constexpr NormalizationMode kDefaultNormalization = NormalizationMode::Paper;

std::string_view to_string(NormalizationMode mode);
/// "train", "paper", "none"; nullopt otherwise.
std::optional<NormalizationMode> parse_normalization_mode(std::string_view name);

nn::Vec project_text(const TlsModel& model, const EmbeddingTable& table, std::string_view text,
                     NormalizationMode mode = kDefaultNormalization);
nn::Vec project_spectrum(const TlsModel& model, std::span<const double> spectrum,
                         NormalizationMode mode = kDefaultNormalization);

/// scores(q, s) = projected query q . projected spectrum s.
struct ScoreMatrix {
    std::vector<std::string> queries;
    std::vector<std::string> item_ids;
    nn::Matrix scores;  // queries x items
};

struct ZeroShotResult {
    ScoreMatrix scores;
    std::vector<std::size_t> argmax;  // per item: best query index, lowest index on ties
};

ZeroShotResult zero_shot(const TlsModel& model, const EmbeddingTable& table, std::span<const Recording* const> items,
                         std::span<const std::string> queries, NormalizationMode mode = kDefaultNormalization);

/// Raw (un-normalised) infer-mode spectrum projections for a set of
/// recordings, reusable across many queries.
class SpectrumIndex {
public:
    SpectrumIndex(const TlsModel& model, std::vector<const Recording*> items);

    std::size_t size() const noexcept { return items_.size(); }
    const Recording& item(std::size_t i) const { return *items_[i]; }
    /// Projection of item i under `mode` (spectrum side only).
    std::span<const double> projection(std::size_t i, NormalizationMode mode) const;

private:
    std::vector<const Recording*> items_;
    nn::Matrix raw_;
    nn::Matrix unit_;
};

struct RetrievalHit {
    std::string recording_id;
    double score = 0.0;
    std::optional<std::string> annotation;
    std::optional<FaultClass> truth_class;
};

/// Top-k items by score, descending; ties by recording id. Annotation is left
/// empty; the corpus overload fills it.
std::vector<RetrievalHit> retrieve(const TlsModel& model, const EmbeddingTable& table, const SpectrumIndex& index,
                                   std::string_view query, std::size_t k, NormalizationMode mode = kDefaultNormalization);

/// Scores every corpus recording. Each hit carries the text of the closest
/// annotation on the same asset within the model's propagation window.
std::vector<RetrievalHit> retrieve(const TlsModel& model, const EmbeddingTable& table, const CorpusDatabase& corpus,
                                   std::string_view query, std::size_t k, NormalizationMode mode = kDefaultNormalization);

/// Text of the annotation nearest in time to `recording` on its asset,
/// within `window_days`; nullopt if none.
std::optional<std::string> nearest_annotation(const CorpusDatabase& corpus, const Recording& recording, int window_days);

}  // namespace tlsfd
