#include "tlsfd/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tlsfd/errors.hpp"

namespace tlsfd {

namespace {

void normalize(nn::Vec& v) {
    const double n = nn::l2_norm(v);
    if (!(n > 0.0)) throw NumericError("cannot normalize a zero-length projection");
    for (double& x : v) x /= n;
}

nn::Vec raw_spectrum_projection(const TlsModel& model, std::span<const double> spectrum) {
    if (spectrum.size() != kSpectrumBins) {
        throw ShapeError("spectrum has " + std::to_string(spectrum.size()) + " values, expected " +
                         std::to_string(kSpectrumBins));
    }
    return nn::head_forward(model.spectrum_head, spectrum, nn::Mode::Infer).output;
}

}  // namespace

std::string_view to_string(NormalizationMode mode) {
    switch (mode) {
        case NormalizationMode::Train: return "train";
        case NormalizationMode::Paper: return "paper";
        case NormalizationMode::None: return "none";
    }
    return "paper";
}

std::optional<NormalizationMode> parse_normalization_mode(std::string_view name) {
    if (name == "train") return NormalizationMode::Train;
    if (name == "paper") return NormalizationMode::Paper;
    if (name == "none") return NormalizationMode::None;
    return std::nullopt;
}

nn::Vec project_text(const TlsModel& model, const EmbeddingTable& table, std::string_view text,
                     NormalizationMode mode) {
    const nn::Vec embedding = table.embed(text);
    nn::Vec z = nn::head_forward(model.text_head, embedding, nn::Mode::Infer).output;
    if (mode != NormalizationMode::None) normalize(z);
    return z;
}

nn::Vec project_spectrum(const TlsModel& model, std::span<const double> spectrum, NormalizationMode mode) {
    nn::Vec z = raw_spectrum_projection(model, spectrum);
    if (mode == NormalizationMode::Train) normalize(z);
    return z;
}

ZeroShotResult zero_shot(const TlsModel& model, const EmbeddingTable& table, std::span<const Recording* const> items,
                         std::span<const std::string> queries, NormalizationMode mode) {
    if (queries.empty()) throw ParameterError("zero_shot needs at least one query");
    if (items.empty()) throw ParameterError("zero_shot needs at least one spectrum");

    std::vector<nn::Vec> q;
    q.reserve(queries.size());
    for (const auto& text : queries) {
        if (normalize_text(text).empty()) throw ParameterError("zero_shot query is empty");
        q.push_back(project_text(model, table, text, mode));
    }

    ZeroShotResult out;
    out.scores.queries.assign(queries.begin(), queries.end());
    out.scores.scores = nn::Matrix(queries.size(), items.size());
    out.argmax.resize(items.size());
    for (std::size_t s = 0; s < items.size(); ++s) {
        out.scores.item_ids.push_back(items[s]->recording_id);
        const nn::Vec z = project_spectrum(model, items[s]->spectrum, mode);
        std::size_t best = 0;
        for (std::size_t i = 0; i < q.size(); ++i) {
            const double score = nn::dot(q[i], z);
            out.scores.scores(i, s) = score;
            if (score > out.scores.scores(best, s)) best = i;
        }
        out.argmax[s] = best;
    }
    return out;
}

SpectrumIndex::SpectrumIndex(const TlsModel& model, std::vector<const Recording*> items)
    : items_(std::move(items)), raw_(items_.size(), nn::kProjectionDim), unit_(items_.size(), nn::kProjectionDim) {
    for (std::size_t i = 0; i < items_.size(); ++i) {
        const nn::Vec z = raw_spectrum_projection(model, items_[i]->spectrum);
        if (z.size() != raw_.cols) throw ShapeError("spectrum head output dimension mismatch");
        std::copy(z.begin(), z.end(), raw_.row(i).begin());
        nn::Vec u = z;
        normalize(u);
        std::copy(u.begin(), u.end(), unit_.row(i).begin());
    }
}

std::span<const double> SpectrumIndex::projection(std::size_t i, NormalizationMode mode) const {
    return mode == NormalizationMode::Train ? unit_.row(i) : raw_.row(i);
}

std::vector<RetrievalHit> retrieve(const TlsModel& model, const EmbeddingTable& table, const SpectrumIndex& index,
                                   std::string_view query, std::size_t k, NormalizationMode mode) {
    if (k < 1) throw ParameterError("k must be >= 1");
    if (index.size() == 0) throw ParameterError("cannot retrieve from an empty corpus");
    if (normalize_text(query).empty()) throw ParameterError("query is empty");
    const nn::Vec q = project_text(model, table, query, mode);

    std::vector<double> scores(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) scores[i] = nn::dot(q, index.projection(i, mode));

    std::vector<std::size_t> order(index.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t n = std::min(k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (scores[a] != scores[b]) return scores[a] > scores[b];
                          return index.item(a).recording_id < index.item(b).recording_id;
                      });
    std::vector<RetrievalHit> hits;
    hits.reserve(n);
    for (std::size_t r = 0; r < n; ++r) {
        const Recording& rec = index.item(order[r]);
        hits.push_back({rec.recording_id, scores[order[r]], std::nullopt, rec.truth_class});
    }
    return hits;
}

std::optional<std::string> nearest_annotation(const CorpusDatabase& corpus, const Recording& recording, int window_days) {
    const EpochSeconds window = static_cast<EpochSeconds>(window_days) * kSecondsPerDay;
    const Annotation* best = nullptr;
    EpochSeconds best_gap = 0;
    for (const Annotation& a : corpus.annotations) {
        if (a.asset_id != recording.asset_id) continue;
        const EpochSeconds gap = std::abs(a.date - recording.timestamp);
        if (gap > window) continue;
        if (best == nullptr || gap < best_gap || (gap == best_gap && a.annotation_id < best->annotation_id)) {
            best = &a;
            best_gap = gap;
        }
    }
    if (best == nullptr) return std::nullopt;
    return best->text;
}

std::vector<RetrievalHit> retrieve(const TlsModel& model, const EmbeddingTable& table, const CorpusDatabase& corpus,
                                   std::string_view query, std::size_t k, NormalizationMode mode) {
    if (corpus.recordings.empty()) throw ParameterError("cannot retrieve from an empty corpus");
    std::vector<const Recording*> items;
    items.reserve(corpus.recordings.size());
    for (const Recording& r : corpus.recordings) items.push_back(&r);
    const SpectrumIndex index(model, std::move(items));
    auto hits = retrieve(model, table, index, query, k, mode);
    const CorpusIndex lookup(corpus);
    for (auto& hit : hits) {
        hit.annotation = nearest_annotation(corpus, lookup.recording(hit.recording_id), model.config.window_days);
    }
    return hits;
}

}  // namespace tlsfd
