#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tlsfd/fault_class.hpp"
#include "tlsfd/time_util.hpp"

namespace tlsfd {

inline constexpr std::size_t kSpectrumBins = 3200;
inline constexpr double kSpectrumMaxHz = 500.0;
inline constexpr double kBinWidthHz = kSpectrumMaxHz / static_cast<double>(kSpectrumBins);
inline constexpr int kDefaultWindowDays = 10;

/// One stored measurement: an amplitude spectrum over 0-500 Hz.
struct Recording {
    std::string recording_id;
    std::string asset_id;
    std::string subasset_id;
    EpochSeconds timestamp = 0;
    double sample_rate_hz = 1000.0;
    std::vector<double> spectrum;
    // Ground truth exists only for synthetic corpora and is never used for training.
    std::optional<FaultClass> truth_class;
    std::optional<double> truth_severity;

    bool operator==(const Recording&) const = default;
};

/// A free-text analyst note attached to an asset on a date.
struct Annotation {
    std::string annotation_id;
    std::string asset_id;
    EpochSeconds date = 0;
    std::string text;

    bool operator==(const Annotation&) const = default;
};

/// Assets -> subassets -> recordings, plus sparse dated annotations.
struct CorpusDatabase {
    std::map<std::string, std::vector<std::string>> assets;
    std::vector<Recording> recordings;
    std::vector<Annotation> annotations;

    bool operator==(const CorpusDatabase&) const = default;
};

struct Pair {
    std::string recording_id;
    std::string annotation_id;

    bool operator==(const Pair&) const = default;
    auto operator<=>(const Pair&) const = default;
};

/// Weakly labelled (recording, annotation) training pairs.
struct PairDataset {
    std::vector<Pair> pairs;
    int window_days = kDefaultWindowDays;

    bool empty() const noexcept { return pairs.empty(); }
    std::size_t size() const noexcept { return pairs.size(); }
};

struct DatasetSplit {
    PairDataset train;
    PairDataset val;
};

/// Throws ValidationError naming the first record that breaks a schema
/// invariant (spectrum shape, finiteness, id uniqueness, asset references,
/// empty annotation text).
void validate_corpus(const CorpusDatabase& db);

/// Every (recording, annotation) pair on the same asset whose timestamps are
/// at most `window_days` apart (inclusive), sorted by annotation id then
/// recording timestamp.
PairDataset propagate_annotations(const CorpusDatabase& db, int window_days = kDefaultWindowDays);

/// Partitions pairs by asset so that train and val never share an asset and
/// val holds as close to `val_fraction` of the pairs as the asset sizes allow.
/// Deterministic in `seed`.
DatasetSplit split_by_asset(const PairDataset& pairs, const CorpusDatabase& db, double val_fraction,
                            std::uint64_t seed);

void save_corpus(const CorpusDatabase& db, const std::filesystem::path& path);
CorpusDatabase load_corpus(const std::filesystem::path& path);

/// Id lookups over a corpus. Holds pointers into `db`, which must outlive it.
class CorpusIndex {
public:
    explicit CorpusIndex(const CorpusDatabase& db);

    const Recording* find_recording(const std::string& id) const;
    const Annotation* find_annotation(const std::string& id) const;
    const Recording& recording(const std::string& id) const;
    const Annotation& annotation(const std::string& id) const;

private:
    std::unordered_map<std::string, const Recording*> recordings_;
    std::unordered_map<std::string, const Annotation*> annotations_;
};

}  // namespace tlsfd
