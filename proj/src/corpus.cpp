#include "tlsfd/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_set>

#include "tlsfd/errors.hpp"
#include "tlsfd/jsonl.hpp"
#include "tlsfd/seed.hpp"

namespace tlsfd {

namespace {

constexpr const char* kCorpusFormat = "tlsfd-corpus";
constexpr int kCorpusVersion = 1;

bool blank(const std::string& s) {
    return s.find_first_not_of(" \t\r\n\f\v") == std::string::npos;
}

void check_spectrum(const Recording& r) {
    if (r.spectrum.size() != kSpectrumBins) {
        throw ValidationError("recording '" + r.recording_id + "': spectrum has " +
                              std::to_string(r.spectrum.size()) + " values, expected " +
                              std::to_string(kSpectrumBins));
    }
    for (std::size_t i = 0; i < r.spectrum.size(); ++i) {
        const double v = r.spectrum[i];
        if (!std::isfinite(v) || v < 0.0) {
            throw ValidationError("recording '" + r.recording_id + "': spectrum bin " + std::to_string(i) +
                                  " is not a finite non-negative value");
        }
    }
}

}  // namespace

void validate_corpus(const CorpusDatabase& db) {
    std::unordered_set<std::string> seen;
    for (const Recording& r : db.recordings) {
        if (r.recording_id.empty()) throw ValidationError("recording with empty recording_id");
        if (!seen.insert(r.recording_id).second) {
            throw ValidationError("duplicate recording_id '" + r.recording_id + "'");
        }
        const auto asset = db.assets.find(r.asset_id);
        if (asset == db.assets.end()) {
            throw ValidationError("recording '" + r.recording_id + "' references unknown asset '" + r.asset_id + "'");
        }
        const auto& subs = asset->second;
        if (std::find(subs.begin(), subs.end(), r.subasset_id) == subs.end()) {
            throw ValidationError("recording '" + r.recording_id + "' references unknown subasset '" +
                                  r.subasset_id + "' of asset '" + r.asset_id + "'");
        }
        if (!(r.sample_rate_hz > 0.0) || !std::isfinite(r.sample_rate_hz)) {
            throw ValidationError("recording '" + r.recording_id + "': sample_rate_hz must be positive");
        }
        if (r.truth_severity && !(*r.truth_severity >= 0.0 && *r.truth_severity <= 1.0)) {
            throw ValidationError("recording '" + r.recording_id + "': truth_severity outside [0,1]");
        }
        check_spectrum(r);
    }
    seen.clear();
    for (const Annotation& a : db.annotations) {
        if (a.annotation_id.empty()) throw ValidationError("annotation with empty annotation_id");
        if (!seen.insert(a.annotation_id).second) {
            throw ValidationError("duplicate annotation_id '" + a.annotation_id + "'");
        }
        if (blank(a.text)) throw ValidationError("annotation '" + a.annotation_id + "' has empty text");
        if (!db.assets.contains(a.asset_id)) {
            throw ValidationError("annotation '" + a.annotation_id + "' references unknown asset '" + a.asset_id + "'");
        }
    }
}

PairDataset propagate_annotations(const CorpusDatabase& db, int window_days) {
    if (window_days < 1) throw ParameterError("window_days must be >= 1");
    validate_corpus(db);

    std::unordered_map<std::string, std::vector<const Recording*>> by_asset;
    for (const Recording& r : db.recordings) by_asset[r.asset_id].push_back(&r);
    for (auto& [asset, recs] : by_asset) {
        std::sort(recs.begin(), recs.end(), [](const Recording* a, const Recording* b) {
            return a->timestamp != b->timestamp ? a->timestamp < b->timestamp : a->recording_id < b->recording_id;
        });
    }

    std::vector<const Annotation*> annotations;
    annotations.reserve(db.annotations.size());
    for (const Annotation& a : db.annotations) annotations.push_back(&a);
    std::sort(annotations.begin(), annotations.end(),
              [](const Annotation* a, const Annotation* b) { return a->annotation_id < b->annotation_id; });

    const EpochSeconds window = static_cast<EpochSeconds>(window_days) * kSecondsPerDay;
    PairDataset out;
    out.window_days = window_days;
    for (const Annotation* a : annotations) {
        const auto it = by_asset.find(a->asset_id);
        if (it == by_asset.end()) continue;
        const auto& recs = it->second;
        // Recordings are time-sorted, so the window is a contiguous range.
        auto lo = std::lower_bound(recs.begin(), recs.end(), a->date - window,
                                   [](const Recording* r, EpochSeconds t) { return r->timestamp < t; });
        for (auto r = lo; r != recs.end() && (*r)->timestamp <= a->date + window; ++r) {
            out.pairs.push_back({(*r)->recording_id, a->annotation_id});
        }
    }
    return out;
}

DatasetSplit split_by_asset(const PairDataset& pairs, const CorpusDatabase& db, double val_fraction,
                            std::uint64_t seed) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ParameterError("val_fraction must lie in (0,1)");
    if (pairs.empty()) throw SplitError("cannot split an empty pair dataset");

    std::unordered_map<std::string, const Annotation*> annotations;
    for (const Annotation& a : db.annotations) annotations.emplace(a.annotation_id, &a);

    std::map<std::string, std::size_t> pairs_per_asset;
    std::vector<const std::string*> pair_asset(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto it = annotations.find(pairs.pairs[i].annotation_id);
        if (it == annotations.end()) {
            throw SplitError("pair references unknown annotation '" + pairs.pairs[i].annotation_id + "'");
        }
        pair_asset[i] = &it->second->asset_id;
        ++pairs_per_asset[it->second->asset_id];
    }
    if (pairs_per_asset.size() < 2) throw SplitError("need at least 2 distinct assets to split, found " +
                                                     std::to_string(pairs_per_asset.size()));

    std::vector<std::string> order;
    for (const auto& [asset, n] : pairs_per_asset) order.push_back(asset);
    Rng rng = make_rng(seed, {0x5b11u});
    std::shuffle(order.begin(), order.end(), rng);

    const double target = val_fraction * static_cast<double>(pairs.size());
    std::set<std::string> val_assets;
    double val_count = 0.0;
    for (const std::string& asset : order) {
        const double n = static_cast<double>(pairs_per_asset[asset]);
        if (std::abs(val_count + n - target) < std::abs(val_count - target)) {
            val_assets.insert(asset);
            val_count += n;
        }
    }
    if (val_assets.empty()) val_assets.insert(order.front());
    if (val_assets.size() == order.size()) val_assets.erase(order.back());

    DatasetSplit split;
    split.train.window_days = split.val.window_days = pairs.window_days;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        (val_assets.contains(*pair_asset[i]) ? split.val : split.train).pairs.push_back(pairs.pairs[i]);
    }
    return split;
}

// ---------------------------------------------------------------------------
// Persistence

void save_corpus(const CorpusDatabase& db, const std::filesystem::path& path) {
    using jsonl::json;
    auto out = jsonl::open_for_write(path);
    jsonl::write_line(out, {{"format", kCorpusFormat}, {"version", kCorpusVersion}});
    for (const auto& [asset, subs] : db.assets) {
        jsonl::write_line(out, {{"kind", "asset"}, {"asset_id", asset}, {"subasset_ids", subs}});
    }
    for (const Recording& r : db.recordings) {
        json rec = {{"kind", "recording"},
                    {"recording_id", r.recording_id},
                    {"asset_id", r.asset_id},
                    {"subasset_id", r.subasset_id},
                    {"timestamp", format_utc(r.timestamp)},
                    {"sample_rate_hz", r.sample_rate_hz},
                    {"spectrum", r.spectrum}};
        rec["truth_class"] = r.truth_class ? json(std::string(to_string(*r.truth_class))) : json(nullptr);
        rec["truth_severity"] = r.truth_severity ? json(*r.truth_severity) : json(nullptr);
        jsonl::write_line(out, rec);
    }
    for (const Annotation& a : db.annotations) {
        jsonl::write_line(out, {{"kind", "annotation"},
                                {"annotation_id", a.annotation_id},
                                {"asset_id", a.asset_id},
                                {"date", format_utc(a.date)},
                                {"text", a.text}});
    }
    if (!out) throw Error("failed writing '" + path.string() + "'");
}

CorpusDatabase load_corpus(const std::filesystem::path& path) {
    using jsonl::json;
    CorpusDatabase db;
    bool explicit_assets = false;
    std::unordered_set<std::string> recording_ids;

    const auto timestamp_field = [](const json& rec, const char* key, std::size_t line) {
        try {
            return parse_utc(jsonl::require_string(rec, key, line));
        } catch (const ValidationError& e) {
            throw ParseError(line, e.what());
        }
    };

    jsonl::read_file(path, kCorpusFormat, kCorpusVersion, [&](const json& rec, std::size_t line) {
        const std::string kind = jsonl::require_string(rec, "kind", line);
        if (kind == "asset") {
            explicit_assets = true;
            const json& subs = jsonl::require(rec, "subasset_ids", line);
            if (!subs.is_array()) throw ParseError(line, "subasset_ids must be an array");
            auto& list = db.assets[jsonl::require_string(rec, "asset_id", line)];
            for (const json& s : subs) {
                if (!s.is_string()) throw ParseError(line, "subasset_ids must hold strings");
                list.push_back(s.get<std::string>());
            }
        } else if (kind == "recording") {
            Recording r;
            r.recording_id = jsonl::require_string(rec, "recording_id", line);
            r.asset_id = jsonl::require_string(rec, "asset_id", line);
            r.subasset_id = jsonl::require_string(rec, "subasset_id", line);
            r.timestamp = timestamp_field(rec, "timestamp", line);
            r.sample_rate_hz = jsonl::require_number(rec, "sample_rate_hz", line);
            const json& spec = jsonl::require(rec, "spectrum", line);
            if (!spec.is_array()) throw ParseError(line, "spectrum must be an array");
            if (spec.size() != kSpectrumBins) {
                throw ValidationError("line " + std::to_string(line) + ": recording '" + r.recording_id +
                                      "' spectrum has " + std::to_string(spec.size()) + " values, expected " +
                                      std::to_string(kSpectrumBins));
            }
            r.spectrum.reserve(kSpectrumBins);
            for (const json& v : spec) {
                if (!v.is_number()) throw ParseError(line, "spectrum values must be numbers");
                r.spectrum.push_back(v.get<double>());
            }
            if (const auto tc = rec.find("truth_class"); tc != rec.end() && !tc->is_null()) {
                if (!tc->is_string()) throw ParseError(line, "truth_class must be a string or null");
                r.truth_class = parse_fault_class(tc->get<std::string>());
                if (!r.truth_class) throw ParseError(line, "unknown truth_class '" + tc->get<std::string>() + "'");
            }
            if (const auto ts = rec.find("truth_severity"); ts != rec.end() && !ts->is_null()) {
                if (!ts->is_number()) throw ParseError(line, "truth_severity must be a number or null");
                r.truth_severity = ts->get<double>();
            }
            if (!recording_ids.insert(r.recording_id).second) {
                throw ValidationError("line " + std::to_string(line) + ": duplicate recording_id '" +
                                      r.recording_id + "'");
            }
            db.recordings.push_back(std::move(r));
        } else if (kind == "annotation") {
            Annotation a;
            a.annotation_id = jsonl::require_string(rec, "annotation_id", line);
            a.asset_id = jsonl::require_string(rec, "asset_id", line);
            a.date = timestamp_field(rec, "date", line);
            a.text = jsonl::require_string(rec, "text", line);
            db.annotations.push_back(std::move(a));
        } else {
            throw ParseError(line, "unknown record kind '" + kind + "'");
        }
    });

    if (!explicit_assets) {
        // Older files carry no asset records; the hierarchy is implied by recordings.
        for (const Recording& r : db.recordings) {
            auto& subs = db.assets[r.asset_id];
            if (std::find(subs.begin(), subs.end(), r.subasset_id) == subs.end()) subs.push_back(r.subasset_id);
        }
    }
    validate_corpus(db);
    return db;
}

// ---------------------------------------------------------------------------

CorpusIndex::CorpusIndex(const CorpusDatabase& db) {
    recordings_.reserve(db.recordings.size());
    for (const Recording& r : db.recordings) recordings_.emplace(r.recording_id, &r);
    for (const Annotation& a : db.annotations) annotations_.emplace(a.annotation_id, &a);
}

const Recording* CorpusIndex::find_recording(const std::string& id) const {
    const auto it = recordings_.find(id);
    return it == recordings_.end() ? nullptr : it->second;
}

const Annotation* CorpusIndex::find_annotation(const std::string& id) const {
    const auto it = annotations_.find(id);
    return it == annotations_.end() ? nullptr : it->second;
}

const Recording& CorpusIndex::recording(const std::string& id) const {
    if (const Recording* r = find_recording(id)) return *r;
    throw NotFoundError("unknown recording_id '" + id + "'");
}

const Annotation& CorpusIndex::annotation(const std::string& id) const {
    if (const Annotation* a = find_annotation(id)) return *a;
    throw NotFoundError("unknown annotation_id '" + id + "'");
}

}  // namespace tlsfd
