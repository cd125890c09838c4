#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "test_support.hpp"
#include "tlsfd/corpus.hpp"
#include "tlsfd/errors.hpp"
#include "tlsfd/synthgen.hpp"
#include "tlsfd/time_util.hpp"

using namespace tlsfd;
using testing::day;
using testing::flat_spectrum;

namespace {

Recording make_recording(const std::string& id, const std::string& asset, EpochSeconds t) {
    Recording r;
    r.recording_id = id;
    r.asset_id = asset;
    r.subasset_id = asset + "-s1";
    r.timestamp = t;
    r.spectrum = flat_spectrum();
    return r;
}

CorpusDatabase single_asset_corpus() {
    CorpusDatabase db;
    db.assets["A"] = {"A-s1"};
    db.recordings.push_back(make_recording("r-3", "A", day(-3)));
    db.recordings.push_back(make_recording("r+5", "A", day(5)));
    db.recordings.push_back(make_recording("r+15", "A", day(15)));
    db.annotations.push_back({"n0", "A", day(0), "BPFO Env low"});
    return db;
}

std::set<Pair> as_set(const PairDataset& d) { return {d.pairs.begin(), d.pairs.end()}; }

std::set<std::string> assets_of(const PairDataset& d, const CorpusDatabase& db) {
    CorpusIndex index(db);
    std::set<std::string> out;
    for (const Pair& p : d.pairs) out.insert(index.recording(p.recording_id).asset_id);
    return out;
}

// Ten assets, each with one annotation and `per_asset` recordings in window.
CorpusDatabase equal_assets_corpus(int n_assets, int per_asset) {
    CorpusDatabase db;
    for (int a = 0; a < n_assets; ++a) {
        const std::string asset = "A" + std::to_string(a);
        db.assets[asset] = {asset + "-s1"};
        for (int r = 0; r < per_asset; ++r) {
            db.recordings.push_back(make_recording(asset + "-r" + std::to_string(r), asset, day(r % 5)));
        }
        db.annotations.push_back({asset + "-n", asset, day(0), "note"});
    }
    return db;
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    return lines;
}

void write_lines(const std::filesystem::path& p, const std::vector<std::string>& lines) {
    std::ofstream out(p);
    for (const auto& l : lines) out << l << '\n';
}

}  // namespace

TEST_CASE("propagation keeps recordings inside the window") {
    const PairDataset pairs = propagate_annotations(single_asset_corpus(), 10);
    REQUIRE(pairs.size() == 2);
    CHECK(pairs.pairs[0] == Pair{"r-3", "n0"});
    CHECK(pairs.pairs[1] == Pair{"r+5", "n0"});
    CHECK(pairs.window_days == 10);
}

TEST_CASE("window boundary is inclusive") {
    CorpusDatabase db = single_asset_corpus();
    db.recordings.push_back(make_recording("edge", "A", day(10)));
    db.recordings.push_back(make_recording("past", "A", day(10) + 1));
    const auto pairs = as_set(propagate_annotations(db, 10));
    CHECK(pairs.count({"edge", "n0"}) == 1);
    CHECK(pairs.count({"past", "n0"}) == 0);
}

TEST_CASE("annotations only reach recordings of their own asset") {
    CorpusDatabase db = single_asset_corpus();
    db.assets["B"] = {"B-s1"};
    db.recordings.push_back(make_recording("b0", "B", day(1)));
    CHECK(as_set(propagate_annotations(db, 10)).count({"b0", "n0"}) == 0);
}

TEST_CASE("zero annotations give an empty dataset") {
    CorpusDatabase db = single_asset_corpus();
    db.annotations.clear();
    CHECK(propagate_annotations(db, 10).empty());
}

TEST_CASE("window_days below 1 is rejected") {
    CHECK_THROWS_AS(propagate_annotations(single_asset_corpus(), 0), ParameterError);
}

TEST_CASE("pairs are sorted by annotation id then recording time") {
    CorpusDatabase db = single_asset_corpus();
    db.recordings.push_back(make_recording("early", "A", day(-9)));
    db.annotations.push_back({"m0", "A", day(1), "Cable damaged"});
    const PairDataset pairs = propagate_annotations(db, 10);
    CorpusIndex index(db);
    for (std::size_t i = 1; i < pairs.size(); ++i) {
        const Pair& a = pairs.pairs[i - 1];
        const Pair& b = pairs.pairs[i];
        const bool ordered = a.annotation_id < b.annotation_id ||
                             (a.annotation_id == b.annotation_id &&
                              index.recording(a.recording_id).timestamp <= index.recording(b.recording_id).timestamp);
        CHECK(ordered);
    }
    CHECK(pairs.pairs.front().annotation_id == "m0");
}

TEST_CASE("propagation matches a brute-force double loop") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const CorpusDatabase db = testing::random_small_corpus(seed);
        for (int window : {1, 10, 25}) {
            const PairDataset pairs = propagate_annotations(db, window);
            CHECK(pairs.size() == as_set(pairs).size());
            CHECK(as_set(pairs) == testing::brute_force_pairs(db, window));
        }
    }
}

TEST_CASE("propagation is monotone in the window") {
    for (std::uint64_t seed = 200; seed < 230; ++seed) {
        const CorpusDatabase db = testing::random_small_corpus(seed);
        std::set<Pair> previous;
        for (int window = 1; window <= 40; window += 3) {
            const auto current = as_set(propagate_annotations(db, window));
            CHECK(std::includes(current.begin(), current.end(), previous.begin(), previous.end()));
            previous = current;
        }
    }
}

TEST_CASE("split of ten equal assets puts exactly two in val") {
    const CorpusDatabase db = equal_assets_corpus(10, 6);
    const PairDataset pairs = propagate_annotations(db, 10);
    REQUIRE(pairs.size() == 60);
    const DatasetSplit split = split_by_asset(pairs, db, 0.2, 7);
    CHECK(assets_of(split.val, db).size() == 2);
    CHECK(split.val.size() == 12);
    CHECK(split.train.size() == 48);
}

TEST_CASE("split is deterministic, disjoint and complete") {
    for (std::uint64_t seed : {1u, 7u, 99u}) {
        const CorpusDatabase db = equal_assets_corpus(7, 4);
        const PairDataset pairs = propagate_annotations(db, 10);
        const DatasetSplit a = split_by_asset(pairs, db, 0.3, seed);
        const DatasetSplit b = split_by_asset(pairs, db, 0.3, seed);
        CHECK(a.train.pairs == b.train.pairs);
        CHECK(a.val.pairs == b.val.pairs);

        const auto ta = assets_of(a.train, db);
        const auto va = assets_of(a.val, db);
        std::vector<std::string> shared;
        std::set_intersection(ta.begin(), ta.end(), va.begin(), va.end(), std::back_inserter(shared));
        CHECK(shared.empty());

        std::set<Pair> joined = as_set(a.train);
        for (const Pair& p : a.val.pairs) CHECK(joined.insert(p).second);
        CHECK(joined == as_set(pairs));
        CHECK(a.train.window_days == pairs.window_days);
        CHECK(a.val.window_days == pairs.window_days);
    }
}

TEST_CASE("split needs two assets") {
    const CorpusDatabase db = single_asset_corpus();
    const PairDataset pairs = propagate_annotations(db, 10);
    CHECK_THROWS_AS(split_by_asset(pairs, db, 0.2, 1), SplitError);
    CHECK_THROWS_AS(split_by_asset(PairDataset{}, db, 0.2, 1), SplitError);
    const CorpusDatabase two = equal_assets_corpus(2, 3);
    CHECK_THROWS_AS(split_by_asset(propagate_annotations(two, 10), two, 0.0, 1), ParameterError);
    CHECK_THROWS_AS(split_by_asset(propagate_annotations(two, 10), two, 1.0, 1), ParameterError);
}

TEST_CASE("default synthetic split is near the requested fraction") {
    const CorpusDatabase db = gen_corpus(GeneratorConfig::defaults());
    const PairDataset pairs = propagate_annotations(db, 10);
    const DatasetSplit split = split_by_asset(pairs, db, 0.2, 1);
    const double target = 0.2 * static_cast<double>(pairs.size());
    CHECK(static_cast<double>(split.val.size()) >= 0.9 * target);
    CHECK(static_cast<double>(split.val.size()) <= 1.1 * target);
}

TEST_CASE("save then load is the identity") {
    testing::TempDir dir;
    CorpusDatabase db = single_asset_corpus();
    Rng rng = make_rng(5);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    for (auto& r : db.recordings) {
        for (double& v : r.spectrum) v = u(rng);
    }
    db.recordings[0].truth_class = FaultClass::BPFO;
    db.recordings[0].truth_severity = 0.123456789012345;
    db.recordings[1].sample_rate_hz = 1234.5;
    save_corpus(db, dir / "c.jsonl");
    const CorpusDatabase back = load_corpus(dir / "c.jsonl");
    CHECK(back == db);

    // Second generation: the file bytes are stable.
    save_corpus(back, dir / "d.jsonl");
    CHECK(testing::read_bytes(dir / "c.jsonl") == testing::read_bytes(dir / "d.jsonl"));
}

TEST_CASE("generated corpus round trips") {
    GeneratorConfig config = GeneratorConfig::defaults();
    config.n_assets = 4;
    config.recordings_per_annotation = 5;
    const CorpusDatabase db = gen_corpus(config);
    testing::TempDir dir;
    save_corpus(db, dir / "g.jsonl");
    CHECK(load_corpus(dir / "g.jsonl") == db);
}

TEST_CASE("a short spectrum names its line and the expected length") {
    testing::TempDir dir;
    save_corpus(single_asset_corpus(), dir / "c.jsonl");
    auto lines = read_lines(dir / "c.jsonl");
    std::size_t target = 0;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].find("\"recording\"") != std::string::npos) {
            target = i;
            break;
        }
    }
    REQUIRE(target > 0);
    auto rec = nlohmann::json::parse(lines[target]);
    rec["spectrum"].erase(rec["spectrum"].size() - 1);
    REQUIRE(rec["spectrum"].size() == 3199);
    lines[target] = rec.dump();
    write_lines(dir / "bad.jsonl", lines);
    try {
        load_corpus(dir / "bad.jsonl");
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("line " + std::to_string(target + 1)) != std::string::npos);
        CHECK(msg.find("3200") != std::string::npos);
        CHECK(msg.find("3199") != std::string::npos);
    }
}

TEST_CASE("an annotation on an unknown asset fails validation") {
    testing::TempDir dir;
    CorpusDatabase db = single_asset_corpus();
    save_corpus(db, dir / "c.jsonl");
    auto lines = read_lines(dir / "c.jsonl");
    lines.push_back(nlohmann::json{{"kind", "annotation"},
                                   {"annotation_id", "ghost"},
                                   {"asset_id", "nowhere"},
                                   {"date", format_utc(day(0))},
                                   {"text", "Cable damaged"}}
                        .dump());
    write_lines(dir / "bad.jsonl", lines);
    try {
        load_corpus(dir / "bad.jsonl");
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("nowhere") != std::string::npos);
    }
}

TEST_CASE("duplicate recording ids are rejected") {
    testing::TempDir dir;
    CorpusDatabase db = single_asset_corpus();
    db.recordings.push_back(db.recordings.front());
    CHECK_THROWS_AS(validate_corpus(db), ValidationError);

    save_corpus(single_asset_corpus(), dir / "c.jsonl");
    auto lines = read_lines(dir / "c.jsonl");
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].find("\"recording\"") != std::string::npos) {
            lines.push_back(lines[i]);
            break;
        }
    }
    write_lines(dir / "dup.jsonl", lines);
    CHECK_THROWS_AS(load_corpus(dir / "dup.jsonl"), ValidationError);
}

TEST_CASE("malformed lines report their line number") {
    testing::TempDir dir;
    save_corpus(single_asset_corpus(), dir / "c.jsonl");
    auto lines = read_lines(dir / "c.jsonl");
    lines.insert(lines.begin() + 2, "{not json");
    write_lines(dir / "bad.jsonl", lines);
    try {
        load_corpus(dir / "bad.jsonl");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }

    write_lines(dir / "hdr.jsonl", {R"({"format":"something-else","version":1})"});
    CHECK_THROWS_AS(load_corpus(dir / "hdr.jsonl"), ParseError);
}

TEST_CASE("validation names the offending record") {
    CorpusDatabase db = single_asset_corpus();
    db.recordings[1].spectrum[7] = -1.0;
    try {
        validate_corpus(db);
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("r+5") != std::string::npos);
    }

    db = single_asset_corpus();
    db.recordings[0].spectrum[0] = std::nan("");
    CHECK_THROWS_AS(validate_corpus(db), ValidationError);

    db = single_asset_corpus();
    db.annotations[0].text = "   ";
    CHECK_THROWS_AS(validate_corpus(db), ValidationError);

    db = single_asset_corpus();
    db.recordings[0].subasset_id = "A-s9";
    CHECK_THROWS_AS(validate_corpus(db), ValidationError);

    CHECK_NOTHROW(validate_corpus(single_asset_corpus()));
}

TEST_CASE("corpus index lookups") {
    const CorpusDatabase db = single_asset_corpus();
    const CorpusIndex index(db);
    CHECK(index.recording("r+5").timestamp == day(5));
    CHECK(index.annotation("n0").text == "BPFO Env low");
    CHECK(index.find_recording("nope") == nullptr);
    CHECK_THROWS_AS(index.recording("nope"), NotFoundError);
    CHECK_THROWS_AS(index.annotation("nope"), NotFoundError);
}

TEST_CASE("UTC timestamps round trip") {
    CHECK(format_utc(0) == "1970-01-01T00:00:00Z");
    CHECK(format_utc(day(0)) == "2021-01-01T00:00:00Z");
    CHECK(parse_utc("2021-01-01T00:00:00Z") == day(0));
    CHECK(parse_utc("2021-01-01T00:00:00+00:00") == day(0));
    CHECK(parse_utc("2024-02-29T23:59:59Z") + 1 == parse_utc("2024-03-01T00:00:00Z"));
    Rng rng = make_rng(3);
    std::uniform_int_distribution<EpochSeconds> t(-2000000000, 4000000000);
    for (int i = 0; i < 1000; ++i) {
        const EpochSeconds s = t(rng);
        CHECK(parse_utc(format_utc(s)) == s);
    }
    CHECK_THROWS_AS(parse_utc("2021-01-01"), ValidationError);
    CHECK_THROWS_AS(parse_utc("2021-13-01T00:00:00Z"), ValidationError);
    CHECK_THROWS_AS(parse_utc("2021-01-01T00:00:00+02:00"), ValidationError);
}
