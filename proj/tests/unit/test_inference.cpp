#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "tlsfd/errors.hpp"
#include "tlsfd/inference.hpp"
#include "tlsfd/synthgen.hpp"

using namespace tlsfd;

namespace {

struct Fixture {
    CorpusDatabase corpus;
    TlsModel model;
    EmbeddingTable table;
    std::vector<const Recording*> items;

    explicit Fixture(std::uint64_t seed = 1) {
        GeneratorConfig g = GeneratorConfig::defaults();
        g.n_assets = 6;
        g.recordings_per_annotation = 5;
        g.seed = seed;
        corpus = gen_corpus(g);
        TrainConfig c;
        c.seed = seed;
        model = TlsModel::init(c);
        for (const Recording& r : corpus.recordings) items.push_back(&r);
    }
};

double norm(const nn::Vec& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

const std::vector<std::string> kQueries = {"BPFO low levels", "WO cable replacement", "Replace sensor",
                                           "Looseness check bolts", "Normal condition"};

}  // namespace

TEST_CASE("normalization mode names round trip") {
    for (NormalizationMode m : {NormalizationMode::Train, NormalizationMode::Paper, NormalizationMode::None}) {
        CHECK(parse_normalization_mode(to_string(m)) == m);
    }
    CHECK(!parse_normalization_mode("Paper").has_value());
    CHECK(kDefaultNormalization == NormalizationMode::Paper);
}

TEST_CASE("projection lengths follow the normalization mode") {
    const Fixture f;
    const auto& spec = f.corpus.recordings[0].spectrum;
    CHECK(norm(project_text(f.model, f.table, "BPFO low", NormalizationMode::Paper)) == doctest::Approx(1.0));
    CHECK(norm(project_text(f.model, f.table, "BPFO low", NormalizationMode::Train)) == doctest::Approx(1.0));
    CHECK(norm(project_spectrum(f.model, spec, NormalizationMode::Train)) == doctest::Approx(1.0));
    // Layer norm output has length about sqrt(64), not 1.
    CHECK(norm(project_spectrum(f.model, spec, NormalizationMode::Paper)) > 2.0);
    CHECK(project_spectrum(f.model, spec, NormalizationMode::Paper) ==
          project_spectrum(f.model, spec, NormalizationMode::None));
    CHECK_THROWS_AS(project_spectrum(f.model, std::vector<double>(3199, 0.0)), ShapeError);
}

TEST_CASE("inference is pure") {
    const Fixture f;
    const std::string before = serialize_model(f.model);
    const auto a = zero_shot(f.model, f.table, f.items, kQueries);
    const auto b = zero_shot(f.model, f.table, f.items, kQueries);
    CHECK(a.scores.scores == b.scores.scores);
    CHECK(a.argmax == b.argmax);
    CHECK(project_text(f.model, f.table, "x") == project_text(f.model, f.table, "x"));
    CHECK(serialize_model(f.model) == before);
}

TEST_CASE("zero-shot scores are query . spectrum projections") {
    const Fixture f;
    for (NormalizationMode mode : {NormalizationMode::Train, NormalizationMode::Paper, NormalizationMode::None}) {
        const auto r = zero_shot(f.model, f.table, f.items, kQueries, mode);
        REQUIRE(r.scores.scores.rows == kQueries.size());
        REQUIRE(r.scores.scores.cols == f.items.size());
        for (std::size_t s = 0; s < f.items.size(); s += 7) {
            CHECK(r.scores.item_ids[s] == f.items[s]->recording_id);
            const nn::Vec z = project_spectrum(f.model, f.items[s]->spectrum, mode);
            for (std::size_t q = 0; q < kQueries.size(); ++q) {
                const nn::Vec t = project_text(f.model, f.table, kQueries[q], mode);
                double d = 0.0;
                for (std::size_t k = 0; k < t.size(); ++k) d += t[k] * z[k];
                CHECK(r.scores.scores(q, s) == doctest::Approx(d).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("zero-shot argmax ignores spectrum length") {
    // Per-spectrum positive rescaling cannot change the best query.
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const Fixture f(seed);
        const auto paper = zero_shot(f.model, f.table, f.items, kQueries, NormalizationMode::Paper);
        const auto train = zero_shot(f.model, f.table, f.items, kQueries, NormalizationMode::Train);
        CHECK(paper.argmax == train.argmax);
    }
}

TEST_CASE("zero-shot ties go to the lowest query index") {
    const Fixture f;
    const std::vector<std::string> twice = {"Replace sensor", "replace   SENSOR"};
    const auto r = zero_shot(f.model, f.table, f.items, twice);
    for (std::size_t a : r.argmax) CHECK(a == 0);

    // Appending a duplicate of every query leaves the argmax unchanged.
    std::vector<std::string> doubled = kQueries;
    doubled.insert(doubled.end(), kQueries.begin(), kQueries.end());
    CHECK(zero_shot(f.model, f.table, f.items, doubled).argmax == zero_shot(f.model, f.table, f.items, kQueries).argmax);
}

TEST_CASE("zero-shot argument errors") {
    const Fixture f;
    CHECK_THROWS_AS(zero_shot(f.model, f.table, f.items, std::vector<std::string>{}), ParameterError);
    CHECK_THROWS_AS(zero_shot(f.model, f.table, std::vector<const Recording*>{}, kQueries), ParameterError);
    CHECK_THROWS_AS(zero_shot(f.model, f.table, f.items, std::vector<std::string>{"ok", "  "}), ParameterError);
}

TEST_CASE("retrieval returns min(k, n) hits in descending score order") {
    const Fixture f;
    const std::size_t n = f.corpus.recordings.size();
    for (std::size_t k : {std::size_t{1}, std::size_t{3}, n, n + 10}) {
        const auto hits = retrieve(f.model, f.table, f.corpus, "BPFO low levels", k);
        CHECK(hits.size() == std::min(k, n));
        for (std::size_t i = 1; i < hits.size(); ++i) {
            CHECK(hits[i - 1].score >= hits[i].score);
            if (hits[i - 1].score == hits[i].score) CHECK(hits[i - 1].recording_id < hits[i].recording_id);
        }
    }
}

TEST_CASE("a smaller k gives a prefix of a larger k") {
    const Fixture f;
    const auto big = retrieve(f.model, f.table, f.corpus, "WO cable replacement", 20);
    for (std::size_t k = 1; k <= 20; ++k) {
        const auto small = retrieve(f.model, f.table, f.corpus, "WO cable replacement", k);
        for (std::size_t i = 0; i < small.size(); ++i) {
            CHECK(small[i].recording_id == big[i].recording_id);
            CHECK(small[i].score == big[i].score);
        }
    }
}

TEST_CASE("retrieval scores match the full zero-shot score row") {
    const Fixture f;
    const std::vector<std::string> q = {"Looseness check bolts"};
    const auto z = zero_shot(f.model, f.table, f.items, q);
    std::vector<double> row(z.scores.scores.row(0).begin(), z.scores.scores.row(0).end());
    std::sort(row.begin(), row.end(), std::greater<>());
    const auto hits = retrieve(f.model, f.table, f.corpus, q[0], row.size());
    for (std::size_t i = 0; i < hits.size(); ++i) CHECK(hits[i].score == doctest::Approx(row[i]).epsilon(1e-12));
}

TEST_CASE("train-mode retrieval scores are cosines") {
    const Fixture f;
    for (const auto& q : kQueries) {
        for (const auto& h : retrieve(f.model, f.table, f.corpus, q, 1000, NormalizationMode::Train)) {
            CHECK(h.score >= -1.0 - 1e-12);
            CHECK(h.score <= 1.0 + 1e-12);
        }
    }
}

TEST_CASE("retrieval hits carry truth class and nearby annotation") {
    const Fixture f;
    const CorpusIndex lookup(f.corpus);
    for (const auto& h : retrieve(f.model, f.table, f.corpus, "Replace sensor", 1000)) {
        const Recording& r = lookup.recording(h.recording_id);
        CHECK(h.truth_class == r.truth_class);
        CHECK(h.annotation == nearest_annotation(f.corpus, r, f.model.config.window_days));
    }
}

TEST_CASE("nearest annotation picks the closest on the same asset") {
    CorpusDatabase c;
    c.assets = {{"A", {"A/1"}}, {"B", {"B/1"}}};
    c.annotations.push_back({"n1", "A", testing::day(0), "early"});
    c.annotations.push_back({"n2", "A", testing::day(6), "late"});
    c.annotations.push_back({"n3", "B", testing::day(3), "other asset"});
    Recording r;
    r.recording_id = "r";
    r.asset_id = "A";
    r.timestamp = testing::day(4);
    CHECK(nearest_annotation(c, r, 10) == "late");
    r.timestamp = testing::day(3);
    CHECK(nearest_annotation(c, r, 10) == "early");  // equal gaps: lower id wins
    r.timestamp = testing::day(30);
    CHECK(!nearest_annotation(c, r, 10).has_value());
}

TEST_CASE("retrieval argument errors") {
    const Fixture f;
    CHECK_THROWS_AS(retrieve(f.model, f.table, f.corpus, "x", 0), ParameterError);
    CHECK_THROWS_AS(retrieve(f.model, f.table, f.corpus, "  ", 3), ParameterError);
    CHECK_THROWS_AS(retrieve(f.model, f.table, CorpusDatabase{}, "x", 3), ParameterError);
    const SpectrumIndex empty(f.model, {});
    CHECK_THROWS_AS(retrieve(f.model, f.table, empty, "x", 3), ParameterError);
}
