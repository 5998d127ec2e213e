#include <doctest.h>

#include <numeric>
#include <random>
#include <sstream>

#include "cider/density.hpp"
#include "oracles.hpp"

using namespace cider;

TEST_SUITE_BEGIN("density");

namespace {

std::vector<EmbeddedSample> corpus_1d(std::initializer_list<double> xs) {
    std::vector<EmbeddedSample> corpus;
    int i = 0;
    for (double x : xs) corpus.push_back({"p" + std::to_string(i++), {x}});
    return corpus;
}

}  // namespace

TEST_CASE("hand-computed ratios for the 1-D corpus {0, 1, 3} at K=1") {
    // all pairwise squared distances: d(0,1)=1, d(0,3)=9, d(1,3)=4
    //   r(0) = 1 / ((0+1+9)/3)  = 0.3
    //   r(1) = 1 / ((1+0+4)/3)  = 0.6
    //   r(3) = 4 / ((9+4+0)/3)  = 12/13
    const auto corpus = corpus_1d({0.0, 1.0, 3.0});
    CHECK(raw_ratio(corpus, 0, 1) == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(raw_ratio(corpus, 1, 1) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(raw_ratio(corpus, 2, 1) == doctest::Approx(12.0 / 13.0).epsilon(1e-12));
}

TEST_CASE("duplicate target has zero nearest distance and r = 0") {
    const auto corpus = corpus_1d({2.0, 2.0, 5.0});
    CHECK(raw_ratio(corpus, 0, 1) == 0.0);
    CHECK(raw_ratio(corpus, 1, 1) == 0.0);
}

TEST_CASE("regular simplex: every sample has the same ratio for any K") {
    // 4 unit-simplex-ish points, all pairwise squared distances equal
    std::vector<EmbeddedSample> corpus = {
        {"a", {1, 0, 0, 0}}, {"b", {0, 1, 0, 0}}, {"c", {0, 0, 1, 0}}, {"d", {0, 0, 0, 1}}};
    for (int k : {1, 2, 3}) {
        const double r0 = raw_ratio(corpus, 0, k);
        for (size_t t = 1; t < corpus.size(); ++t) {
            CHECK(raw_ratio(corpus, t, k) == doctest::Approx(r0).epsilon(1e-12));
        }
        CHECK(r0 == doctest::Approx(oracle::brute_force_raw_ratio(corpus, 0, k)).epsilon(1e-12));
    }
}

TEST_CASE("normalize: the worked example, degenerate input, and extremes") {
    // from the ratios above: (0.6-0.3)/(12/13-0.3) = 13/27
    const auto d = normalize_min_max({0.3, 0.6, 12.0 / 13.0});
    CHECK(d[0] == 0.0);
    CHECK(d[1] == doctest::Approx(13.0 / 27.0).epsilon(1e-9));
    CHECK(d[2] == 1.0);

    CHECK(normalize_min_max({0.5, 0.5}) == std::vector<double>{0.0, 0.0});
    CHECK(normalize_min_max({0.0, 1.0}) == std::vector<double>{0.0, 1.0});
}

TEST_CASE("compute_densities composes ratio and normalization") {
    const auto corpus = corpus_1d({0.0, 1.0, 3.0});
    const auto scores = compute_densities(corpus, {.k = 1});
    REQUIRE(scores.density.size() == 3);
    CHECK(scores.density[0] == 0.0);
    CHECK(scores.density[1] == doctest::Approx(13.0 / 27.0).epsilon(1e-9));
    CHECK(scores.density[2] == 1.0);
    CHECK(scores.k_used == 1);
    CHECK(scores.corpus_size == 3);
}

TEST_CASE("two distinct points: both ratios are 2, densities both 0") {
    const auto corpus = corpus_1d({1.0, 4.0});
    const auto scores = compute_densities(corpus, {.k = 1});
    CHECK(scores.raw_ratio[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(scores.raw_ratio[1] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(scores.density == std::vector<double>{0.0, 0.0});
}

TEST_CASE("identical corpus raises DegenerateGeometry") {
    const auto corpus = corpus_1d({3.0, 3.0, 3.0});
    CHECK_THROWS_AS(compute_densities(corpus, {.k = 1}), DegenerateGeometry);
    CHECK_THROWS_AS(raw_ratio(corpus, 0, 1), DegenerateGeometry);
}

TEST_CASE("K larger than M-1 is clamped with a warning") {
    const auto corpus = corpus_1d({0.0, 1.0, 3.0});
    const auto scores = compute_densities(corpus, {.k = 25});
    CHECK(scores.k_used == 2);
}

TEST_CASE("engine matches the brute-force oracle on random corpora") {
    std::mt19937_64 seeds(2024);
    for (int trial = 0; trial < 8; ++trial) {
        const size_t m = 3 + seeds() % 198;
        const size_t dim = (trial % 2 == 0) ? 2 : 16;
        const auto corpus = oracle::random_corpus(m, dim, seeds());
        const int k = 1 + static_cast<int>(seeds() % (m - 1));
        const auto scores = compute_densities(corpus, {.k = k, .workers = 3, .block = 37});
        const auto expect = oracle::brute_force_densities(corpus, k);
        for (size_t i = 0; i < m; ++i) {
            CHECK(scores.density[i] == doctest::Approx(expect[i]).epsilon(1e-9));
            CHECK(scores.raw_ratio[i] ==
                  doctest::Approx(oracle::brute_force_raw_ratio(corpus, i, k)).epsilon(1e-12));
        }
    }
}

TEST_CASE("engine agrees with the single-sample reference path") {
    const auto corpus = oracle::random_corpus(60, 8, 555);
    const auto scores = compute_densities(corpus, {.k = 5});
    for (size_t i = 0; i < corpus.size(); ++i) {
        CHECK(scores.raw_ratio[i] == doctest::Approx(raw_ratio(corpus, i, 5)).epsilon(1e-12));
    }
}

TEST_CASE("deterministic across worker counts and block sizes") {
    const auto corpus = oracle::random_corpus(150, 12, 31337);
    const auto a = compute_densities(corpus, {.k = 7, .workers = 1, .block = 128});
    const auto b = compute_densities(corpus, {.k = 7, .workers = 2, .block = 128});
    const auto c = compute_densities(corpus, {.k = 7, .workers = 5, .block = 128});
    CHECK(a.raw_ratio == b.raw_ratio);  // bitwise
    CHECK(a.raw_ratio == c.raw_ratio);
    // block size choices regroup the blocked denominator partial sums, so
    // allow rounding-level differences
    const auto d = compute_densities(corpus, {.k = 7, .workers = 2, .block = 16});
    for (size_t i = 0; i < corpus.size(); ++i) {
        CHECK(d.raw_ratio[i] == doctest::Approx(a.raw_ratio[i]).epsilon(1e-12));
    }
}

TEST_CASE("permutation equivariance") {
    auto corpus = oracle::random_corpus(80, 6, 909);
    const auto base = compute_densities(corpus, {.k = 4});
    std::vector<size_t> perm(corpus.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(5));
    std::vector<EmbeddedSample> shuffled(corpus.size());
    for (size_t i = 0; i < perm.size(); ++i) shuffled[i] = corpus[perm[i]];
    const auto permuted = compute_densities(shuffled, {.k = 4});
    for (size_t i = 0; i < perm.size(); ++i) {
        CHECK(permuted.density[i] == doctest::Approx(base.density[perm[i]]).epsilon(1e-9));
    }
}

TEST_CASE("scaling all vectors leaves ratios unchanged") {
    auto corpus = oracle::random_corpus(50, 5, 123);
    const auto base = compute_densities(corpus, {.k = 3});
    for (double c : {0.5, 2.0}) {  // powers of two scale exactly
        auto scaled = corpus;
        for (auto& row : scaled) {
            for (auto& v : row.vector) v *= c;
        }
        const auto result = compute_densities(scaled, {.k = 3});
        CHECK(result.raw_ratio == base.raw_ratio);
    }
    auto scaled = corpus;
    for (auto& row : scaled) {
        for (auto& v : row.vector) v *= 3.0;
    }
    const auto result = compute_densities(scaled, {.k = 3});
    for (size_t i = 0; i < corpus.size(); ++i) {
        CHECK(result.raw_ratio[i] == doctest::Approx(base.raw_ratio[i]).epsilon(1e-12));
    }
}

TEST_CASE("density values stay in [0,1] with exactly one 0 and one 1") {
    const auto corpus = oracle::random_corpus(100, 4, 808);
    const auto scores = compute_densities(corpus, {.k = 5});
    size_t zeros = 0, ones = 0;
    for (double d : scores.density) {
        CHECK(d >= 0.0);
        CHECK(d <= 1.0);
        if (d == 0.0) ++zeros;
        if (d == 1.0) ++ones;
    }
    CHECK(zeros == 1);  // random ratios are distinct with probability 1
    CHECK(ones == 1);
}

TEST_CASE("embedding file round trip: text and binary") {
    auto rows = oracle::random_corpus(12, 7, 42);
    std::stringstream text;
    write_embeddings_text(rows, text);
    const auto back_text = read_embeddings_text(text);
    REQUIRE(back_text.size() == rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        CHECK(back_text[i].sample_id == rows[i].sample_id);
        CHECK(back_text[i].vector == rows[i].vector);  // 17 significant digits round-trip
    }

    std::stringstream bin(std::ios::in | std::ios::out | std::ios::binary);
    write_embeddings_binary(rows, bin);
    const auto back_bin = read_embeddings_binary(bin);
    REQUIRE(back_bin.size() == rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        CHECK(back_bin[i].sample_id == rows[i].sample_id);
        REQUIRE(back_bin[i].vector.size() == rows[i].vector.size());
        for (size_t j = 0; j < rows[i].vector.size(); ++j) {
            CHECK(back_bin[i].vector[j] ==
                  doctest::Approx(rows[i].vector[j]).epsilon(1e-6));  // f32 storage
        }
    }
}

TEST_CASE("ingest resolves ids and lists all missing ones") {
    auto rows = oracle::random_corpus(4, 3, 7);
    const std::vector<std::string> ok = {"s2", "s0"};
    const auto got = ingest_embeddings(rows, ok);
    REQUIRE(got.size() == 2);
    CHECK(got[0].sample_id == "s2");
    CHECK(got[1].sample_id == "s0");

    const std::vector<std::string> bad = {"s1", "ghost", "s3", "phantom"};
    try {
        ingest_embeddings(rows, bad);
        FAIL("expected IngestError");
    } catch (const IngestError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("ghost") != std::string::npos);
        CHECK(msg.find("phantom") != std::string::npos);
    }

    rows[0].vector.pop_back();  // dimension mismatch on a requested id
    CHECK_THROWS_AS(ingest_embeddings(rows, ok), IngestError);
}

TEST_SUITE_END();
