#include <doctest.h>

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "cider/serializer.hpp"
#include "oracles.hpp"

using namespace cider;

TEST_SUITE_BEGIN("serializer");

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    TempDir() {
        static std::atomic<int> counter{0};
        path = fs::temp_directory_path() /
               ("cider_serializer_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

const char* kHeaders[] = {"TASK:",      "PLAN:",    "ACTION:",    "PRE-STATE:",
                          "POST-STATE:", "TRIGGER:", "MECHANISM:", "REASONING:"};

// Test-only inverse of pack_sample: splits on the exact header lines, in
// order, and rebuilds the sample fields byte-for-byte.
SynthesizedSample unpack_sample(const std::string& doc) {
    std::vector<std::string> bodies;
    size_t cursor = 0;
    for (size_t h = 0; h < std::size(kHeaders); ++h) {
        const std::string marker = std::string(h == 0 ? "" : "\n") + kHeaders[h] + "\n";
        const size_t at = doc.find(marker, cursor);
        REQUIRE(at != std::string::npos);
        if (h > 0) {
            // body ends one blank line before the next header
            std::string body = doc.substr(cursor, at - cursor);
            REQUIRE(body.size() >= 1);
            REQUIRE(body.back() == '\n');
            body.pop_back();
            bodies.push_back(std::move(body));
        }
        cursor = at + marker.size();
    }
    std::string last = doc.substr(cursor);
    REQUIRE(!last.empty());
    REQUIRE(last.back() == '\n');
    last.pop_back();
    bodies.push_back(std::move(last));
    REQUIRE(bodies.size() == 8);

    SynthesizedSample s;
    s.task = bodies[0];
    std::istringstream plan(bodies[1]);
    std::string line;
    while (std::getline(plan, line)) {
        const size_t dot = line.find(". ");
        REQUIRE(dot != std::string::npos);
        s.plan.subgoals.push_back(line.substr(dot + 2));
    }
    s.grounded_action = bodies[2];
    s.rationale.pre_state = bodies[3];
    s.rationale.post_state = bodies[4];
    s.rationale.trigger = bodies[5];
    s.rationale.mechanism = bodies[6];
    s.rationale.chain_of_thought = bodies[7];
    return s;
}

}  // namespace

TEST_CASE("pack_sample emits all eight headers exactly once, in order") {
    const std::string doc = pack_sample(oracle::make_sample("t", 0));
    size_t cursor = 0;
    for (const char* header : kHeaders) {
        const std::string marker = std::string(header) + "\n";
        const size_t at = doc.find(marker, cursor);
        REQUIRE(at != std::string::npos);
        CHECK(doc.find(marker, at + 1) == std::string::npos);  // exactly once
        cursor = at + marker.size();
    }
    // single blank lines between sections, none doubled
    CHECK(doc.find("\n\n\n") == std::string::npos);
    CHECK(doc.back() == '\n');
}

TEST_CASE("distinct samples pack to distinct documents") {
    const auto a = pack_sample(oracle::make_sample("t", 0, "alpha"));
    const auto b = pack_sample(oracle::make_sample("t", 1, "beta"));
    CHECK(a != b);
}

TEST_CASE("pack then parse-back recovers every field byte-for-byte") {
    const auto samples = oracle::random_samples(100, 31415);
    for (const auto& s : samples) {
        const SynthesizedSample back = unpack_sample(pack_sample(s));
        CHECK(back.task == s.task);
        CHECK(back.plan.subgoals == s.plan.subgoals);
        CHECK(back.grounded_action == s.grounded_action);
        CHECK(back.rationale.pre_state == s.rationale.pre_state);
        CHECK(back.rationale.post_state == s.rationale.post_state);
        CHECK(back.rationale.trigger == s.rationale.trigger);
        CHECK(back.rationale.mechanism == s.rationale.mechanism);
        CHECK(back.rationale.chain_of_thought == s.rationale.chain_of_thought);
    }
}

TEST_CASE("delimiter escaping is reversible and total") {
    const std::string delim = "====";
    CHECK(escape_delimiter_lines("a\n====\nb", delim) == "a\n\\====\nb");
    CHECK(escape_delimiter_lines("a\n\\====\nb", delim) == "a\n\\\\====\nb");
    CHECK(unescape_delimiter_lines("a\n\\====\nb", delim) == "a\n====\nb");
    std::mt19937_64 rng(8);
    for (int i = 0; i < 200; ++i) {
        std::string text;
        for (int l = 0; l < 6; ++l) {
            switch (rng() % 4) {
                case 0: text += "===="; break;
                case 1: text += "\\===="; break;
                case 2: text += "plain words"; break;
                default: text += "==== not alone"; break;
            }
            text += '\n';
        }
        const std::string escaped = escape_delimiter_lines(text, delim);
        // no bare delimiter line survives
        std::istringstream lines(escaped);
        std::string line;
        while (std::getline(lines, line)) CHECK(line != delim);
        CHECK(unescape_delimiter_lines(escaped, delim) == text);
    }
}

TEST_CASE("pack_corpus writes manifest, stats, and delimited documents") {
    TempDir dir;
    const auto samples = oracle::random_samples(3, 777);
    const auto packed =
        pack_corpus(samples, dir.path / "corpus.txt", dir.path / "manifest.txt", {});
    CHECK(packed.stats.documents == 3);
    REQUIRE(packed.manifest.size() == 3);
    for (size_t i = 0; i < samples.size(); ++i) CHECK(packed.manifest[i] == samples[i].id);
    REQUIRE(packed.shards.size() == 1);

    const std::string stream = slurp(dir.path / "corpus.txt");
    size_t delim_count = 0;
    std::istringstream lines(stream);
    std::string line;
    while (std::getline(lines, line)) {
        if (line == "====") ++delim_count;
    }
    CHECK(delim_count == 3);  // one terminator per document

    const std::string manifest = slurp(dir.path / "manifest.txt");
    CHECK(manifest == samples[0].id + "\n" + samples[1].id + "\n" + samples[2].id + "\n");

    // additivity: totals equal the sum of per-document counts
    size_t chars = 0, tokens = 0;
    for (size_t c : packed.stats.doc_chars) chars += c;
    for (size_t c : packed.stats.doc_ws_tokens) tokens += c;
    CHECK(chars == packed.stats.total_chars);
    CHECK(tokens == packed.stats.total_ws_tokens);
}

TEST_CASE("stats are additive over a 1000-sample corpus") {
    TempDir dir;
    const auto samples = oracle::random_samples(1000, 161803);
    const auto packed = pack_corpus(samples, dir.path / "corpus.txt", "", {});
    CHECK(packed.stats.documents == 1000);
    size_t chars = 0, tokens = 0;
    for (size_t c : packed.stats.doc_chars) chars += c;
    for (size_t c : packed.stats.doc_ws_tokens) tokens += c;
    CHECK(chars == packed.stats.total_chars);
    CHECK(tokens == packed.stats.total_ws_tokens);
    // the stream holds exactly the documents plus one delimiter line each
    CHECK(fs::file_size(dir.path / "corpus.txt") ==
          packed.stats.total_chars + 1000 * 5);  // "====\n"
}

TEST_CASE("packing an empty corpus is an error") {
    TempDir dir;
    CHECK_THROWS_WITH_AS(
        pack_corpus(std::vector<SynthesizedSample>{}, dir.path / "c.txt", "", {}),
        "nothing to pack: retained corpus is empty", std::invalid_argument);
}

TEST_CASE("a document containing the delimiter line is escaped in the stream") {
    TempDir dir;
    auto sample = oracle::make_sample("esc", 0);
    sample.rationale.mechanism = "first line\n====\nlast line";
    const auto packed = pack_corpus(std::vector<SynthesizedSample>{sample},
                                    dir.path / "corpus.txt", "", {});
    CHECK(packed.stats.documents == 1);
    const std::string stream = slurp(dir.path / "corpus.txt");
    size_t delim_lines = 0;
    std::istringstream lines(stream);
    std::string line;
    while (std::getline(lines, line)) {
        if (line == "====") ++delim_lines;
    }
    CHECK(delim_lines == 1);  // only the terminator; the payload copy is escaped
    CHECK(stream.find("\\====\n") != std::string::npos);
}

TEST_CASE("sharding splits at document boundaries and concatenates losslessly") {
    TempDir dir;
    const auto samples = oracle::random_samples(12, 2718);

    const auto whole = pack_corpus(samples, dir.path / "whole.txt", "", {});
    const std::string unsharded = slurp(dir.path / "whole.txt");
    CHECK(unsharded.size() >= 3072);  // fixture is comfortably over 3 KiB

    PackOptions opts;
    opts.shard_bytes = 1024;
    const auto sharded = pack_corpus(samples, dir.path / "shard.txt", "", opts);
    CHECK(sharded.shards.size() >= 3);
    std::string joined;
    for (const auto& shard : sharded.shards) {
        CHECK(shard.string().find("shard.txt.") != std::string::npos);
        joined += slurp(shard);
    }
    CHECK(joined == unsharded);
    CHECK(sharded.stats.total_chars == whole.stats.total_chars);
}

TEST_CASE("whitespace token counting") {
    CHECK(count_ws_tokens("") == 0);
    CHECK(count_ws_tokens("   \n\t ") == 0);
    CHECK(count_ws_tokens("one") == 1);
    CHECK(count_ws_tokens(" one\ttwo\nthree  four ") == 4);
}

TEST_SUITE_END();
