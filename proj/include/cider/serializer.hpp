// serializer.hpp — Stage 3 corpus packing: each retained sample becomes one
// plain-text training document with its components concatenated in a fixed
// order (TASK, PLAN, ACTION, PRE-STATE, POST-STATE, TRIGGER, MECHANISM,
// REASONING), one uppercase header line per section, single blank lines
// between sections. No distinction is made between input and output text.
#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cider/corpus_model.hpp"

namespace cider {

struct PackStats {
    size_t documents = 0;
    size_t total_chars = 0;      // bytes of document text, delimiters excluded
    size_t total_ws_tokens = 0;  // whitespace-separated tokens, a tokenizer-free proxy
    std::vector<size_t> doc_chars;
    std::vector<size_t> doc_ws_tokens;
};

struct PackOptions {
    std::string delimiter = "====";  // emitted on its own line after every document
    size_t shard_bytes = 0;          // 0 = single file; otherwise rotate past this size
};

struct PackedCorpus {
    PackStats stats;
    std::vector<std::string> manifest;            // sample ids in pack order
    std::vector<std::filesystem::path> shards;    // written corpus files, in order
};

// Fixed-order plain-text document for one sample.
std::string pack_sample(const SynthesizedSample& sample);

// Escapes any document line consisting solely of the delimiter (optionally
// already backslash-escaped) by prepending one more backslash; unescape
// reverses it. Keeps the delimiter unambiguous inside the packed stream.
std::string escape_delimiter_lines(const std::string& document, const std::string& delimiter);
std::string unescape_delimiter_lines(const std::string& document, const std::string& delimiter);

size_t count_ws_tokens(std::string_view text);

// Packs every sample to `corpus_path` (sharded as `<path>.000`, `<path>.001`,
// ... when a shard threshold is set; shards only break at document
// boundaries, so their concatenation equals the unsharded stream). Writes one
// manifest id per line to `manifest_path` when non-empty. Throws on an empty
// sample list ("nothing to pack") and on sink failure.
PackedCorpus pack_corpus(std::span<const SynthesizedSample> samples,
                         const std::filesystem::path& corpus_path,
                         const std::filesystem::path& manifest_path, const PackOptions& options = {});

}  // namespace cider
