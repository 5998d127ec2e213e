// config.hpp — declarative pipeline configuration: one JSON file drives
// every subcommand. String values support ${VAR} environment interpolation
// so secrets (CIDER_API_TOKEN) never live on disk.
#pragma once

#include <filesystem>
#include <string>

#include "cider/retention.hpp"
#include "cider/serializer.hpp"

namespace cider {

struct ClientConfig {
    std::string kind = "mock";  // mock | http
    std::string endpoint;       // base URL for http clients
    std::string model;
    std::string fixtures;        // optional fixture-map path for the mock client
    std::string api_token;       // normally "${CIDER_API_TOKEN}" before interpolation
    double rate_limit_rps = 0.0; // 0 = unlimited
};

struct EmbeddingSourceConfig {
    std::string source = "file";  // file | service | mock
    std::string format = "text";  // text | binary (file source only)
    std::string endpoint;
    std::string model;
    std::string api_token;
    size_t batch_size = 64;
    size_t mock_dim = 16;
    double rate_limit_rps = 0.0;
};

struct PipelinePaths {
    std::string trajectories;  // Stage 1 input
    std::string embeddings;    // vector file (file source)
    // artifacts; empty entries default to files under run_dir
    std::string samples;
    std::string ledger;
    std::string scores;
    std::string retained;
    std::string packed;
    std::string manifest;
    std::string report;
};

struct PipelineConfig {
    std::string run_dir = "run";
    PipelinePaths paths;
    RetentionConfig retention;
    std::string lexicon;         // keyword file; empty = built-in default
    std::string templates_dir;   // prompt templates; empty = built-in defaults
    ClientConfig planner;
    ClientConfig grounder;
    ClientConfig analyst;
    EmbeddingSourceConfig embeddings;
    PackOptions pack;
    unsigned workers = 0;          // 0 = hardware concurrency
    std::string encoder_identity;  // report label; derived when empty

    static PipelineConfig load_file(const std::string& path);
    static PipelineConfig parse(const std::string& json_text);

    // Fingerprint of the settings that determine the synthesized corpus
    // (trajectories, templates, expert clients). Selection parameters are
    // excluded so parameter sweeps can reuse Stage 1 artifacts; downstream
    // stages reject inputs stamped with a different hash.
    std::string corpus_hash() const;

    std::filesystem::path samples_path() const;
    std::filesystem::path ledger_path() const;
    std::filesystem::path scores_path() const;
    std::filesystem::path retained_path() const;
    std::filesystem::path packed_path() const;
    std::filesystem::path manifest_path() const;
    std::filesystem::path report_path() const;
    std::filesystem::path lock_path() const;

    void validate_common() const;  // retention invariants, enum fields
};

// Replaces every ${VAR} with the environment value; unset variables expand
// to "" with a warning.
std::string interpolate_env(const std::string& value);

}  // namespace cider
