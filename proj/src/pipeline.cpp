#include "cider/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "cider/density.hpp"
#include "cider/http_clients.hpp"
#include "cider/lexicon.hpp"
#include "cider/serializer.hpp"
#include "cider/synthesis.hpp"

namespace cider {

using ordered_json = nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------------------
// Run lock: one invocation per run directory, enforced with O_EXCL.
// ---------------------------------------------------------------------------

class RunLock {
public:
    explicit RunLock(const PipelineConfig& config) : path_(config.lock_path()) {
        std::filesystem::create_directories(config.run_dir);
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0) {
            throw ConfigError("run directory is locked by another invocation (" + path_.string() +
                              " exists); remove the lock file if no other run is active");
        }
        const std::string pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] ssize_t n = ::write(fd_, pid.data(), pid.size());
    }

    ~RunLock() {
        if (fd_ >= 0) {
            ::close(fd_);
            ::unlink(path_.c_str());
        }
    }

    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    std::filesystem::path path_;
    int fd_ = -1;
};

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

constexpr const char* kHashHeaderPrefix = "cider corpus_hash=";

std::string hash_header(const PipelineConfig& config) {
    return kHashHeaderPrefix + config.corpus_hash();
}

// Rejects an artifact whose recorded corpus hash differs from the current
// config. Hand-authored inputs without a header are accepted with a warning.
void check_artifact_hash(const std::filesystem::path& path, const PipelineConfig& config) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open artifact: " + path.string());
    std::string first;
    std::getline(in, first);
    const std::string expect = std::string("# ") + kHashHeaderPrefix;
    if (first.rfind(expect, 0) != 0) {
        log_warn("artifact " + path.string() + " has no corpus-hash header; accepting as-is");
        return;
    }
    const std::string recorded = trim(first.substr(expect.size()));
    if (recorded != config.corpus_hash()) {
        throw ConfigError("artifact " + path.string() + " was produced under corpus_hash " +
                          recorded + " but the current config hashes to " + config.corpus_hash());
    }
}

void require_file(const std::filesystem::path& path, const char* what) {
    if (path.empty()) throw ConfigError(std::string(what) + " path is not configured");
    if (!std::filesystem::exists(path)) {
        throw ConfigError(std::string(what) + " file does not exist: " + path.string());
    }
}

void ensure_parent_dir(const std::filesystem::path& path) {
    const auto parent = path.parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
}

template <typename Fn>
int run_guarded(const char* stage, Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        std::cerr << "[cider] " << stage << ": " << e.what() << "\n";
        return kExitValidation;
    } catch (const IngestError& e) {
        std::cerr << "[cider] " << stage << ": " << e.what() << "\n";
        return kExitValidation;
    } catch (const DegenerateGeometry& e) {
        std::cerr << "[cider] " << stage << ": " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::invalid_argument& e) {
        std::cerr << "[cider] " << stage << ": " << e.what() << "\n";
        return kExitValidation;
    } catch (const TransportError& e) {
        std::cerr << "[cider] " << stage << ": " << e.what() << "\n";
        return kExitExternal;
    } catch (const SynthesisError& e) {
        std::cerr << "[cider] " << stage << ": " << e.what() << "\n";
        return kExitExternal;
    } catch (const std::exception& e) {
        std::cerr << "[cider] " << stage << ": internal error: " << e.what() << "\n";
        return kExitInternal;
    }
}

// ---------------------------------------------------------------------------
// Client construction
// ---------------------------------------------------------------------------

struct OwnedExpertClient {
    std::unique_ptr<ExpertClient> base;
    std::unique_ptr<RateLimitedClient> limited;

    ExpertClient& use() { return limited ? *limited : *base; }
};

OwnedExpertClient build_expert_client(const ClientConfig& config, const char* which) {
    OwnedExpertClient out;
    if (config.kind == "mock") {
        if (!config.fixtures.empty()) {
            std::ifstream in(config.fixtures);
            if (!in) {
                throw ConfigError(std::string(which) + " fixture map not found: " + config.fixtures);
            }
            out.base = std::make_unique<MockExpertClient>(MockExpertClient::load_fixtures(in));
        } else {
            out.base = std::make_unique<MockExpertClient>();
        }
    } else {
        HttpEndpoint ep;
        ep.base_url = config.endpoint;
        ep.model = config.model;
        ep.api_token = config.api_token;
        out.base = std::make_unique<HttpExpertClient>(ep);
    }
    if (config.rate_limit_rps > 0.0) {
        out.limited = std::make_unique<RateLimitedClient>(*out.base, config.rate_limit_rps);
    }
    return out;
}

PromptTemplates load_templates(const PipelineConfig& config) {
    return config.templates_dir.empty() ? PromptTemplates::defaults()
                                        : PromptTemplates::load_dir(config.templates_dir);
}

// ---------------------------------------------------------------------------
// Stage internals (no locking; cmd_* wrappers own the lock)
// ---------------------------------------------------------------------------

int do_synth(const PipelineConfig& config) {
    require_file(config.paths.trajectories, "trajectories");
    const PromptTemplates templates = load_templates(config);

    std::ifstream in(config.paths.trajectories);
    if (!in) throw ConfigError("cannot open trajectories file: " + config.paths.trajectories);
    TrajectoryReadResult input = read_trajectories(in);
    for (const auto& err : input.errors) {
        log_warn("trajectories line " + std::to_string(err.line_no) + ": " + err.message);
    }
    if (input.trajectories.empty()) {
        throw ConfigError("no parseable trajectories in " + config.paths.trajectories);
    }

    OwnedExpertClient planner = build_expert_client(config.planner, "planner");
    OwnedExpertClient grounder = build_expert_client(config.grounder, "grounder");
    OwnedExpertClient analyst = build_expert_client(config.analyst, "analyst");
    ExpertClientSet clients{&planner.use(), &grounder.use(), &analyst.use()};

    SynthesisOptions options;
    options.workers = config.workers == 0 ? std::thread::hardware_concurrency() : config.workers;
    SynthesisResult result = synthesize_corpus(input.trajectories, clients, templates, options);

    ensure_parent_dir(config.samples_path());
    {
        std::ofstream out(config.samples_path(), std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot open samples sink: " + config.samples_path().string());
        write_samples(result.samples, out, hash_header(config));
    }
    {
        std::ofstream out(config.ledger_path(), std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot open ledger sink: " + config.ledger_path().string());
        out << "# " << hash_header(config) << "\n";
        for (const auto& f : result.failures) {
            out << ordered_json{{"trajectory_id", f.trajectory_id},
                                {"step_index", f.step_index},
                                {"stage", f.stage},
                                {"cause", f.cause}}
                       .dump()
                << "\n";
        }
    }

    log_info("synth: " + std::to_string(result.samples.size()) + " samples, " +
             std::to_string(result.failures.size()) + " failures -> " +
             config.samples_path().string());
    return result.failures.empty() ? kExitOk : kExitExternal;
}

std::vector<SynthesizedSample> load_samples_artifact(const std::filesystem::path& path,
                                                     const PipelineConfig& config,
                                                     const char* what) {
    require_file(path, what);
    check_artifact_hash(path, config);
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    SampleReadResult result = read_samples(in);
    if (!result.errors.empty()) {
        std::string msg = path.string() + " has " + std::to_string(result.errors.size()) +
                          " malformed record(s); first: line " +
                          std::to_string(result.errors.front().line_no) + ": " +
                          result.errors.front().message;
        throw ConfigError(msg);
    }
    return result.samples;
}

std::vector<EmbeddedSample> load_embeddings(const PipelineConfig& config,
                                            const std::vector<SynthesizedSample>& samples,
                                            std::string& encoder_identity) {
    std::vector<std::string> ids;
    ids.reserve(samples.size());
    for (const auto& s : samples) ids.push_back(s.id);

    if (config.embeddings.source == "file") {
        require_file(config.paths.embeddings, "embeddings");
        std::ifstream in(config.paths.embeddings, std::ios::binary);
        if (!in) throw ConfigError("cannot open embeddings file: " + config.paths.embeddings);
        std::vector<EmbeddedSample> table = config.embeddings.format == "binary"
                                                ? read_embeddings_binary(in)
                                                : read_embeddings_text(in);
        encoder_identity = config.encoder_identity.empty() ? "file:" + config.paths.embeddings
                                                           : config.encoder_identity;
        return ingest_embeddings(table, ids);
    }

    std::unique_ptr<EmbeddingClient> client;
    if (config.embeddings.source == "mock") {
        client = std::make_unique<MockEmbeddingClient>(config.embeddings.mock_dim);
    } else {
        HttpEndpoint ep;
        ep.base_url = config.embeddings.endpoint;
        ep.model = config.embeddings.model;
        ep.api_token = config.embeddings.api_token;
        client = std::make_unique<HttpEmbeddingClient>(ep);
    }
    encoder_identity = config.encoder_identity.empty() ? client->identity() : config.encoder_identity;

    // The embedded text is the packed training document: the full sample.
    std::vector<std::string> texts;
    texts.reserve(samples.size());
    for (const auto& s : samples) texts.push_back(pack_sample(s));
    std::unique_ptr<RateLimiter> limiter;
    if (config.embeddings.rate_limit_rps > 0.0) {
        limiter = std::make_unique<RateLimiter>(config.embeddings.rate_limit_rps);
    }
    auto table =
        embed_in_batches(*client, ids, texts, config.embeddings.batch_size, limiter.get());
    return ingest_embeddings(table, ids);
}

int do_select(const PipelineConfig& config) {
    const std::vector<SynthesizedSample> samples =
        load_samples_artifact(config.samples_path(), config, "samples");
    if (samples.empty()) throw ConfigError("samples artifact is empty; nothing to select");

    const CausalLexicon lexicon = config.lexicon.empty() ? CausalLexicon::default_lexicon()
                                                         : CausalLexicon::load_file(config.lexicon);

    std::string encoder_identity;
    const std::vector<EmbeddedSample> embedded = load_embeddings(config, samples, encoder_identity);

    DensityOptions density_options;
    density_options.k = config.retention.k;
    density_options.workers = config.workers;
    const DensityScores densities = compute_densities(embedded, density_options);

    std::vector<ScoredSample> scored(samples.size());
    parallel_for(samples.size(), config.workers, [&](size_t lo, size_t hi) {
        for (size_t i = lo; i < hi; ++i) {
            scored[i].sample_id = samples[i].id;
            scored[i].keyword_count =
                static_cast<long long>(count_causal_tokens(samples[i], lexicon));
            scored[i].saliency = causal_saliency(scored[i].keyword_count, config.retention.gamma);
            scored[i].raw_ratio = densities.raw_ratio[i];
            scored[i].density = densities.density[i];
        }
    });
    scored = select(std::move(scored), config.retention);

    // scores artifact
    {
        ensure_parent_dir(config.scores_path());
        std::ofstream out(config.scores_path(), std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot open scores sink: " + config.scores_path().string());
        out << "# " << hash_header(config) << "\n";
        for (const auto& s : scored) {
            out << ordered_json{{"sample_id", s.sample_id}, {"keyword_count", s.keyword_count},
                                {"f", s.saliency},          {"r", s.raw_ratio},
                                {"d", s.density},           {"g", s.retention_prob},
                                {"xi", s.xi},               {"retained", s.retained}}
                       .dump()
                << "\n";
            if (!out) throw std::runtime_error("scores sink failed");
        }
    }

    // retained corpus
    std::vector<SynthesizedSample> retained;
    retained.reserve(samples.size());
    for (size_t i = 0; i < samples.size(); ++i) {
        if (scored[i].retained) retained.push_back(samples[i]);
    }
    {
        std::ofstream out(config.retained_path(), std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot open retained sink: " + config.retained_path().string());
        write_samples(retained, out, hash_header(config));
    }

    // report
    SelectionReport report = build_selection_report(scored, config.retention, densities.k_used);
    report.encoder_identity = encoder_identity;
    report.corpus_hash = config.corpus_hash();
    report.timestamp = utc_timestamp();
    {
        std::ofstream out(config.report_path(), std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot open report sink: " + config.report_path().string());
        out << report_to_json_text(report) << "\n";
    }

    log_info("select: retained " + std::to_string(retained.size()) + " of " +
             std::to_string(samples.size()) + " samples (expected " +
             std::to_string(report.expected_retained_size) + ")");
    if (!report.property_checks.all_passed()) {
        throw std::logic_error("retention property checks failed; see " +
                               config.report_path().string());
    }
    return kExitOk;
}

int do_pack(const PipelineConfig& config) {
    const std::vector<SynthesizedSample> retained =
        load_samples_artifact(config.retained_path(), config, "retained corpus");
    if (retained.empty()) throw ConfigError("nothing to pack: retained corpus is empty");

    ensure_parent_dir(config.packed_path());
    const PackedCorpus packed =
        pack_corpus(retained, config.packed_path(), config.manifest_path(), config.pack);

    // append packing stats to the report, creating it when select never ran
    ordered_json report = ordered_json::object();
    if (std::filesystem::exists(config.report_path())) {
        std::ifstream in(config.report_path());
        report = ordered_json::parse(in);
    }
    ordered_json shards = ordered_json::array();
    for (const auto& shard : packed.shards) shards.push_back(shard.filename().string());
    report["packing"] = ordered_json{{"documents", packed.stats.documents},
                                     {"total_chars", packed.stats.total_chars},
                                     {"total_ws_tokens", packed.stats.total_ws_tokens},
                                     {"shards", shards}};
    {
        std::ofstream out(config.report_path(), std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot open report sink: " + config.report_path().string());
        out << report.dump(2) << "\n";
    }

    log_info("pack: " + std::to_string(packed.stats.documents) + " documents, " +
             std::to_string(packed.stats.total_ws_tokens) + " whitespace tokens -> " +
             config.packed_path().string());
    return kExitOk;
}

}  // namespace

// ---------------------------------------------------------------------------
// Public subcommands
// ---------------------------------------------------------------------------

int cmd_synth(const PipelineConfig& config) {
    return run_guarded("synth", [&] {
        RunLock lock(config);
        return do_synth(config);
    });
}

int cmd_select(const PipelineConfig& config) {
    return run_guarded("select", [&] {
        RunLock lock(config);
        return do_select(config);
    });
}

int cmd_pack(const PipelineConfig& config) {
    return run_guarded("pack", [&] {
        RunLock lock(config);
        return do_pack(config);
    });
}

int cmd_run(const PipelineConfig& config) {
    return run_guarded("run", [&] {
        RunLock lock(config);
        if (int rc = do_synth(config); rc != kExitOk) return rc;
        if (int rc = do_select(config); rc != kExitOk) return rc;
        return do_pack(config);
    });
}

int cmd_verify(const PipelineConfig& config, std::ostream& out) {
    return run_guarded("verify", [&] {
        const PropertyCheckSummary summary = verify_properties(config.retention);
        for (const auto& check : summary.checks) {
            out << check.name << ": " << to_string(check.status)
                << " (max_error=" << check.max_error << " at f=" << check.worst_f
                << ", d=" << check.worst_d << ") " << check.note << "\n";
        }
        out << (summary.all_passed() ? "all checks passed" : "CHECKS FAILED") << "\n";
        return summary.all_passed() ? kExitOk : kExitInternal;
    });
}

int cmd_report(const PipelineConfig& config, std::ostream& out) {
    return run_guarded("report", [&] {
        require_file(config.report_path(), "report");
        std::ifstream in(config.report_path());
        out << in.rdbuf();
        return kExitOk;
    });
}

std::string report_to_json_text(const SelectionReport& report) {
    ordered_json checks = ordered_json::array();
    for (const auto& check : report.property_checks.checks) {
        checks.push_back(ordered_json{{"name", check.name},
                                      {"status", to_string(check.status)},
                                      {"max_error", check.max_error},
                                      {"worst_f", check.worst_f},
                                      {"worst_d", check.worst_d},
                                      {"note", check.note}});
    }
    ordered_json j;
    j["config"] = ordered_json{{"alpha", report.config.alpha},
                               {"lambda", report.config.lambda},
                               {"gamma", report.config.gamma},
                               {"k", report.config.k},
                               {"k_used", report.k_used},
                               {"seed", report.config.seed}};
    j["corpus_hash"] = report.corpus_hash;
    j["corpus_size"] = report.corpus_size;
    j["expected_retained_size"] = report.expected_retained_size;
    j["retained_stddev"] = report.retained_stddev;
    j["realized_retained_size"] = report.realized_retained_size;
    j["mean_saliency"] = report.mean_saliency;
    j["causal_mass_corpus"] = report.causal_mass_corpus;
    j["causal_mass_retained"] = report.causal_mass_retained;
    j["preservation_ratio"] = report.preservation_ratio;
    j["preservation_degenerate"] = report.preservation_degenerate;
    j["preservation_lower_bound"] = report.preservation_lower_bound;
    j["property_checks"] = checks;
    j["all_property_checks_passed"] = report.property_checks.all_passed();
    j["encoder_identity"] = report.encoder_identity;
    j["timestamp"] = report.timestamp;
    return j.dump(2);
}

}  // namespace cider
