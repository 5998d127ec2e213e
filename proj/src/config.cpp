#include "cider/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace cider {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string interpolate_env(const std::string& value) {
    std::string out;
    out.reserve(value.size());
    size_t i = 0;
    while (i < value.size()) {
        if (value[i] == '$' && i + 1 < value.size() && value[i + 1] == '{') {
            const size_t close = value.find('}', i + 2);
            if (close != std::string::npos) {
                const std::string name = value.substr(i + 2, close - i - 2);
                const char* env = std::getenv(name.c_str());
                if (env) {
                    out += env;
                } else {
                    log_warn("environment variable " + name + " is not set; expanding to \"\"");
                }
                i = close + 1;
                continue;
            }
        }
        out += value[i++];
    }
    return out;
}

namespace {

std::string get_str(const json& j, const char* key, const std::string& fallback = "") {
    if (!j.contains(key)) return fallback;
    return interpolate_env(j.at(key).get<std::string>());
}

ClientConfig parse_client(const json& j) {
    ClientConfig c;
    c.kind = get_str(j, "kind", c.kind);
    c.endpoint = get_str(j, "endpoint");
    c.model = get_str(j, "model");
    c.fixtures = get_str(j, "fixtures");
    c.api_token = get_str(j, "api_token", "${CIDER_API_TOKEN}");
    if (j.contains("rate_limit_rps")) c.rate_limit_rps = j.at("rate_limit_rps").get<double>();
    return c;
}

}  // namespace

PipelineConfig PipelineConfig::parse(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    PipelineConfig cfg;
    cfg.run_dir = get_str(j, "run_dir", cfg.run_dir);
    if (j.contains("paths")) {
        const auto& p = j.at("paths");
        cfg.paths.trajectories = get_str(p, "trajectories");
        cfg.paths.embeddings = get_str(p, "embeddings");
        cfg.paths.samples = get_str(p, "samples");
        cfg.paths.ledger = get_str(p, "ledger");
        cfg.paths.scores = get_str(p, "scores");
        cfg.paths.retained = get_str(p, "retained");
        cfg.paths.packed = get_str(p, "packed");
        cfg.paths.manifest = get_str(p, "manifest");
        cfg.paths.report = get_str(p, "report");
    }
    if (j.contains("retention")) {
        const auto& r = j.at("retention");
        if (r.contains("alpha")) cfg.retention.alpha = r.at("alpha").get<double>();
        if (r.contains("lambda")) cfg.retention.lambda = r.at("lambda").get<double>();
        if (r.contains("gamma")) cfg.retention.gamma = r.at("gamma").get<double>();
        if (r.contains("k")) cfg.retention.k = r.at("k").get<int>();
        if (r.contains("seed")) cfg.retention.seed = r.at("seed").get<uint64_t>();
    }
    cfg.lexicon = get_str(j, "lexicon");
    cfg.templates_dir = get_str(j, "templates_dir");
    if (j.contains("clients")) {
        const auto& c = j.at("clients");
        if (c.contains("planner")) cfg.planner = parse_client(c.at("planner"));
        if (c.contains("grounder")) cfg.grounder = parse_client(c.at("grounder"));
        if (c.contains("analyst")) cfg.analyst = parse_client(c.at("analyst"));
    }
    if (j.contains("embeddings")) {
        const auto& e = j.at("embeddings");
        cfg.embeddings.source = get_str(e, "source", cfg.embeddings.source);
        cfg.embeddings.format = get_str(e, "format", cfg.embeddings.format);
        cfg.embeddings.endpoint = get_str(e, "endpoint");
        cfg.embeddings.model = get_str(e, "model");
        cfg.embeddings.api_token = get_str(e, "api_token", "${CIDER_API_TOKEN}");
        if (e.contains("batch_size")) cfg.embeddings.batch_size = e.at("batch_size").get<size_t>();
        if (e.contains("mock_dim")) cfg.embeddings.mock_dim = e.at("mock_dim").get<size_t>();
        if (e.contains("rate_limit_rps")) {
            cfg.embeddings.rate_limit_rps = e.at("rate_limit_rps").get<double>();
        }
    }
    if (j.contains("pack")) {
        const auto& p = j.at("pack");
        cfg.pack.delimiter = get_str(p, "delimiter", cfg.pack.delimiter);
        if (p.contains("shard_bytes")) cfg.pack.shard_bytes = p.at("shard_bytes").get<size_t>();
    }
    if (j.contains("workers")) cfg.workers = j.at("workers").get<unsigned>();
    cfg.encoder_identity = get_str(j, "encoder_identity");
    cfg.validate_common();
    return cfg;
}

PipelineConfig PipelineConfig::load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

void PipelineConfig::validate_common() const {
    retention.validate();
    auto check_kind = [](const ClientConfig& c, const char* which) {
        if (c.kind != "mock" && c.kind != "http") {
            throw ConfigError(std::string(which) + " client kind must be mock or http, got: " + c.kind);
        }
        if (c.kind == "http" && c.endpoint.empty()) {
            throw ConfigError(std::string(which) + " http client needs an endpoint");
        }
    };
    check_kind(planner, "planner");
    check_kind(grounder, "grounder");
    check_kind(analyst, "analyst");
    if (embeddings.source != "file" && embeddings.source != "service" && embeddings.source != "mock") {
        throw ConfigError("embeddings.source must be file, service, or mock");
    }
    if (embeddings.source == "file" && embeddings.format != "text" && embeddings.format != "binary") {
        throw ConfigError("embeddings.format must be text or binary");
    }
    if (embeddings.source == "service" && embeddings.endpoint.empty()) {
        throw ConfigError("embeddings.source=service needs an endpoint");
    }
    if (run_dir.empty()) throw ConfigError("run_dir must be non-empty");
    if (pack.delimiter.empty() || pack.delimiter.find('\n') != std::string::npos) {
        throw ConfigError("pack.delimiter must be a non-empty single line");
    }
}

std::string PipelineConfig::corpus_hash() const {
    // Only the corpus identity: which trajectories, which templates, which
    // expert models. Canonical field order keeps the hash stable.
    ordered_json id;
    id["trajectories"] = paths.trajectories;
    id["templates_dir"] = templates_dir;
    for (const auto& [name, client] :
         {std::pair<const char*, const ClientConfig*>{"planner", &planner},
          {"grounder", &grounder},
          {"analyst", &analyst}}) {
        id[name] = ordered_json{{"kind", client->kind},
                                {"endpoint", client->endpoint},
                                {"model", client->model},
                                {"fixtures", client->fixtures}};
    }
    return to_hex16(fnv1a64(id.dump()));
}

namespace {

std::filesystem::path resolve(const std::string& configured, const std::string& run_dir,
                              const char* fallback) {
    if (!configured.empty()) return configured;
    return std::filesystem::path(run_dir) / fallback;
}

}  // namespace

std::filesystem::path PipelineConfig::samples_path() const {
    return resolve(paths.samples, run_dir, "samples.jsonl");
}
std::filesystem::path PipelineConfig::ledger_path() const {
    return resolve(paths.ledger, run_dir, "ledger.jsonl");
}
std::filesystem::path PipelineConfig::scores_path() const {
    return resolve(paths.scores, run_dir, "scores.jsonl");
}
std::filesystem::path PipelineConfig::retained_path() const {
    return resolve(paths.retained, run_dir, "retained.jsonl");
}
std::filesystem::path PipelineConfig::packed_path() const {
    return resolve(paths.packed, run_dir, "corpus.txt");
}
std::filesystem::path PipelineConfig::manifest_path() const {
    return resolve(paths.manifest, run_dir, "manifest.txt");
}
std::filesystem::path PipelineConfig::report_path() const {
    return resolve(paths.report, run_dir, "report.json");
}
std::filesystem::path PipelineConfig::lock_path() const {
    return std::filesystem::path(run_dir) / ".cider.lock";
}

}  // namespace cider
