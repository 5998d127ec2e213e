// http_clients.hpp — chat-completions-style expert client and batched
// embedding-service client. Request/response bodies are JSON; auth is a
// bearer token, normally sourced from CIDER_API_TOKEN.
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "cider/density.hpp"
#include "cider/synthesis.hpp"

namespace cider {

struct HttpEndpoint {
    std::string base_url;   // e.g. "http://localhost:8080"
    std::string model;
    std::string api_token;  // empty = no Authorization header
    double timeout_seconds = 60.0;
};

// POSTs {model, messages:[...]} to <base_url>/v1/chat/completions and returns
// choices[0].message.content. describe_image sends the prompt plus an
// image_url content part carrying the locator.
class HttpExpertClient : public ExpertClient {
public:
    explicit HttpExpertClient(HttpEndpoint endpoint);
    ~HttpExpertClient() override;

    std::string complete_text(const std::string& prompt) override;
    std::string describe_image(const std::string& image_ref, const std::string& prompt) override;
    std::string identity() const override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Batched text embedding interface.
class EmbeddingClient {
public:
    virtual ~EmbeddingClient() = default;
    virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
    virtual std::string identity() const = 0;
};

// POSTs {model, input:[texts]} to <base_url>/v1/embeddings; expects
// {data:[{embedding:[...]}, ...]} in input order.
class HttpEmbeddingClient : public EmbeddingClient {
public:
    explicit HttpEmbeddingClient(HttpEndpoint endpoint);
    ~HttpEmbeddingClient() override;

    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
    std::string identity() const override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Deterministic offline embedder: hash-derived unit vectors.
class MockEmbeddingClient : public EmbeddingClient {
public:
    explicit MockEmbeddingClient(size_t dim = 16);
    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
    std::string identity() const override { return "mock-embedder"; }

private:
    size_t dim_;
};

// Embeds all texts through `client` in batches of `batch_size`, pairing the
// result with `ids` positionally and checking dimensions. When a limiter is
// given, one token is taken per batch request.
std::vector<EmbeddedSample> embed_in_batches(EmbeddingClient& client,
                                             std::span<const std::string> ids,
                                             std::span<const std::string> texts,
                                             size_t batch_size, RateLimiter* limiter = nullptr);

}  // namespace cider
