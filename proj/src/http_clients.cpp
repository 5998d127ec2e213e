#include "cider/http_clients.hpp"

#include <cmath>
#include <mutex>

#include <httplib.h>
#include <json.hpp>

namespace cider {

using nlohmann::json;

namespace {

httplib::Headers auth_headers(const HttpEndpoint& ep) {
    httplib::Headers headers;
    if (!ep.api_token.empty()) headers.emplace("Authorization", "Bearer " + ep.api_token);
    return headers;
}

json post_json(httplib::Client& client, const HttpEndpoint& ep, const std::string& path,
               const json& body) {
    auto res = client.Post(path, auth_headers(ep), body.dump(), "application/json");
    if (!res) {
        throw TransportError("cannot reach " + ep.base_url + path + ": " +
                             httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw TransportError("HTTP " + std::to_string(res->status) + " from " + ep.base_url + path +
                             ": " + res->body.substr(0, 300));
    }
    try {
        return json::parse(res->body);
    } catch (const std::exception& e) {
        throw TransportError(std::string("malformed JSON from ") + ep.base_url + path + ": " +
                             e.what());
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Expert client
// ---------------------------------------------------------------------------

struct HttpExpertClient::Impl {
    HttpEndpoint endpoint;
    httplib::Client client;
    std::mutex mu;  // httplib clients are not safe for concurrent requests

    explicit Impl(HttpEndpoint ep) : endpoint(std::move(ep)), client(endpoint.base_url) {
        const auto secs = static_cast<time_t>(endpoint.timeout_seconds);
        client.set_connection_timeout(secs, 0);
        client.set_read_timeout(secs, 0);
        client.set_write_timeout(secs, 0);
    }

    std::string chat(const json& content) {
        json body = {
            {"model", endpoint.model},
            {"messages", json::array({json{{"role", "user"}, {"content", content}}})},
        };
        json reply;
        {
            std::lock_guard<std::mutex> g(mu);
            reply = post_json(client, endpoint, "/v1/chat/completions", body);
        }
        try {
            return reply.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const std::exception& e) {
            throw TransportError(std::string("unexpected chat-completions payload: ") + e.what());
        }
    }
};

HttpExpertClient::HttpExpertClient(HttpEndpoint endpoint)
    : impl_(std::make_unique<Impl>(std::move(endpoint))) {}

HttpExpertClient::~HttpExpertClient() = default;

std::string HttpExpertClient::complete_text(const std::string& prompt) {
    return impl_->chat(json(prompt));
}

std::string HttpExpertClient::describe_image(const std::string& image_ref,
                                             const std::string& prompt) {
    json content = json::array({
        json{{"type", "text"}, {"text", prompt}},
        json{{"type", "image_url"}, {"image_url", json{{"url", image_ref}}}},
    });
    return impl_->chat(content);
}

std::string HttpExpertClient::identity() const {
    return impl_->endpoint.model + "@" + impl_->endpoint.base_url;
}

// ---------------------------------------------------------------------------
// Embedding clients
// ---------------------------------------------------------------------------

struct HttpEmbeddingClient::Impl {
    HttpEndpoint endpoint;
    httplib::Client client;
    std::mutex mu;

    explicit Impl(HttpEndpoint ep) : endpoint(std::move(ep)), client(endpoint.base_url) {
        const auto secs = static_cast<time_t>(endpoint.timeout_seconds);
        client.set_connection_timeout(secs, 0);
        client.set_read_timeout(secs, 0);
        client.set_write_timeout(secs, 0);
    }
};

HttpEmbeddingClient::HttpEmbeddingClient(HttpEndpoint endpoint)
    : impl_(std::make_unique<Impl>(std::move(endpoint))) {}

HttpEmbeddingClient::~HttpEmbeddingClient() = default;

std::vector<std::vector<double>> HttpEmbeddingClient::embed(const std::vector<std::string>& texts) {
    json body = {{"model", impl_->endpoint.model}, {"input", texts}};
    json reply;
    {
        std::lock_guard<std::mutex> g(impl_->mu);
        reply = post_json(impl_->client, impl_->endpoint, "/v1/embeddings", body);
    }
    std::vector<std::vector<double>> out;
    try {
        for (const auto& item : reply.at("data")) {
            out.push_back(item.at("embedding").get<std::vector<double>>());
        }
    } catch (const std::exception& e) {
        throw TransportError(std::string("unexpected embeddings payload: ") + e.what());
    }
    if (out.size() != texts.size()) {
        throw TransportError("embedding service returned " + std::to_string(out.size()) +
                             " vectors for " + std::to_string(texts.size()) + " inputs");
    }
    return out;
}

std::string HttpEmbeddingClient::identity() const {
    return impl_->endpoint.model + "@" + impl_->endpoint.base_url;
}

MockEmbeddingClient::MockEmbeddingClient(size_t dim) : dim_(dim) {
    if (dim_ == 0) throw std::invalid_argument("embedding dimension must be positive");
}

std::vector<std::vector<double>> MockEmbeddingClient::embed(const std::vector<std::string>& texts) {
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
        const uint64_t h = fnv1a64(text);
        std::vector<double> v(dim_);
        double norm_sq = 0.0;
        for (size_t j = 0; j < dim_; ++j) {
            // centered in [-0.5, 0.5), then normalized to the unit sphere
            v[j] = unit_from_bits(mix64(h + j + 1)) - 0.5;
            norm_sq += v[j] * v[j];
        }
        const double norm = std::sqrt(norm_sq);
        for (auto& x : v) x /= norm;
        out.push_back(std::move(v));
    }
    return out;
}

std::vector<EmbeddedSample> embed_in_batches(EmbeddingClient& client,
                                             std::span<const std::string> ids,
                                             std::span<const std::string> texts,
                                             size_t batch_size, RateLimiter* limiter) {
    if (ids.size() != texts.size()) {
        throw std::invalid_argument("embed_in_batches: ids and texts must align");
    }
    if (batch_size == 0) batch_size = 64;
    std::vector<EmbeddedSample> out;
    out.reserve(ids.size());
    size_t dim = 0;
    for (size_t start = 0; start < texts.size(); start += batch_size) {
        if (limiter) limiter->acquire();
        const size_t end = std::min(texts.size(), start + batch_size);
        std::vector<std::string> batch(texts.begin() + static_cast<long>(start),
                                       texts.begin() + static_cast<long>(end));
        auto vectors = client.embed(batch);
        for (size_t i = 0; i < vectors.size(); ++i) {
            if (dim == 0) dim = vectors[i].size();
            if (vectors[i].size() != dim || dim == 0) {
                throw IngestError("embedding service returned inconsistent dimensions");
            }
            out.push_back({ids[start + i], std::move(vectors[i])});
        }
    }
    return out;
}

}  // namespace cider
