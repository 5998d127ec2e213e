#include <doctest.h>

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "cider/http_clients.hpp"
#include "cider/pipeline.hpp"
#include "oracles.hpp"

using namespace cider;
using nlohmann::json;

TEST_SUITE_BEGIN("http_clients");

namespace {

// Loopback server fixture recording the requests it serves.
struct LocalServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;
    std::atomic<int> chat_requests{0};
    std::atomic<int> embed_requests{0};
    json last_chat_body;
    std::string last_auth;

    LocalServer() {
        server.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                    httplib::Response& res) {
            ++chat_requests;
            last_auth = req.get_header_value("Authorization");
            last_chat_body = json::parse(req.body);
            const json reply = {
                {"choices", json::array({json{{"message", json{{"content", "canned reply"}}}}})}};
            res.set_content(reply.dump(), "application/json");
        });
        server.Post("/v1/embeddings", [this](const httplib::Request& req, httplib::Response& res) {
            ++embed_requests;
            const json body = json::parse(req.body);
            json data = json::array();
            int i = 0;
            for (const auto& text : body.at("input")) {
                const double x = static_cast<double>(text.get<std::string>().size());
                data.push_back(json{{"embedding", {x, static_cast<double>(i++), 1.0}}});
            }
            res.set_content(json{{"data", data}}.dump(), "application/json");
        });
        server.Post("/broken/v1/chat/completions",
                    [](const httplib::Request&, httplib::Response& res) {
                        res.status = 500;
                        res.set_content("boom", "text/plain");
                    });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }

    ~LocalServer() {
        server.stop();
        thread.join();
    }

    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

HttpEndpoint endpoint_for(const LocalServer& s, const std::string& suffix = "") {
    HttpEndpoint ep;
    ep.base_url = s.base_url() + suffix;
    ep.model = "test-model";
    ep.api_token = "sekrit";
    ep.timeout_seconds = 5.0;
    return ep;
}

}  // namespace

TEST_CASE("expert client speaks the chat-completions wire format") {
    LocalServer server;
    HttpExpertClient client(endpoint_for(server));

    CHECK(client.complete_text("hello world") == "canned reply");
    CHECK(server.chat_requests == 1);
    CHECK(server.last_auth == "Bearer sekrit");
    CHECK(server.last_chat_body.at("model") == "test-model");
    CHECK(server.last_chat_body.at("messages").at(0).at("role") == "user");
    CHECK(server.last_chat_body.at("messages").at(0).at("content") == "hello world");

    CHECK(client.describe_image("screen://42", "describe it") == "canned reply");
    const auto& content = server.last_chat_body.at("messages").at(0).at("content");
    REQUIRE(content.is_array());
    CHECK(content.at(0).at("text") == "describe it");
    CHECK(content.at(1).at("image_url").at("url") == "screen://42");

    CHECK(client.identity().find("test-model@") == 0);
}

TEST_CASE("http failures surface as TransportError") {
    LocalServer server;
    HttpExpertClient broken(endpoint_for(server, "/broken"));
    CHECK_THROWS_AS(broken.complete_text("x"), TransportError);

    HttpEndpoint nowhere;
    nowhere.base_url = "http://127.0.0.1:1";  // nothing listens there
    nowhere.model = "m";
    nowhere.timeout_seconds = 2.0;
    HttpExpertClient unreachable(nowhere);
    CHECK_THROWS_AS(unreachable.complete_text("x"), TransportError);
}

TEST_CASE("embedding client returns vectors in order and batches correctly") {
    LocalServer server;
    HttpEmbeddingClient client(endpoint_for(server));

    const std::vector<std::string> ids = {"a#0", "a#1", "b#0", "b#1", "c#0"};
    const std::vector<std::string> texts = {"x", "xx", "xxx", "xxxx", "xxxxx"};
    const auto rows = embed_in_batches(client, ids, texts, 2);
    CHECK(server.embed_requests == 3);  // 2 + 2 + 1
    REQUIRE(rows.size() == 5);
    for (size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].sample_id == ids[i]);
        CHECK(rows[i].vector[0] == doctest::Approx(static_cast<double>(texts[i].size())));
    }
}

TEST_CASE("select runs against a live embedding service end to end") {
    LocalServer server;
    namespace fs = std::filesystem;
    const fs::path dir =
        fs::temp_directory_path() / ("cider_http_select_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);

    PipelineConfig cfg;
    cfg.run_dir = (dir / "run").string();
    cfg.paths.trajectories = (dir / "trajectories.jsonl").string();
    cfg.embeddings.source = "service";
    cfg.embeddings.endpoint = server.base_url();
    cfg.embeddings.model = "embed-model";
    cfg.embeddings.batch_size = 4;
    {
        std::ofstream out(cfg.paths.trajectories, std::ios::binary);
        write_trajectories(std::vector{oracle::make_trajectory("t0", "demo", 3),
                                       oracle::make_trajectory("t1", "demo two", 2)},
                           out);
    }
    REQUIRE(cmd_synth(cfg) == kExitOk);
    REQUIRE(cmd_select(cfg) == kExitOk);
    CHECK(server.embed_requests >= 2);  // 5 samples in batches of 4

    const auto report = json::parse(std::ifstream(cfg.report_path()));
    CHECK(report.at("encoder_identity").get<std::string>() ==
          "embed-model@" + server.base_url());
    fs::remove_all(dir);
}

TEST_CASE("mock embedding client yields deterministic unit vectors") {
    MockEmbeddingClient mock(24);
    const auto a = mock.embed({"sample text", "other"});
    const auto b = mock.embed({"sample text"});
    REQUIRE(a.size() == 2);
    CHECK(a[0] == b[0]);
    CHECK(a[0] != a[1]);
    for (const auto& v : a) {
        double norm = 0.0;
        for (double x : v) norm += x * x;
        CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_SUITE_END();
