// synthesis.hpp — Stage 1: turns raw trajectories into self-contained
// textual knowledge samples via a pluggable expert-model client.
//
// Per trajectory, the plan is computed once and shared by all step samples;
// each step then gets a grounded action description, pre/post state
// descriptions, and a causal rationale. Screenshot descriptions are memoized
// per trajectory, since step t's post state is step t+1's pre state.
#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cider/corpus_model.hpp"

namespace cider {

// A model-side failure: unparseable or empty response after retries,
// unreachable screenshot, etc. Carries the offending context in what().
class SynthesisError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Endpoint-level failure (connection refused, HTTP error, bad payload).
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Behavioral interface over the expert model. Implementations must be safe
// for concurrent calls.
class ExpertClient {
public:
    virtual ~ExpertClient() = default;
    virtual std::string complete_text(const std::string& prompt) = 0;
    virtual std::string describe_image(const std::string& image_ref, const std::string& prompt) = 0;
    virtual std::string identity() const = 0;  // model name + endpoint descriptor
};

struct PromptTemplates {
    std::string planning;
    std::string grounding;
    std::string state_description;
    std::string causal_analysis;

    // Shipped defaults (the editable copies live under templates/).
    static PromptTemplates defaults();
    // Loads planning.txt, grounding.txt, state_description.txt,
    // causal_analysis.txt from a directory.
    static PromptTemplates load_dir(const std::string& dir);

    // Every placeholder an operation substitutes must exist in its template.
    void validate() const;
};

// Single-pass "{name}" substitution; unknown placeholders are left verbatim.
std::string render_prompt(std::string_view templ,
                          const std::vector<std::pair<std::string, std::string>>& vars);

// Token bucket. acquire() blocks until a request token is available;
// rps <= 0 disables limiting. The clock/sleep hooks exist for tests.
class RateLimiter {
public:
    explicit RateLimiter(double requests_per_second, double burst = 1.0);
    RateLimiter(double requests_per_second, double burst, std::function<double()> clock,
                std::function<void(double)> sleeper);
    void acquire();

private:
    double rps_;
    double burst_;
    double tokens_;
    double last_;
    std::mutex mu_;
    std::function<double()> clock_;
    std::function<void(double)> sleep_;
};

// Decorator applying a token bucket to every call of an inner client.
class RateLimitedClient : public ExpertClient {
public:
    RateLimitedClient(ExpertClient& inner, double requests_per_second);
    std::string complete_text(const std::string& prompt) override;
    std::string describe_image(const std::string& image_ref, const std::string& prompt) override;
    std::string identity() const override;

private:
    ExpertClient& inner_;
    RateLimiter limiter_;
};

// Deterministic offline client: same prompt, same output. Responses come
// from a fixture map keyed by the FNV-1a hash of the prompt; prompts without
// a fixture get a deterministic, well-formed fallback derived from the
// prompt text itself. Screenshot locators with the "missing://" scheme are
// treated as unreachable.
class MockExpertClient : public ExpertClient {
public:
    MockExpertClient() = default;

    static std::string prompt_hash(std::string_view prompt);
    // JSON object mapping prompt hash (or raw prompt text) -> response.
    static MockExpertClient load_fixtures(std::istream& in);

    void add_fixture(const std::string& prompt, std::string response);

    std::string complete_text(const std::string& prompt) override;
    std::string describe_image(const std::string& image_ref, const std::string& prompt) override;
    std::string identity() const override { return "mock"; }

private:
    std::unordered_map<std::string, std::string> fixtures_;

    std::string fallback_complete(const std::string& prompt) const;
    std::string fallback_describe(const std::string& image_ref) const;
};

// --- response parsers (exposed for tests) ---------------------------------

// Accepts a numbered list ("1. ..." / "2) ..."), optionally under a PLAN:
// label; throws SynthesisError when no subgoals can be parsed.
Plan parse_plan_response(const std::string& response);

// Extracts the TRIGGER / MECHANISM / REASONING sections (case-insensitive
// labels at line starts); all three must be present and non-empty.
struct RationaleSections {
    std::string trigger;
    std::string mechanism;
    std::string chain_of_thought;
};
RationaleSections parse_rationale_response(const std::string& response);

// --- per-step operations ---------------------------------------------------

inline constexpr int kDefaultRetries = 2;  // identical-prompt retries before failing a step

Plan plan_task(const std::string& task, ExpertClient& client, const PromptTemplates& templates,
               int retries = kDefaultRetries);

std::string ground_action(const ActionType& action, const std::string& ui_metadata,
                          ExpertClient& client, const PromptTemplates& templates,
                          int retries = kDefaultRetries);

std::string describe_state(const std::string& screenshot_ref, ExpertClient& client,
                           const PromptTemplates& templates, int retries = kDefaultRetries);

Rationale induce_rationale(const std::string& task, const std::string& pre_state,
                           const std::string& grounded_action, const std::string& post_state,
                           ExpertClient& client, const PromptTemplates& templates,
                           int retries = kDefaultRetries);

// --- corpus-level orchestration ---------------------------------------------

struct SynthesisFailure {
    std::string trajectory_id;
    int step_index = -1;  // -1 marks a trajectory-level (planning) failure
    std::string stage;    // plan | describe | ground | rationale
    std::string cause;
};

struct SynthesisResult {
    std::vector<SynthesizedSample> samples;   // sorted by (trajectory id, step index)
    std::vector<SynthesisFailure> failures;   // same ordering; never aborts the run
};

// The planning function, grounding function, and causal analyst may be
// served by distinct clients (configuration decides); they may all alias.
struct ExpertClientSet {
    ExpertClient* planner = nullptr;
    ExpertClient* grounder = nullptr;
    ExpertClient* analyst = nullptr;
};

struct SynthesisOptions {
    int retries = kDefaultRetries;
    unsigned workers = 1;
};

SynthesisResult synthesize_corpus(std::span<const Trajectory> dataset,
                                  const ExpertClientSet& clients, const PromptTemplates& templates,
                                  const SynthesisOptions& options = {});

}  // namespace cider
