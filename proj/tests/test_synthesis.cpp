#include <doctest.h>

#include <atomic>
#include <set>
#include <sstream>

#include "cider/synthesis.hpp"
#include "oracles.hpp"

using namespace cider;

TEST_SUITE_BEGIN("synthesis");

namespace {

// Counts calls and can fail the first N of them, or fail selectively.
class CountingClient : public ExpertClient {
public:
    explicit CountingClient(std::string response) : response_(std::move(response)) {}

    std::atomic<int> complete_calls{0};
    std::atomic<int> describe_calls{0};
    int fail_first = 0;

    std::string complete_text(const std::string&) override {
        const int n = ++complete_calls;
        if (n <= fail_first) return "";  // unparseable
        return response_;
    }

    std::string describe_image(const std::string& ref, const std::string&) override {
        ++describe_calls;
        return "The screen for " + ref + " is visible.";
    }

    std::string identity() const override { return "counting"; }

private:
    std::string response_;
};

class UnreachableClient : public ExpertClient {
public:
    std::string complete_text(const std::string&) override {
        throw TransportError("connection refused");
    }
    std::string describe_image(const std::string&, const std::string&) override {
        throw TransportError("connection refused");
    }
    std::string identity() const override { return "unreachable"; }
};

}  // namespace

TEST_CASE("render_prompt substitutes placeholders and keeps unknown ones") {
    const std::string out =
        render_prompt("Do {task} with {action}; keep {unknown}", {{"task", "T"}, {"action", "A"}});
    CHECK(out == "Do T with A; keep {unknown}");
}

TEST_CASE("default templates validate and match the shipped files") {
    const auto defaults = PromptTemplates::defaults();
    CHECK_NOTHROW(defaults.validate());
    const auto from_dir = PromptTemplates::load_dir(std::string(CIDER_SOURCE_DIR) + "/templates");
    CHECK(from_dir.planning == defaults.planning);
    CHECK(from_dir.grounding == defaults.grounding);
    CHECK(from_dir.state_description == defaults.state_description);
    CHECK(from_dir.causal_analysis == defaults.causal_analysis);

    PromptTemplates broken = defaults;
    broken.grounding = "no placeholders here";
    CHECK_THROWS_AS(broken.validate(), ConfigError);
}

TEST_CASE("plan parser accepts numbered lists and rejects empty responses") {
    const Plan plan = parse_plan_response("1. open app\n2. tap plus");
    REQUIRE(plan.subgoals.size() == 2);
    CHECK(plan.subgoals[0] == "open app");
    CHECK(plan.subgoals[1] == "tap plus");

    const Plan labeled = parse_plan_response("PLAN:\n 1) first \n noise \n2. second\n");
    REQUIRE(labeled.subgoals.size() == 2);
    CHECK(labeled.subgoals[0] == "first");

    CHECK_THROWS_AS(parse_plan_response(""), SynthesisError);
    CHECK_THROWS_AS(parse_plan_response("no list at all"), SynthesisError);
}

TEST_CASE("plan_task: echo fixture parses, empty response fails after retries") {
    const auto templates = PromptTemplates::defaults();

    MockExpertClient mock;
    const std::string prompt = render_prompt(templates.planning, {{"task", "Add task 'eat'"}});
    mock.add_fixture(prompt, "1. open the todo app\n2. tap the plus button\n3. type eat\n4. confirm");
    const Plan plan = plan_task("Add task 'eat'", mock, templates);
    REQUIRE(plan.subgoals.size() == 4);
    CHECK(plan.subgoals[1] == "tap the plus button");

    CountingClient empty("");
    CHECK_THROWS_AS(plan_task("some task", empty, templates), SynthesisError);
    CHECK(empty.complete_calls == 1 + kDefaultRetries);  // identical prompt, bounded retries

    CountingClient flaky("1. only goal");
    flaky.fail_first = 2;
    const Plan recovered = plan_task("another task", flaky, templates);
    CHECK(recovered.subgoals.size() == 1);
    CHECK(flaky.complete_calls == 3);  // two failures consumed both retries
}

TEST_CASE("ground_action: canonical fallbacks and payload survival") {
    const auto templates = PromptTemplates::defaults();
    MockExpertClient mock;

    const std::string home =
        ground_action(ActionType::simple(ActionKind::PressHome), "", mock, templates);
    CHECK(lower_ascii(home).find("home screen") != std::string::npos);

    const std::string typed = ground_action(ActionType::type_text("eat"), "", mock, templates);
    CHECK(typed.find("eat") != std::string::npos);  // typed text must survive

    // fixture response for a click on a "+" button mentions adding
    const ActionType click = ActionType::click(0.91, 0.05);
    const std::string prompt = render_prompt(
        templates.grounding,
        {{"action", render_action(click)}, {"ui_metadata", "button label=\"+\""}});
    mock.add_fixture(prompt, "Tap the plus button to add a new task to the list.");
    const std::string grounded = ground_action(click, "button label=\"+\"", mock, templates);
    CHECK(grounded.find("add") != std::string::npos);
}

TEST_CASE("describe_state: determinism and unreachable locators") {
    const auto templates = PromptTemplates::defaults();
    MockExpertClient mock;
    const std::string a = describe_state("shot://t/0", mock, templates);
    const std::string b = describe_state("shot://t/0", mock, templates);
    CHECK(a == b);
    CHECK_FALSE(a.empty());
    CHECK_THROWS_AS(describe_state("missing://x", mock, templates), SynthesisError);

    // a fixture keyed by (locator, prompt) overrides the fallback
    mock.add_fixture("shot://t/9\n" + templates.state_description,
                     "The fixed description of screen nine.");
    CHECK(describe_state("shot://t/9", mock, templates) ==
          "The fixed description of screen nine.");
}

TEST_CASE("induce_rationale: section parsing and verbatim states") {
    const auto templates = PromptTemplates::defaults();
    MockExpertClient mock;
    const std::string pre = "Pre state with a byte-exact payload: \xC3\xA9";
    const std::string post = "Post state text";
    const std::string prompt = render_prompt(templates.causal_analysis,
                                             {{"task", "T"},
                                              {"pre_state", pre},
                                              {"action", "tap the button"},
                                              {"post_state", post}});
    mock.add_fixture(prompt,
                     "trigger: The button invited the tap.\n"
                     "MECHANISM: Tapping commits the selection.\n"
                     "Reasoning: The tap advances the task.");
    const Rationale r = induce_rationale("T", pre, "tap the button", post, mock, templates);
    CHECK(r.pre_state == pre);    // byte-for-byte
    CHECK(r.post_state == post);
    CHECK(r.trigger == "The button invited the tap.");
    CHECK(r.mechanism == "Tapping commits the selection.");
    CHECK(r.chain_of_thought == "The tap advances the task.");

    CHECK_THROWS_AS(parse_rationale_response("TRIGGER: a\nREASONING: c"), SynthesisError);
    CHECK_THROWS_AS(parse_rationale_response("TRIGGER: a\nMECHANISM:\nREASONING: c"),
                    SynthesisError);
}

TEST_CASE("synthesize_corpus: one plan per trajectory, shared by its steps") {
    CountingClient planner("1. open\n2. act\n3. confirm");
    MockExpertClient model;
    ExpertClientSet clients{&planner, &model, &model};
    const std::vector<Trajectory> data = {oracle::make_trajectory("t0", "demo task", 3)};

    const SynthesisResult result = synthesize_corpus(data, clients, PromptTemplates::defaults());
    CHECK(result.failures.empty());
    REQUIRE(result.samples.size() == 3);
    CHECK(planner.complete_calls == 1);  // plan computed once, outside the step loop
    for (const auto& s : result.samples) {
        CHECK(s.plan.subgoals == result.samples[0].plan.subgoals);
        CHECK(s.task == "demo task");
    }
}

TEST_CASE("synthesize_corpus: a failing step is logged, the rest survive") {
    MockExpertClient model;
    ExpertClientSet clients{&model, &model, &model};
    std::vector<Trajectory> data = {oracle::make_trajectory("t0", "task zero", 3),
                                    oracle::make_trajectory("t1", "task one", 2)};
    data[1].steps[1].screenshot_ref = "missing://gone";  // post of step 0, pre of step 1

    const SynthesisResult result = synthesize_corpus(data, clients, PromptTemplates::defaults());
    // both steps of t1 depend on the missing screenshot: step1 (pre) and step0 (post)
    CHECK(result.samples.size() == 3);
    REQUIRE(result.failures.size() == 2);
    CHECK(result.failures[0].trajectory_id == "t1");
    CHECK(result.failures[0].step_index == 0);
    CHECK(result.failures[0].stage == "describe");
    CHECK(result.failures[1].step_index == 1);
    CHECK(result.failures[0].cause.find("missing://gone") != std::string::npos);
}

TEST_CASE("synthesize_corpus: a planning failure loses the whole trajectory") {
    MockExpertClient model;
    const auto templates = PromptTemplates::defaults();
    std::vector<Trajectory> data = {oracle::make_trajectory("t0", "healthy task", 2),
                                    oracle::make_trajectory("t1", "doomed task", 3)};
    model.add_fixture(render_prompt(templates.planning, {{"task", "doomed task"}}),
                      "no numbered list here");
    ExpertClientSet clients{&model, &model, &model};
    const SynthesisResult result = synthesize_corpus(data, clients, templates);
    CHECK(result.samples.size() == 2);  // only t0's steps
    REQUIRE(result.failures.size() == 1);
    CHECK(result.failures[0].trajectory_id == "t1");
    CHECK(result.failures[0].step_index == -1);  // trajectory-level
    CHECK(result.failures[0].stage == "plan");
}

TEST_CASE("synthesize_corpus: exactly one grounding failure loses one sample") {
    MockExpertClient model;
    const auto templates = PromptTemplates::defaults();
    std::vector<Trajectory> data = {oracle::make_trajectory("t0", "task zero", 3),
                                    oracle::make_trajectory("t1", "task one", 2)};
    // force an empty grounding response for t1 step 0 only; the metadata is
    // made unique so the fixture prompt cannot collide with other steps
    data[1].steps[0].ui_metadata = "unique-bad-button";
    const auto& bad_step = data[1].steps[0];
    model.add_fixture(render_prompt(templates.grounding,
                                    {{"action", render_action(bad_step.action)},
                                     {"ui_metadata", bad_step.ui_metadata.value_or("(none)")}}),
                      "");
    ExpertClientSet clients{&model, &model, &model};
    const SynthesisResult result = synthesize_corpus(data, clients, templates);
    CHECK(result.samples.size() == 4);  // sum of L minus the failed step
    REQUIRE(result.failures.size() == 1);
    CHECK(result.failures[0].trajectory_id == "t1");
    CHECK(result.failures[0].step_index == 0);
    CHECK(result.failures[0].stage == "ground");
}

TEST_CASE("synthesize_corpus: ids enumerate every (trajectory, step)") {
    MockExpertClient model;
    ExpertClientSet clients{&model, &model, &model};
    const auto data = oracle::fixture_dataset();
    const SynthesisResult result = synthesize_corpus(data, clients, PromptTemplates::defaults());
    CHECK(result.failures.empty());

    std::set<std::string> expected;
    for (const auto& t : data) {
        for (const auto& s : t.steps) expected.insert(SynthesizedSample::make_id(t.id, s.index));
    }
    std::set<std::string> got;
    for (const auto& s : result.samples) got.insert(s.id);
    CHECK(got == expected);
    for (const auto& s : result.samples) CHECK_NOTHROW(s.validate());
}

TEST_CASE("synthesize_corpus is a pure function of its inputs under the mock") {
    MockExpertClient model;
    ExpertClientSet clients{&model, &model, &model};
    const auto data = oracle::fixture_dataset();
    const auto a = synthesize_corpus(data, clients, PromptTemplates::defaults(), {.workers = 1});
    const auto b = synthesize_corpus(data, clients, PromptTemplates::defaults(), {.workers = 4});
    REQUIRE(a.samples.size() == b.samples.size());
    for (size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(a.samples[i].id == b.samples[i].id);
        CHECK(a.samples[i].rationale.chain_of_thought == b.samples[i].rationale.chain_of_thought);
        CHECK(a.samples[i].rationale.pre_state == b.samples[i].rationale.pre_state);
    }
}

TEST_CASE("an unreachable endpoint aborts the run instead of filling the ledger") {
    UnreachableClient down;
    ExpertClientSet clients{&down, &down, &down};
    const std::vector<Trajectory> data = {oracle::make_trajectory("t", "task", 2)};
    CHECK_THROWS_AS(synthesize_corpus(data, clients, PromptTemplates::defaults()), TransportError);
}

TEST_CASE("fixture maps load from JSON with hashed or raw keys") {
    std::istringstream in(R"({
        "raw prompt text": "canned A",
        ")" + MockExpertClient::prompt_hash("other prompt") + R"(": "canned B"
    })");
    MockExpertClient mock = MockExpertClient::load_fixtures(in);
    CHECK(mock.complete_text("raw prompt text") == "canned A");
    CHECK(mock.complete_text("other prompt") == "canned B");
}

TEST_CASE("token bucket paces requests against a fake clock") {
    double now = 0.0;
    double slept = 0.0;
    RateLimiter limiter(
        2.0, 1.0, [&] { return now; },
        [&](double s) {
            slept += s;
            now += s;
        });
    limiter.acquire();  // consumes the initial token at t=0
    limiter.acquire();  // must wait 0.5s
    limiter.acquire();  // and another 0.5s
    CHECK(slept == doctest::Approx(1.0).epsilon(1e-9));

    RateLimiter unlimited(0.0);
    unlimited.acquire();  // no-op
}

TEST_SUITE_END();
