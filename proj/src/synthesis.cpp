#include "cider/synthesis.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace cider {

// ---------------------------------------------------------------------------
// Prompt templates
// ---------------------------------------------------------------------------

static std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open template file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

PromptTemplates PromptTemplates::load_dir(const std::string& dir) {
    const std::filesystem::path base(dir);
    PromptTemplates t;
    t.planning = read_text_file(base / "planning.txt");
    t.grounding = read_text_file(base / "grounding.txt");
    t.state_description = read_text_file(base / "state_description.txt");
    t.causal_analysis = read_text_file(base / "causal_analysis.txt");
    t.validate();
    return t;
}

static void require_placeholder(const std::string& templ, const char* name, const char* which) {
    if (templ.find(std::string("{") + name + "}") == std::string::npos) {
        throw ConfigError(std::string(which) + " template is missing the {" + name + "} placeholder");
    }
}

void PromptTemplates::validate() const {
    require_placeholder(planning, "task", "planning");
    require_placeholder(grounding, "action", "grounding");
    require_placeholder(grounding, "ui_metadata", "grounding");
    require_placeholder(causal_analysis, "task", "causal_analysis");
    require_placeholder(causal_analysis, "pre_state", "causal_analysis");
    require_placeholder(causal_analysis, "action", "causal_analysis");
    require_placeholder(causal_analysis, "post_state", "causal_analysis");
    if (trim(state_description).empty()) {
        throw ConfigError("state_description template must be non-empty");
    }
}

std::string render_prompt(std::string_view templ,
                          const std::vector<std::pair<std::string, std::string>>& vars) {
    std::string out;
    out.reserve(templ.size() + 64);
    size_t i = 0;
    while (i < templ.size()) {
        if (templ[i] != '{') {
            out += templ[i++];
            continue;
        }
        const size_t close = templ.find('}', i + 1);
        if (close == std::string_view::npos) {
            out += templ.substr(i);
            break;
        }
        const std::string_view name = templ.substr(i + 1, close - i - 1);
        auto it = std::find_if(vars.begin(), vars.end(),
                               [&](const auto& kv) { return kv.first == name; });
        if (it != vars.end()) {
            out += it->second;
        } else {
            out += templ.substr(i, close - i + 1);  // unknown placeholder stays verbatim
        }
        i = close + 1;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rate limiting
// ---------------------------------------------------------------------------

static double steady_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

static void real_sleep(double seconds) {
    std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

RateLimiter::RateLimiter(double requests_per_second, double burst)
    : RateLimiter(requests_per_second, burst, steady_seconds, real_sleep) {}

RateLimiter::RateLimiter(double requests_per_second, double burst, std::function<double()> clock,
                         std::function<void(double)> sleeper)
    : rps_(requests_per_second),
      burst_(std::max(1.0, burst)),
      tokens_(std::max(1.0, burst)),
      last_(0.0),
      clock_(std::move(clock)),
      sleep_(std::move(sleeper)) {
    if (rps_ > 0.0) last_ = clock_();
}

void RateLimiter::acquire() {
    if (rps_ <= 0.0) return;
    for (;;) {
        double wait = 0.0;
        {
            std::lock_guard<std::mutex> g(mu_);
            const double now = clock_();
            tokens_ = std::min(burst_, tokens_ + (now - last_) * rps_);
            last_ = now;
            if (tokens_ >= 1.0) {
                tokens_ -= 1.0;
                return;
            }
            wait = (1.0 - tokens_) / rps_;
        }
        sleep_(wait);
    }
}

RateLimitedClient::RateLimitedClient(ExpertClient& inner, double requests_per_second)
    : inner_(inner), limiter_(requests_per_second) {}

std::string RateLimitedClient::complete_text(const std::string& prompt) {
    limiter_.acquire();
    return inner_.complete_text(prompt);
}

std::string RateLimitedClient::describe_image(const std::string& image_ref,
                                              const std::string& prompt) {
    limiter_.acquire();
    return inner_.describe_image(image_ref, prompt);
}

std::string RateLimitedClient::identity() const { return inner_.identity(); }

// ---------------------------------------------------------------------------
// Mock client
// ---------------------------------------------------------------------------

std::string MockExpertClient::prompt_hash(std::string_view prompt) {
    return to_hex16(fnv1a64(prompt));
}

MockExpertClient MockExpertClient::load_fixtures(std::istream& in) {
    MockExpertClient client;
    nlohmann::json j = nlohmann::json::parse(in);
    if (!j.is_object()) throw ConfigError("fixture map must be a JSON object");
    for (auto& [key, value] : j.items()) {
        const bool looks_hashed =
            key.size() == 16 && key.find_first_not_of("0123456789abcdef") == std::string::npos;
        client.fixtures_[looks_hashed ? key : prompt_hash(key)] = value.get<std::string>();
    }
    return client;
}

void MockExpertClient::add_fixture(const std::string& prompt, std::string response) {
    fixtures_[prompt_hash(prompt)] = std::move(response);
}

namespace {

// Small word pools for deterministic fallback content. The causal/temporal
// connective pool deliberately overlaps the default keyword lexicon so mock
// corpora get a spread of saliency scores.
const char* kViews[] = {"main", "settings", "detail", "list", "editor", "search"};
const char* kApps[] = {"calendar", "notes", "clock", "mail", "gallery", "browser"};
const char* kElements[] = {"toolbar button", "list entry", "floating button",
                           "text field", "menu item", "confirmation dialog"};
const char* kConnectives[] = {
    "because the task requires it",
    "so that the next subgoal becomes reachable",
    "in order to commit the pending change",
    "due to the state shown before",
    "since the previous screen exposed the control",
    "as a result, the interface advances",
    "if the control had been ignored, the task would have stalled",
    "once the change is applied, the screen updates",
};

std::string pick(const char* const* pool, size_t pool_size, uint64_t h, int slot) {
    return pool[mix64(h + static_cast<uint64_t>(slot)) % pool_size];
}

std::optional<std::string> line_after(const std::string& text, const std::string& label) {
    size_t pos = 0;
    while ((pos = text.find(label, pos)) != std::string::npos) {
        if (pos == 0 || text[pos - 1] == '\n') {
            const size_t start = pos + label.size();
            const size_t end = text.find('\n', start);
            return trim(text.substr(start, end == std::string::npos ? std::string::npos
                                                                    : end - start));
        }
        pos += label.size();
    }
    return std::nullopt;
}

}  // namespace

std::string MockExpertClient::fallback_complete(const std::string& prompt) const {
    const uint64_t h = fnv1a64(prompt);

    if (prompt.find("PLAN:") != std::string::npos) {
        const std::string task = line_after(prompt, "Task: ").value_or("the task");
        const int n = 2 + static_cast<int>(mix64(h) % 3);  // 2..4 subgoals
        std::ostringstream os;
        os << "PLAN:\n";
        const char* stems[] = {
            "Open the application or screen needed for",
            "Locate the control that advances",
            "Perform the main interaction required by",
            "Confirm the visible result of",
        };
        for (int i = 0; i < n; ++i) {
            os << (i + 1) << ". " << stems[i] << ": " << task << "\n";
        }
        return os.str();
    }

    if (prompt.find("TRIGGER:") != std::string::npos &&
        prompt.find("MECHANISM:") != std::string::npos) {
        const std::string action = line_after(prompt, "Action: ").value_or("the action");
        std::ostringstream os;
        os << "TRIGGER: The " << pick(kElements, std::size(kElements), h, 1)
           << " visible in the previous state invited this step "
           << pick(kConnectives, std::size(kConnectives), h, 2) << ".\n";
        os << "MECHANISM: The interface maps \"" << action
           << "\" to the observed change " << pick(kConnectives, std::size(kConnectives), h, 3)
           << ".\n";
        os << "REASONING: The agent chose this step "
           << pick(kConnectives, std::size(kConnectives), h, 4) << "; "
           << pick(kConnectives, std::size(kConnectives), h, 5)
           << ". The new state confirms the transition as expected.\n";
        return os.str();
    }

    if (prompt.find("Action:") != std::string::npos) {
        const std::string action = line_after(prompt, "Action: ").value_or("");
        const std::string meta = line_after(prompt, "UI metadata: ").value_or("");
        auto has = [&](const char* s) { return action.find(s) != std::string::npos; };
        if (has("PRESS_HOME")) return "Navigate to the home screen to reset the navigation context.";
        if (has("PRESS_BACK")) return "Go back to the previous screen.";
        if (has("ENTER")) return "Press the enter key to submit the current input.";
        if (has("WAIT")) return "Wait for the screen to finish loading.";
        if (has("COMPLETE")) return "Mark the task as finished.";
        if (has("IMPOSSIBLE")) return "Declare the task impossible to complete.";
        if (has("TYPE text ")) {
            const size_t q1 = action.find('"');
            const size_t q2 = action.rfind('"');
            const std::string typed =
                (q1 != std::string::npos && q2 > q1) ? action.substr(q1, q2 - q1 + 1) : "\"\"";
            return "Enter the text " + typed + " into the focused input field to provide the required value.";
        }
        if (has("SCROLL")) {
            const std::string dir = action.size() > 7 ? action.substr(7) : "down";
            return "Scroll " + dir + " to reveal more of the current view.";
        }
        if (has("OPEN_APP")) {
            const size_t q1 = action.find('"');
            const size_t q2 = action.rfind('"');
            const std::string app =
                (q1 != std::string::npos && q2 > q1) ? action.substr(q1 + 1, q2 - q1 - 1) : "the app";
            return "Open the " + app + " application from the launcher.";
        }
        std::string target = meta.empty() || meta == "(none)"
                                 ? std::string("the ") + pick(kElements, std::size(kElements), h, 6)
                                 : "the element described as \"" + meta.substr(0, 48) + "\"";
        if (has("LONG_PRESS")) return "Long-press " + target + " to expose its secondary options.";
        return "Tap " + target + " to activate its function.";
    }

    return "OK " + to_hex16(h);
}

std::string MockExpertClient::fallback_describe(const std::string& image_ref) const {
    const uint64_t h = fnv1a64(image_ref);
    std::ostringstream os;
    os << "The screen shows the " << pick(kViews, std::size(kViews), h, 1) << " view of the "
       << pick(kApps, std::size(kApps), h, 2) << " app, with a "
       << pick(kElements, std::size(kElements), h, 3) << " and a "
       << pick(kElements, std::size(kElements), h, 4) << " visible.";
    return os.str();
}

std::string MockExpertClient::complete_text(const std::string& prompt) {
    auto it = fixtures_.find(prompt_hash(prompt));
    if (it != fixtures_.end()) return it->second;
    return fallback_complete(prompt);
}

std::string MockExpertClient::describe_image(const std::string& image_ref,
                                             const std::string& prompt) {
    if (image_ref.rfind("missing://", 0) == 0) {
        throw SynthesisError("unreachable screenshot locator: " + image_ref);
    }
    auto it = fixtures_.find(prompt_hash(image_ref + "\n" + prompt));
    if (it != fixtures_.end()) return it->second;
    return fallback_describe(image_ref);
}

// ---------------------------------------------------------------------------
// Response parsers
// ---------------------------------------------------------------------------

Plan parse_plan_response(const std::string& response) {
    Plan plan;
    std::istringstream in(response);
    std::string line;
    while (std::getline(in, line)) {
        std::string t = trim(line);
        size_t i = 0;
        while (i < t.size() && t[i] >= '0' && t[i] <= '9') ++i;
        if (i == 0 || i >= t.size()) continue;
        if (t[i] != '.' && t[i] != ')') continue;
        std::string goal = trim(t.substr(i + 1));
        if (!goal.empty()) plan.subgoals.push_back(std::move(goal));
    }
    if (plan.subgoals.empty()) {
        throw SynthesisError("no numbered subgoals found in planning response: \"" +
                             response.substr(0, 200) + "\"");
    }
    return plan;
}

namespace {

// Case-insensitive search for `label` at a line start; returns the position
// just past the label, or npos.
size_t find_label(const std::string& text, const std::string& label, size_t from = 0) {
    const std::string lower = lower_ascii(text);
    const std::string needle = lower_ascii(label);
    size_t pos = from;
    while ((pos = lower.find(needle, pos)) != std::string::npos) {
        if (pos == 0 || lower[pos - 1] == '\n') return pos;
        pos += 1;
    }
    return std::string::npos;
}

}  // namespace

RationaleSections parse_rationale_response(const std::string& response) {
    struct Label {
        const char* name;
        size_t pos;
    };
    Label labels[] = {{"TRIGGER:", 0}, {"MECHANISM:", 0}, {"REASONING:", 0}};
    for (auto& l : labels) {
        l.pos = find_label(response, l.name);
        if (l.pos == std::string::npos) {
            throw SynthesisError(std::string("rationale response is missing its ") + l.name +
                                 " section: \"" + response.substr(0, 200) + "\"");
        }
    }
    auto section = [&](size_t idx) {
        const size_t start = labels[idx].pos + std::string(labels[idx].name).size();
        size_t end = response.size();
        for (const auto& l : labels) {
            if (l.pos > labels[idx].pos) end = std::min(end, l.pos);
        }
        std::string body = trim(response.substr(start, end - start));
        if (body.empty()) {
            throw SynthesisError(std::string("rationale section ") + labels[idx].name +
                                 " is empty");
        }
        return body;
    };
    return RationaleSections{section(0), section(1), section(2)};
}

// ---------------------------------------------------------------------------
// Per-step operations
// ---------------------------------------------------------------------------

namespace {

// Runs `attempt` up to 1 + retries times with the identical prompt.
template <typename Fn>
auto with_retries(int retries, const char* what, Fn&& attempt) {
    std::string last_error;
    for (int i = 0; i <= retries; ++i) {
        try {
            return attempt();
        } catch (const TransportError&) {
            throw;  // endpoint-level problems are not fixed by resending
        } catch (const SynthesisError& e) {
            last_error = e.what();
        }
    }
    throw SynthesisError(std::string(what) + " failed after " + std::to_string(retries) +
                         " retries: " + last_error);
}

}  // namespace

Plan plan_task(const std::string& task, ExpertClient& client, const PromptTemplates& templates,
               int retries) {
    if (trim(task).empty()) throw std::invalid_argument("task must be non-empty");
    const std::string prompt = render_prompt(templates.planning, {{"task", task}});
    return with_retries(retries, "plan_task", [&] {
        return parse_plan_response(client.complete_text(prompt));
    });
}

std::string ground_action(const ActionType& action, const std::string& ui_metadata,
                          ExpertClient& client, const PromptTemplates& templates, int retries) {
    action.validate();
    const std::string prompt = render_prompt(
        templates.grounding,
        {{"action", render_action(action)},
         {"ui_metadata", ui_metadata.empty() ? std::string("(none)") : ui_metadata}});
    return with_retries(retries, "ground_action", [&] {
        std::string text = trim(client.complete_text(prompt));
        if (text.empty()) throw SynthesisError("empty grounding response");
        return text;
    });
}

std::string describe_state(const std::string& screenshot_ref, ExpertClient& client,
                           const PromptTemplates& templates, int retries) {
    return with_retries(retries, "describe_state", [&] {
        std::string text = trim(client.describe_image(screenshot_ref, templates.state_description));
        if (text.empty()) {
            throw SynthesisError("empty state description for locator: " + screenshot_ref);
        }
        return text;
    });
}

Rationale induce_rationale(const std::string& task, const std::string& pre_state,
                           const std::string& grounded_action, const std::string& post_state,
                           ExpertClient& client, const PromptTemplates& templates, int retries) {
    if (task.empty() || pre_state.empty() || grounded_action.empty() || post_state.empty()) {
        throw std::invalid_argument("induce_rationale requires non-empty inputs");
    }
    const std::string prompt = render_prompt(templates.causal_analysis, {{"task", task},
                                                                         {"pre_state", pre_state},
                                                                         {"action", grounded_action},
                                                                         {"post_state", post_state}});
    const RationaleSections sections = with_retries(retries, "induce_rationale", [&] {
        return parse_rationale_response(client.complete_text(prompt));
    });
    Rationale r;
    r.pre_state = pre_state;    // stored verbatim; the sample must be
    r.post_state = post_state;  // self-contained without screenshots
    r.trigger = sections.trigger;
    r.mechanism = sections.mechanism;
    r.chain_of_thought = sections.chain_of_thought;
    return r;
}

// ---------------------------------------------------------------------------
// Corpus orchestration
// ---------------------------------------------------------------------------

SynthesisResult synthesize_corpus(std::span<const Trajectory> dataset,
                                  const ExpertClientSet& clients, const PromptTemplates& templates,
                                  const SynthesisOptions& options) {
    if (dataset.empty()) throw std::invalid_argument("dataset must be non-empty");
    if (!clients.planner || !clients.grounder || !clients.analyst) {
        throw std::invalid_argument("all three expert clients must be provided");
    }
    templates.validate();

    std::vector<std::vector<SynthesizedSample>> samples_by_traj(dataset.size());
    std::vector<std::vector<SynthesisFailure>> failures_by_traj(dataset.size());

    parallel_for(dataset.size(), options.workers, [&](size_t lo, size_t hi) {
        for (size_t ti = lo; ti < hi; ++ti) {
            const Trajectory& traj = dataset[ti];
            traj.validate();
            const size_t L = traj.steps.size();

            Plan plan;
            try {
                plan = plan_task(traj.task, *clients.planner, templates, options.retries);
            } catch (const TransportError&) {
                throw;  // unreachable endpoint aborts the run
            } catch (const std::exception& e) {
                failures_by_traj[ti].push_back({traj.id, -1, "plan", e.what()});
                continue;  // every step of this trajectory is lost
            }

            // Memoized state descriptions; step t's post state is step t+1's
            // pre state. The final step reuses its own screenshot since no
            // later one exists.
            std::vector<std::optional<std::string>> described(L);
            std::vector<std::string> describe_error(L);
            auto describe_idx = [&](size_t t) -> const std::string& {
                if (!described[t] && describe_error[t].empty()) {
                    try {
                        described[t] = describe_state(traj.steps[t].screenshot_ref,
                                                      *clients.analyst, templates, options.retries);
                    } catch (const TransportError&) {
                        throw;
                    } catch (const std::exception& e) {
                        describe_error[t] = e.what();
                    }
                }
                if (!described[t]) throw SynthesisError(describe_error[t]);
                return *described[t];
            };

            for (size_t t = 0; t < L; ++t) {
                const int step_index = traj.steps[t].index;
                try {
                    std::string pre, post;
                    try {
                        pre = describe_idx(t);
                        post = describe_idx(std::min(t + 1, L - 1));
                    } catch (const SynthesisError& e) {
                        failures_by_traj[ti].push_back({traj.id, step_index, "describe", e.what()});
                        continue;
                    }
                    std::string grounded;
                    try {
                        grounded = ground_action(traj.steps[t].action,
                                                 traj.steps[t].ui_metadata.value_or(""),
                                                 *clients.grounder, templates, options.retries);
                    } catch (const SynthesisError& e) {
                        failures_by_traj[ti].push_back({traj.id, step_index, "ground", e.what()});
                        continue;
                    }
                    SynthesizedSample sample;
                    sample.id = SynthesizedSample::make_id(traj.id, step_index);
                    sample.task = traj.task;
                    sample.plan = plan;
                    sample.grounded_action = grounded;
                    sample.rationale = induce_rationale(traj.task, pre, grounded, post,
                                                        *clients.analyst, templates, options.retries);
                    sample.validate();
                    samples_by_traj[ti].push_back(std::move(sample));
                } catch (const TransportError&) {
                    throw;
                } catch (const std::exception& e) {
                    failures_by_traj[ti].push_back({traj.id, step_index, "rationale", e.what()});
                }
            }
        }
    });

    SynthesisResult result;
    for (auto& chunk : samples_by_traj) {
        for (auto& s : chunk) result.samples.push_back(std::move(s));
    }
    for (auto& chunk : failures_by_traj) {
        for (auto& f : chunk) result.failures.push_back(std::move(f));
    }

    // Normalize output order by sample identity so worker count and
    // scheduling never show up in the artifacts.
    auto id_key = [](const std::string& trajectory_id, int step) {
        return std::make_pair(trajectory_id, step);
    };
    std::sort(result.samples.begin(), result.samples.end(), [&](const auto& a, const auto& b) {
        const size_t ha = a.id.rfind('#');
        const size_t hb = b.id.rfind('#');
        return id_key(a.id.substr(0, ha), std::stoi(a.id.substr(ha + 1))) <
               id_key(b.id.substr(0, hb), std::stoi(b.id.substr(hb + 1)));
    });
    std::sort(result.failures.begin(), result.failures.end(), [&](const auto& a, const auto& b) {
        return std::tie(a.trajectory_id, a.step_index) < std::tie(b.trajectory_id, b.step_index);
    });
    return result;
}

}  // namespace cider
