#include "cider/corpus_model.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

namespace cider {

using ordered_json = nlohmann::ordered_json;

std::string to_string(ActionKind kind) {
    switch (kind) {
        case ActionKind::Click: return "CLICK";
        case ActionKind::Type: return "TYPE";
        case ActionKind::Scroll: return "SCROLL";
        case ActionKind::PressBack: return "PRESS_BACK";
        case ActionKind::PressHome: return "PRESS_HOME";
        case ActionKind::Enter: return "ENTER";
        case ActionKind::OpenApp: return "OPEN_APP";
        case ActionKind::Wait: return "WAIT";
        case ActionKind::LongPress: return "LONG_PRESS";
        case ActionKind::Complete: return "COMPLETE";
        case ActionKind::Impossible: return "IMPOSSIBLE";
    }
    throw std::logic_error("unknown ActionKind");
}

ActionKind action_kind_from_string(const std::string& s) {
    if (s == "CLICK") return ActionKind::Click;
    if (s == "TYPE") return ActionKind::Type;
    if (s == "SCROLL") return ActionKind::Scroll;
    if (s == "PRESS_BACK") return ActionKind::PressBack;
    if (s == "PRESS_HOME") return ActionKind::PressHome;
    if (s == "ENTER") return ActionKind::Enter;
    if (s == "OPEN_APP") return ActionKind::OpenApp;
    if (s == "WAIT") return ActionKind::Wait;
    if (s == "LONG_PRESS") return ActionKind::LongPress;
    if (s == "COMPLETE") return ActionKind::Complete;
    if (s == "IMPOSSIBLE") return ActionKind::Impossible;
    throw std::invalid_argument("unknown action kind: " + s);
}

void ActionType::validate() const {
    switch (kind) {
        case ActionKind::Click:
        case ActionKind::LongPress:
            if (!(std::isfinite(x) && std::isfinite(y) && x >= 0.0 && x <= 1.0 && y >= 0.0 && y <= 1.0)) {
                throw std::invalid_argument(to_string(kind) + " coordinates must lie in [0,1]x[0,1]");
            }
            break;
        case ActionKind::Type:
            if (text.empty()) throw std::invalid_argument("TYPE payload text must be non-empty");
            break;
        case ActionKind::Scroll:
            if (direction != "up" && direction != "down" && direction != "left" && direction != "right") {
                throw std::invalid_argument("SCROLL direction must be one of up/down/left/right");
            }
            break;
        case ActionKind::OpenApp:
            if (app.empty()) throw std::invalid_argument("OPEN_APP payload app must be non-empty");
            break;
        default:
            break;
    }
}

ActionType ActionType::click(double x, double y) {
    ActionType a;
    a.kind = ActionKind::Click;
    a.x = x;
    a.y = y;
    return a;
}

ActionType ActionType::long_press(double x, double y) {
    ActionType a;
    a.kind = ActionKind::LongPress;
    a.x = x;
    a.y = y;
    return a;
}

ActionType ActionType::type_text(std::string text) {
    ActionType a;
    a.kind = ActionKind::Type;
    a.text = std::move(text);
    return a;
}

ActionType ActionType::scroll(std::string direction) {
    ActionType a;
    a.kind = ActionKind::Scroll;
    a.direction = std::move(direction);
    return a;
}

ActionType ActionType::open_app(std::string app) {
    ActionType a;
    a.kind = ActionKind::OpenApp;
    a.app = std::move(app);
    return a;
}

ActionType ActionType::simple(ActionKind kind) {
    ActionType a;
    a.kind = kind;
    return a;
}

std::string render_action(const ActionType& action) {
    std::ostringstream os;
    switch (action.kind) {
        case ActionKind::Click:
        case ActionKind::LongPress:
            os << to_string(action.kind) << " at (" << action.x << ", " << action.y << ")";
            break;
        case ActionKind::Type:
            os << "TYPE text \"" << action.text << "\"";
            break;
        case ActionKind::Scroll:
            os << "SCROLL " << action.direction;
            break;
        case ActionKind::OpenApp:
            os << "OPEN_APP \"" << action.app << "\"";
            break;
        default:
            os << to_string(action.kind);
            break;
    }
    return os.str();
}

void Trajectory::validate() const {
    if (id.empty()) throw std::invalid_argument("trajectory id must be non-empty");
    if (task.empty()) throw std::invalid_argument("trajectory task must be non-empty");
    if (steps.empty()) throw std::invalid_argument("trajectory must have at least one step");
    for (size_t i = 0; i < steps.size(); ++i) {
        if (steps[i].index != static_cast<int>(i)) {
            throw std::invalid_argument("step indices must be contiguous and 0-based in trajectory " + id);
        }
        steps[i].action.validate();
    }
}

void Plan::validate() const {
    if (subgoals.empty()) throw std::invalid_argument("plan must contain at least one subgoal");
    for (const auto& g : subgoals) {
        if (trim(g).empty()) throw std::invalid_argument("plan subgoals must be non-empty");
    }
}

void Rationale::validate() const {
    if (pre_state.empty() || post_state.empty() || trigger.empty() || mechanism.empty() ||
        chain_of_thought.empty()) {
        throw std::invalid_argument("all five rationale fields must be non-empty");
    }
}

std::string SynthesizedSample::make_id(const std::string& trajectory_id, int step_index) {
    return trajectory_id + "#" + std::to_string(step_index);
}

void SynthesizedSample::validate() const {
    if (id.empty()) throw std::invalid_argument("sample id must be non-empty");
    if (task.empty()) throw std::invalid_argument("sample task must be non-empty");
    if (grounded_action.empty()) throw std::invalid_argument("grounded_action must be non-empty");
    plan.validate();
    rationale.validate();
}

// ---------------------------------------------------------------------------
// JSON (de)serialization. ordered_json keeps the documented field order so
// write(read(X)) is byte-stable.
// ---------------------------------------------------------------------------

static ordered_json action_to_json(const ActionType& a) {
    ordered_json j;
    j["kind"] = to_string(a.kind);
    switch (a.kind) {
        case ActionKind::Click:
        case ActionKind::LongPress:
            j["payload"] = ordered_json{{"x", a.x}, {"y", a.y}};
            break;
        case ActionKind::Type:
            j["payload"] = ordered_json{{"text", a.text}};
            break;
        case ActionKind::Scroll:
            j["payload"] = ordered_json{{"direction", a.direction}};
            break;
        case ActionKind::OpenApp:
            j["payload"] = ordered_json{{"app", a.app}};
            break;
        default:
            break;
    }
    return j;
}

static ActionType action_from_json(const ordered_json& j) {
    ActionType a;
    a.kind = action_kind_from_string(j.at("kind").get<std::string>());
    switch (a.kind) {
        case ActionKind::Click:
        case ActionKind::LongPress: {
            const auto& p = j.at("payload");
            a.x = p.at("x").get<double>();
            a.y = p.at("y").get<double>();
            break;
        }
        case ActionKind::Type:
            a.text = j.at("payload").at("text").get<std::string>();
            break;
        case ActionKind::Scroll:
            a.direction = j.at("payload").at("direction").get<std::string>();
            break;
        case ActionKind::OpenApp:
            a.app = j.at("payload").at("app").get<std::string>();
            break;
        default:
            break;
    }
    a.validate();
    return a;
}

static ordered_json trajectory_to_json(const Trajectory& t) {
    ordered_json j;
    j["id"] = t.id;
    j["task"] = t.task;
    ordered_json steps = ordered_json::array();
    for (const auto& s : t.steps) {
        ordered_json js;
        js["index"] = s.index;
        js["screenshot_ref"] = s.screenshot_ref;
        js["action"] = action_to_json(s.action);
        if (s.ui_metadata) js["ui_metadata"] = *s.ui_metadata;
        steps.push_back(std::move(js));
    }
    j["steps"] = std::move(steps);
    return j;
}

static Trajectory trajectory_from_json(const ordered_json& j) {
    Trajectory t;
    t.id = j.at("id").get<std::string>();
    t.task = j.at("task").get<std::string>();
    for (const auto& js : j.at("steps")) {
        Step s;
        s.index = js.at("index").get<int>();
        s.screenshot_ref = js.at("screenshot_ref").get<std::string>();
        s.action = action_from_json(js.at("action"));
        if (js.contains("ui_metadata")) s.ui_metadata = js.at("ui_metadata").get<std::string>();
        t.steps.push_back(std::move(s));
    }
    t.validate();
    return t;
}

static ordered_json sample_to_json(const SynthesizedSample& s) {
    ordered_json j;
    j["id"] = s.id;
    j["task"] = s.task;
    j["plan"] = s.plan.subgoals;
    j["grounded_action"] = s.grounded_action;
    j["rationale"] = ordered_json{
        {"pre_state", s.rationale.pre_state},
        {"post_state", s.rationale.post_state},
        {"trigger", s.rationale.trigger},
        {"mechanism", s.rationale.mechanism},
        {"chain_of_thought", s.rationale.chain_of_thought},
    };
    return j;
}

static SynthesizedSample sample_from_json(const ordered_json& j) {
    SynthesizedSample s;
    s.id = j.at("id").get<std::string>();
    s.task = j.at("task").get<std::string>();
    s.plan.subgoals = j.at("plan").get<std::vector<std::string>>();
    s.grounded_action = j.at("grounded_action").get<std::string>();
    const auto& r = j.at("rationale");
    s.rationale.pre_state = r.at("pre_state").get<std::string>();
    s.rationale.post_state = r.at("post_state").get<std::string>();
    s.rationale.trigger = r.at("trigger").get<std::string>();
    s.rationale.mechanism = r.at("mechanism").get<std::string>();
    s.rationale.chain_of_thought = r.at("chain_of_thought").get<std::string>();
    s.validate();
    return s;
}

// Reads one stream of line-delimited records, dispatching each parsed line
// through `consume`; '#' comments and blank lines are skipped.
template <typename Consume>
static std::vector<LineError> read_records(std::istream& in, Consume&& consume) {
    std::vector<LineError> errors;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line[0] == '#') continue;
        try {
            consume(ordered_json::parse(line), line_no);
        } catch (const std::exception& e) {
            errors.push_back({line_no, e.what()});
        }
    }
    return errors;
}

TrajectoryReadResult read_trajectories(std::istream& in) {
    TrajectoryReadResult result;
    std::unordered_set<std::string> seen;
    result.errors = read_records(in, [&](const ordered_json& j, size_t line_no) {
        Trajectory t = trajectory_from_json(j);
        if (!seen.insert(t.id).second) {
            throw std::invalid_argument("duplicate trajectory id: " + t.id + " (line " +
                                        std::to_string(line_no) + ")");
        }
        result.trajectories.push_back(std::move(t));
    });
    return result;
}

SampleReadResult read_samples(std::istream& in) {
    SampleReadResult result;
    result.errors = read_records(in, [&](const ordered_json& j, size_t) {
        result.samples.push_back(sample_from_json(j));
    });
    return result;
}

template <typename T, typename ToJson>
static size_t write_records(std::span<const T> records, std::ostream& out, std::string_view header,
                            ToJson&& to_json, const char* what) {
    if (!header.empty()) out << "# " << header << "\n";
    size_t written = 0;
    for (const auto& rec : records) {
        out << to_json(rec).dump() << "\n";
        if (!out) {
            throw std::runtime_error(std::string("record sink failed while writing ") + what +
                                     "; wrote " + std::to_string(written) + " of " +
                                     std::to_string(records.size()));
        }
        ++written;
    }
    out.flush();
    if (!out) {
        throw std::runtime_error(std::string("record sink failed to flush ") + what + "; wrote " +
                                 std::to_string(written) + " of " + std::to_string(records.size()));
    }
    return written;
}

size_t write_trajectories(std::span<const Trajectory> trajectories, std::ostream& out,
                          std::string_view header) {
    return write_records(trajectories, out, header, trajectory_to_json, "trajectories");
}

size_t write_samples(std::span<const SynthesizedSample> samples, std::ostream& out,
                     std::string_view header) {
    for (const auto& s : samples) s.validate();
    return write_records(samples, out, header, sample_to_json, "samples");
}

}  // namespace cider
