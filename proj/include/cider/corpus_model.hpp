// corpus_model.hpp — domain types for GUI trajectories and synthesized
// knowledge samples, plus the line-delimited JSON record streams shared by
// every pipeline stage. Records are UTF-8, one JSON object per line; lines
// starting with '#' are header comments and are skipped by readers.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cider/common.hpp"

namespace cider {

enum class ActionKind {
    Click,
    Type,
    Scroll,
    PressBack,
    PressHome,
    Enter,
    OpenApp,
    Wait,
    LongPress,
    Complete,
    Impossible,
};

std::string to_string(ActionKind kind);
ActionKind action_kind_from_string(const std::string& s);

// A low-level device action. The payload fields are kind-specific:
// Click/LongPress carry normalized [0,1]^2 coordinates, Type carries the
// typed text, Scroll a direction, OpenApp an app name; the rest carry none.
struct ActionType {
    ActionKind kind = ActionKind::Wait;
    double x = 0.0;
    double y = 0.0;
    std::string text;
    std::string direction;
    std::string app;

    void validate() const;

    static ActionType click(double x, double y);
    static ActionType long_press(double x, double y);
    static ActionType type_text(std::string text);
    static ActionType scroll(std::string direction);
    static ActionType open_app(std::string app);
    static ActionType simple(ActionKind kind);
};

// Human-readable one-line rendering used in prompts and logs,
// e.g. `CLICK at (0.91, 0.05)` or `TYPE text "eat"`.
std::string render_action(const ActionType& action);

struct Step {
    int index = 0;                 // 0-based position within the trajectory
    std::string screenshot_ref;    // opaque locator; never dereferenced after Stage 1
    ActionType action;
    std::optional<std::string> ui_metadata;
};

struct Trajectory {
    std::string id;
    std::string task;
    std::vector<Step> steps;

    void validate() const;  // non-empty id/task, >=1 step, contiguous 0-based indices
};

struct Plan {
    std::vector<std::string> subgoals;

    void validate() const;  // at least one non-empty subgoal
};

// Self-contained textual record of one GUI transition. All five fields must
// be non-empty so the sample can be consumed without screenshot access.
struct Rationale {
    std::string pre_state;
    std::string post_state;
    std::string trigger;
    std::string mechanism;
    std::string chain_of_thought;

    void validate() const;
};

struct SynthesizedSample {
    std::string id;    // "<trajectory_id>#<step_index>"
    std::string task;
    Plan plan;
    std::string grounded_action;
    Rationale rationale;

    static std::string make_id(const std::string& trajectory_id, int step_index);
    void validate() const;
};

struct LineError {
    size_t line_no = 0;  // 1-based line number in the input stream
    std::string message;
};

struct TrajectoryReadResult {
    std::vector<Trajectory> trajectories;
    std::vector<LineError> errors;
};

struct SampleReadResult {
    std::vector<SynthesizedSample> samples;
    std::vector<LineError> errors;
};

// Parse failures are collected per line and never abort the stream.
// Duplicate trajectory ids are reported as errors on the later line.
TrajectoryReadResult read_trajectories(std::istream& in);
SampleReadResult read_samples(std::istream& in);

// One record per line in a stable field order; returns the count written.
// A sink failure aborts with the partial count in the exception message.
// `header`, when non-empty, is emitted first as a '#' comment line.
size_t write_trajectories(std::span<const Trajectory> trajectories, std::ostream& out,
                          std::string_view header = {});
size_t write_samples(std::span<const SynthesizedSample> samples, std::ostream& out,
                     std::string_view header = {});

}  // namespace cider
