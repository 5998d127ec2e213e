// pipeline.hpp — the end-to-end pipeline as composable stages. Stages
// communicate only through files under the run directory; every
// line-delimited artifact carries a "# cider corpus_hash=..." header and
// downstream stages reject inputs stamped with a different hash.
//
// Exit codes: 0 success, 1 validation failure, 2 external-service failure
// (including synthesis steps recorded in the failure ledger), 3 internal
// invariant breach.
#pragma once

#include <iosfwd>

#include "cider/config.hpp"
#include "cider/retention.hpp"

namespace cider {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitExternal = 2;
inline constexpr int kExitInternal = 3;

// Stage 1: trajectories -> samples.jsonl + ledger.jsonl.
// Returns kExitExternal when any step landed in the failure ledger.
int cmd_synth(const PipelineConfig& config);

// Stage 2: samples + embeddings -> scores.jsonl + retained.jsonl + report.json.
int cmd_select(const PipelineConfig& config);

// Stage 3: retained samples -> packed corpus + manifest; packing stats are
// appended to the report.
int cmd_pack(const PipelineConfig& config);

// synth -> select -> pack under one run lock; the first failing stage aborts
// the rest.
int cmd_run(const PipelineConfig& config);

// Standalone property verification for the configured retention parameters;
// prints one line per check.
int cmd_verify(const PipelineConfig& config, std::ostream& out);

// Pretty-prints the report file.
int cmd_report(const PipelineConfig& config, std::ostream& out);

// Serialized form of the selection report (stable field order).
std::string report_to_json_text(const SelectionReport& report);

}  // namespace cider
