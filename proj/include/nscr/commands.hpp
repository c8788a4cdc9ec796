#pragma once

#include <string>

#include "nscr/config.hpp"

namespace nscr {

// Command bodies shared by the CLI and the test suites. Each writes its
// primary outputs under the configured out_dir and throws on failure.
void cmd_synth_gen(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg, bool resume = false);
void cmd_infer(const RunConfig& cfg, int bundle_id);
void cmd_add_concept(const RunConfig& cfg, const std::string& submission_path);
void cmd_mdes(const RunConfig& cfg);
void cmd_eval(const RunConfig& cfg, const std::string& split);
void cmd_ablate(const RunConfig& cfg, const std::string& which);

// Submission file I/O (External Interfaces).
SmeSubmission load_submission(const std::string& path);
void save_submission(const std::string& path, const SmeSubmission& submission,
                     const std::string& bundles_path, const std::vector<int>& bundle_ids);

} // namespace nscr
