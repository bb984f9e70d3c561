#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "onli/cli/config.hpp"

namespace onli {

enum ExitCode : int { exit_ok = 0, exit_failure = 1, exit_config = 2, exit_numerical = 3, exit_partial = 4 };

// Maps the library's error families onto exit codes.
int exit_code_for(const std::exception& e);

// Model variant names used for run directories and report rows.
inline constexpr const char* plain_variant = "onli";
inline constexpr const char* spade_variant = "spade_onli";
inline constexpr const char* direct_baseline = "direct";

// Variants an xval/eval run covers: xval.models, or the one model.spade selects.
std::vector<std::string> run_variants(const RunConfig& c);

std::filesystem::path fold_dir(const RunConfig& c, const std::string& variant, int fold);
std::string best_checkpoint_name(int fold);
std::string epoch_checkpoint_name(int fold, int epoch);

int cmd_generate(const RunConfig& c);
int cmd_train(const RunConfig& c);
int cmd_infer(const RunConfig& c);
int cmd_eval(const RunConfig& c);
int cmd_xval(const RunConfig& c, const std::string& self_exe = {});

// Full command line: onli <subcommand> --config PATH [flags].
int run_cli(int argc, char** argv);

} // namespace onli
