#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "remix/config.hpp"

namespace remix {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitRuntime = 2, kExitCheckFailed = 3 };

// Writes multi.jsonl, single.jsonl and target.jsonl under io.data_dir.
int cmd_generate(const RunConfig& cfg, std::ostream& out, std::ostream& err);

// Trains on io.data_dir and writes io.checkpoint and io.metrics.
int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err);

// Evaluates the momentum encoder stored in `checkpoint` on the target domain
// and writes eval.report.
int cmd_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint, std::ostream& out,
             std::ostream& err);

int cmd_gradcheck(std::uint64_t seed, bool corrupt_gradient, std::ostream& out);

// Full command-line front end; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace remix
