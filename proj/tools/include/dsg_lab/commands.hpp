// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dsg::lab {

// Exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailed = 1;  // a check failed or a run broke
inline constexpr int kExitUsage = 2;   // bad arguments or an invalid config

struct CommonOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<std::size_t> mc;
  unsigned jobs = 1;  // 0 = all hardware threads
};

int cmd_verify(const CommonOptions& options, const std::string& which, std::ostream& out, std::ostream& err);
int cmd_run(const CommonOptions& options, std::ostream& out, std::ostream& err);
int cmd_ablate_steps(const CommonOptions& options, const std::vector<int>& steps, std::ostream& out,
                     std::ostream& err);
int cmd_sweep_gr(const CommonOptions& options, const std::vector<double>& rates, std::ostream& out,
                 std::ostream& err);

}  // namespace dsg::lab
