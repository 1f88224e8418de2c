#pragma once

#include <ostream>
#include <span>
#include <string_view>

#include "cli/config.hpp"

namespace kdq::cli {

std::span<const std::string_view> command_names();

/// Runs one command. Errors propagate as the library's exception types.
void run_command(std::string_view command, const RunConfig& cfg, std::ostream& out);

/// Like run_command but maps failures to exit codes: 2 usage/config,
/// 3 data format, 4 numeric failure, 1 anything else.
int run_command_guarded(std::string_view command, const RunConfig& cfg, std::ostream& out,
                        std::ostream& err);

}  // namespace kdq::cli
