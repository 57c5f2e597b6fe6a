#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "eg/llm_adapter.hpp"

namespace eg::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitUsage = 2;  // bad arguments or missing input files

// Supplies the HTTP transport for live/record runs; null means libcurl.
using TransportFactory = std::function<std::unique_ptr<llm::Transport>()>;

// args excludes the program name: {"score", "--config", "run.json", ...}.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const TransportFactory& transport = {});

int main_entry(int argc, char** argv);

}  // namespace eg::cli
