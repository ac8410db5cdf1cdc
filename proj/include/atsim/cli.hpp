#pragma once

// Command-line front end. Every subcommand reads a JSON config (frequencies in
// MHz unless "angular": true), resolves it to internal units (rad/us, us, 1/us)
// and writes CSV or JSON that embeds the resolved config and a format tag.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace atsim::cli {

inline constexpr std::string_view kFormatVersion = "atsim-output/1";

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

/// Configuration problem; the message carries the JSON path or line/column.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses config text. Accepts a plain config object or a previous atsim
/// output (JSON document or CSV with a "# config:" line), in which case the
/// embedded config is returned. Throws ConfigError with line and column on
/// malformed JSON.
nlohmann::json parse_config(std::string_view text);

/// Config for `reproduce <figure>`; figure is one of fig2b, fig2c, fig2d,
/// fig3e, fig4, figS5. The result carries a "command" field.
nlohmann::json preset(std::string_view figure);

struct Report {
  std::string csv;
  nlohmann::json json;
};

/// Runs one subcommand on a config and returns the rendered outputs, both of
/// which embed the resolved config.
Report execute(std::string_view command, const nlohmann::json& config, unsigned threads);

/// Full command-line entry point (argv[0] is the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace atsim::cli
