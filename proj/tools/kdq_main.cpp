#include <CLI11.hpp>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "cli/commands.hpp"
#include "cli/config.hpp"
#include "kdq/error.hpp"

int main(int argc, char** argv) {
  CLI::App app{"kdq: distilled IVF-PQ index builder and searcher"};
  app.require_subcommand(1);

  std::string config_path;
  std::map<std::string, std::map<std::string, std::string>> flags;
  for (const auto name : kdq::cli::command_names()) {
    auto* sub = app.add_subcommand(std::string(name));
    sub->add_option("-c,--config", config_path, "key = value config file");
    auto& values = flags[std::string(name)];
    for (const auto& key : kdq::cli::known_keys()) {
      std::string help(key.help);
      if (!key.default_value.empty()) help += " [" + std::string(key.default_value) + "]";
      auto* opt = sub->add_option("--" + std::string(key.name), values[std::string(key.name)],
                                  help);
      opt->type_name("VALUE");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const auto* sub = app.get_subcommands().front();
  const auto command = sub->get_name();
  kdq::cli::RunConfig cfg;
  try {
    if (!config_path.empty()) cfg = kdq::cli::RunConfig::from_file(config_path);
    for (const auto& [key, value] : flags[command]) {
      if (sub->count("--" + key) > 0) cfg.set(key, value);
    }
  } catch (const kdq::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const kdq::FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return 3;
  }
  return kdq::cli::run_command_guarded(command, cfg, std::cout, std::cerr);
}
