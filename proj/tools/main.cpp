#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "npgd/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"npgd: unrolled neural proximal gradient reconstruction"};
  app.require_subcommand(0, 1);

  std::optional<std::string> config, out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool list_keys = false;
  app.add_flag("--list-keys", list_keys, "print accepted config keys and exit");

  for (const auto& name : npgd::cli::command_names()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "flat key = value config file");
    sub->add_option("--out", out, "output directory (overrides NPGD_OUT and out_dir)");
    sub->add_option("--seed", seed, "seed for every stage without its own seed key");
    sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (list_keys) {
    for (const auto& [k, doc] : npgd::cli::config_keys()) std::cout << k << "  " << doc << '\n';
    return 0;
  }
  if (app.get_subcommands().empty()) {
    std::cerr << app.help();
    return 2;
  }

  npgd::cli::Overrides o;
  if (out) o.out = *out;
  o.seed = seed;
  o.threads = threads;
  std::optional<std::filesystem::path> cfg;
  if (config) cfg = *config;
  return npgd::cli::run(app.get_subcommands().front()->get_name(), cfg, o, std::cout, std::cerr);
}
