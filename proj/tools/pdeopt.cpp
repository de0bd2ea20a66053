// Command-line driver: pdeopt run <cfg> | gradient-check <cfg> | list
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "pdeopt/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"pdeopt: adjoint-based PDE-constrained optimization demos"};
  app.require_subcommand(1);
  std::string path;
  auto* run = app.add_subcommand("run", "solve the problem described by a config file");
  run->add_option("config", path, "config file")->required();
  auto* check = app.add_subcommand("gradient-check", "compare adjoint derivatives with finite differences");
  check->add_option("config", path, "config file")->required();
  auto* list = app.add_subcommand("list", "list the available problems");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : pdeopt::cli::config_error;
  }
  if (list->parsed()) return pdeopt::cli::list(std::cout);
  const auto verb = run->parsed() ? pdeopt::cli::Verb::run : pdeopt::cli::Verb::gradient_check;
  return pdeopt::cli::execute(verb, path, std::cout, std::cerr);
}
