#include <CLI11.hpp>

#include <iostream>

#include "torsion/cli.hpp"

int main(int argc, char** argv) {
  using namespace torsion::cli;
  CLI::App app{"Quasi-periodic orbits of x'' + grad V(x) = 0 with x(t + T) = Q x(t)"};
  app.require_subcommand(1);

  Options o;
  std::uint64_t seed = 0;
  int starts = 0;
  int modes = 0;
  int quad = 0;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--problem", o.problem, "Problem file (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Random seed");
    sub->add_option("--starts", starts, "Number of multistart seeds")->check(CLI::PositiveNumber);
    sub->add_option("--modes", modes, "Truncation order M")->check(CLI::PositiveNumber);
    sub->add_option("--quad", quad, "Quadrature nodes Nq")->check(CLI::PositiveNumber);
    sub->add_flag("--json", o.json, "Machine-readable output only");
  };

  auto* analyze = app.add_subcommand("analyze", "Spectral count p_T and the multiplicity bound");
  common(analyze);
  auto* audit = app.add_subcommand("audit", "Sampled checks of the growth and symmetry hypotheses");
  common(audit);
  auto* solve = app.add_subcommand("solve", "Search for distinct solution orbits");
  common(solve);
  solve->add_option("--out", o.out, "Output directory");
  auto* verify = app.add_subcommand("verify", "Re-check a solution CSV or report JSON");
  common(verify);
  verify->add_option("input", o.input, "Solution CSV or report JSON")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitBadInput;
  }

  for (auto* sub : app.get_subcommands()) {
    if (sub->count("--seed")) o.seed = seed;
    if (sub->count("--starts")) o.starts = starts;
    if (sub->count("--modes")) o.modes = modes;
    if (sub->count("--quad")) o.quad = quad;
  }

  if (analyze->parsed()) return run_analyze(o, std::cout, std::cerr);
  if (audit->parsed()) return run_audit(o, std::cout, std::cerr);
  if (solve->parsed()) return run_solve(o, std::cout, std::cerr);
  return run_verify(o, std::cout, std::cerr);
}
