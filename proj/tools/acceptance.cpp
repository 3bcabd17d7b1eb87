#include "checks.hpp"

#include <CLI11.hpp>

#include <cstdio>

int main(int argc, char** argv) {
  CLI::App app{"grf acceptance criteria"};
  std::vector<int> ids;
  std::uint64_t seed = 0;
  app.add_option("--criterion", ids, "criterion numbers to run (default: all)")->check(CLI::Range(1, 10));
  app.add_option("--seed", seed, "instance seed");
  CLI11_PARSE(app, argc, argv);
  if (ids.empty()) ids = grf::checks::scope_ids("all");

  bool all_pass = true;
  for (int id : ids) {
    const grf::checks::CriterionResult r = grf::checks::run_criterion(id, seed);
    std::printf("criterion %d: %s  %s (%.1f s)\n", id, r.pass() ? "PASS" : "FAIL", r.title.c_str(), r.seconds);
    for (const auto& i : r.items) {
      std::printf("    [%s] %s: worst %.3e, tolerance %.3e%s%s\n", i.pass ? "ok" : "FAIL", i.name.c_str(), i.worst,
                  i.tolerance, i.note.empty() ? "" : "; ", i.note.c_str());
    }
    std::fflush(stdout);
    all_pass = all_pass && r.pass();
  }
  return all_pass ? 0 : 1;
}
