// aghf: plan legged locomotion with the affine geometric heat flow.
//
//   aghf plan <config>
//   aghf sweep <config> --lambdas 1e4 1e5 1e6 --checkpoints 0.01 0.1 1
//   aghf audit <csv> <config> [--out audit.json]
//
// Output goes to the config's output_dir unless AGHF_OUTPUT_DIR is set.
// Exit codes: 0 ok, 2 config error, 3 not converged, 4 audit failed.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "aghf/aghf.hpp"

namespace {

int run_plan(const std::string& config_path) {
  const auto cfg = aghf::load_config(config_path);
  const auto dir = aghf::output_dir_for(cfg);
  const auto out = aghf::plan(cfg, dir);
  std::printf("%s: %s after %ld steps (s = %.6g), E = %.6g, e = %.6g, final-state error = %.6g, audit %s\n",
              cfg.name.c_str(), aghf::to_string(out.solve.status), out.solve.accepted,
              out.solve.curve.s, out.solve.trace.back().energy, out.rollout.planning_error,
              out.final_state_error, out.audit.pass ? "pass" : "FAIL");
  for (const auto& c : out.audit.constraints)
    if (!c.pass)
      std::printf("  %s violation %.6g at t = %.6g (tolerance %.6g)\n", c.id.c_str(),
                  c.max_violation, c.time_of_max, c.tolerance);
  for (const auto& l : out.audit.legs)
    std::printf("  leg %d: foot drift %.6g m, flight force %.6g N\n", l.leg + 1, l.max_foot_drift,
                l.max_flight_force);
  std::printf("wrote %s\n", dir.string().c_str());
  return out.exit_code;
}

int run_sweep(const std::string& config_path, const std::vector<double>& lambdas,
              const std::vector<double>& checkpoints) {
  const auto cfg = aghf::load_config(config_path);
  const auto cells = aghf::sweep(cfg, lambdas, checkpoints);
  const auto path = aghf::output_dir_for(cfg) / "sweep.csv";
  aghf::write_file_atomic(path, aghf::sweep_csv(cells));
  std::fputs(aghf::sweep_csv(cells).c_str(), stdout);
  std::printf("wrote %s\n", path.string().c_str());
  return aghf::kExitOk;
}

int run_audit(const std::string& csv_path, const std::string& config_path,
              const std::string& out_path) {
  const auto cfg = aghf::load_config(config_path);
  const auto report = aghf::audit_trajectory(cfg, aghf::read_file(csv_path));
  const auto text = aghf::audit_text(report);
  if (out_path.empty())
    std::fputs(text.c_str(), stdout);
  else
    aghf::write_file_atomic(out_path, text);
  return report.pass ? aghf::kExitOk : aghf::kExitAuditFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Legged locomotion planning with the affine geometric heat flow"};
  app.require_subcommand(1);

  std::string config;
  auto* plan = app.add_subcommand("plan", "Solve a scenario and write x*, x~, u, trace, audit, manifest");
  plan->add_option("config", config, "Config file or built-in name (oneleg, twoleg, unicycle)")->required();

  std::vector<double> lambdas, checkpoints;
  auto* sweep = app.add_subcommand("sweep", "Planning error at flow-time checkpoints for several lambdas");
  sweep->add_option("config", config, "Config file or built-in name")->required();
  sweep->add_option("--lambdas", lambdas, "Penalty values")->required()->expected(2, -1);
  sweep->add_option("--checkpoints", checkpoints, "Flow times s")->required()->expected(1, -1);

  std::string csv, out;
  auto* audit = app.add_subcommand("audit", "Re-run the constraint audit on a stored trajectory CSV");
  audit->add_option("csv", csv, "Trajectory CSV (x_tilde.csv)")->required();
  audit->add_option("config", config, "Config the trajectory was planned with")->required();
  audit->add_option("--out", out, "Write the JSON here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : aghf::kExitConfig;
  }

  try {
    if (*plan) return run_plan(config);
    if (*sweep) return run_sweep(config, lambdas, checkpoints);
    if (*audit) return run_audit(csv, config, out);
  } catch (const aghf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return aghf::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
