#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "pje/experiments.hpp"

namespace {

std::filesystem::path default_out(const pje::RunConfig& cfg, const std::string& command) {
  std::filesystem::path root = cfg.output_dir;
  if (const char* env = std::getenv("PJE_OUT_ROOT"); env && *env) root = env;
  return root / command;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pje: multiscale densities, determinant estimates and obstruction sweeps"};
  app.require_subcommand(1);

  std::string config_path, out_dir, suite = "all";
  std::uint64_t seed = 0;
  int threads = 0;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory (default: $PJE_OUT_ROOT/<command> or output_dir/<command>)");
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--threads", threads, "override the thread count")->check(CLI::PositiveNumber);

  auto* build = app.add_subcommand("build-density", "density JSON, sample CSV and exact pair discrepancies");
  auto* verify = app.add_subcommand("verify", "run an estimate suite and write its reports");
  verify->add_option("--suite", suite, "suite name or 'all'");
  auto* classify = app.add_subcommand("classify", "property 1 / property 2 verdicts for every rectangle");
  auto* sweep = app.add_subcommand("sweep", "solver sweep over depths and budgets");
  auto* report = app.add_subcommand("report-data", "CSVs consumed by the plotting scripts");
  auto* dump = app.add_subcommand("show-config", "print the effective configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : pje::kExitConfig;
  }

  try {
    pje::RunConfig cfg = config_path.empty() ? pje::run_config_from_json(nlohmann::json::object())
                                             : pje::load_run_config(config_path);
    if (app.get_option("--seed")->count()) cfg.seed = seed;
    if (threads > 0) cfg.threads = threads, cfg.sweep.threads = threads;
    cfg.validate();

    auto out_for = [&](const std::string& cmd) {
      return out_dir.empty() ? default_out(cfg, cmd) : std::filesystem::path(out_dir);
    };

    pje::CommandResult res;
    if (*build) {
      res = pje::cmd_build_density(cfg, out_for("build-density"), config_path);
    } else if (*verify) {
      res = pje::cmd_verify(cfg, suite, out_for("verify"), config_path);
    } else if (*classify) {
      res = pje::cmd_classify(cfg, out_for("classify"), config_path);
    } else if (*sweep) {
      res = pje::cmd_sweep(cfg, out_for("sweep"), config_path);
    } else if (*report) {
      res = pje::cmd_report_data(cfg, out_for("report-data"), config_path);
    } else if (*dump) {
      std::cout << pje::to_json(cfg).dump(2) << "\n";
      return pje::kExitOk;
    }
    std::cout << res.summary << "\n" << "wrote " << res.dir.string() << "\n";
    return res.exit_code;
  } catch (const pje::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return pje::kExitConfig;
  } catch (const pje::RangeError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return pje::kExitConfig;
  } catch (const pje::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return pje::kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return pje::kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return pje::kExitVerifyFailed;
  }
}
