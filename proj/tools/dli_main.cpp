// dli: dataset indexing, statistics, defect injection, batch balancing and
// self-verification from the command line.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dli/cli/commands.hpp"
#include "dli/config.hpp"

namespace {

using dli::cli::kExitOk;
using dli::cli::kExitUsage;
using dli::cli::kExitVerifyFailed;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::string output;
};

dli::RunConfig resolve(const Common& common) {
  dli::RunConfig cfg = common.config.empty() ? dli::RunConfig{} : dli::load_run_config(common.config);
  if (common.seed) cfg.seed = *common.seed;
  if (common.jobs) cfg.jobs = *common.jobs;
  if (!common.output.empty()) cfg.output = common.output;
  return cfg;
}

void add_common(CLI::App* cmd, Common& common, bool with_output = true) {
  cmd->add_option("--config", common.config, "Run configuration (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", common.seed, "Master seed (overrides the config)");
  cmd->add_option("--jobs", common.jobs, "Worker threads");
  if (with_output) cmd->add_option("--output", common.output, "Output location");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic label injection: class-balanced defect batches via Poisson cloning and cut-paste"};
  app.require_subcommand(1);

  // index
  std::string index_root;
  std::string index_layout = "dirs";
  std::string index_output;
  int index_classes = 0;
  auto* index_cmd = app.add_subcommand("index", "Validate a dataset and write its manifest");
  index_cmd->add_option("root", index_root, "Dataset root (directory layout) or manifest")->required();
  index_cmd->add_option("--layout", index_layout, "dirs | manifest")->check(CLI::IsMember({"dirs", "manifest"}));
  index_cmd->add_option("--output", index_output, "Manifest to write (default <root>/manifest.jsonl)");
  index_cmd->add_option("--num-classes", index_classes, "Class count C (default: inferred)");

  // stats
  std::string stats_manifest;
  std::string stats_histogram;
  int stats_classes = 0;
  auto* stats_cmd = app.add_subcommand("stats", "Per-class image counts and defect-area percentages");
  stats_cmd->add_option("manifest", stats_manifest, "Manifest file or directory holding manifest.jsonl")->required();
  stats_cmd->add_option("--histogram", stats_histogram, "Write a bar-chart PNG here");
  stats_cmd->add_option("--num-classes", stats_classes, "Class count C (default: inferred)");

  // inject
  Common inject_common;
  dli::cli::InjectOptions inject_opt;
  std::string inject_target, inject_donor, inject_mask;
  bool inject_no_transform = false;
  bool inject_no_overlay = false;
  auto* inject_cmd = app.add_subcommand("inject", "Inject one donor defect into one defect-free image");
  inject_cmd->add_option("--target", inject_target, "Defect-free image")->required()->check(CLI::ExistingFile);
  inject_cmd->add_option("--donor", inject_donor, "Defective donor image")->required()->check(CLI::ExistingFile);
  inject_cmd->add_option("--donor-mask", inject_mask, "Donor mask")->required()->check(CLI::ExistingFile);
  inject_cmd->add_option("--class", inject_opt.donor_class, "Class id assigned to the donor defect");
  inject_cmd->add_option("--method", inject_opt.method, "poisson | cut-paste | random")
      ->check(CLI::IsMember({"poisson", "cut-paste", "random"}));
  inject_cmd->add_flag("--no-transform", inject_no_transform, "Keep the donor geometry and position");
  inject_cmd->add_flag("--no-overlay", inject_no_overlay, "Skip the side-by-side overlay image");
  add_common(inject_cmd, inject_common);

  // balance
  Common balance_common;
  std::string balance_manifest;
  std::optional<int> balance_batch_size, balance_num_batches, balance_slack;
  auto* balance_cmd = app.add_subcommand("balance", "Write class-balanced batches drawn from a dataset");
  balance_cmd->add_option("--manifest", balance_manifest, "Dataset manifest (overrides dataset.root)");
  balance_cmd->add_option("--batch-size", balance_batch_size, "Samples per batch");
  balance_cmd->add_option("--num-batches", balance_num_batches, "Number of batches");
  balance_cmd->add_option("--slack", balance_slack, "Uniformity slack");
  add_common(balance_cmd, balance_common);

  // verify
  Common verify_common;
  auto* verify_cmd = app.add_subcommand("verify", "Run the solver, gradient, metric and balancer self-checks");
  add_common(verify_cmd, verify_common, false);

  // print-config
  auto* print_cmd = app.add_subcommand("print-config", "Print the default run configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and --version report success; every other parse failure is a usage error.
    const int rc = app.exit(e);
    return rc == 0 ? dli::cli::kExitOk : dli::cli::kExitUsage;
  }

  try {
    if (*index_cmd) {
      const auto layout = dli::io::parse_layout(index_layout);
      std::optional<std::filesystem::path> out;
      if (!index_output.empty()) out = index_output;
      dli::cli::cmd_index(index_root, layout, out, index_classes, std::cout);
    } else if (*stats_cmd) {
      std::optional<std::filesystem::path> hist;
      if (!stats_histogram.empty()) hist = stats_histogram;
      dli::cli::cmd_stats(stats_manifest, hist, stats_classes, std::cout);
    } else if (*inject_cmd) {
      const auto cfg = resolve(inject_common);
      inject_opt.target = inject_target;
      inject_opt.donor_image = inject_donor;
      inject_opt.donor_mask = inject_mask;
      inject_opt.seed = cfg.seed;
      inject_opt.injection = cfg.balance.injection;
      inject_opt.identity_transform = inject_no_transform;
      inject_opt.overlay = !inject_no_overlay;
      inject_opt.output = inject_common.output.empty() ? std::filesystem::path("dli_inject")
                                                       : std::filesystem::path(inject_common.output);
      dli::cli::cmd_inject(inject_opt, std::cout);
    } else if (*balance_cmd) {
      auto cfg = resolve(balance_common);
      if (!balance_manifest.empty()) {
        cfg.dataset.root = balance_manifest;
        cfg.dataset.layout = "manifest";
      }
      if (balance_batch_size) cfg.batch.batch_size = *balance_batch_size;
      if (balance_num_batches) cfg.batch.num_batches = *balance_num_batches;
      if (balance_slack) cfg.balance.uniformity_slack = *balance_slack;
      dli::cli::cmd_balance(cfg, std::cout);
    } else if (*verify_cmd) {
      const auto report = dli::cli::cmd_verify(resolve(verify_common), std::cout);
      if (!report.passed()) {
        return report.convergence_failure ? dli::cli::exit_code(dli::ErrorCode::convergence) : kExitVerifyFailed;
      }
    } else if (*print_cmd) {
      std::cout << dli::to_json(dli::RunConfig{}).dump(2) << "\n";
    }
  } catch (const dli::Error& e) {
    std::cerr << "dli: " << e.what() << "\n";
    return dli::cli::exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "dli: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitOk;
}
