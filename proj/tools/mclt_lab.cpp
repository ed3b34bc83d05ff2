// mclt_lab: command-line front end for the martingale CLT rate experiments.
//
//   mclt_lab rates     --config cfg.json --out results/ [--threads k] [--seed s]
//   mclt_lab plot-data --manifest results/manifest.json [--out plot.csv]
//
// Exit codes: 0 success, 1 asserted invariant failed, 2 configuration error.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mclt/experiment.hpp"

namespace {

struct RunArgs {
  std::string config;
  std::string out = "mclt_out";
  unsigned threads = 0;
  std::optional<std::uint64_t> seed;
};

int run_subcommand(const std::string& name, const RunArgs& a, const std::vector<std::string>& kinds) {
  nlohmann::json doc;
  {
    std::ifstream in(a.config);
    if (!in) {
      std::cerr << "config error: cannot open " << a.config << "\n";
      return mclt::kExitConfig;
    }
    try {
      in >> doc;
    } catch (const nlohmann::json::exception& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return mclt::kExitConfig;
    }
  }
  if (!doc.is_object()) {
    std::cerr << "config error: config must be a JSON object\n";
    return mclt::kExitConfig;
  }
  if (!doc.contains("kind")) doc["kind"] = kinds.front();
  const std::string kind = doc["kind"].is_string() ? doc["kind"].get<std::string>() : "";
  bool allowed = false;
  for (const auto& k : kinds) allowed = allowed || kind == k;
  if (!allowed) {
    std::cerr << "config error: subcommand '" << name << "' cannot run a '" << kind << "' experiment\n";
    return mclt::kExitConfig;
  }
  if (a.seed) doc["seed"] = *a.seed;

  const auto res = mclt::run_experiment(doc, a.out, mclt::resolve_threads(a.threads));
  (res.exit_code == mclt::kExitOk ? std::cout : std::cerr) << res.message << "\n";
  if (res.exit_code == mclt::kExitOk && res.manifest.contains("fit") && res.manifest["fit"].is_object()) {
    const auto& fit = res.manifest["fit"];
    std::cout << "fit: slope " << fit["slope"] << ", r^2 " << fit["r_squared"] << ", ratio_spread "
              << fit["ratio_spread"] << "\n";
  }
  return res.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Martingale CLT rate laboratory"};
  app.require_subcommand(1);

  struct Sub {
    const char* name;
    const char* help;
    std::vector<std::string> kinds;
  };
  const Sub subs[] = {
      {"simulate", "simulate a kernel and summarise terminal statistics", {"simulate"}},
      {"rates", "estimate Kolmogorov distances on a grid and fit the decay rate", {"rates"}},
      {"bounds", "tabulate rate functionals and check their dominance relations", {"bounds-table"}},
      {"lipschitz", "Doob decomposition checks for separately Lipschitz functionals", {"lipschitz"}},
      {"verify", "exact lemma suites and padding / stopping-rule checks", {"lemma-suite", "transforms-check"}},
  };

  RunArgs args;
  std::string chosen;
  std::vector<std::string> chosen_kinds;
  for (const auto& s : subs) {
    auto* sc = app.add_subcommand(s.name, s.help);
    sc->add_option("--config", args.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sc->add_option("--out", args.out, "output directory");
    sc->add_option("--threads", args.threads, "worker cap (default: MCLT_LAB_THREADS or all cores)");
    sc->add_option("--seed", args.seed, "overrides the config seed");
    sc->callback([&, s] {
      chosen = s.name;
      chosen_kinds = s.kinds;
    });
  }

  std::string manifest_path, plot_out;
  auto* plot = app.add_subcommand("plot-data", "plot-ready CSV from a result manifest");
  plot->add_option("--manifest,--config", manifest_path, "manifest.json or its directory")->required();
  plot->add_option("--out", plot_out, "output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : mclt::kExitConfig;
  }

  if (plot->parsed()) {
    std::filesystem::path p(manifest_path);
    if (std::filesystem::is_directory(p)) p /= "manifest.json";
    try {
      std::ifstream in(p);
      if (!in) throw std::invalid_argument("cannot open " + p.string());
      nlohmann::json m;
      in >> m;
      const std::string csv = mclt::emit_plot_data(m);
      if (plot_out.empty()) {
        std::cout << csv;
      } else {
        std::ofstream out(plot_out, std::ios::binary);
        out << csv;
      }
    } catch (const std::exception& e) {
      std::cerr << "plot-data: " << e.what() << "\n";
      return mclt::kExitConfig;
    }
    return mclt::kExitOk;
  }
  return run_subcommand(chosen, args, chosen_kinds);
}
