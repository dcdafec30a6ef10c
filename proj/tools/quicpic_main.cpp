#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "quicpic/config.hpp"
#include "quicpic/pipeline.hpp"

namespace {

using quicpic::Error;
using quicpic::PipelineConfig;

int fail(const std::exception& e, const char* code) {
  nlohmann::json record;
  record["error"] = code;
  record["message"] = e.what();
  std::cout << record.dump() << "\n";
  std::cerr << "error: " << e.what() << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quicpic: QUIC captures to labeled traffic-image datasets"};
  app.require_subcommand(1);

  // run ----------------------------------------------------------------
  auto* run = app.add_subcommand("run", "build an image dataset from PCAPs");
  std::string input_dir;
  std::string config_file;
  double window = 0.1;
  std::int64_t resolution = 32;
  std::uint32_t mtu = 1500;
  double overlap = 0.0;
  std::string normalize = "window";
  bool dedup = true;
  int max_label = 20;
  std::uint64_t seed = 0;
  std::string split = "8020";
  std::vector<std::string> holdout;
  std::string out_dir;
  std::string websites;
  int jobs = 0;

  run->add_option("input", input_dir, "directory of <server>/<trace>.pcap inputs")
      ->required();
  run->add_option("--config", config_file, "TOML config file");
  run->add_option("--window", window, "window length T in seconds");
  run->add_option("--resolution", resolution, "time and length bins (M = N)");
  run->add_option("--mtu", mtu, "max packet length L for binning");
  run->add_option("--overlap", overlap, "window overlap fraction in [0,1)");
  run->add_option("--normalize", normalize, "min-max scope: window or trace");
  run->add_flag("--dedup,!--no-dedup", dedup, "drop pixel-identical images");
  run->add_option("--max-label", max_label, "largest admitted response count");
  run->add_option("--seed", seed, "split shuffle seed");
  run->add_option("--split", split, "split mode: 8020 or leave-out");
  run->add_option("--holdout", holdout, "server(s) to hold out (leave-out mode)");
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--websites", websites, "JSON file: server label -> website count");
  run->add_option("--jobs", jobs, "worker threads (0 = hardware)");

  // stats --------------------------------------------------------------
  auto* stats = app.add_subcommand("stats", "per-server table and label histogram");
  std::string stats_manifest;
  std::string stats_websites;
  stats->add_option("--manifest", stats_manifest, "manifest.csv from a run")
      ->required();
  stats->add_option("--websites", stats_websites,
                    "JSON file: server label -> website count");

  // evaluate -----------------------------------------------------------
  auto* evaluate =
      app.add_subcommand("evaluate", "score predictions against a manifest");
  std::string eval_manifest;
  std::string predictions;
  std::vector<int> cap_tolerances{0, 1, 2};
  int trace_tolerance = 3;
  std::string report_out;
  evaluate->add_option("--manifest", eval_manifest, "manifest.csv from a run")
      ->required();
  evaluate
      ->add_option("--predictions", predictions,
                   "CSV with header sample_id,prediction")
      ->required();
  evaluate->add_option("--cap-k", cap_tolerances, "CAP tolerance levels");
  evaluate->add_option("--trace-tolerance", trace_tolerance,
                       "per-trace sum tolerance");
  evaluate->add_option("--out", report_out, "also write the JSON report here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      PipelineConfig cfg;
      if (!config_file.empty())
        cfg = quicpic::load_pipeline_config(config_file);
      if (run->count("--window")) cfg.window_seconds = window;
      if (run->count("--resolution")) cfg.resolution = resolution;
      if (run->count("--mtu")) cfg.mtu = mtu;
      if (run->count("--overlap")) cfg.overlap = overlap;
      if (run->count("--normalize"))
        cfg.normalization = quicpic::parse_normalization(normalize);
      if (run->count("--dedup") || run->count("--no-dedup")) cfg.dedup = dedup;
      if (run->count("--max-label")) cfg.max_label = max_label;
      if (run->count("--seed")) cfg.seed = seed;
      if (run->count("--split")) cfg.split_mode = quicpic::parse_split_mode(split);
      if (run->count("--holdout")) cfg.holdout = holdout;
      if (run->count("--out")) cfg.output_root = out_dir;
      if (run->count("--websites")) cfg.websites_file = websites;
      if (run->count("--jobs")) cfg.jobs = jobs;

      const quicpic::RunSummary summary = quicpic::run_pipeline(cfg, input_dir);
      std::cout << summary.to_json().dump() << "\n";
      return 0;
    }

    if (stats->parsed()) {
      std::optional<std::filesystem::path> websites_path;
      if (!stats_websites.empty()) websites_path = stats_websites;
      const quicpic::StatsReport report =
          quicpic::compute_stats(stats_manifest, websites_path);
      std::cout << report.to_json().dump(2) << "\n";
      return 0;
    }

    if (evaluate->parsed()) {
      const nlohmann::json report = quicpic::evaluate_predictions(
          eval_manifest, predictions, cap_tolerances, trace_tolerance);
      std::cout << report.dump(2) << "\n";
      if (!report_out.empty()) {
        std::ofstream out(report_out, std::ios::trunc);
        if (!out)
          throw Error(quicpic::ErrorCode::IoFailure,
                      "cannot open " + report_out);
        out << report.dump(2) << "\n";
      }
      return 0;
    }
  } catch (const Error& e) {
    return fail(e, quicpic::error_code_name(e.code()));
  } catch (const std::exception& e) {
    return fail(e, "Unhandled");
  }
  return 0;
}
