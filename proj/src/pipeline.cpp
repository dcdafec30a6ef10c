#include "quicpic/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include "quicpic/config.hpp"
#include "quicpic/metrics.hpp"
#include "quicpic/pcap.hpp"
#include "quicpic/png_io.hpp"

namespace quicpic {
namespace {

namespace fs = std::filesystem;

std::string format_seconds(std::int64_t us) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%lld.%06lld",
                static_cast<long long>(us / kMicrosPerSecond),
                static_cast<long long>(us % kMicrosPerSecond));
  return buf;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else {
      current += c;
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

struct WindowRecord {
  Index window_index = 0;
  std::int64_t window_start_us = 0;
  int label = 0;
  std::array<std::uint8_t, 32> digest{};
  TrafficImage image;
};

struct TraceResult {
  std::string trace_id;
  std::string server_label;
  std::vector<WindowRecord> windows;
  std::vector<std::string> warnings;
};

struct TraceJob {
  fs::path pcap;
  fs::path events;
  std::string server_label;
  std::string trace_id;  // "<server_label>/<pcap stem>"
  std::string stem;
};

std::vector<TraceJob> discover_inputs(const fs::path& input_dir) {
  if (!fs::exists(input_dir))
    throw Error(ErrorCode::IoFailure,
                "input directory does not exist: " + input_dir.string());

  std::vector<fs::path> server_dirs;
  for (const auto& entry : fs::directory_iterator(input_dir))
    if (entry.is_directory()) server_dirs.push_back(entry.path());
  std::sort(server_dirs.begin(), server_dirs.end());

  std::vector<TraceJob> jobs;
  for (const auto& dir : server_dirs) {
    std::vector<fs::path> pcaps;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_regular_file() && entry.path().extension() == ".pcap")
        pcaps.push_back(entry.path());
    std::sort(pcaps.begin(), pcaps.end());

    for (const auto& pcap : pcaps) {
      TraceJob job;
      job.pcap = pcap;
      job.events = pcap.parent_path() / (pcap.stem().string() + ".events.jsonl");
      if (!fs::exists(job.events))
        throw Error(ErrorCode::IoFailure,
                    "missing events sidecar for " + pcap.string());
      job.server_label = dir.filename().string();
      job.stem = pcap.stem().string();
      job.trace_id = job.server_label + "/" + job.stem;
      jobs.push_back(std::move(job));
    }
  }
  return jobs;
}

TraceResult process_trace(const TraceJob& job, const PipelineConfig& config) {
  TraceResult result;
  result.trace_id = job.trace_id;
  result.server_label = job.server_label;

  TraceMeta trace = parse_pcap_file(job.pcap);
  trace.trace_id = job.trace_id;
  trace.server_label = job.server_label;
  if (trace.no_quic_traffic)
    result.warnings.push_back("no QUIC traffic in " + job.pcap.string());
  if (trace.endpoint_mismatches > 0)
    result.warnings.push_back(
        std::to_string(trace.endpoint_mismatches) +
        " packet(s) outside the dominant endpoint pair in " + job.pcap.string());

  std::vector<std::int64_t> event_times;
  std::size_t foreign_events = 0;
  for (const auto& event : read_events_file(job.events)) {
    if (event.trace_id == job.trace_id || event.trace_id == job.stem)
      event_times.push_back(event.time_us);
    else
      ++foreign_events;
  }
  if (foreign_events > 0)
    result.warnings.push_back(std::to_string(foreign_events) +
                              " event(s) with foreign trace_id in " +
                              job.events.string());
  std::sort(event_times.begin(), event_times.end());

  const WindowSpec spec = config.window_spec();
  const auto windows = enumerate_windows(trace, spec);

  std::vector<WindowHistogram> histograms;
  histograms.reserve(windows.size());
  for (const auto& [index, start] : windows)
    histograms.push_back(build_histogram(trace, start, spec, index));

  std::optional<TraceStats> trace_stats;
  if (config.normalization == NormalizationMode::PerTrace)
    trace_stats = compute_trace_stats(histograms);

  result.windows.reserve(histograms.size());
  for (const auto& hist : histograms) {
    WindowRecord record;
    record.window_index = hist.window_index;
    record.window_start_us = hist.window_start_us;
    record.label =
        label_window(event_times, hist.window_start_us, spec.window_us);
    record.image = render(hist, config.normalization, trace_stats);
    record.digest = image_digest(record.image);
    result.windows.push_back(std::move(record));
  }
  return result;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path.string());
}

std::optional<double> run_overlap_near_manifest(const fs::path& manifest_path) {
  const fs::path config_path = manifest_path.parent_path() / "run_config.json";
  std::ifstream in(config_path);
  if (!in) return std::nullopt;
  try {
    nlohmann::json obj;
    in >> obj;
    if (obj.contains("overlap") && obj["overlap"].is_number())
      return obj["overlap"].get<double>();
  } catch (const nlohmann::json::exception&) {
  }
  return std::nullopt;
}

}  // namespace

// Only the content-determining parameters: two runs that should produce the
// same bytes must also produce the same echo.
nlohmann::json PipelineConfig::to_json() const {
  nlohmann::json obj;
  obj["window"] = window_seconds;
  obj["resolution"] = resolution;
  obj["mtu"] = mtu;
  obj["overlap"] = overlap;
  obj["normalize"] = normalization_name(normalization);
  obj["dedup"] = dedup;
  obj["max_label"] = max_label;
  obj["seed"] = seed;
  obj["split"] = split_mode_name(split_mode);
  obj["holdout"] = holdout;
  return obj;
}

nlohmann::json RunSummary::to_json() const {
  nlohmann::json obj;
  obj["traces"] = traces;
  obj["windows"] = windows;
  obj["kept"] = kept;
  obj["deduped"] = deduped;
  obj["admitted"] = admitted;
  obj["rejected"] = rejected;
  obj["servers"] = servers;
  return obj;
}

nlohmann::json split_to_json(const SplitManifest& manifest) {
  nlohmann::json obj;
  obj["mode"] = split_mode_name(manifest.mode);
  obj["seed"] = manifest.seed;
  obj["train"] = manifest.train;
  obj["test"] = manifest.test;
  obj["held_out_servers"] = manifest.held_out_servers;
  obj["flagged_servers"] = manifest.flagged_servers;
  return obj;
}

RunSummary run_pipeline(const PipelineConfig& config,
                        const fs::path& input_dir) {
  config.window_spec().validate();
  const auto jobs = discover_inputs(input_dir);

  std::vector<TraceResult> results(jobs.size());
  std::vector<std::exception_ptr> failures(jobs.size());
  {
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t n_workers =
        std::min<std::size_t>(config.jobs > 0 ? config.jobs : hw,
                              std::max<std::size_t>(jobs.size(), 1));
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    workers.reserve(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < jobs.size();
             i = next.fetch_add(1)) {
          try {
            results[i] = process_trace(jobs[i], config);
          } catch (...) {
            failures[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& worker : workers) worker.join();
  }
  for (std::size_t i = 0; i < failures.size(); ++i)
    if (failures[i]) std::rethrow_exception(failures[i]);
  for (const auto& result : results)
    for (const auto& warning : result.warnings)
      std::cerr << "warning: " << warning << "\n";

  // Stage everything in a hidden sibling; the output root appears only once
  // the run has fully succeeded.
  const fs::path parent = config.output_root.has_parent_path()
                              ? config.output_root.parent_path()
                              : fs::path(".");
  const fs::path stage =
      parent / ("." + config.output_root.filename().string() + ".staging");
  fs::remove_all(stage);

  RunSummary summary;
  try {
    fs::create_directories(stage / "images");

    Deduplicator filter;
    std::ostringstream manifest;
    manifest << "sample_id,trace_id,window_index,window_start,label,admitted,"
                "digest,png_path\n";

    std::vector<TraceSamples> split_input;
    std::set<std::string> servers;
    std::map<std::string, std::pair<std::uint64_t, std::uint64_t>>
        server_counts;  // traces, admitted images

    for (const auto& result : results) {
      servers.insert(result.server_label);
      auto& counts = server_counts[result.server_label];
      ++counts.first;
      ++summary.traces;

      TraceSamples samples;
      samples.trace_id = result.trace_id;
      samples.server_label = result.server_label;

      for (const auto& record : result.windows) {
        ++summary.windows;
        const bool kept = config.dedup
                              ? filter.admit(record.digest, record.label)
                              : (filter.admit(record.digest, record.label), true);
        const bool label_ok = admit(record.label, config.max_label);
        std::string png_path;
        if (kept) {
          if (label_ok) {
            ++summary.admitted;
            ++counts.second;
            samples.window_indices.push_back(record.window_index);
          } else {
            ++summary.rejected;
          }
          ++summary.kept;
          png_path = "images/" + result.trace_id + "/" +
                     std::to_string(record.window_index) + ".png";
          const fs::path file = stage / png_path;
          fs::create_directories(file.parent_path());
          write_png(record.image, file);
        } else {
          ++summary.deduped;
        }

        const std::string sample_id =
            result.trace_id + "/" + std::to_string(record.window_index);
        manifest << csv_escape(sample_id) << ',' << csv_escape(result.trace_id)
                 << ',' << record.window_index << ','
                 << format_seconds(record.window_start_us) << ','
                 << record.label << ',' << (label_ok ? 1 : 0) << ','
                 << digest_hex(record.digest) << ',' << csv_escape(png_path)
                 << '\n';
      }
      split_input.push_back(std::move(samples));
    }
    summary.servers = servers.size();

    // A corpus where no server reaches the 80:20 minimum still builds its
    // images; the split side degrades to an all-flagged empty manifest.
    bool splittable = config.split_mode != SplitMode::KnownServers8020;
    for (const auto& [server, counts] : server_counts)
      if (counts.first >= static_cast<std::uint64_t>(kMinTracesPerServer))
        splittable = true;

    SplitManifest splits;
    splits.mode = config.split_mode;
    splits.seed = config.seed;
    if (split_input.empty()) {
      // nothing to split
    } else if (!splittable) {
      for (const auto& [server, counts] : server_counts)
        splits.flagged_servers.push_back(server);
    } else {
      splits = split(split_input, config.split_mode, config.seed, config.holdout);
    }
    for (const auto& server : splits.flagged_servers)
      std::cerr << "warning: server '" << server << "' has fewer than "
                << kMinTracesPerServer << " traces; left out of the split\n";

    DedupReport report = filter.report();
    if (!config.dedup) {
      // Filter ran only to count would-be duplicates; nothing was dropped.
      report.kept = report.input;
      report.dropped = 0;
    }
    nlohmann::json dedup_json;
    dedup_json["input"] = report.input;
    dedup_json["kept"] = report.kept;
    dedup_json["dropped"] = report.dropped;

    std::ostringstream stats;
    stats << "server_label,websites,traces,images\n";
    for (const auto& [server, counts] : server_counts)
      stats << csv_escape(server) << ",," << counts.first << ','
            << counts.second << '\n';

    write_text_file(stage / "manifest.csv", manifest.str());
    write_text_file(stage / "splits.json", split_to_json(splits).dump(2) + "\n");
    write_text_file(stage / "dedup_report.json", dedup_json.dump(2) + "\n");
    write_text_file(stage / "stats.csv", stats.str());
    write_text_file(stage / "run_config.json",
                    config.to_json().dump(2) + "\n");
  } catch (...) {
    fs::remove_all(stage);
    throw;
  }

  fs::remove_all(config.output_root);
  fs::rename(stage, config.output_root);
  return summary;
}

std::vector<ManifestRow> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorCode::MalformedManifest, "empty manifest " + path.string());
  if (line !=
      "sample_id,trace_id,window_index,window_start,label,admitted,digest,"
      "png_path")
    throw Error(ErrorCode::MalformedManifest,
                "unexpected manifest header in " + path.string());

  std::vector<ManifestRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = csv_split(line);
    if (fields.size() != 8)
      throw Error(ErrorCode::MalformedManifest,
                  path.string() + ":" + std::to_string(lineno) +
                      ": expected 8 fields");
    ManifestRow row;
    row.sample_id = fields[0];
    row.trace_id = fields[1];
    try {
      row.window_index = std::stoll(fields[2]);
      row.label = std::stoi(fields[4]);
      row.admitted = std::stoi(fields[5]) != 0;
    } catch (const std::exception&) {
      throw Error(ErrorCode::MalformedManifest,
                  path.string() + ":" + std::to_string(lineno) +
                      ": bad numeric field");
    }
    row.window_start = fields[3];
    row.digest = fields[6];
    row.png_path = fields[7];
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json StatsReport::to_json() const {
  nlohmann::json obj;
  obj["servers"] = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json entry;
    entry["server_label"] = row.server_label;
    if (row.websites)
      entry["websites"] = *row.websites;
    else
      entry["websites"] = nullptr;
    entry["traces"] = row.traces;
    entry["images"] = row.images;
    obj["servers"].push_back(entry);
  }
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [label, count] : distribution.counts)
    hist[std::to_string(label)] = count;
  obj["response_distribution"] = hist;
  obj["low_label_share"] = distribution.low_label_share;
  return obj;
}

StatsReport compute_stats(const fs::path& manifest_path,
                          const std::optional<fs::path>& websites_file) {
  const auto rows = read_manifest(manifest_path);

  std::map<std::string, std::int64_t> websites;
  if (websites_file) {
    std::ifstream in(*websites_file);
    if (!in)
      throw Error(ErrorCode::IoFailure, "cannot open " + websites_file->string());
    nlohmann::json obj;
    try {
      in >> obj;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::BadConfig, e.what());
    }
    for (const auto& [server, count] : obj.items())
      websites[server] = count.get<std::int64_t>();
  }

  struct Acc {
    std::set<std::string> traces;
    std::uint64_t images = 0;
  };
  std::map<std::string, Acc> by_server;
  std::vector<int> admitted_labels;
  for (const auto& row : rows) {
    const auto slash = row.trace_id.find('/');
    const std::string server =
        slash == std::string::npos ? row.trace_id : row.trace_id.substr(0, slash);
    auto& acc = by_server[server];
    acc.traces.insert(row.trace_id);
    if (row.admitted && !row.png_path.empty()) {
      ++acc.images;
      admitted_labels.push_back(row.label);
    }
  }

  StatsReport report;
  for (const auto& [server, acc] : by_server) {
    ServerStatsRow row;
    row.server_label = server;
    if (const auto it = websites.find(server); it != websites.end())
      row.websites = it->second;
    row.traces = acc.traces.size();
    row.images = acc.images;
    report.rows.push_back(std::move(row));
  }
  report.distribution = response_distribution(admitted_labels);
  return report;
}

nlohmann::json evaluate_predictions(const fs::path& manifest_path,
                                    const fs::path& predictions_path,
                                    const std::vector<int>& cap_tolerances,
                                    int trace_tolerance) {
  const auto rows = read_manifest(manifest_path);
  std::set<std::string> known_ids;
  for (const auto& row : rows) known_ids.insert(row.sample_id);

  std::ifstream in(predictions_path);
  if (!in)
    throw Error(ErrorCode::IoFailure, "cannot open " + predictions_path.string());
  std::string line;
  if (!std::getline(in, line) || csv_split(line) !=
      std::vector<std::string>{"sample_id", "prediction"})
    throw Error(ErrorCode::MalformedManifest,
                "predictions file must start with header sample_id,prediction");

  std::map<std::string, int> predictions;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = csv_split(line);
    if (fields.size() != 2)
      throw Error(ErrorCode::MalformedManifest,
                  predictions_path.string() + ":" + std::to_string(lineno) +
                      ": expected 2 fields");
    if (!known_ids.contains(fields[0]))
      throw Error(ErrorCode::UnknownSampleId,
                  "prediction for unknown sample " + fields[0]);
    try {
      predictions[fields[0]] = std::stoi(fields[1]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::MalformedManifest,
                  predictions_path.string() + ":" + std::to_string(lineno) +
                      ": bad prediction value");
    }
  }

  if (const auto overlap = run_overlap_near_manifest(manifest_path);
      overlap && *overlap > 0.0) {
    std::cerr << "warning: manifest was built with overlap " << *overlap
              << "; per-trace sums assume non-overlapping windows\n";
  }

  std::vector<int> y_true;
  std::vector<int> y_pred;
  std::map<std::string, TraceWindows> by_trace;
  for (const auto& row : rows) {
    if (!row.admitted || row.png_path.empty()) continue;
    const auto it = predictions.find(row.sample_id);
    if (it == predictions.end())
      throw Error(ErrorCode::MissingPrediction,
                  "no prediction for sample " + row.sample_id);
    y_true.push_back(row.label);
    y_pred.push_back(it->second);
    auto& trace = by_trace[row.trace_id];
    trace.labels.push_back(row.label);
    trace.predictions.push_back(it->second);
  }

  nlohmann::json report;
  report["samples"] = y_true.size();
  report["cap"] = nlohmann::json::object();
  for (int k : cap_tolerances)
    report["cap"][std::to_string(k)] = cap_accuracy(y_true, y_pred, k);

  std::vector<TraceWindows> traces;
  traces.reserve(by_trace.size());
  for (auto& [id, trace] : by_trace) traces.push_back(std::move(trace));
  const PerTraceEval eval = per_trace_eval(traces, trace_tolerance);
  report["per_trace"]["tolerance"] = eval.tolerance;
  report["per_trace"]["accuracy"] = eval.accuracy;
  report["per_trace"]["points"] = nlohmann::json::array();
  for (const auto& [t, p] : eval.points)
    report["per_trace"]["points"].push_back({t, p});
  return report;
}

}  // namespace quicpic
