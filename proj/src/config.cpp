#include "quicpic/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace quicpic {
namespace {

std::string strip(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::string parse_quoted(const std::string& raw, std::size_t lineno) {
  if (raw.size() < 2 || raw.front() != '"' || raw.back() != '"')
    throw Error(ErrorCode::BadConfig,
                "line " + std::to_string(lineno) + ": expected a quoted string");
  return raw.substr(1, raw.size() - 2);
}

std::vector<std::string> split_array_items(const std::string& inner,
                                           std::size_t lineno) {
  std::vector<std::string> items;
  std::string current;
  bool in_string = false;
  for (char c : inner) {
    if (c == '"') in_string = !in_string;
    if (c == ',' && !in_string) {
      items.push_back(strip(current));
      current.clear();
    } else {
      current += c;
    }
  }
  if (in_string)
    throw Error(ErrorCode::BadConfig,
                "line " + std::to_string(lineno) + ": unterminated string");
  const std::string last = strip(current);
  if (!last.empty()) items.push_back(last);
  return items;
}

TomlValue parse_scalar(const std::string& raw, std::size_t lineno) {
  if (raw == "true") return true;
  if (raw == "false") return false;
  if (!raw.empty() && raw.front() == '"') return parse_quoted(raw, lineno);

  std::int64_t integer = 0;
  auto [iptr, ierr] = std::from_chars(raw.data(), raw.data() + raw.size(), integer);
  if (ierr == std::errc() && iptr == raw.data() + raw.size()) return integer;

  try {
    std::size_t used = 0;
    const double real = std::stod(raw, &used);
    if (used == raw.size()) return real;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::BadConfig,
              "line " + std::to_string(lineno) + ": cannot parse value '" +
                  raw + "'");
}

TomlValue parse_value(const std::string& raw, std::size_t lineno) {
  if (!raw.empty() && raw.front() == '[') {
    if (raw.back() != ']')
      throw Error(ErrorCode::BadConfig,
                  "line " + std::to_string(lineno) + ": unterminated array");
    const auto items = split_array_items(raw.substr(1, raw.size() - 2), lineno);
    if (items.empty()) return std::vector<std::string>{};
    if (items.front().front() == '"') {
      std::vector<std::string> strings;
      for (const auto& item : items) strings.push_back(parse_quoted(item, lineno));
      return strings;
    }
    std::vector<double> numbers;
    for (const auto& item : items) {
      const TomlValue v = parse_scalar(item, lineno);
      if (std::holds_alternative<std::int64_t>(v))
        numbers.push_back(static_cast<double>(std::get<std::int64_t>(v)));
      else if (std::holds_alternative<double>(v))
        numbers.push_back(std::get<double>(v));
      else
        throw Error(ErrorCode::BadConfig,
                    "line " + std::to_string(lineno) + ": mixed array types");
    }
    return numbers;
  }
  return parse_scalar(raw, lineno);
}

// Strips a trailing comment, respecting quoted strings.
std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

template <typename T>
const T* find_as(const TomlTable& table, const std::string& key) {
  const auto it = table.find(key);
  if (it == table.end()) return nullptr;
  return std::get_if<T>(&it->second);
}

double number_or(const TomlTable& table, const std::string& key, double fallback) {
  const auto it = table.find(key);
  if (it == table.end()) return fallback;
  if (const auto* i = std::get_if<std::int64_t>(&it->second))
    return static_cast<double>(*i);
  if (const auto* d = std::get_if<double>(&it->second)) return *d;
  throw Error(ErrorCode::BadConfig, key + " must be a number");
}

LossConfig loss_config_from_table(const TomlTable& table, const std::string& prefix) {
  LossConfig cfg;
  cfg.alpha = number_or(table, prefix + "alpha", cfg.alpha);
  cfg.beta = number_or(table, prefix + "beta", cfg.beta);
  cfg.gamma = number_or(table, prefix + "gamma", cfg.gamma);
  if (cfg.alpha < 0 || cfg.alpha > 1 || cfg.beta < 0 || cfg.beta > 1 ||
      cfg.gamma < 0)
    throw Error(ErrorCode::BadConfig,
                "loss parameters out of range: alpha, beta in [0,1], gamma >= 0");

  const auto it = table.find(prefix + "weights");
  if (it != table.end()) {
    if (const auto* s = std::get_if<std::string>(&it->second)) {
      if (*s != "auto")
        throw Error(ErrorCode::BadConfig, "weights must be an array or \"auto\"");
    } else if (const auto* v = std::get_if<std::vector<double>>(&it->second)) {
      cfg.class_weights.resize(static_cast<Index>(v->size()));
      for (std::size_t i = 0; i < v->size(); ++i) {
        if ((*v)[i] <= 0)
          throw Error(ErrorCode::BadConfig, "class weights must be positive");
        cfg.class_weights(static_cast<Index>(i)) = (*v)[i];
      }
    } else {
      throw Error(ErrorCode::BadConfig, "weights must be an array or \"auto\"");
    }
  }
  return cfg;
}

LossConfig loss_config_from_json(const nlohmann::json& obj) {
  LossConfig cfg;
  cfg.alpha = obj.value("alpha", cfg.alpha);
  cfg.beta = obj.value("beta", cfg.beta);
  cfg.gamma = obj.value("gamma", cfg.gamma);
  if (cfg.alpha < 0 || cfg.alpha > 1 || cfg.beta < 0 || cfg.beta > 1 ||
      cfg.gamma < 0)
    throw Error(ErrorCode::BadConfig,
                "loss parameters out of range: alpha, beta in [0,1], gamma >= 0");
  if (obj.contains("weights") && !obj["weights"].is_string()) {
    const auto& w = obj["weights"];
    if (!w.is_array())
      throw Error(ErrorCode::BadConfig, "weights must be an array or \"auto\"");
    cfg.class_weights.resize(static_cast<Index>(w.size()));
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double value = w[i].get<double>();
      if (value <= 0)
        throw Error(ErrorCode::BadConfig, "class weights must be positive");
      cfg.class_weights(static_cast<Index>(i)) = value;
    }
  }
  return cfg;
}

}  // namespace

TomlTable parse_toml(const std::string& text) {
  TomlTable table;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string body = strip(strip_comment(line));
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']')
        throw Error(ErrorCode::BadConfig,
                    "line " + std::to_string(lineno) + ": unterminated section");
      section = strip(body.substr(1, body.size() - 2));
      if (section.empty())
        throw Error(ErrorCode::BadConfig,
                    "line " + std::to_string(lineno) + ": empty section name");
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::BadConfig,
                  "line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = strip(body.substr(0, eq));
    const std::string value = strip(body.substr(eq + 1));
    if (key.empty() || value.empty())
      throw Error(ErrorCode::BadConfig,
                  "line " + std::to_string(lineno) + ": expected key = value");
    const std::string full_key = section.empty() ? key : section + "." + key;
    table[full_key] = parse_value(value, lineno);
  }
  return table;
}

TomlTable parse_toml_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_toml(buf.str());
}

NormalizationMode parse_normalization(const std::string& name) {
  if (name == "window") return NormalizationMode::PerWindow;
  if (name == "trace") return NormalizationMode::PerTrace;
  throw Error(ErrorCode::BadConfig,
              "normalization must be \"window\" or \"trace\", got \"" + name +
                  "\"");
}

SplitMode parse_split_mode(const std::string& name) {
  if (name == "8020") return SplitMode::KnownServers8020;
  if (name == "leave-out") return SplitMode::LeaveServersOut;
  throw Error(ErrorCode::BadConfig,
              "split must be \"8020\" or \"leave-out\", got \"" + name + "\"");
}

const char* normalization_name(NormalizationMode mode) {
  return mode == NormalizationMode::PerWindow ? "window" : "trace";
}

const char* split_mode_name(SplitMode mode) {
  return mode == SplitMode::KnownServers8020 ? "8020" : "leave-out";
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  const TomlTable table = parse_toml_file(path);
  PipelineConfig cfg;

  static const std::vector<std::string> known = {
      "window",   "resolution", "mtu",   "overlap", "normalize",
      "dedup",    "max_label",  "seed",  "split",   "holdout",
      "out",      "websites",   "jobs",  "loss.alpha", "loss.beta",
      "loss.gamma", "loss.weights"};
  for (const auto& [key, value] : table) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw Error(ErrorCode::BadConfig, "unknown config key: " + key);
  }

  cfg.window_seconds = number_or(table, "window", cfg.window_seconds);
  cfg.resolution = static_cast<Index>(
      number_or(table, "resolution", static_cast<double>(cfg.resolution)));
  cfg.mtu = static_cast<std::uint32_t>(
      number_or(table, "mtu", static_cast<double>(cfg.mtu)));
  cfg.overlap = number_or(table, "overlap", cfg.overlap);
  if (const auto* s = find_as<std::string>(table, "normalize"))
    cfg.normalization = parse_normalization(*s);
  if (const auto* b = find_as<bool>(table, "dedup")) cfg.dedup = *b;
  cfg.max_label =
      static_cast<int>(number_or(table, "max_label", cfg.max_label));
  if (const auto* seed = find_as<std::int64_t>(table, "seed"))
    cfg.seed = static_cast<std::uint64_t>(*seed);
  if (const auto* s = find_as<std::string>(table, "split"))
    cfg.split_mode = parse_split_mode(*s);
  if (const auto* v = find_as<std::vector<std::string>>(table, "holdout"))
    cfg.holdout = *v;
  if (const auto* s = find_as<std::string>(table, "out")) cfg.output_root = *s;
  if (const auto* s = find_as<std::string>(table, "websites"))
    cfg.websites_file = *s;
  cfg.jobs = static_cast<int>(number_or(table, "jobs", 0.0));

  cfg.window_spec().validate();
  return cfg;
}

LossConfig load_loss_config(const std::filesystem::path& path) {
  if (path.extension() == ".json") {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
    nlohmann::json obj;
    try {
      in >> obj;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::BadConfig, e.what());
    }
    return loss_config_from_json(obj);
  }
  const TomlTable table = parse_toml_file(path);
  const std::string prefix =
      table.count("loss.alpha") || table.count("loss.beta") ||
              table.count("loss.gamma") || table.count("loss.weights")
          ? "loss."
          : "";
  return loss_config_from_table(table, prefix);
}

}  // namespace quicpic
