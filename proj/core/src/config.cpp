// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#include "floc/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iterator>
#include <set>

#include "floc/png_io.hpp"
#include "json.hpp"

namespace floc {

using json = nlohmann::json;

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("config: " + m); };
  if (epochs == 0) fail("epochs must be positive");
  if (batch == 0) fail("batch must be positive");
  if (!(lr > 0)) fail("lr must be positive");
  if (!(weight_decay >= 0)) fail("weight_decay must be non-negative");
  if (scales.empty()) fail("scales must not be empty");
  for (std::size_t i = 0; i < scales.size(); ++i) {
    if (scales[i] == 0) fail("scales must be positive");
    if (i && scales[i] <= scales[i - 1]) fail("scales must be strictly ascending");
  }
  if (!(remote_timeout_s > 0)) fail("remote_timeout_s must be positive");
  if (!(region_tolerance > 0)) fail("region_tolerance must be positive");
  if (!(rho > 0 && rho < 1)) fail("rho must lie in (0,1)");
  if (!(detection_threshold > 0 && detection_threshold < 1)) fail("detection_threshold must lie in (0,1)");
  if (refiner == RefinerKind::remote && remote_url.empty()) fail("refiner 'remote' needs remote_url");
  try {
    model.validate();
  } catch (const std::exception& e) {
    fail(e.what());
  }
}

std::string RunConfig::to_json() const {
  json j;  // std::map keys: sorted
  j["seed"] = seed;
  j["epochs"] = epochs;
  j["batch"] = batch;
  j["lr"] = lr;
  j["weight_decay"] = weight_decay;
  j["scales"] = scales;
  j["cam_fusion"] = std::string(floc::to_string(cam_fusion));
  j["input_size"] = model.input_size;
  j["channels"] = model.channels;
  j["token_dim"] = model.token_dim;
  j["heads"] = model.heads;
  j["num_blocks"] = model.num_blocks;
  j["cabl_depth"] = model.cabl_depth;
  j["cabl_structure"] = std::string(floc::to_string(model.cabl_structure));
  j["edge_operator"] = std::string(floc::to_string(model.edge_operator));
  j["refiner"] = std::string(floc::to_string(refiner));
  j["remote_url"] = remote_url;
  j["remote_timeout_s"] = remote_timeout_s;
  j["region_tolerance"] = region_tolerance;
  j["prompt_mode"] = std::string(floc::to_string(prompt_mode));
  j["rho"] = rho;
  j["detection_threshold"] = detection_threshold;
  return j.dump();
}

FitOptions RunConfig::fit_options() const {
  FitOptions f;
  f.epochs = epochs;
  f.lr = lr;
  f.weight_decay = weight_decay;
  f.seed = seed;
  f.train.batch = batch;
  return f;
}

PipelineOptions RunConfig::pipeline_options() const {
  PipelineOptions p;
  p.scales = scales;
  p.fusion = cam_fusion;
  p.rho = rho;
  p.mode = prompt_mode;
  p.refiner.kind = refiner;
  p.refiner.grow.tolerance = region_tolerance;
  p.refiner.remote.url = remote_url;
  p.refiner.remote.timeout_s = remote_timeout_s;
  p.detection_threshold = detection_threshold;
  return p;
}

namespace {

template <typename T>
T get_number(const json& v, const std::string& key) {
  if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw ConfigError("config: '" + key + "' must be a number");
  } else {
    if (!v.is_number_integer()) throw ConfigError("config: '" + key + "' must be an integer");
    if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)
      throw ConfigError("config: '" + key + "' must be positive");
  }
  return v.get<T>();
}

std::string get_string(const json& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError("config: '" + key + "' must be a string");
  return v.get<std::string>();
}

template <typename F>
auto parse_enum(F parse, const std::string& value, const std::string& key) {
  try {
    return parse(value);
  } catch (const std::exception& e) {
    throw ConfigError("config: '" + key + "': " + e.what());
  }
}

}  // namespace

RunConfig config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
  RunConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "seed") c.seed = get_number<std::uint64_t>(v, key);
    else if (key == "epochs") c.epochs = get_number<std::size_t>(v, key);
    else if (key == "batch") c.batch = get_number<std::size_t>(v, key);
    else if (key == "lr") c.lr = get_number<double>(v, key);
    else if (key == "weight_decay") c.weight_decay = get_number<double>(v, key);
    else if (key == "scales") {
      if (!v.is_array()) throw ConfigError("config: 'scales' must be an array");
      c.scales.clear();
      for (const auto& s : v) c.scales.push_back(get_number<std::size_t>(s, key));
    } else if (key == "cam_fusion") c.cam_fusion = parse_enum(parse_cam_fusion, get_string(v, key), key);
    else if (key == "input_size") c.model.input_size = get_number<std::size_t>(v, key);
    else if (key == "channels") c.model.channels = get_number<std::size_t>(v, key);
    else if (key == "token_dim") c.model.token_dim = get_number<std::size_t>(v, key);
    else if (key == "heads") c.model.heads = get_number<std::size_t>(v, key);
    else if (key == "num_blocks") c.model.num_blocks = get_number<std::size_t>(v, key);
    else if (key == "cabl_depth") c.model.cabl_depth = get_number<std::size_t>(v, key);
    else if (key == "cabl_structure")
      c.model.cabl_structure = parse_enum(parse_cabl_structure, get_string(v, key), key);
    else if (key == "edge_operator")
      c.model.edge_operator = parse_enum(parse_edge_operator, get_string(v, key), key);
    else if (key == "refiner") c.refiner = parse_enum(parse_refiner_kind, get_string(v, key), key);
    else if (key == "remote_url") c.remote_url = get_string(v, key);
    else if (key == "remote_timeout_s") c.remote_timeout_s = get_number<double>(v, key);
    else if (key == "region_tolerance") c.region_tolerance = get_number<double>(v, key);
    else if (key == "prompt_mode") c.prompt_mode = parse_enum(parse_prompt_mode, get_string(v, key), key);
    else if (key == "rho") c.rho = get_number<double>(v, key);
    else if (key == "detection_threshold") c.detection_threshold = get_number<double>(v, key);
    else throw ConfigError("config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

RunConfig config_parse(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read config " + path.string());
  return config_from_json(std::string(std::istreambuf_iterator<char>(f), {}));
}

std::vector<std::size_t> parse_scales(std::string_view text) {
  std::vector<std::size_t> out;
  while (true) {
    const auto comma = text.find(',');
    const auto item = text.substr(0, comma);
    std::size_t v = 0;
    const auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc{} || end != item.data() + item.size() || v == 0)
      throw ConfigError("bad scale list '" + std::string(text) + "'");
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

}  // namespace floc
