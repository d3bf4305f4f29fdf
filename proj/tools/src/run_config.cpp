#include "dsam_cli/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dsam/errors.hpp"

namespace dsam::cli {
namespace {

using nlohmann::json;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

void reject_unknown(const json& j, const std::string& section, const std::set<std::string>& known) {
  if (!j.is_object()) fail(ErrorCode::InvalidConfig, "'" + section + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) {
      fail(ErrorCode::InvalidConfig, "unknown key '" + (section.empty() ? key : section + "." + key) + "'");
    }
  }
}

template <typename T>
void read(const json& j, const std::string& section, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::InvalidConfig, "field '" + section + "." + key + "' has the wrong type");
  }
}

json data_to_json(const SyntheticSpec& d) {
  return {{"classes", d.classes},       {"samples_per_class", d.samples_per_class},
          {"input_dim", d.input_dim},   {"center_scale", d.center_scale},
          {"sigma", d.sigma},           {"modes", d.modes},
          {"mode_scale", d.mode_scale}, {"standardize", d.standardize}};
}

void data_from_json(const json& j, SyntheticSpec& d) {
  reject_unknown(j, "data", {"classes", "samples_per_class", "input_dim", "center_scale", "sigma", "modes",
                             "mode_scale", "standardize"});
  read(j, "data", "classes", d.classes);
  read(j, "data", "samples_per_class", d.samples_per_class);
  read(j, "data", "input_dim", d.input_dim);
  read(j, "data", "center_scale", d.center_scale);
  read(j, "data", "sigma", d.sigma);
  read(j, "data", "modes", d.modes);
  read(j, "data", "mode_scale", d.mode_scale);
  read(j, "data", "standardize", d.standardize);
}

json train_to_json(const TrainConfig& t) {
  return {{"base", to_string(t.base)},
          {"use_dsam", t.use_dsam},
          {"use_triplet", t.use_triplet},
          {"triplet_margin", t.triplet_margin},
          {"P", t.P},
          {"Q", t.Q},
          {"hidden", t.hidden},
          {"embedding_dim", t.embedding_dim},
          {"lr", t.lr},
          {"momentum", t.momentum},
          {"weight_decay", t.weight_decay},
          {"lr_decay", t.lr_decay},
          {"lr_period", t.lr_period},
          {"lr_floor", t.lr_floor},
          {"epochs", t.epochs}};
}

void train_from_json(const json& j, TrainConfig& t) {
  reject_unknown(j, "train", {"base", "use_dsam", "use_triplet", "triplet_margin", "P", "Q", "hidden",
                              "embedding_dim", "lr", "momentum", "weight_decay", "lr_decay", "lr_period",
                              "lr_floor", "epochs"});
  std::string base = to_string(t.base);
  read(j, "train", "base", base);
  t.base = base_loss_from_string(base);
  read(j, "train", "use_dsam", t.use_dsam);
  read(j, "train", "use_triplet", t.use_triplet);
  read(j, "train", "triplet_margin", t.triplet_margin);
  read(j, "train", "P", t.P);
  read(j, "train", "Q", t.Q);
  read(j, "train", "hidden", t.hidden);
  read(j, "train", "embedding_dim", t.embedding_dim);
  read(j, "train", "lr", t.lr);
  read(j, "train", "momentum", t.momentum);
  read(j, "train", "weight_decay", t.weight_decay);
  read(j, "train", "lr_decay", t.lr_decay);
  read(j, "train", "lr_period", t.lr_period);
  read(j, "train", "lr_floor", t.lr_floor);
  read(j, "train", "epochs", t.epochs);
}

json to_json_object(const RunConfig& c) {
  return {{"seed", c.seed},
          {"out_dir", c.out_dir},
          {"dataset", c.dataset},
          {"data", data_to_json(c.data)},
          {"train", train_to_json(c.train)},
          {"dsam", {{"m_neg", c.train.dsam.m_neg}, {"gamma", c.train.dsam.gamma}, {"lambda", c.train.dsam.lambda}}},
          {"angular",
           {{"s", c.train.angular.s}, {"m1", c.train.angular.m1}, {"m2", c.train.angular.m2}, {"m3", c.train.angular.m3}}},
          {"split",
           {{"test_per_class", c.split.test_per_class},
            {"queries_per_class", c.split.queries_per_class},
            {"max_rank", c.split.max_rank}}}};
}

RunConfig from_json_object(const json& j) {
  RunConfig c;
  reject_unknown(j, "", {"seed", "out_dir", "dataset", "data", "train", "dsam", "angular", "split"});
  read(j, "", "seed", c.seed);
  read(j, "", "out_dir", c.out_dir);
  read(j, "", "dataset", c.dataset);
  if (j.contains("data")) data_from_json(j.at("data"), c.data);
  if (j.contains("train")) train_from_json(j.at("train"), c.train);
  if (j.contains("dsam")) {
    const json& d = j.at("dsam");
    reject_unknown(d, "dsam", {"m_neg", "gamma", "lambda"});
    read(d, "dsam", "m_neg", c.train.dsam.m_neg);
    read(d, "dsam", "gamma", c.train.dsam.gamma);
    read(d, "dsam", "lambda", c.train.dsam.lambda);
  }
  if (j.contains("angular")) {
    const json& a = j.at("angular");
    reject_unknown(a, "angular", {"s", "m1", "m2", "m3"});
    read(a, "angular", "s", c.train.angular.s);
    read(a, "angular", "m1", c.train.angular.m1);
    read(a, "angular", "m2", c.train.angular.m2);
    read(a, "angular", "m3", c.train.angular.m3);
  }
  if (j.contains("split")) {
    const json& s = j.at("split");
    reject_unknown(s, "split", {"test_per_class", "queries_per_class", "max_rank"});
    read(s, "split", "test_per_class", c.split.test_per_class);
    read(s, "split", "queries_per_class", c.split.queries_per_class);
    read(s, "split", "max_rank", c.split.max_rank);
  }
  return c;
}

}  // namespace

SyntheticSpec RunConfig::data_spec() const {
  SyntheticSpec spec = data;
  spec.seed = splitmix64(seed ^ 0xD1B54A32D192ED03ULL);
  return spec;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig cfg = train;
  cfg.seed = splitmix64(seed ^ 0x8CB92BA72F3D8DD7ULL);
  return cfg;
}

std::uint64_t RunConfig::split_seed() const { return splitmix64(seed ^ 0xABC98388FB8FAC03ULL); }
std::uint64_t RunConfig::holdout_seed() const { return splitmix64(seed ^ 0x5851F42D4C957F2DULL); }

void RunConfig::validate() const {
  data.validate();
  train.validate();
  if (split.test_per_class < 0) fail(ErrorCode::InvalidConfig, "split.test_per_class must be >= 0");
  if (split.queries_per_class < 1) fail(ErrorCode::InvalidConfig, "split.queries_per_class must be >= 1");
  if (split.max_rank < 1) fail(ErrorCode::InvalidConfig, "split.max_rank must be >= 1");
  if (train.P > data.classes) fail(ErrorCode::InvalidConfig, "train.P exceeds data.classes");
}

RunConfig reference_toy_config() {
  RunConfig c;
  c.out_dir = "runs/toy2d";
  c.data.classes = 8;
  c.data.samples_per_class = 200;
  c.data.input_dim = 16;
  c.data.modes = 3;
  c.train.embedding_dim = 2;
  c.train.P = 8;
  c.train.Q = 8;
  c.train.epochs = 40;
  return c;
}

std::string to_json(const RunConfig& config) { return to_json_object(config).dump(2); }

RunConfig run_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
  }
  return from_json_object(j);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return run_config_from_json(buffer.str());
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    fail(ErrorCode::InvalidConfig, "override '" + assignment + "' must look like key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // bare strings such as train.base=softmax
  }
  json j = to_json_object(config);
  const auto dot = key.find('.');
  if (dot == std::string::npos) {
    if (!j.contains(key)) fail(ErrorCode::InvalidConfig, "unknown key '" + key + "'");
    j[key] = value;
  } else {
    const std::string section = key.substr(0, dot);
    const std::string field = key.substr(dot + 1);
    if (!j.contains(section) || !j[section].is_object() || !j[section].contains(field)) {
      fail(ErrorCode::InvalidConfig, "unknown key '" + key + "'");
    }
    j[section][field] = value;
  }
  config = from_json_object(j);
}

}  // namespace dsam::cli
