#include "dasam/service/app_config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "dasam/error.hpp"

extern char** environ;

namespace dasam::service {

using json = nlohmann::json;

namespace {

constexpr const char* kEnvPrefix = "DASAM_";

json eval_to_json(const EvalSection& e) {
  return json{{"clicks", e.clicks},
              {"boxes", e.boxes},
              {"trials", e.trials},
              {"images_per_trial", e.images_per_trial},
              {"warmup", e.warmup}};
}

json serve_to_json(const ServeSection& s) { return json{{"host", s.host}, {"port", s.port}, {"threads", s.threads}}; }

json data_to_json(const DataSection& d) {
  json j = d.scene;
  j["count"] = d.count;
  j["test_fraction"] = d.test_fraction;
  return j;
}

json train_to_json(const training::TrainConfig& t) {
  json j = t;
  j.erase("weights");
  return j;
}

// Every accepted key with a default value of the right JSON type.
json schema() {
  return json{{"data", data_to_json({})},
              {"model", json(model::ModelConfig{})},
              {"train", train_to_json({})},
              {"loss", json(losses::LossWeights{})},
              {"eval", eval_to_json({})},
              {"serve", serve_to_json({})}};
}

std::string type_name(const json& s) {
  if (s.is_object()) return "an object";
  if (s.is_array()) return "an array";
  if (s.is_string()) return "a string";
  if (s.is_boolean()) return "a boolean";
  if (s.is_number_unsigned()) return "a non-negative integer";
  if (s.is_number_integer()) return "an integer";
  return "a number";
}

bool same_kind(const json& given, const json& s) {
  if (s.is_object()) return given.is_object();
  if (s.is_array()) return given.is_array();
  if (s.is_string()) return given.is_string();
  if (s.is_boolean()) return given.is_boolean();
  if (s.is_number_unsigned()) return given.is_number_unsigned();
  if (s.is_number_integer()) return given.is_number_integer();
  return given.is_number();
}

// Reports problems under `path`; returns false when `given` must be dropped.
// Bad keys inside objects are erased so the rest can still be validated.
bool check_against(json& given, const json& s, const std::string& path, std::vector<std::string>& bad) {
  if (!same_kind(given, s)) {
    bad.push_back(path + ": expected " + type_name(s));
    return false;
  }
  if (s.is_object()) {
    std::vector<std::string> drop;
    for (auto it = given.begin(); it != given.end(); ++it) {
      if (!s.contains(it.key())) {
        bad.push_back(path + "." + it.key() + ": unknown key");
        drop.push_back(it.key());
      } else if (!check_against(it.value(), s.at(it.key()), path + "." + it.key(), bad)) {
        drop.push_back(it.key());
      }
    }
    for (const auto& k : drop) given.erase(k);
  } else if (s.is_array() && !s.empty()) {
    bool ok = true;
    for (std::size_t i = 0; i < given.size(); ++i)
      ok = check_against(given[i], s[0], path + "[" + std::to_string(i) + "]", bad) && ok;
    return ok;
  }
  return true;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::vector<std::string> split_path(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find("__", start);
    out.push_back(lower(s.substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 2;
  }
  return out;
}

void apply_environment(json& doc, const json& s, const Environment& env, std::vector<std::string>& bad) {
  for (const auto& [name, value] : env) {
    if (name.rfind(kEnvPrefix, 0) != 0) continue;
    const auto rest = name.substr(std::char_traits<char>::length(kEnvPrefix));
    if (rest.find("__") == std::string::npos) continue;  // e.g. DASAM_CONFIG_DIR
    const auto path = split_path(rest);
    const json* node = &s;
    std::string dotted;
    bool ok = true;
    for (const auto& key : path) {
      dotted += (dotted.empty() ? "" : ".") + key;
      if (!node->is_object() || !node->contains(key)) {
        bad.push_back(name + ": no config field " + dotted);
        ok = false;
        break;
      }
      node = &node->at(key);
    }
    if (!ok) continue;
    json parsed;
    if (node->is_string()) {
      parsed = value;
    } else {
      try {
        parsed = json::parse(value);
      } catch (const json::parse_error&) {
        bad.push_back(name + ": cannot parse '" + value + "' as " + type_name(*node));
        continue;
      }
    }
    json* target = &doc;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      if (!target->contains(path[i]) || !(*target)[path[i]].is_object()) (*target)[path[i]] = json::object();
      target = &(*target)[path[i]];
    }
    (*target)[path.back()] = parsed;
  }
}

template <class F>
void collect(std::vector<std::string>& bad, const std::string& section, F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    bad.insert(bad.end(), e.fields().begin(), e.fields().end());
  } catch (const std::exception& e) {
    bad.push_back(section + ": " + e.what());
  }
}

}  // namespace

json AppConfig::to_json() const {
  return json{{"data", data_to_json(data)}, {"model", json(model)},        {"train", train_to_json(train)},
              {"loss", json(loss)},         {"eval", eval_to_json(eval)}, {"serve", serve_to_json(serve)}};
}

Environment process_environment() {
  Environment env;
  for (char** e = environ; e && *e; ++e) {
    const std::string kv(*e);
    const auto eq = kv.find('=');
    if (eq != std::string::npos) env[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  return env;
}

AppConfig parse_app_config(const json& document, const Environment& env, const std::filesystem::path& config_dir) {
  std::vector<std::string> bad;
  const json s = schema();
  json doc = document.is_null() ? json::object() : document;
  if (!doc.is_object()) throw ConfigError({"config: top level must be an object"});
  apply_environment(doc, s, env, bad);
  std::vector<std::string> drop;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (!s.contains(it.key())) {
      bad.push_back(it.key() + ": unknown section");
      drop.push_back(it.key());
    } else if (!check_against(it.value(), s.at(it.key()), it.key(), bad)) {
      drop.push_back(it.key());
    }
  }
  for (const auto& k : drop) doc.erase(k);

  const auto section = [&](const char* name) { return doc.contains(name) ? doc.at(name) : json::object(); };
  AppConfig c;
  collect(bad, "data", [&] {
    const auto d = section("data");
    d.get_to(c.data.scene);
    c.data.count = d.value("count", c.data.count);
    c.data.test_fraction = d.value("test_fraction", c.data.test_fraction);
  });
  collect(bad, "model", [&] {
    auto m = section("model");
    const std::string preset = m.value("preset", std::string("toy"));
    json base = model::load_preset(preset, config_dir);
    base.merge_patch(m);
    c.model = base.get<model::ModelConfig>();
  });
  collect(bad, "loss", [&] { section("loss").get_to(c.loss); });
  collect(bad, "train", [&] {
    section("train").get_to(c.train);
    c.train.weights = c.loss;
  });
  collect(bad, "eval", [&] {
    const auto e = section("eval");
    c.eval.clicks = e.value("clicks", c.eval.clicks);
    c.eval.boxes = e.value("boxes", c.eval.boxes);
    c.eval.trials = e.value("trials", c.eval.trials);
    c.eval.images_per_trial = e.value("images_per_trial", c.eval.images_per_trial);
    c.eval.warmup = e.value("warmup", c.eval.warmup);
  });
  collect(bad, "serve", [&] {
    const auto v = section("serve");
    c.serve.host = v.value("host", c.serve.host);
    c.serve.port = v.value("port", c.serve.port);
    c.serve.threads = v.value("threads", c.serve.threads);
  });

  collect(bad, "data", [&] { c.data.scene.validate(); });
  if (c.data.count < 1) bad.push_back("data.count: must be >= 1");
  if (!(c.data.test_fraction >= 0.0 && c.data.test_fraction < 1.0)) bad.push_back("data.test_fraction: must be in [0, 1)");
  collect(bad, "model", [&] { c.model.validate(); });
  // train.validate() covers the loss weights too.
  collect(bad, "train", [&] { c.train.validate(); });
  collect(bad, "eval", [&] {
    evaluation::ClickProtocolConfig p;
    p.click_counts = c.eval.clicks;
    p.validate();
  });
  if (c.eval.boxes.empty()) bad.push_back("eval.boxes: must be 'gt' or a file path");
  if (c.eval.trials < 3) bad.push_back("eval.trials: must be >= 3");
  if (c.eval.images_per_trial < 1) bad.push_back("eval.images_per_trial: must be >= 1");
  if (c.eval.warmup < 0) bad.push_back("eval.warmup: must be >= 0");
  if (c.serve.port < 0 || c.serve.port > 65535) bad.push_back("serve.port: must be in [0, 65535]");
  if (c.serve.threads < 1) bad.push_back("serve.threads: must be >= 1");
  if (c.serve.host.empty()) bad.push_back("serve.host: must not be empty");
  if (!bad.empty()) throw ConfigError(std::move(bad));
  return c;
}

AppConfig load_app_config(const std::optional<std::filesystem::path>& path, const Environment& env,
                          const std::filesystem::path& config_dir) {
  json doc = json::object();
  if (path) {
    std::ifstream in(*path);
    if (!in) throw ConfigError({"config: cannot open " + path->string()});
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError({"config: " + path->string() + " is not valid JSON: " + e.what()});
    }
  }
  return parse_app_config(doc, env, config_dir);
}

}  // namespace dasam::service
