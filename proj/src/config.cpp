#include "diffnet/config.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "diffnet/error.hpp"

namespace diffnet {

using nlohmann::json;

namespace {

bool is_builtin_policy(const std::string& name) { return name == "uniform" || name == "mh"; }

template <typename T>
void read_if(const json& doc, const char* key, T& target) {
  if (doc.contains(key) && !doc.at(key).is_null()) target = doc.at(key).get<T>();
}

// Accepts a scalar or an array.
template <typename T>
void read_list(const json& doc, const char* key, std::vector<T>& target) {
  if (!doc.contains(key) || doc.at(key).is_null()) return;
  const auto& node = doc.at(key);
  if (node.is_array()) {
    target = node.get<std::vector<T>>();
  } else {
    target = {node.get<T>()};
  }
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  for (std::uint64_t s = 1; s <= 20; ++s) seeds.push_back(s);
}

double cyclic(const std::vector<double>& values, std::size_t k) {
  if (values.empty()) throw InvalidArgument("empty per-agent list");
  return values[k % values.size()];
}

void ExperimentConfig::validate() const {
  if (agents.empty()) throw InvalidArgument("config: agent list is empty");
  for (const auto k : agents)
    if (k == 0) throw InvalidArgument("config: agent counts must be positive");
  if (seeds.empty()) throw InvalidArgument("config: seed list is empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw InvalidArgument("config: seeds must be distinct");
  }
  if (policies.empty()) throw InvalidArgument("config: no policy given");
  for (const auto& p : policies) {
    if (!is_builtin_policy(p) && !std::filesystem::exists(p)) {
      throw InvalidArgument("config: policy file '" + p + "' does not exist");
    }
  }
  if (!noise.profile.empty() && !std::filesystem::exists(noise.profile)) {
    throw InvalidArgument("config: noise profile file '" + noise.profile + "' does not exist");
  }
  if (loss.kind != "nn_saddle" && loss.kind != "quadratic") {
    throw InvalidArgument("config: unknown loss kind '" + loss.kind + "'");
  }
  if (loss.kind == "nn_saddle" && loss.features == 0) {
    throw InvalidArgument("config: nn_saddle needs features >= 1");
  }
  if (loss.kind == "quadratic" && loss.diag.empty()) {
    throw InvalidArgument("config: quadratic needs a non-empty diag");
  }
  if (!(mu > 0.0)) throw InvalidArgument("config: mu must be positive");
  if (noise.sigma_iso.empty() && noise.sigma_sq.empty()) {
    throw InvalidArgument("config: noise needs sigma_iso or sigma_sq");
  }
  for (const double s : noise.sigma_iso)
    if (!(s >= 0.0)) throw InvalidArgument("config: sigma_iso must be non-negative");
  for (const double s : noise.sigma_sq)
    if (!(s > 0.0)) throw InvalidArgument("config: sigma_sq must be positive");
  if (max_iters <= 0 || iters <= 0) throw InvalidArgument("config: iteration counts must be positive");
  if (cadence <= 0) throw InvalidArgument("config: cadence must be positive");
  if (classifier.epsilon_drop && !(*classifier.epsilon_drop > 0.0)) {
    throw InvalidArgument("config: epsilon_drop must be positive");
  }
}

json ExperimentConfig::to_json() const {
  json doc;
  doc["loss"] = {{"kind", loss.kind},
                 {"features", loss.features},
                 {"reg", loss.reg},
                 {"shift", loss.shift},
                 {"diag", loss.diag}};
  doc["topology"] = {{"kind", to_string(topology.kind)},
                     {"grid", topology.grid},
                     {"edge_probability", topology.edge_probability},
                     {"seed", topology.seed}};
  doc["policy"] = policies;
  doc["agents"] = agents;
  doc["mu"] = mu;
  doc["normalize"] = normalize;
  doc["noise"] = {{"sigma_iso", noise.sigma_iso},
                  {"sigma_sq", noise.sigma_sq},
                  {"profile", noise.profile}};
  doc["classifier"] = {{"tau", classifier.tau},
                       {"pi", classifier.pi},
                       {"epsilon_drop", classifier.epsilon_drop ? json(*classifier.epsilon_drop) : json()},
                       {"delta", classifier.delta ? json(*classifier.delta) : json()}};
  doc["seeds"] = seeds;
  doc["max_iters"] = max_iters;
  doc["iters"] = iters;
  doc["init"] = init;
  doc["out"] = out;
  doc["cadence"] = cadence;
  doc["workers"] = workers;
  doc["baselines"] = baselines;
  return doc;
}

ExperimentConfig ExperimentConfig::from_json(const json& doc) {
  if (!doc.is_object()) throw InvalidArgument("config: top level must be an object");
  ExperimentConfig c;
  try {
    if (doc.contains("loss")) {
      const auto& l = doc.at("loss");
      read_if(l, "kind", c.loss.kind);
      read_if(l, "features", c.loss.features);
      read_if(l, "reg", c.loss.reg);
      read_if(l, "shift", c.loss.shift);
      read_list(l, "diag", c.loss.diag);
    }
    if (doc.contains("topology")) {
      const auto& t = doc.at("topology");
      if (t.is_string()) {
        c.topology.kind = parse_topology_kind(t.get<std::string>());
      } else {
        if (t.contains("kind")) c.topology.kind = parse_topology_kind(t.at("kind").get<std::string>());
        read_list(t, "grid", c.topology.grid);
        read_if(t, "edge_probability", c.topology.edge_probability);
        read_if(t, "seed", c.topology.seed);
      }
    }
    read_list(doc, "policy", c.policies);
    for (auto& p : c.policies)
      if (p == "asymmetric-mh") p = "mh";
    read_list(doc, "agents", c.agents);
    read_if(doc, "mu", c.mu);
    read_if(doc, "normalize", c.normalize);
    if (doc.contains("noise")) {
      const auto& n = doc.at("noise");
      if (n.contains("sigma_iso") || n.contains("sigma_sq")) c.noise.sigma_iso.clear();
      read_list(n, "sigma_iso", c.noise.sigma_iso);
      read_list(n, "sigma_sq", c.noise.sigma_sq);
      read_if(n, "profile", c.noise.profile);
    }
    if (doc.contains("classifier")) {
      const auto& k = doc.at("classifier");
      read_if(k, "tau", c.classifier.tau);
      read_if(k, "pi", c.classifier.pi);
      if (k.contains("epsilon_drop") && !k.at("epsilon_drop").is_null())
        c.classifier.epsilon_drop = k.at("epsilon_drop").get<double>();
      if (k.contains("delta") && !k.at("delta").is_null())
        c.classifier.delta = k.at("delta").get<double>();
    }
    if (doc.contains("seeds")) {
      const auto& s = doc.at("seeds");
      if (s.is_object()) {
        const auto base = s.value("base", std::uint64_t{1});
        const auto count = s.value("count", std::uint64_t{20});
        c.seeds.clear();
        for (std::uint64_t i = 0; i < count; ++i) c.seeds.push_back(base + i);
      } else {
        read_list(doc, "seeds", c.seeds);
      }
    }
    read_if(doc, "max_iters", c.max_iters);
    read_if(doc, "iters", c.iters);
    if (doc.contains("init")) {
      const auto& i = doc.at("init");
      if (i.is_array()) {
        std::ostringstream os;
        os.precision(17);
        for (std::size_t j = 0; j < i.size(); ++j) os << (j ? "," : "") << i[j].get<double>();
        c.init = os.str();
      } else {
        c.init = i.get<std::string>();
      }
    }
    read_if(doc, "out", c.out);
    read_if(doc, "cadence", c.cadence);
    read_if(doc, "workers", c.workers);
    read_if(doc, "baselines", c.baselines);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  return c;
}

std::string ExperimentConfig::hash() const {
  json doc = to_json();
  doc.erase("out");
  doc.erase("workers");
  const std::string text = doc.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buffer[17];
  std::snprintf(buffer, sizeof buffer, "%016llx", static_cast<unsigned long long>(h));
  return buffer;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidArgument("config '" + path + "': " + e.what());
  }
  return ExperimentConfig::from_json(doc);
}

void apply_overrides(ExperimentConfig& config, const ConfigOverrides& o) {
  if (o.seed) {
    const auto count = config.seeds.size();
    config.seeds.clear();
    for (std::uint64_t i = 0; i < count; ++i) config.seeds.push_back(*o.seed + i);
  }
  if (o.out) config.out = *o.out;
  if (o.agents) config.agents = {*o.agents};
  if (o.mu) config.mu = *o.mu;
  if (o.normalize) config.normalize = *o.normalize;
  if (o.policy) config.policies = {*o.policy == "asymmetric-mh" ? "mh" : *o.policy};
  if (o.topology) config.topology.kind = parse_topology_kind(*o.topology);
  if (o.workers) config.workers = *o.workers;
  if (o.iters) config.iters = *o.iters;
}

}  // namespace diffnet
