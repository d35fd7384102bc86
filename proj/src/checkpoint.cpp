#include "cpcvae/checkpoint.hpp"

#include <fstream>

#include "json.hpp"

#include "cpcvae/errors.hpp"

namespace cpcvae {

using nlohmann::json;

std::vector<NamedTensor> snapshot_parameters(const ModelBase& model) {
  std::vector<NamedTensor> out;
  for (const auto* p : model.parameters()) out.push_back({p->name, p->shape, {p->value.begin(), p->value.end()}});
  return out;
}

void restore_parameters(ModelBase& model, const std::vector<NamedTensor>& values) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : values) by_name[t.name] = &t;
  for (auto* p : model.parameters()) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw FormatError("checkpoint lacks parameter '" + p->name + "'");
    const auto& t = *it->second;
    if (t.shape != p->shape || t.values.size() != p->size())
      throw FormatError("checkpoint parameter '" + p->name + "' has shape " + ad::to_string(t.shape) +
                        ", model expects " + ad::to_string(p->shape));
    for (std::size_t i = 0; i < p->size(); ++i) p->value[i] = static_cast<ad::Scalar>(t.values[i]);
  }
  if (by_name.size() != model.parameters().size())
    throw FormatError("checkpoint holds parameters the model does not have");
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  json j;
  j["format"] = kCheckpointFormat;
  j["version"] = ckpt.version;
  j["config"] = ckpt.config;
  j["step"] = ckpt.step;
  j["rng_state"] = ckpt.rng_state;
  j["extras"] = ckpt.extras;
  j["metrics"] = ckpt.metrics;
  auto& params = j["parameters"] = json::array();
  for (const auto& t : ckpt.parameters) params.push_back({{"name", t.name}, {"shape", t.shape}, {"values", t.values}});
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << j.dump() << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!j.is_object() || j.value("format", "") != kCheckpointFormat)
    throw FormatError(path.string() + " is not a checkpoint file");
  Checkpoint c;
  try {
    c.version = j.at("version").get<int>();
    if (c.version != kCheckpointVersion)
      throw FormatError("unsupported checkpoint version " + std::to_string(c.version));
    c.config = j.at("config").get<std::map<std::string, std::string>>();
    c.step = j.at("step").get<std::uint64_t>();
    c.rng_state = j.at("rng_state").get<std::string>();
    c.extras = j.value("extras", std::map<std::string, std::vector<double>>{});
    c.metrics = j.value("metrics", std::map<std::string, double>{});
    for (const auto& p : j.at("parameters"))
      c.parameters.push_back({p.at("name").get<std::string>(), p.at("shape").get<ad::Shape>(),
                              p.at("values").get<std::vector<double>>()});
  } catch (const json::exception& e) {
    throw FormatError("malformed checkpoint " + path.string() + ": " + e.what());
  }
  return c;
}

}  // namespace cpcvae
