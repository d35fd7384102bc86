#include "cpcvae/config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "cpcvae/errors.hpp"

namespace cpcvae {

ModelKind parse_model_kind(const std::string& name) {
  if (name == "vae") return ModelKind::vae;
  if (name == "vae_then_mlp") return ModelKind::vae_then_mlp;
  if (name == "pc") return ModelKind::pc;
  if (name == "cpc") return ModelKind::cpc;
  if (name == "m2") return ModelKind::m2;
  throw ConfigError("unknown model kind '" + name + "'");
}

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::vae: return "vae";
    case ModelKind::vae_then_mlp: return "vae_then_mlp";
    case ModelKind::pc: return "pc";
    case ModelKind::cpc: return "cpc";
    case ModelKind::m2: return "m2";
  }
  return "?";
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE)
    throw ConfigError("key '" + key + "': '" + v + "' is not a number");
  return d;
}

long long to_int(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const long long n = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE)
    throw ConfigError("key '" + key + "': '" + v + "' is not an integer");
  return n;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  const long long n = to_int(key, v);
  if (n < 0) throw ConfigError("key '" + key + "' must be nonnegative");
  return static_cast<std::size_t>(n);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<std::size_t> to_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_size(key, trim(item)));
  if (out.empty()) throw ConfigError("key '" + key + "' needs a comma-separated list");
  return out;
}

std::string fmt(double d) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  return buf;
}

std::string fmt(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Field {
  std::string key;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

#define CPCVAE_DOUBLE(name, member)                                                        \
  Field {                                                                                  \
    name, [](TrainConfig& c, const std::string& v) { c.member = to_double(name, v); },    \
        [](const TrainConfig& c) { return fmt(c.member); }                                 \
  }
#define CPCVAE_SIZE(name, member)                                                          \
  Field {                                                                                  \
    name, [](TrainConfig& c, const std::string& v) { c.member = to_size(name, v); },      \
        [](const TrainConfig& c) { return std::to_string(c.member); }                      \
  }
#define CPCVAE_BOOL(name, member)                                                          \
  Field {                                                                                  \
    name, [](TrainConfig& c, const std::string& v) { c.member = to_bool(name, v); },      \
        [](const TrainConfig& c) { return std::string(c.member ? "true" : "false"); }      \
  }
#define CPCVAE_LIST(name, member)                                                          \
  Field {                                                                                  \
    name, [](TrainConfig& c, const std::string& v) { c.member = to_list(name, v); },      \
        [](const TrainConfig& c) { return fmt(c.member); }                                 \
  }
#define CPCVAE_STRING(name, member)                                                        \
  Field {                                                                                  \
    name, [](TrainConfig& c, const std::string& v) { c.member = v; },                     \
        [](const TrainConfig& c) { return c.member; }                                      \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"model.kind", [](TrainConfig& c, const std::string& v) { c.model = parse_model_kind(v); },
            [](const TrainConfig& c) { return to_string(c.model); }},
      CPCVAE_SIZE("model.latent_dim", latent_dim),
      CPCVAE_LIST("model.encoder_hidden", encoder_hidden),
      CPCVAE_LIST("model.decoder_hidden", decoder_hidden),
      CPCVAE_LIST("model.predictor_hidden", predictor_hidden),
      Field{"model.activation", [](TrainConfig& c, const std::string& v) { c.activation = parse_activation(v); },
            [](const TrainConfig& c) { return to_string(c.activation); }},
      Field{"model.likelihood", [](TrainConfig& c, const std::string& v) { c.likelihood = parse_likelihood(v); },
            [](const TrainConfig& c) { return to_string(c.likelihood); }},
      CPCVAE_BOOL("model.spatial", use_spatial),
      CPCVAE_DOUBLE("spatial.translate_x", spatial.translate_x),
      CPCVAE_DOUBLE("spatial.translate_y", spatial.translate_y),
      CPCVAE_DOUBLE("spatial.rotation", spatial.rotation),
      CPCVAE_DOUBLE("spatial.shear", spatial.shear),
      CPCVAE_DOUBLE("spatial.scale_x", spatial.scale_x),
      CPCVAE_DOUBLE("spatial.scale_y", spatial.scale_y),
      CPCVAE_DOUBLE("spatial.pad_fraction", spatial.pad_fraction),
      CPCVAE_BOOL("spatial.clamp_to_canvas", spatial.clamp_to_canvas),
      CPCVAE_BOOL("spatial.predictor_appearance_only", spatial.predictor_appearance_only),
      CPCVAE_DOUBLE("objective.lambda", mult.lambda),
      CPCVAE_DOUBLE("objective.gamma", mult.gamma),
      CPCVAE_DOUBLE("objective.agg_weight", mult.agg_weight),
      CPCVAE_DOUBLE("objective.l2_weight", mult.l2_weight),
      CPCVAE_DOUBLE("objective.entropy_weight", mult.entropy_weight),
      CPCVAE_DOUBLE("objective.beta", mult.beta),
      CPCVAE_BOOL("objective.stop_gradient_xbar", consistency.stop_gradient_xbar),
      CPCVAE_STRING("objective.pi", pi_source),
      CPCVAE_SIZE("objective.num_mc", num_mc),
      CPCVAE_DOUBLE("m2.alpha", m2_alpha),
      CPCVAE_DOUBLE("m2.supervised_weight", m2_supervised_weight),
      CPCVAE_LIST("m2.discriminator_hidden", m2_discriminator_hidden),
      CPCVAE_BOOL("m2.plateau", m2_plateau),
      CPCVAE_DOUBLE("m2.lr_floor", m2_lr_floor),
      CPCVAE_DOUBLE("optim.lr", lr),
      CPCVAE_DOUBLE("optim.beta1", adam_beta1),
      CPCVAE_DOUBLE("optim.beta2", adam_beta2),
      CPCVAE_DOUBLE("optim.eps", adam_eps),
      CPCVAE_SIZE("train.batch_size", batch_size),
      CPCVAE_SIZE("train.steps", steps),
      CPCVAE_SIZE("train.mlp_steps", mlp_steps),
      CPCVAE_SIZE("train.patience_epochs", patience_epochs),
      CPCVAE_BOOL("train.early_stopping", early_stopping),
      CPCVAE_SIZE("train.eval_num_mc", eval_num_mc),
      CPCVAE_SIZE("train.seed", seed),
      CPCVAE_STRING("data.dataset", dataset),
      CPCVAE_SIZE("data.n", data_n),
      CPCVAE_DOUBLE("data.noise", data_noise),
      CPCVAE_SIZE("data.num_labeled", num_labeled),
      CPCVAE_DOUBLE("data.valid_frac", valid_frac),
      CPCVAE_DOUBLE("data.test_frac", test_frac),
      CPCVAE_BOOL("data.balanced", balanced),
      Field{"data.split_seed", [](TrainConfig& c, const std::string& v) { c.split_seed = to_int("data.split_seed", v); },
            [](const TrainConfig& c) { return std::to_string(c.split_seed); }},
      Field{"data.augment_translate_px",
            [](TrainConfig& c, const std::string& v) {
              c.augment_translate_px = static_cast<int>(to_size("data.augment_translate_px", v));
            },
            [](const TrainConfig& c) { return std::to_string(c.augment_translate_px); }},
      CPCVAE_STRING("data.idx_images", idx_images),
      CPCVAE_STRING("data.idx_labels", idx_labels),
      CPCVAE_STRING("data.idx_test_images", idx_test_images),
      CPCVAE_STRING("data.idx_test_labels", idx_test_labels),
      CPCVAE_SIZE("data.image_height", image_height),
      CPCVAE_SIZE("data.image_width", image_width),
      CPCVAE_SIZE("data.max_examples", max_examples),
  };
  return table;
}

#undef CPCVAE_DOUBLE
#undef CPCVAE_SIZE
#undef CPCVAE_BOOL
#undef CPCVAE_LIST
#undef CPCVAE_STRING

const Field& find_field(const std::string& canonical) {
  for (const auto& f : fields())
    if (f.key == canonical) return f;
  throw ConfigError("unknown config key '" + canonical + "'");
}

}  // namespace

std::vector<std::string> TrainConfig::keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.key);
  return out;
}

std::string TrainConfig::resolve_key(const std::string& key) {
  std::vector<std::string> matches;
  for (const auto& f : fields()) {
    if (f.key == key) return key;
    if (f.key.size() > key.size() && f.key.ends_with("." + key)) matches.push_back(f.key);
  }
  if (matches.size() == 1) return matches.front();
  if (matches.empty()) throw ConfigError("unknown config key '" + key + "'");
  std::string list;
  for (const auto& m : matches) list += " " + m;
  throw ConfigError("ambiguous config key '" + key + "' (matches" + list + ")");
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  find_field(resolve_key(trim(key))).set(*this, trim(value));
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  std::map<std::string, std::string> out;
  for (const auto& f : fields()) out[f.key] = f.get(*this);
  return out;
}

std::string TrainConfig::to_text() const {
  std::string s;
  for (const auto& [k, v] : to_map()) s += k + " = " + v + "\n";
  return s;
}

void TrainConfig::validate() const {
  mult.validate();
  if (latent_dim == 0) throw ConfigError("model.latent_dim must be positive");
  if (batch_size < 2 || batch_size % 2 != 0) throw ConfigError("train.batch_size must be even and at least 2");
  if (num_mc == 0) throw ConfigError("objective.num_mc must be at least 1");
  if (eval_num_mc == 0) throw ConfigError("train.eval_num_mc must be at least 1");
  if (pi_source != "empirical" && pi_source != "uniform")
    throw ConfigError("objective.pi must be 'empirical' or 'uniform'");
  if (dataset != "halfmoon" && dataset != "idx") throw ConfigError("data.dataset must be 'halfmoon' or 'idx'");
  if (!(lr > 0) || !std::isfinite(lr)) throw ConfigError("optim.lr must be positive");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1))
    throw ConfigError("optim.beta1 and optim.beta2 must lie in [0, 1)");
  if (!(adam_eps > 0)) throw ConfigError("optim.eps must be positive");
  if (!std::isfinite(m2_alpha) || m2_alpha < 0) throw ConfigError("m2.alpha must be finite and nonnegative");
  if (!std::isfinite(m2_supervised_weight) || m2_supervised_weight < 0)
    throw ConfigError("m2.supervised_weight must be finite and nonnegative");
  if (use_spatial) spatial.validate();
}

TrainConfig parse_config(const std::string& text, const std::string& origin) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    try {
      cfg.set(line.substr(0, eq), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

void apply_overrides(TrainConfig& cfg, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' must be key=value");
    cfg.set(o.substr(0, eq), o.substr(eq + 1));
  }
}

}  // namespace cpcvae
