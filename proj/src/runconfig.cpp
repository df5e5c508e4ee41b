#include "lunet/runconfig.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace lunet {

RunConfig::RunConfig()
    : model(LUNetConfig::with_base(16)), tta(TTAPlan::standard()) {}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  tta.validate();
  if (threshold <= 0.0 || threshold >= 1.0)
    throw ConfigError("config: predict.threshold must lie in (0,1)");
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* want) {
  throw ConfigError("config: key '" + key + "': cannot parse '" + value +
                    "' as " + want);
}

int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const int64_t out = std::stoll(v, &pos);
    if (pos != v.size()) bad_value(key, v, "an integer");
    return out;
  } catch (const std::logic_error&) {
    bad_value(key, v, "an integer");
  }
}

uint64_t parse_uint(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const uint64_t out = std::stoull(v, &pos);
    if (pos != v.size() || v.front() == '-') bad_value(key, v, "an unsigned integer");
    return out;
  } catch (const std::logic_error&) {
    bad_value(key, v, "an unsigned integer");
  }
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) bad_value(key, v, "a real number");
    return out;
  } catch (const std::logic_error&) {
    bad_value(key, v, "a real number");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  bad_value(key, v, "a boolean (true/false)");
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& key, const std::string& v,
                          Parse parse) {
  std::vector<T> out;
  std::istringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) bad_value(key, v, "a comma-separated list");
    out.push_back(parse(key, item));
  }
  if (out.empty()) bad_value(key, v, "a comma-separated list");
  return out;
}

}  // namespace

RunConfig parse_run_config_text(const std::string& text,
                                const std::string& origin) {
  std::map<std::string, std::string> kv;
  {
    std::istringstream in(text);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config '" + origin + "' line " +
                          std::to_string(lineno) + ": expected `key = value`");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty() || value.empty())
        throw ConfigError("config '" + origin + "' line " +
                          std::to_string(lineno) + ": empty key or value");
      if (!kv.emplace(key, value).second)
        throw ConfigError("config '" + origin + "': duplicate key '" + key +
                          "'");
    }
  }

  RunConfig cfg;
  int base_channels = -1;
  bool explicit_enc = false, explicit_dec = false;

  for (const auto& [key, v] : kv) {
    if (key == "seed") {
      cfg.seed = parse_uint(key, v);
    } else if (key == "model.depth") {
      cfg.model.depth = static_cast<int>(parse_int(key, v));
    } else if (key == "model.base_channels") {
      base_channels = static_cast<int>(parse_int(key, v));
    } else if (key == "model.encoder_channels") {
      cfg.model.encoder_channels = parse_list<int>(
          key, v, [](const std::string& k, const std::string& s) {
            return static_cast<int>(parse_int(k, s));
          });
      explicit_enc = true;
    } else if (key == "model.decoder_channels") {
      cfg.model.decoder_channels = parse_list<int>(
          key, v, [](const std::string& k, const std::string& s) {
            return static_cast<int>(parse_int(k, s));
          });
      explicit_dec = true;
    } else if (key == "model.kernel_size") {
      cfg.model.kernel_size = static_cast<int>(parse_int(key, v));
    } else if (key == "model.dilation_rate") {
      cfg.model.dilation_rate = static_cast<int>(parse_int(key, v));
    } else if (key == "model.dropout_rate") {
      cfg.model.dropout_rate = parse_real(key, v);
    } else if (key == "model.tail_blocks") {
      cfg.model.tail_blocks = static_cast<int>(parse_int(key, v));
    } else if (key == "model.in_channels") {
      cfg.model.in_channels = static_cast<int>(parse_int(key, v));
    } else if (key == "model.out_channels") {
      cfg.model.out_channels = static_cast<int>(parse_int(key, v));
    } else if (key == "model.ddcb_sum_merge") {
      cfg.model.ddcb_sum_merge = parse_bool(key, v);
    } else if (key == "loss.lambda1") {
      cfg.train.loss.weights.lambda1 = parse_real(key, v);
    } else if (key == "loss.lambda2") {
      cfg.train.loss.weights.lambda2 = parse_real(key, v);
    } else if (key == "loss.lambda3") {
      cfg.train.loss.weights.lambda3 = parse_real(key, v);
    } else if (key == "loss.clamp_eps") {
      cfg.train.loss.clamp_eps = parse_real(key, v);
    } else if (key == "loss.smooth_eps") {
      cfg.train.loss.smooth_eps = parse_real(key, v);
    } else if (key == "loss.skeleton_iters") {
      cfg.train.loss.skeleton_iters = static_cast<int>(parse_int(key, v));
    } else if (key == "loss.gradient_weight") {
      cfg.train.loss.gradient_weight = parse_real(key, v);
    } else if (key == "train.epochs") {
      cfg.train.epochs = parse_int(key, v);
    } else if (key == "train.batch_size") {
      cfg.train.batch_size = parse_int(key, v);
    } else if (key == "train.learning_rate") {
      cfg.train.learning_rate = parse_real(key, v);
    } else if (key == "train.beta1") {
      cfg.train.beta1 = parse_real(key, v);
    } else if (key == "train.beta2") {
      cfg.train.beta2 = parse_real(key, v);
    } else if (key == "train.epsilon") {
      cfg.train.epsilon = parse_real(key, v);
    } else if (key == "train.augment") {
      cfg.train.augment_train = parse_bool(key, v);
    } else if (key == "augment.flip_prob") {
      cfg.train.augment.flip_prob = parse_real(key, v);
    } else if (key == "augment.min_size") {
      cfg.train.augment.min_size = parse_int(key, v);
    } else if (key == "augment.max_size") {
      cfg.train.augment.max_size = parse_int(key, v);
    } else if (key == "augment.pad_multiple") {
      cfg.train.augment.pad_multiple = parse_int(key, v);
    } else if (key == "augment.color_lo") {
      cfg.train.augment.color_lo = parse_real(key, v);
    } else if (key == "augment.color_hi") {
      cfg.train.augment.color_hi = parse_real(key, v);
    } else if (key == "augment.hue_shift") {
      cfg.train.augment.hue_shift = parse_real(key, v);
    } else if (key == "tta.enabled") {
      cfg.tta_enabled = parse_bool(key, v);
    } else if (key == "tta.angles") {
      cfg.tta.angles = parse_list<double>(key, v, parse_real);
    } else if (key == "tta.transpose") {
      cfg.tta.include_transpose = parse_bool(key, v);
    } else if (key == "predict.threshold") {
      cfg.threshold = parse_real(key, v);
    } else if (key == "paths.manifest") {
      cfg.paths.manifest = v;
    } else if (key == "paths.colormap") {
      cfg.paths.colormap = v;
    } else if (key == "paths.checkpoint_dir") {
      cfg.paths.checkpoint_dir = v;
    } else if (key == "paths.output_dir") {
      cfg.paths.output_dir = v;
    } else {
      throw ConfigError("config '" + origin + "': unknown key '" + key + "'");
    }
  }

  if (base_channels >= 0 && (explicit_enc || explicit_dec))
    throw ConfigError(
        "config: model.base_channels conflicts with explicit channel lists");
  if (base_channels >= 0 || !explicit_enc) {
    const int base = base_channels >= 0 ? base_channels : 16;
    const LUNetConfig plan = LUNetConfig::with_base(base, cfg.model.depth);
    cfg.model.encoder_channels = plan.encoder_channels;
    if (!explicit_dec) cfg.model.decoder_channels = plan.decoder_channels;
  }

  cfg.train.seed = cfg.seed;
  cfg.train.checkpoint_dir = cfg.paths.checkpoint_dir;
  cfg.validate();
  return cfg;
}

RunConfig parse_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config_text(buf.str(), path);
}

}  // namespace lunet
