#include "lunet/checkpoint.hpp"

#include <filesystem>
#include <fstream>
#include <limits>

#include "json.hpp"

namespace lunet {

using nlohmann::json;

void AdamState::init(LUNet& model) {
  m.clear();
  v.clear();
  step = 0;
  model.for_each_param([this](Tensor& w, Tensor&) {
    m.push_back(Tensor::like(w));
    v.push_back(Tensor::like(w));
  });
}

namespace {

constexpr char kMagic[9] = "LUNCKPT1";

json config_to_json(const LUNetConfig& cfg) {
  return json{{"depth", cfg.depth},
              {"encoder_channels", cfg.encoder_channels},
              {"decoder_channels", cfg.decoder_channels},
              {"kernel_size", cfg.kernel_size},
              {"dilation_rate", cfg.dilation_rate},
              {"dropout_rate", cfg.dropout_rate},
              {"tail_blocks", cfg.tail_blocks},
              {"in_channels", cfg.in_channels},
              {"out_channels", cfg.out_channels},
              {"ddcb_sum_merge", cfg.ddcb_sum_merge}};
}

LUNetConfig config_from_json(const json& j) {
  LUNetConfig cfg;
  cfg.depth = j.at("depth").get<int>();
  cfg.encoder_channels = j.at("encoder_channels").get<std::vector<int>>();
  cfg.decoder_channels = j.at("decoder_channels").get<std::vector<int>>();
  cfg.kernel_size = j.at("kernel_size").get<int>();
  cfg.dilation_rate = j.at("dilation_rate").get<int>();
  cfg.dropout_rate = j.at("dropout_rate").get<double>();
  cfg.tail_blocks = j.at("tail_blocks").get<int>();
  cfg.in_channels = j.at("in_channels").get<int>();
  cfg.out_channels = j.at("out_channels").get<int>();
  cfg.ddcb_sum_merge = j.at("ddcb_sum_merge").get<bool>();
  return cfg;
}

void write_doubles(std::ofstream& out, const Tensor& t) {
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
}

void read_doubles(std::ifstream& in, Tensor& t, const std::string& path) {
  in.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!in.good()) throw IoError("truncated checkpoint '" + path + "'");
}

json read_header(std::ifstream& in, const std::string& path) {
  char magic[8];
  in.read(magic, 8);
  if (!in.good() || std::string(magic, 8) != std::string(kMagic, 8))
    throw IoError("'" + path + "' is not a checkpoint");
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string head(len, '\0');
  in.read(head.data(), static_cast<std::streamsize>(len));
  if (!in.good()) throw IoError("truncated checkpoint header in '" + path + "'");
  try {
    return json::parse(head);
  } catch (const json::exception& e) {
    throw IoError("bad checkpoint header in '" + path + "': " + e.what());
  }
}

}  // namespace

void save_checkpoint(const std::string& path, LUNet& model,
                     const CheckpointMeta& meta, const AdamState* adam) {
  json header;
  header["format"] = "LUNCKPT1";
  header["config"] = config_to_json(model.config());
  header["epoch"] = meta.epoch;
  header["best_val_loss"] = meta.best_val_loss;
  header["best_epoch"] = meta.best_epoch;
  header["normalization"] = "unit";
  header["param_count"] = model.param_count();
  header["has_adam"] = adam != nullptr;
  if (adam)
    header["optimizer"] = json{{"name", "adam"},
                               {"learning_rate", adam->learning_rate},
                               {"beta1", adam->beta1},
                               {"beta2", adam->beta2},
                               {"epsilon", adam->epsilon},
                               {"step", adam->step}};
  const std::string head = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint '" + tmp + "'");
    out.write(kMagic, 8);
    const uint64_t len = head.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    model.for_each_param(
        [&out](Tensor& w, Tensor&) { write_doubles(out, w); });
    model.for_each_buffer([&out](Tensor& b) { write_doubles(out, b); });
    if (adam) {
      size_t n_params = 0;
      model.for_each_param([&n_params](Tensor&, Tensor&) { ++n_params; });
      if (adam->m.size() != n_params || adam->v.size() != n_params)
        throw ConfigError("save_checkpoint: Adam state does not match model");
      for (const Tensor& t : adam->m) write_doubles(out, t);
      for (const Tensor& t : adam->v) write_doubles(out, t);
    }
    if (!out.good()) throw IoError("failed writing checkpoint '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

std::unique_ptr<LUNet> load_checkpoint(const std::string& path,
                                       CheckpointMeta* meta,
                                       AdamState* adam) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  const json header = read_header(in, path);
  if (header.value("format", "") != "LUNCKPT1")
    throw IoError("'" + path + "' has unsupported format '" +
                  header.value("format", "") + "'");

  auto model = std::make_unique<LUNet>(config_from_json(header.at("config")));
  if (header.at("param_count").get<int64_t>() != model->param_count())
    throw IoError("checkpoint '" + path + "' declares " +
                  std::to_string(header.at("param_count").get<int64_t>()) +
                  " parameters but the config builds " +
                  std::to_string(model->param_count()));

  model->for_each_param(
      [&in, &path](Tensor& w, Tensor&) { read_doubles(in, w, path); });
  model->for_each_buffer([&in, &path](Tensor& b) { read_doubles(in, b, path); });

  if (meta) {
    meta->epoch = header.at("epoch").get<int64_t>();
    // JSON has no literal for infinity; an untouched best_val_loss lands as null
    const json& best = header.at("best_val_loss");
    meta->best_val_loss = best.is_null()
                              ? std::numeric_limits<double>::infinity()
                              : best.get<double>();
    meta->best_epoch = header.at("best_epoch").get<int64_t>();
  }
  const bool has_adam = header.at("has_adam").get<bool>();
  if (adam) {
    if (!has_adam)
      throw ConfigError("checkpoint '" + path +
                        "' stores no optimizer state to resume from");
    const json& opt = header.at("optimizer");
    adam->learning_rate = opt.at("learning_rate").get<double>();
    adam->beta1 = opt.at("beta1").get<double>();
    adam->beta2 = opt.at("beta2").get<double>();
    adam->epsilon = opt.at("epsilon").get<double>();
    adam->step = opt.at("step").get<int64_t>();
    adam->init(*model);
    adam->step = opt.at("step").get<int64_t>();  // init resets it
    for (Tensor& t : adam->m) read_doubles(in, t, path);
    for (Tensor& t : adam->v) read_doubles(in, t, path);
  }
  return model;
}

bool has_adam_state(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  return read_header(in, path).at("has_adam").get<bool>();
}

}  // namespace lunet
