#ifndef LATENTODE_EXPERIMENT_HPP
#define LATENTODE_EXPERIMENT_HPP

#include <map>
#include <sstream>
#include <string>

#include "latentode/baseline.hpp"
#include "latentode/checkpoint.hpp"
#include "latentode/latent_ode.hpp"
#include "latentode/train.hpp"

namespace latentode {

// glue shared by the CLI and the test harnesses: training hooks per model
// kind, and the flat key=value config block embedded in checkpoints

inline TrainHooks node_hooks(LatentOdeModel& model, AdamState& adam) {
  TrainHooks hooks;
  hooks.train_batch = [&model, &adam](const std::vector<Tensor>& xs, const TimeGrid& grid,
                                      Rng& rng) {
    const std::size_t b = xs[0].rank() == 2 ? xs[0].shape()[0] : 1;
    Tensor eps(xs[0].rank() == 2 ? Shape{b, model.config().latent_dim}
                                 : Shape{model.config().latent_dim});
    for (auto& v : eps.values()) v = rng.normal();
    return model.train_step(xs, grid, adam, eps);
  };
  hooks.eval_loss = [&model](const std::vector<Tensor>& xs, const TimeGrid& grid) {
    return model.eval_loss(xs, grid);
  };
  return hooks;
}

inline TrainHooks baseline_hooks(LstmAutoencoder& model, AdamState& adam) {
  TrainHooks hooks;
  hooks.train_batch = [&model, &adam](const std::vector<Tensor>& xs, const TimeGrid&, Rng&) {
    return model.train_step(xs, adam);
  };
  hooks.eval_loss = [&model](const std::vector<Tensor>& xs, const TimeGrid&) {
    return model.eval_rmse(xs);
  };
  return hooks;
}

// ---------------------------------------------------------------------------
// key=value config block (checkpoint "structured text")
// ---------------------------------------------------------------------------

using KvMap = std::map<std::string, std::string>;

inline std::string kv_serialize(const KvMap& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

inline KvMap kv_parse(const std::string& text) {
  KvMap out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError("config block: malformed line '" + line + "'");
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

inline KvMap node_config_kv(const LatentOdeConfig& cfg) {
  KvMap kv;
  kv["model"] = "node";
  kv["encoder"] = cfg.encoder_kind == LatentOdeConfig::EncoderKind::Lstm ? "lstm" : "rnn";
  kv["encoder_hidden"] = std::to_string(cfg.encoder_hidden);
  kv["latent_dim"] = std::to_string(cfg.latent_dim);
  kv["field_layers"] = std::to_string(cfg.field_hidden_layers);
  kv["field_hidden"] = std::to_string(cfg.field_hidden);
  kv["field_activation"] = activation_name(cfg.field_activation);
  kv["readout_hidden"] = std::to_string(cfg.readout_hidden);
  kv["readout_activation"] = activation_name(cfg.readout_activation);
  kv["observation_std"] = csv::fmt(cfg.observation_std);
  kv["substeps"] = std::to_string(cfg.substeps);
  return kv;
}

inline LatentOdeConfig node_config_from_kv(const KvMap& kv) {
  LatentOdeConfig cfg;
  cfg.encoder_kind = kv.at("encoder") == "rnn" ? LatentOdeConfig::EncoderKind::Rnn
                                               : LatentOdeConfig::EncoderKind::Lstm;
  cfg.encoder_hidden = std::stoul(kv.at("encoder_hidden"));
  cfg.latent_dim = std::stoul(kv.at("latent_dim"));
  cfg.field_hidden_layers = std::stoul(kv.at("field_layers"));
  cfg.field_hidden = std::stoul(kv.at("field_hidden"));
  cfg.field_activation = parse_activation(kv.at("field_activation"));
  cfg.readout_hidden = std::stoul(kv.at("readout_hidden"));
  cfg.readout_activation = parse_activation(kv.at("readout_activation"));
  cfg.observation_std = std::stod(kv.at("observation_std"));
  cfg.substeps = std::stoi(kv.at("substeps"));
  cfg.validate();
  return cfg;
}

inline KvMap baseline_config_kv(const BaselineConfig& cfg) {
  KvMap kv;
  kv["model"] = "baseline";
  kv["num_layers"] = std::to_string(cfg.num_layers);
  kv["hidden_size"] = std::to_string(cfg.hidden_size);
  kv["encoded_dim"] = std::to_string(cfg.encoded_dim);
  return kv;
}

inline BaselineConfig baseline_config_from_kv(const KvMap& kv) {
  BaselineConfig cfg;
  cfg.num_layers = std::stoul(kv.at("num_layers"));
  cfg.hidden_size = std::stoul(kv.at("hidden_size"));
  cfg.encoded_dim = std::stoul(kv.at("encoded_dim"));
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// checkpoint glue
// ---------------------------------------------------------------------------

inline Checkpoint make_checkpoint(const ParamSet& params, const AdamState& adam, long long epoch,
                                  const Rng& rng, const KvMap& config) {
  Checkpoint ckpt;
  ckpt.config_json = kv_serialize(config);
  ckpt.epoch = epoch;
  ckpt.params = params.zeros_like();
  for (std::size_t i = 0; i < params.size(); ++i)
    ckpt.params.tensor(i).values() = params.tensor(i).values();
  ckpt.adam = AdamState{};
  ckpt.adam.lr = adam.lr;
  ckpt.adam.beta1 = adam.beta1;
  ckpt.adam.beta2 = adam.beta2;
  ckpt.adam.eps = adam.eps;
  ckpt.adam.t = adam.t;
  ckpt.adam.m = adam.m.zeros_like();
  ckpt.adam.v = adam.v.zeros_like();
  for (std::size_t i = 0; i < adam.m.size(); ++i) {
    ckpt.adam.m.tensor(i).values() = adam.m.tensor(i).values();
    ckpt.adam.v.tensor(i).values() = adam.v.tensor(i).values();
  }
  ckpt.rng_state = rng.state();
  return ckpt;
}

}  // namespace latentode

#endif  // LATENTODE_EXPERIMENT_HPP
