// latentode: config-driven CLI for dataset generation, training and evaluation
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "latentode/evaluate.hpp"
#include "latentode/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace latentode;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string default_out_root() {
  const char* env = std::getenv("LATENTODE_OUT");
  return env && *env ? env : "runs";
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw UsageError("config file '" + path + "': " + e.what());
  }
  if (!j.is_object()) throw UsageError("config file '" + path + "' must hold a JSON object");
  return j;
}

// overlay file values onto options not given on the command line
class ConfigOverlay {
 public:
  explicit ConfigOverlay(const json* j) : j_(j) {}

  template <class T>
  void field(const std::string& key, const CLI::Option* opt, T& var) {
    keys_.insert(key);
    if (!j_ || opt->count() > 0 || !j_->contains(key)) return;
    try {
      var = j_->at(key).get<T>();
    } catch (const json::exception& e) {
      throw UsageError("config key '" + key + "': " + e.what());
    }
  }

  void finish() const {
    if (!j_) return;
    for (const auto& [key, value] : j_->items())
      if (!keys_.count(key)) throw UsageError("unknown config key '" + key + "'");
  }

 private:
  const json* j_;
  std::set<std::string> keys_;
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
}

std::vector<std::string> split_csv_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// --------------------------------------------------------------------------
// generate
// --------------------------------------------------------------------------

struct GenerateArgs {
  std::string kind;
  std::size_t n = 500;
  std::size_t seq_len = 300;
  std::size_t days = 68;
  double noise = 0.05;
  std::string mix = "1";
  std::string solar_csv;
  std::uint64_t seed = 1;
  std::string out;
  std::string config_path;
};

std::vector<SpringKind> parse_mix(const std::string& mix) {
  std::vector<SpringKind> kinds;
  for (const auto& tok : split_csv_list(mix)) {
    if (tok == "1")
      kinds.push_back(SpringKind::Undamped);
    else if (tok == "2")
      kinds.push_back(SpringKind::Damped);
    else if (tok == "3")
      kinds.push_back(SpringKind::ExpDamped);
    else
      throw UsageError("unknown spring kind '" + tok + "' in --mix (expected 1, 2 or 3)");
  }
  if (kinds.empty()) throw UsageError("--mix must name at least one spring kind");
  return kinds;
}

int run_generate(GenerateArgs a) {
  if (a.out.empty()) throw UsageError("--out directory is required");
  Dataset ds;
  json resolved{{"kind", a.kind}, {"seed", a.seed}, {"out", a.out}};
  if (a.kind == "spiral") {
    ds = gen_spirals(a.n, a.seq_len, a.noise, Rng::derive(a.seed, "data"));
    resolved["n"] = a.n;
    resolved["seq-len"] = a.seq_len;
    resolved["noise"] = a.noise;
  } else if (a.kind == "spring") {
    ds = gen_springs(parse_mix(a.mix), a.n, Rng::derive(a.seed, "data"));
    resolved["n"] = a.n;
    resolved["mix"] = a.mix;
  } else if (a.kind == "solar") {
    if (!a.solar_csv.empty()) {
      ds = load_solar_csv(a.solar_csv);
      resolved["solar-csv"] = a.solar_csv;
    } else {
      ds = gen_synthetic_solar(a.days, Rng::derive(a.seed, "data"));
      resolved["days"] = a.days;
    }
  } else {
    throw UsageError("unknown dataset kind '" + a.kind + "' (expected spiral, spring or solar)");
  }
  ds = split_dataset(std::move(ds), Rng::derive(a.seed, "split"));

  fs::create_directories(a.out);
  save_bundle(ds, a.out);
  json manifest = resolved;
  manifest.erase("out");  // manifest describes the data, not its destination
  manifest["num_data"] = ds.num_data;
  manifest["seq_len"] = ds.seq_len;
  manifest["generator_version"] = 1;
  write_text(a.out + "/manifest.json", manifest.dump(2) + "\n");
  write_text(a.out + "/resolved_config.json", resolved.dump(2) + "\n");
  std::cout << "wrote " << ds.num_data << " samples (" << ds.seq_len << " steps) to " << a.out
            << "\n";
  return 0;
}

// --------------------------------------------------------------------------
// train
// --------------------------------------------------------------------------

struct TrainArgs {
  std::string model = "node";
  std::string data;
  std::string out;
  long long epochs = 100;
  std::size_t batch = 64;
  double lr = 0.001;
  std::uint64_t seed = 1;
  std::size_t subsample = 0;  // 0 = full sequence
  std::string arch = "auto";
  std::string encoder;  // rnn|lstm override
  std::size_t encoder_hidden = 0;
  std::size_t latent_dim = 0;
  std::size_t field_hidden = 0;
  std::size_t field_layers = 0;
  std::string field_activation;
  std::size_t readout_hidden = 0;
  std::string readout_activation;
  double obs_std = 0;
  int substeps = 0;
  std::size_t hidden_size = 0;  // baseline override
  std::size_t num_layers = 0;   // baseline override
  int checkpoint_every = 0;
  std::string resume;
  std::string config_path;
};

std::string dataset_kind_of(const std::string& data_dir) {
  const std::string manifest = data_dir + "/manifest.json";
  std::ifstream in(manifest);
  if (!in) return "spring";
  json j;
  try {
    in >> j;
  } catch (const json::exception&) {
    return "spring";
  }
  return j.value("kind", "spring");
}

LatentOdeConfig resolve_node_arch(const TrainArgs& a) {
  std::string base = a.arch;
  if (base == "auto") base = dataset_kind_of(a.data);
  LatentOdeConfig cfg;
  if (base == "spiral")
    cfg = LatentOdeConfig::spiral();
  else if (base == "spring")
    cfg = LatentOdeConfig::spring();
  else if (base == "solar")
    cfg = LatentOdeConfig::solar();
  else
    throw UsageError("unknown --arch '" + base + "' (expected auto, spiral, spring or solar)");
  if (!a.encoder.empty()) {
    if (a.encoder == "rnn")
      cfg.encoder_kind = LatentOdeConfig::EncoderKind::Rnn;
    else if (a.encoder == "lstm")
      cfg.encoder_kind = LatentOdeConfig::EncoderKind::Lstm;
    else
      throw UsageError("unknown --encoder '" + a.encoder + "' (expected rnn or lstm)");
  }
  if (a.encoder_hidden) cfg.encoder_hidden = a.encoder_hidden;
  if (a.latent_dim) cfg.latent_dim = a.latent_dim;
  if (a.field_hidden) cfg.field_hidden = a.field_hidden;
  if (a.field_layers) cfg.field_hidden_layers = a.field_layers;
  if (!a.field_activation.empty()) cfg.field_activation = parse_activation(a.field_activation);
  if (a.readout_hidden) cfg.readout_hidden = a.readout_hidden;
  if (!a.readout_activation.empty())
    cfg.readout_activation = parse_activation(a.readout_activation);
  if (a.obs_std > 0) cfg.observation_std = a.obs_std;
  if (a.substeps > 0) cfg.substeps = a.substeps;
  cfg.validate();
  return cfg;
}

// fully resolved run config, usable again via --config (keys = flag names)
json resolved_train_json(const TrainArgs& a, const LatentOdeConfig* node,
                         const BaselineConfig* baseline) {
  json r{{"model", a.model},     {"data", a.data},
         {"out", a.out},         {"epochs", a.epochs},
         {"batch", a.batch},     {"lr", a.lr},
         {"seed", a.seed},       {"subsample", a.subsample},
         {"checkpoint-every", a.checkpoint_every}};
  if (node) {
    r["arch"] = "auto";
    r["encoder"] = node->encoder_kind == LatentOdeConfig::EncoderKind::Lstm ? "lstm" : "rnn";
    r["encoder-hidden"] = node->encoder_hidden;
    r["latent-dim"] = node->latent_dim;
    r["field-hidden"] = node->field_hidden;
    r["field-layers"] = node->field_hidden_layers;
    r["field-activation"] = activation_name(node->field_activation);
    r["readout-hidden"] = node->readout_hidden;
    r["readout-activation"] = activation_name(node->readout_activation);
    r["obs-std"] = node->observation_std;
    r["substeps"] = node->substeps;
  }
  if (baseline) {
    r["hidden-size"] = baseline->hidden_size;
    r["num-layers"] = baseline->num_layers;
  }
  return r;
}

int run_train(TrainArgs a) {
  if (a.data.empty()) throw UsageError("--data directory is required");
  if (!fs::exists(a.data + "/meta.csv"))
    throw UsageError("dataset not found at '" + a.data + "' (missing meta.csv)");
  if (a.out.empty()) throw UsageError("--out directory is required");
  if (a.model != "node" && a.model != "baseline")
    throw UsageError("unknown --model '" + a.model + "' (expected node or baseline)");

  Dataset full = load_bundle(a.data);
  Dataset observed = a.subsample > 0 ? subsample(full, a.subsample).observed : full;
  if (observed.indices_of(Split::Train).empty())
    throw UsageError("dataset at '" + a.data + "' has no train split");

  TrainConfig tcfg;
  tcfg.model_kind = a.model;
  tcfg.epochs = a.epochs;
  tcfg.batch_size = a.batch;
  tcfg.lr = a.lr;
  tcfg.seed = a.seed;
  tcfg.checkpoint_every = a.checkpoint_every;
  tcfg.validate();

  fs::create_directories(a.out);
  const std::string ckpt_path = a.out + "/checkpoint.lode";
  const std::string log_path = a.out + "/train_log.csv";

  long long start_epoch = 0;
  std::vector<EpochRecord> prior_records;
  Rng rng(Rng::derive(a.seed, "train"));

  auto run_with = [&](auto& model, AdamState& adam, const KvMap& base_kv,
                      const json& resolved) {
    KvMap kv = base_kv;
    kv["dataset_dir"] = a.data;
    kv["subsample"] = std::to_string(a.subsample);
    kv["epochs"] = std::to_string(a.epochs);
    kv["batch"] = std::to_string(a.batch);
    kv["lr"] = csv::fmt(a.lr);
    kv["seed"] = std::to_string(a.seed);

    TrainHooks hooks;
    if constexpr (std::is_same_v<std::decay_t<decltype(model)>, LatentOdeModel>)
      hooks = node_hooks(model, adam);
    else
      hooks = baseline_hooks(model, adam);
    std::vector<EpochRecord> records = prior_records;
    hooks.on_checkpoint = [&](long long epoch) {
      save_checkpoint(ckpt_path, make_checkpoint(model.params(), adam, epoch, rng, kv));
    };

    if (start_epoch >= a.epochs) {
      std::cout << "checkpoint already at epoch " << start_epoch << ", nothing to train\n";
      return;
    }
    TrainResult res = train(tcfg, observed, rng, hooks, start_epoch);
    records.insert(records.end(), res.records.begin(), res.records.end());
    write_train_log(log_path, records);
    write_text(a.out + "/resolved_config.json", resolved.dump(2) + "\n");
    if (res.diverged_steps > 0)
      std::cout << "note: " << res.diverged_steps << " diverged steps were skipped\n";
    std::cout << "trained " << a.model << " to epoch " << a.epochs << "; final train loss "
              << records.back().train_loss << ", val loss " << records.back().val_loss << "\n";
  };

  if (!a.resume.empty()) {
    Checkpoint ckpt = load_checkpoint(a.resume);
    KvMap kv = kv_parse(ckpt.config_json);
    start_epoch = ckpt.epoch;
    if (fs::exists(log_path)) prior_records = read_train_log(log_path);
    if (!prior_records.empty() && prior_records.back().epoch > start_epoch)
      prior_records.resize(static_cast<std::size_t>(start_epoch));
    Rng restored(0);
    restored.restore(ckpt.rng_state);
    rng = restored;
    if (kv.at("model") == "node") {
      LatentOdeConfig arch = node_config_from_kv(kv);
      LatentOdeModel model = LatentOdeModel::with_params(arch, ckpt.params);
      AdamState adam = ckpt.adam;
      run_with(model, adam, node_config_kv(arch), resolved_train_json(a, &arch, nullptr));
    } else {
      BaselineConfig arch = baseline_config_from_kv(kv);
      LstmAutoencoder model = LstmAutoencoder::with_params(arch, ckpt.params);
      AdamState adam = ckpt.adam;
      run_with(model, adam, baseline_config_kv(arch), resolved_train_json(a, nullptr, &arch));
    }
    return 0;
  }

  if (a.model == "node") {
    LatentOdeConfig arch = resolve_node_arch(a);
    LatentOdeModel model(arch, Rng::derive(a.seed, "init"));
    AdamState adam = AdamState::for_params(model.params(), a.lr);
    run_with(model, adam, node_config_kv(arch), resolved_train_json(a, &arch, nullptr));
  } else {
    BaselineConfig arch;
    if (a.hidden_size) arch.hidden_size = a.hidden_size;
    if (a.num_layers) arch.num_layers = a.num_layers;
    arch.validate();
    LstmAutoencoder model(arch, Rng::derive(a.seed, "init"));
    AdamState adam = AdamState::for_params(model.params(), a.lr);
    run_with(model, adam, baseline_config_kv(arch), resolved_train_json(a, nullptr, &arch));
  }
  return 0;
}

// --------------------------------------------------------------------------
// eval
// --------------------------------------------------------------------------

struct EvalArgs {
  std::string root;
  std::string out;
  std::string experiments;
  bool rmse_table_flag = false;
  bool timing_flag = false;
  bool reconstruct_flag = false;
  bool latent_flag = false;
  std::string extrapolate = "-0.5,1.5";
  std::size_t extrap_points = 100;
  std::size_t sample = 0;
  std::string config_path;
};

struct LoadedRun {
  KvMap kv;
  Checkpoint ckpt;
};

LoadedRun load_run(const std::string& dir, const std::string& what) {
  const std::string path = dir + "/checkpoint.lode";
  if (!fs::exists(path)) throw UsageError("missing checkpoint for " + what + ": '" + path + "'");
  LoadedRun run;
  run.ckpt = load_checkpoint(path);
  run.kv = kv_parse(run.ckpt.config_json);
  return run;
}

Dataset observed_for_run(const std::string& root, const std::string& exp, const KvMap& kv) {
  std::string data_dir =
      kv.count("dataset_dir") ? kv.at("dataset_dir") : root + "/" + exp + "/data";
  if (!fs::exists(data_dir + "/meta.csv")) data_dir = root + "/" + exp + "/data";
  if (!fs::exists(data_dir + "/meta.csv"))
    throw UsageError("missing dataset for experiment '" + exp + "' at '" + data_dir + "'");
  Dataset full = load_bundle(data_dir);
  const std::size_t m = kv.count("subsample") ? std::stoul(kv.at("subsample")) : 0;
  return m > 0 ? subsample(full, m).observed : full;
}

int run_eval(EvalArgs a) {
  if (a.root.empty()) a.root = default_out_root();
  if (a.out.empty()) a.out = a.root;
  const auto experiments = split_csv_list(a.experiments);
  if (experiments.empty()) throw UsageError("--experiments must name at least one experiment");
  if (!(a.rmse_table_flag || a.timing_flag || a.reconstruct_flag || a.latent_flag))
    throw UsageError("nothing to do: pass --rmse, --timing, --reconstruct and/or --latent");
  fs::create_directories(a.out);

  if (a.rmse_table_flag) {
    std::vector<RmseRow> rows;
    for (const auto& exp : experiments) {
      LoadedRun node = load_run(a.root + "/" + exp + "/node", exp + " (node)");
      LoadedRun base = load_run(a.root + "/" + exp + "/baseline", exp + " (baseline)");
      Dataset obs = observed_for_run(a.root, exp, node.kv);
      LatentOdeModel nm =
          LatentOdeModel::with_params(node_config_from_kv(node.kv), node.ckpt.params);
      LstmAutoencoder bm =
          LstmAutoencoder::with_params(baseline_config_from_kv(base.kv), base.ckpt.params);
      const auto test_rows = obs.indices_of(Split::Test);
      RmseRow row;
      row.experiment = exp;
      row.node = mean_of(per_sample_rmse_node(nm, obs, test_rows));
      row.baseline = mean_of(per_sample_rmse_baseline(bm, obs, test_rows));
      rows.push_back(row);
    }
    write_rmse_table(a.out + "/rmse_table.csv", rows);
    std::cout << "wrote " << a.out << "/rmse_table.csv\n";
  }

  if (a.timing_flag) {
    std::vector<TimingRow> rows;
    for (const auto& exp : experiments) {
      TimingRow row;
      row.experiment = exp;
      row.node_seconds =
          mean_epoch_seconds(read_train_log(a.root + "/" + exp + "/node/train_log.csv"));
      row.baseline_seconds =
          mean_epoch_seconds(read_train_log(a.root + "/" + exp + "/baseline/train_log.csv"));
      rows.push_back(row);
    }
    write_timing_csv(a.out + "/timing.csv", rows);
    std::cout << "wrote " << a.out << "/timing.csv\n";
  }

  if (a.reconstruct_flag) {
    const auto span_parts = split_csv_list(a.extrapolate);
    if (span_parts.size() != 2) throw UsageError("--extrapolate expects 'lo,hi' span fractions");
    const double lo = std::stod(span_parts[0]), hi = std::stod(span_parts[1]);
    if (!(hi > lo)) throw UsageError("--extrapolate span must have hi > lo");
    if (a.extrap_points < 2) throw UsageError("--extrap-points must be >= 2");
    for (const auto& exp : experiments) {
      LoadedRun node = load_run(a.root + "/" + exp + "/node", exp + " (node)");
      Dataset obs = observed_for_run(a.root, exp, node.kv);
      LatentOdeModel nm =
          LatentOdeModel::with_params(node_config_from_kv(node.kv), node.ckpt.params);
      const auto test_rows = obs.indices_of(Split::Test);
      if (a.sample >= test_rows.size())
        throw UsageError("--sample " + std::to_string(a.sample) + " out of range (" +
                         std::to_string(test_rows.size()) + " test samples)");
      const std::size_t row = test_rows[a.sample];
      std::vector<Tensor> xs;
      for (const auto& x : make_batch(obs, {row}, obs.seq_len))
        xs.push_back(Tensor(Shape{2}, {x(0, 0), x(0, 1)}));
      const double t0 = obs.times.front();
      const double span = obs.times.back() - t0;
      TimeGrid extrap;
      for (std::size_t i = 0; i < a.extrap_points; ++i)
        extrap.push_back(t0 + lo * span +
                         (hi - lo) * span * static_cast<double>(i) /
                             static_cast<double>(a.extrap_points - 1));
      const std::string path = a.out + "/recon_" + exp + "_" + std::to_string(a.sample) + ".csv";
      export_reconstruction_node(path, nm, xs, obs.times, extrap);
      std::cout << "wrote " << path << "\n";
      const std::string base_dir = a.root + "/" + exp + "/baseline";
      if (fs::exists(base_dir + "/checkpoint.lode")) {
        LoadedRun base = load_run(base_dir, exp + " (baseline)");
        LstmAutoencoder bm =
            LstmAutoencoder::with_params(baseline_config_from_kv(base.kv), base.ckpt.params);
        const std::string bpath =
            a.out + "/recon_" + exp + "_" + std::to_string(a.sample) + "_baseline.csv";
        export_reconstruction_baseline(bpath, bm, xs, obs.times);
        std::cout << "wrote " << bpath << "\n";
      }
    }
  }

  if (a.latent_flag) {
    for (const auto& exp : experiments) {
      LoadedRun node = load_run(a.root + "/" + exp + "/node", exp + " (node)");
      Dataset obs = observed_for_run(a.root, exp, node.kv);
      LatentOdeModel nm =
          LatentOdeModel::with_params(node_config_from_kv(node.kv), node.ckpt.params);
      const std::string path = a.out + "/latent_" + exp + ".csv";
      PcaProjection proj = latent_scatter(path, nm, obs);
      std::cout << "wrote " << path << " (explained variance "
                << proj.explained_variance[0] + proj.explained_variance[1] << ")\n";
    }
  }

  json resolved{{"root", a.root},
                {"out", a.out},
                {"experiments", a.experiments},
                {"rmse", a.rmse_table_flag},
                {"timing", a.timing_flag},
                {"reconstruct", a.reconstruct_flag},
                {"latent", a.latent_flag},
                {"extrapolate", a.extrapolate},
                {"extrap-points", a.extrap_points},
                {"sample", a.sample}};
  write_text(a.out + "/resolved_config_eval.json", resolved.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latentode: latent-ODE VAE time series experiments"};
  app.require_subcommand(1);

  GenerateArgs g;
  CLI::App* gen = app.add_subcommand("generate", "generate a dataset bundle");
  auto* g_kind = gen->add_option("--kind", g.kind, "spiral | spring | solar");
  auto* g_n = gen->add_option("--n", g.n, "number of samples (spiral/spring)");
  auto* g_seq = gen->add_option("--seq-len", g.seq_len, "spiral sequence length");
  auto* g_days = gen->add_option("--days", g.days, "synthetic solar days");
  auto* g_noise = gen->add_option("--noise", g.noise, "spiral Gaussian noise std");
  auto* g_mix = gen->add_option("--mix", g.mix, "spring kinds, e.g. 1,2,3");
  auto* g_csv = gen->add_option("--solar-csv", g.solar_csv, "ingest a real solar CSV");
  auto* g_seed = gen->add_option("--seed", g.seed, "run seed");
  auto* g_out = gen->add_option("--out", g.out, "output dataset directory");
  gen->add_option("--config", g.config_path, "JSON config file (flags override)");

  TrainArgs t;
  CLI::App* tr = app.add_subcommand("train", "train a model on a dataset bundle");
  auto* t_model = tr->add_option("--model", t.model, "node | baseline");
  auto* t_data = tr->add_option("--data", t.data, "dataset directory");
  auto* t_out = tr->add_option("--out", t.out, "run output directory");
  auto* t_epochs = tr->add_option("--epochs", t.epochs, "target epoch count");
  auto* t_batch = tr->add_option("--batch", t.batch, "mini-batch size");
  auto* t_lr = tr->add_option("--lr", t.lr, "Adam learning rate");
  auto* t_seed = tr->add_option("--seed", t.seed, "run seed");
  auto* t_sub = tr->add_option("--subsample", t.subsample, "train on the first m steps");
  auto* t_arch = tr->add_option("--arch", t.arch, "auto | spiral | spring | solar");
  auto* t_enc = tr->add_option("--encoder", t.encoder, "rnn | lstm (node override)");
  auto* t_eh = tr->add_option("--encoder-hidden", t.encoder_hidden, "node encoder width");
  auto* t_ld = tr->add_option("--latent-dim", t.latent_dim, "latent dimension");
  auto* t_fh = tr->add_option("--field-hidden", t.field_hidden, "ODE field width");
  auto* t_fl = tr->add_option("--field-layers", t.field_layers, "ODE field hidden layers");
  auto* t_fa = tr->add_option("--field-activation", t.field_activation,
                              "ODE field activation (tanh|sigmoid|relu|elu)");
  auto* t_rh = tr->add_option("--readout-hidden", t.readout_hidden, "readout width");
  auto* t_ra = tr->add_option("--readout-activation", t.readout_activation,
                              "readout activation (tanh|sigmoid|relu|elu)");
  auto* t_os = tr->add_option("--obs-std", t.obs_std, "observation likelihood std");
  auto* t_ss = tr->add_option("--substeps", t.substeps, "RK4 substeps per interval");
  auto* t_hs = tr->add_option("--hidden-size", t.hidden_size, "baseline hidden size");
  auto* t_nl = tr->add_option("--num-layers", t.num_layers, "baseline stacked layers");
  auto* t_ck =
      tr->add_option("--checkpoint-every", t.checkpoint_every, "extra checkpoint every k epochs");
  auto* t_res = tr->add_option("--resume", t.resume, "resume from a checkpoint file");
  tr->add_option("--config", t.config_path, "JSON config file (flags override)");

  EvalArgs e;
  CLI::App* ev = app.add_subcommand("eval", "evaluate trained runs");
  auto* e_root =
      ev->add_option("--root", e.root, "experiment root (default $LATENTODE_OUT or runs)");
  auto* e_out = ev->add_option("--out", e.out, "report output directory");
  auto* e_exp = ev->add_option("--experiments", e.experiments, "comma-separated experiment names");
  auto* e_rmse = ev->add_flag("--rmse", e.rmse_table_flag, "write rmse_table.csv");
  auto* e_tim = ev->add_flag("--timing", e.timing_flag, "write timing.csv");
  auto* e_rec = ev->add_flag("--reconstruct", e.reconstruct_flag, "write reconstruction CSVs");
  auto* e_lat = ev->add_flag("--latent", e.latent_flag, "write latent projection CSVs");
  auto* e_ext = ev->add_option("--extrapolate", e.extrapolate, "extrapolation span 'lo,hi'");
  auto* e_pts = ev->add_option("--extrap-points", e.extrap_points, "extrapolation grid points");
  auto* e_smp = ev->add_option("--sample", e.sample, "test-split sample index");
  ev->add_option("--config", e.config_path, "JSON config file (flags override)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& help) {
    return app.exit(help);
  } catch (const CLI::ParseError& pe) {
    std::cerr << "usage error: " << pe.what() << "\n";
    return 2;
  }

  try {
    if (gen->parsed()) {
      json j;
      if (!g.config_path.empty()) j = load_json_file(g.config_path);
      ConfigOverlay ov(g.config_path.empty() ? nullptr : &j);
      ov.field("kind", g_kind, g.kind);
      ov.field("n", g_n, g.n);
      ov.field("seq-len", g_seq, g.seq_len);
      ov.field("days", g_days, g.days);
      ov.field("noise", g_noise, g.noise);
      ov.field("mix", g_mix, g.mix);
      ov.field("solar-csv", g_csv, g.solar_csv);
      ov.field("seed", g_seed, g.seed);
      ov.field("out", g_out, g.out);
      ov.finish();
      if (g.kind.empty()) throw UsageError("--kind is required");
      return run_generate(g);
    }
    if (tr->parsed()) {
      json j;
      if (!t.config_path.empty()) j = load_json_file(t.config_path);
      ConfigOverlay ov(t.config_path.empty() ? nullptr : &j);
      ov.field("model", t_model, t.model);
      ov.field("data", t_data, t.data);
      ov.field("out", t_out, t.out);
      ov.field("epochs", t_epochs, t.epochs);
      ov.field("batch", t_batch, t.batch);
      ov.field("lr", t_lr, t.lr);
      ov.field("seed", t_seed, t.seed);
      ov.field("subsample", t_sub, t.subsample);
      ov.field("arch", t_arch, t.arch);
      ov.field("encoder", t_enc, t.encoder);
      ov.field("encoder-hidden", t_eh, t.encoder_hidden);
      ov.field("latent-dim", t_ld, t.latent_dim);
      ov.field("field-hidden", t_fh, t.field_hidden);
      ov.field("field-layers", t_fl, t.field_layers);
      ov.field("field-activation", t_fa, t.field_activation);
      ov.field("readout-hidden", t_rh, t.readout_hidden);
      ov.field("readout-activation", t_ra, t.readout_activation);
      ov.field("obs-std", t_os, t.obs_std);
      ov.field("substeps", t_ss, t.substeps);
      ov.field("hidden-size", t_hs, t.hidden_size);
      ov.field("num-layers", t_nl, t.num_layers);
      ov.field("checkpoint-every", t_ck, t.checkpoint_every);
      ov.field("resume", t_res, t.resume);
      ov.finish();
      return run_train(t);
    }
    if (ev->parsed()) {
      json j;
      if (!e.config_path.empty()) j = load_json_file(e.config_path);
      ConfigOverlay ov(e.config_path.empty() ? nullptr : &j);
      ov.field("root", e_root, e.root);
      ov.field("out", e_out, e.out);
      ov.field("experiments", e_exp, e.experiments);
      ov.field("rmse", e_rmse, e.rmse_table_flag);
      ov.field("timing", e_tim, e.timing_flag);
      ov.field("reconstruct", e_rec, e.reconstruct_flag);
      ov.field("latent", e_lat, e.latent_flag);
      ov.field("extrapolate", e_ext, e.extrapolate);
      ov.field("extrap-points", e_pts, e.extrap_points);
      ov.field("sample", e_smp, e.sample);
      ov.finish();
      return run_eval(e);
    }
  } catch (const UsageError& ue) {
    std::cerr << "error: " << ue.what() << "\n";
    return 2;
  } catch (const IoError& io) {
    std::cerr << "error: " << io.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& ia) {
    std::cerr << "error: " << ia.what() << "\n";
    return 2;
  } catch (const TrainDivergedError& td) {
    std::cerr << "runtime failure: " << td.what() << "\n";
    return 1;
  } catch (const std::exception& ex) {
    std::cerr << "runtime failure: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
