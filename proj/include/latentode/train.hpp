#ifndef LATENTODE_TRAIN_HPP
#define LATENTODE_TRAIN_HPP

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "latentode/checkpoint.hpp"
#include "latentode/dataset.hpp"
#include "latentode/ode.hpp"
#include "latentode/optim.hpp"
#include "latentode/rng.hpp"

namespace latentode {

struct TrainConfig {
  std::string model_kind = "node";  // node | baseline
  long long epochs = 1;             // target epoch count (absolute, resume-aware)
  std::size_t batch_size = 64;
  double lr = 0.001;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // extra checkpoints every k epochs; 0 = end only
  double max_diverged_fraction = 0.01;

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch size must be >= 1");
    if (model_kind != "node" && model_kind != "baseline")
      throw std::invalid_argument("TrainConfig: unknown model kind '" + model_kind + "'");
  }
};

struct EpochRecord {
  long long epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double seconds = 0;
};

struct TrainDivergedError : std::runtime_error {
  TrainDivergedError(long long diverged, long long steps, long long epoch)
      : std::runtime_error("training aborted: " + std::to_string(diverged) + " of " +
                           std::to_string(steps) + " steps diverged in epoch " +
                           std::to_string(epoch)),
        diverged_steps(diverged),
        total_steps(steps),
        epoch(epoch) {}
  long long diverged_steps;
  long long total_steps;
  long long epoch;
};

// model-specific callbacks; the loop owns shuffling, batching and telemetry
struct TrainHooks {
  // run one optimizer step on the batch, return its training loss
  std::function<double(const std::vector<Tensor>&, const TimeGrid&, Rng&)> train_batch;
  // validation metric on a batch (-ELBO for node, RMSE for baseline)
  std::function<double(const std::vector<Tensor>&, const TimeGrid&)> eval_loss;
  // invoked at checkpoint epochs and once at the end
  std::function<void(long long)> on_checkpoint;
};

struct TrainResult {
  std::vector<EpochRecord> records;
  long long diverged_steps = 0;
};

inline TrainResult train(const TrainConfig& cfg, const Dataset& ds, Rng& rng, TrainHooks& hooks,
                         long long start_epoch = 0) {
  cfg.validate();
  const auto train_idx = ds.indices_of(Split::Train);
  const auto val_idx = ds.indices_of(Split::Val);
  if (train_idx.empty())
    throw std::invalid_argument("train: dataset has no train split assignment");
  const TimeGrid grid = ds.times;

  TrainResult result;
  for (long long epoch = start_epoch + 1; epoch <= cfg.epochs; ++epoch) {
    const auto tic = std::chrono::steady_clock::now();
    // the epoch order depends only on the RNG state at the top of the epoch,
    // so a resumed run shuffles exactly like the uninterrupted one
    std::vector<std::size_t> order = train_idx;
    rng.shuffle(order);

    double loss_acc = 0;
    std::size_t weight = 0;
    long long steps = 0, diverged = 0;
    for (std::size_t pos = 0; pos < order.size(); pos += cfg.batch_size) {
      const std::size_t end = std::min(pos + cfg.batch_size, order.size());
      std::vector<std::size_t> rows(order.begin() + pos, order.begin() + end);
      std::vector<Tensor> xs = make_batch(ds, rows, ds.seq_len);
      ++steps;
      try {
        const double loss = hooks.train_batch(xs, grid, rng);
        loss_acc += loss * static_cast<double>(rows.size());
        weight += rows.size();
      } catch (const IntegrationDivergedError&) {
        ++diverged;
      }
    }
    result.diverged_steps += diverged;
    if (static_cast<double>(diverged) > cfg.max_diverged_fraction * static_cast<double>(steps))
      throw TrainDivergedError(diverged, steps, epoch);

    double val_loss = std::numeric_limits<double>::quiet_NaN();
    if (!val_idx.empty()) {
      double acc = 0;
      std::size_t vweight = 0;
      for (std::size_t pos = 0; pos < val_idx.size(); pos += cfg.batch_size) {
        const std::size_t end = std::min(pos + cfg.batch_size, val_idx.size());
        std::vector<std::size_t> rows(val_idx.begin() + pos, val_idx.begin() + end);
        std::vector<Tensor> xs = make_batch(ds, rows, ds.seq_len);
        acc += hooks.eval_loss(xs, grid) * static_cast<double>(rows.size());
        vweight += rows.size();
      }
      val_loss = acc / static_cast<double>(vweight);
    }

    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - tic).count();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = weight ? loss_acc / static_cast<double>(weight)
                            : std::numeric_limits<double>::quiet_NaN();
    rec.val_loss = val_loss;
    rec.seconds = std::max(seconds, 1e-9);
    result.records.push_back(rec);

    if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 &&
        epoch != cfg.epochs)
      hooks.on_checkpoint(epoch);
  }
  if (hooks.on_checkpoint) hooks.on_checkpoint(cfg.epochs);
  return result;
}

// ---------------------------------------------------------------------------
// training log CSV: epoch,train_loss,val_loss,seconds
// ---------------------------------------------------------------------------

inline void write_train_log(const std::string& path, const std::vector<EpochRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("write_train_log: cannot write '" + path + "'");
  out << "epoch,train_loss,val_loss,seconds\n";
  for (const auto& r : records)
    out << r.epoch << "," << csv::fmt(r.train_loss) << "," << csv::fmt(r.val_loss) << ","
        << csv::fmt(r.seconds) << "\n";
}

inline std::vector<EpochRecord> read_train_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("read_train_log: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != "epoch,train_loss,val_loss,seconds")
    throw IoError("read_train_log: '" + path + "' is not a training log");
  std::vector<EpochRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto f = csv::split_line(line);
    if (f.size() != 4)
      throw IoError("read_train_log: bad row " + std::to_string(line_no) + " in '" + path + "'");
    EpochRecord r;
    r.epoch = std::stoll(f[0]);
    const std::string where = "read_train_log: row " + std::to_string(line_no);
    r.train_loss = csv::parse_double(f[1], where);
    r.val_loss = csv::parse_double(f[2], where);
    r.seconds = csv::parse_double(f[3], where);
    out.push_back(r);
  }
  if (out.empty()) throw IoError("read_train_log: '" + path + "' has no records");
  return out;
}

}  // namespace latentode

#endif  // LATENTODE_TRAIN_HPP
