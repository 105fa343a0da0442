#pragma once

#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>
#include <optional>

#include "duffin/dataset.hpp"
#include "duffin/model.hpp"
#include "duffin/optim.hpp"
#include "duffin/quantizer.hpp"

namespace duffin {

struct TrainConfig {
  int epochs = 200;         // desk-scale default
  int batch_size = 32;
  double lr_min = 5e-5;
  double lr_max = 2e-3;
  int warmup_epochs = 30;
  uint64_t seed = 1;
  double val_fraction = 0.1;  // 0 evaluates on the training split itself
  std::optional<double> target_nmse_db;  // records the first epoch at or below

  void validate() const {
    if (epochs < 0) throw config_error("train: negative epoch count");
    if (epochs >= 1) {
      if (batch_size < 1) throw config_error("train: batch size must be positive");
      if (!(lr_min > 0) || !(lr_min < lr_max)) throw config_error("train: need 0 < lr_min < lr_max");
      if (warmup_epochs < 1 || warmup_epochs >= epochs)
        throw config_error("train: need 0 < warmup < epochs");
    }
    if (val_fraction < 0 || val_fraction >= 1) throw config_error("train: bad validation fraction");
  }
};

// Warm-up then cosine annealing. Epochs are 1-based. Before the warm-up
// epoch the rate ramps linearly from lr_min to lr_max; from there it follows
// the half-cosine down to lr_min at the final epoch.
inline double lr_at_epoch(int epoch, const TrainConfig& cfg) {
  if (epoch < 1 || epoch > cfg.epochs) throw config_error("lr_at_epoch: epoch out of range");
  if (epoch < cfg.warmup_epochs) {
    const double span = static_cast<double>(cfg.warmup_epochs - 1);
    return cfg.lr_min + (cfg.lr_max - cfg.lr_min) * static_cast<double>(epoch - 1) / span;
  }
  const double phase = M_PI * static_cast<double>(epoch - cfg.warmup_epochs) /
                       static_cast<double>(std::max(1, cfg.epochs - cfg.warmup_epochs));
  return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(phase));
}

struct EpochRecord {
  int epoch;
  double lr;
  double train_loss;
  double val_nmse_db;
  double val_cosine;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  double final_train_nmse_db = 0.0;
  double final_val_nmse_db = 0.0;
  double best_val_nmse_db = 0.0;
  std::optional<int> epochs_to_target;
  double wall_seconds = 0.0;
};

struct EvalResult {
  double nmse_db = 0.0;
  double nmse_linear = 0.0;
  double cosine = 0.0;
};

namespace detail {

inline Tensor<float> stack_images(const std::vector<Tensor<float>>& images,
                                  const std::vector<int>& idx, int lo, int hi) {
  const Shape& s = images[0].shape();
  Tensor<float> batch({hi - lo, s[0], s[1], s[2]});
  const size_t stride = images[0].numel();
  for (int i = lo; i < hi; ++i)
    std::copy(images[idx[i]].vec().begin(), images[idx[i]].vec().end(),
              batch.data() + static_cast<size_t>(i - lo) * stride);
  return batch;
}

// Runs the autoencoder in inference mode over the listed samples and
// returns the reconstructed normalized images.
inline std::vector<Tensor<float>> reconstruct_images(const Model<float>& model, const Dataset& ds,
                                                     const std::vector<int>& idx, int batch_size,
                                                     const QuantizerCalibration* quant) {
  std::vector<Tensor<float>> out(idx.size());
  if (batch_size < 1) batch_size = 32;
  for (size_t lo = 0; lo < idx.size(); lo += static_cast<size_t>(batch_size)) {
    const size_t hi = std::min(idx.size(), lo + static_cast<size_t>(batch_size));
    std::vector<int> window(idx.begin() + static_cast<long>(lo), idx.begin() + static_cast<long>(hi));
    Tensor<float> batch = stack_images(ds.images, window, 0, static_cast<int>(window.size()));
    auto code = model.encode(Var<float>::leaf(std::move(batch), false), Mode::infer);
    Tensor<float> code_vals = code.value();
    if (quant)
      for (auto& v : code_vals.vec()) v = quant->roundtrip(v);
    auto rec = model.decode(Var<float>::leaf(std::move(code_vals), false), Mode::infer);
    const int ns = ds.scenario.ns, nt = ds.scenario.nt;
    const size_t stride = static_cast<size_t>(ns) * nt * 2;
    for (size_t i = 0; i < window.size(); ++i) {
      Tensor<float> img({ns, nt, 2});
      std::copy(rec.value().data() + i * stride, rec.value().data() + (i + 1) * stride,
                img.data());
      out[lo + i] = std::move(img);
    }
  }
  return out;
}

inline double nmse_db_over(const Model<float>& model, const Dataset& ds,
                           const std::vector<int>& idx, int batch_size,
                           const QuantizerCalibration* quant) {
  auto rec = reconstruct_images(model, ds, idx, batch_size, quant);
  std::vector<CMat> truth, est;
  truth.reserve(idx.size());
  est.reserve(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) {
    truth.push_back(denormalize(ds.images[idx[i]], ds.meta));
    est.push_back(denormalize(rec[i], ds.meta));
  }
  return nmse_db(nmse(truth, est));
}

}  // namespace detail

// Inference-mode evaluation: NMSE over denormalized truncated matrices and
// cosine similarity over reconstructed full spatial-frequency channels.
inline EvalResult evaluate(const Model<float>& model, const Dataset& ds,
                           const QuantizerCalibration* quant = nullptr, int batch_size = 32) {
  if (ds.count() == 0) throw config_error("evaluate: empty dataset");
  std::vector<int> idx(ds.count());
  std::iota(idx.begin(), idx.end(), 0);
  auto rec = detail::reconstruct_images(model, ds, idx, batch_size, quant);

  std::vector<CMat> truth, est, full_est;
  for (int i = 0; i < ds.count(); ++i) {
    truth.push_back(denormalize(ds.images[i], ds.meta));
    est.push_back(denormalize(rec[i], ds.meta));
    full_est.push_back(reconstruct_full(rec[i], ds.meta, ds.offset, ds.scenario.nc));
  }
  auto full_truth = ds.regenerate_full();

  EvalResult out;
  out.nmse_linear = nmse(truth, est);
  out.nmse_db = nmse_db(out.nmse_linear);
  out.cosine = cosine_similarity(full_truth, full_est).beta;
  return out;
}

// Supervised training of the reconstruction loss with Adam and the warm-up
// schedule. When `quant` is set the straight-through gate sits between
// encoder and decoder (stage-two retraining).
inline TrainResult train(Model<float>& model, const Dataset& ds, const TrainConfig& cfg,
                         const QuantizerCalibration* quant = nullptr) {
  cfg.validate();
  if (ds.count() < 1) throw config_error("train: empty dataset");
  if (ds.scenario.ns != model.config.ns || ds.scenario.nt != model.config.nt)
    throw config_error("train: dataset geometry does not match the model");
  const auto t0 = std::chrono::steady_clock::now();

  Rng rng(cfg.seed);
  std::vector<int> order(ds.count());
  std::iota(order.begin(), order.end(), 0);
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.below(i)]);
  const int val_count = static_cast<int>(std::floor(cfg.val_fraction * ds.count()));
  std::vector<int> val_idx(order.end() - val_count, order.end());
  std::vector<int> train_idx(order.begin(), order.end() - val_count);
  if (val_idx.empty()) val_idx = train_idx;  // metrics on the training split

  // ground truth for the per-epoch validation metrics
  std::vector<CMat> val_truth_full;
  {
    auto full = ds.regenerate_full();
    for (int i : val_idx) val_truth_full.push_back(full[i]);
  }
  std::vector<CMat> val_truth_trunc;
  for (int i : val_idx) val_truth_trunc.push_back(denormalize(ds.images[i], ds.meta));

  Adam<float> opt(model.params);
  TrainResult result;
  const int batch = std::max(1, std::min<int>(cfg.batch_size, static_cast<int>(train_idx.size())));

  auto eval_val = [&](EpochRecord& rec) {
    auto imgs = detail::reconstruct_images(model, ds, val_idx, batch, quant);
    std::vector<CMat> est, full_est;
    for (size_t i = 0; i < val_idx.size(); ++i) {
      est.push_back(denormalize(imgs[i], ds.meta));
      full_est.push_back(reconstruct_full(imgs[i], ds.meta, ds.offset, ds.scenario.nc));
    }
    rec.val_nmse_db = nmse_db(nmse(val_truth_trunc, est));
    rec.val_cosine = cosine_similarity(val_truth_full, full_est).beta;
  };

  result.best_val_nmse_db = 1e9;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(epoch, cfg);
    for (size_t i = train_idx.size(); i > 1; --i)
      std::swap(train_idx[i - 1], train_idx[rng.below(i)]);

    double loss_acc = 0.0;
    for (size_t lo = 0; lo < train_idx.size(); lo += static_cast<size_t>(batch)) {
      const size_t hi = std::min(train_idx.size(), lo + static_cast<size_t>(batch));
      Tensor<float> images = detail::stack_images(ds.images, train_idx, static_cast<int>(lo),
                                                  static_cast<int>(hi));
      auto input = Var<float>::leaf(images, false);
      auto target = Var<float>::leaf(std::move(images), false);
      model.params.zero_grads();
      auto code = model.encode(input, Mode::train);
      if (quant) code = ste_gate(code, *quant);
      auto rec = model.decode(code, Mode::train);
      auto loss = mse_loss(rec, target);
      if (!std::isfinite(loss.value()[0])) throw std::runtime_error("train: loss diverged");
      backward(loss);
      opt.step(model.params, static_cast<float>(lr));
      loss_acc += static_cast<double>(loss.value()[0]) * static_cast<double>(hi - lo);
    }

    EpochRecord rec{epoch, lr, loss_acc / static_cast<double>(train_idx.size()), 0.0, 0.0};
    eval_val(rec);
    result.history.push_back(rec);
    result.best_val_nmse_db = std::min(result.best_val_nmse_db, rec.val_nmse_db);
    if (cfg.target_nmse_db && !result.epochs_to_target && rec.val_nmse_db <= *cfg.target_nmse_db)
      result.epochs_to_target = epoch;
  }

  result.final_train_nmse_db = detail::nmse_db_over(model, ds, train_idx, batch, quant);
  result.final_val_nmse_db =
      result.history.empty() ? detail::nmse_db_over(model, ds, val_idx, batch, quant)
                             : result.history.back().val_nmse_db;
  if (result.history.empty()) result.best_val_nmse_db = result.final_val_nmse_db;
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

// Stage two of the quantized pipeline: calibrate the quantizer range on the
// pre-trained codewords, then retrain through the straight-through gate.
inline std::pair<TrainResult, QuantizerCalibration> train_quantized(Model<float>& model,
                                                                    const Dataset& ds, int bits,
                                                                    const TrainConfig& cfg) {
  std::vector<float> codewords;
  codewords.reserve(static_cast<size_t>(ds.count()) * model.config.codeword_len());
  std::vector<int> idx(ds.count());
  std::iota(idx.begin(), idx.end(), 0);
  for (size_t lo = 0; lo < idx.size(); lo += 32) {
    const size_t hi = std::min(idx.size(), lo + 32);
    Tensor<float> batch =
        detail::stack_images(ds.images, idx, static_cast<int>(lo), static_cast<int>(hi));
    auto code = model.encode(Var<float>::leaf(std::move(batch), false), Mode::infer);
    for (float v : code.value().vec()) codewords.push_back(v);
  }
  QuantizerCalibration cal = calibrate(codewords, bits);
  TrainResult result = train(model, ds, cfg, &cal);
  return {result, cal};
}

// Transfer to a new scenario: keep the pretrained weights and fine-tune all
// parameters on the new dataset.
inline TrainResult transfer_finetune(Model<float>& model, const Dataset& ds,
                                     const TrainConfig& cfg) {
  return train(model, ds, cfg);
}

inline void write_metrics_csv(const TrainResult& result, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw io_error("cannot open for writing: " + path);
  os << "epoch,lr,train_loss,val_nmse_db,val_cosine\n";
  char line[160];
  for (const auto& r : result.history) {
    std::snprintf(line, sizeof(line), "%d,%.10g,%.10g,%.6f,%.8f\n", r.epoch, r.lr, r.train_loss,
                  r.val_nmse_db, r.val_cosine);
    os << line;
  }
  if (!os) throw io_error("write failed: " + path);
}

}  // namespace duffin
