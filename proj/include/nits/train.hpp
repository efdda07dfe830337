#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nits/data.hpp"
#include "nits/matrix.hpp"
#include "nits/model.hpp"

namespace nits::train {

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam.
class Adam {
 public:
  Adam(std::size_t size, AdamConfig config);

  /// Advances the moments with `grad` and returns the step to subtract
  /// from the parameters.
  std::vector<double> step(std::span<const double> grad);
  std::size_t steps() const noexcept { return t_; }

 private:
  AdamConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t t_ = 0;
};

/// Rescales `grad` in place so its L2 norm is at most max_norm. Returns the
/// norm before clipping.
double clip_grad_norm(std::span<double> grad, double max_norm);

struct TrainConfig {
  std::size_t batch_size = 1024;
  double learning_rate = 2e-4;
  std::size_t patience = 5;
  std::size_t max_epochs = 1000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  /// Fraction of the training split held out when the dataset has no
  /// validation rows.
  double val_fraction = 0.1;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_nll = 0.0;
  double val_nll = 0.0;
  double seconds = 0.0;
  std::size_t skipped_batches = 0;
};

struct TrainReport {
  /// Epoch 0 is the initial model, before any update.
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_nll = 0.0;
  double wall_seconds = 0.0;
  std::uint64_t clamp_count = 0;
  std::size_t nonfinite_batches = 0;
  std::size_t excluded_val_rows = 0;
  bool aborted = false;

  /// One JSON object per epoch, then a summary object. Timings are omitted
  /// when include_timing is false, which makes the text a pure function of
  /// the seed and configuration.
  std::string to_jsonl(bool include_timing = true) const;
};

struct FitResult {
  NitsModel model;
  TrainReport report;
};

/// Minimizes mean negative log-likelihood of the training split with
/// minibatch Adam and early stopping on the validation split. Returns the
/// parameters of the best validation epoch. NLLs are in nats per datum, in
/// data units.
FitResult fit(NitsModel model, const data::Dataset& dataset, const TrainConfig& config);

struct NllResult {
  double mean_nats = 0.0;
  double bits_per_dim = 0.0;
  std::size_t used = 0;
  std::size_t excluded = 0;
};

/// nats * log2(e) / dims.
double nats_to_bits_per_dim(double nats, std::size_t dims);

/// Mean -log p over the rows (data units); rows outside the model bounds are
/// counted and skipped.
NllResult evaluate_nll(const NitsModel& model, const Matrix& rows, std::size_t threads = 1);

}  // namespace nits::train
