#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nits/rng.hpp"

namespace nits {

enum class Masking { independent, autoregressive };

std::string_view to_string(Masking m) noexcept;
/// Throws InvalidParameter for anything other than "independent" or
/// "autoregressive".
Masking parse_masking(std::string_view text);

struct WeightModelSpec {
  std::size_t data_dim = 1;
  std::size_t hidden_dim = 64;
  std::size_t residual_blocks = 2;
  double dropout_rate = 0.0;
  std::size_t params_per_dim = 0;
  Masking masking = Masking::autoregressive;

  void validate() const;
  friend bool operator==(const WeightModelSpec&, const WeightModelSpec&) = default;
};

/// Causally masked residual MLP mapping a data point x to the raw PNN
/// parameters of every coordinate (output slot i * params_per_dim + p).
///
///   h   = W_in x + b_in
///   h  += W2 drop(relu(W1 relu(h) + b1)) + b2      (per residual block)
///   out = W_out h + b_out
///
/// Hidden unit k carries degree m(k) = 1 + k mod (d - 1). Input j (1-based)
/// feeds units with m(k) >= j, hidden units feed units of equal or higher
/// degree, and output coordinate i reads units with m(k) < i. Coordinate 1
/// therefore sees only b_out, and in independent mode the whole output is
/// the learned table b_out. Masked weights are held at exactly zero.
class WeightModel {
 public:
  explicit WeightModel(WeightModelSpec spec);

  const WeightModelSpec& spec() const noexcept { return spec_; }
  std::size_t output_size() const noexcept { return spec_.data_dim * spec_.params_per_dim; }
  std::size_t param_count() const noexcept { return params_.size(); }

  std::span<const double> params() const noexcept { return params_; }
  /// Replaces phi; masked entries must be zero.
  void set_params(std::span<const double> phi);
  /// In-place update hook for optimizers: phi[k] -= step[k], then re-mask.
  void apply_update(std::span<const double> step);

  /// Fan-in scaled uniform hidden weights, zero output weights, output
  /// biases set to `output_bias` (size output_size()).
  void initialize(std::uint64_t seed, std::span<const double> output_bias);

  /// True when no output depends on the input.
  bool output_is_constant() const noexcept;

  /// Per-forward record used by backward().
  struct Tape {
    const WeightModel* owner = nullptr;
    std::vector<double> x;
    std::vector<std::vector<double>> block_in;   // h entering each block
    std::vector<std::vector<double>> block_mid;  // W1 relu(h) + b1
    std::vector<std::vector<double>> block_act;  // drop(relu(mid))
    std::vector<std::vector<double>> drop_mask;  // empty in eval mode
    std::vector<double> h_out;
  };

  /// Eval-mode forward (dropout off).
  std::vector<double> forward(std::span<const double> x) const;
  /// Forward that records a tape; dropout is active iff `dropout_rng` is
  /// non-null and the dropout rate is positive.
  std::vector<double> forward(std::span<const double> x, Tape& tape,
                              Rng* dropout_rng = nullptr) const;

  /// Adds d loss / d phi into `grad_phi` given d loss / d output.
  void backward(const Tape& tape, std::span<const double> grad_out,
                std::span<double> grad_phi) const;

  /// 1 where a parameter is trainable, 0 where the causal mask zeroes it.
  const std::vector<double>& param_mask() const noexcept { return mask_; }

  /// Degree of hidden unit k (1-based, as in MADE).
  std::size_t degree(std::size_t k) const;

  // Parameter offsets, exposed for tests that probe causality.
  std::size_t in_weight_offset() const noexcept { return 0; }
  std::size_t out_weight_offset() const noexcept { return out_w_; }
  std::size_t out_bias_offset() const noexcept { return out_b_; }

 private:
  struct Block {
    std::size_t w1, b1, w2, b2;
  };

  std::vector<double> run(std::span<const double> x, Tape* tape, Rng* dropout_rng) const;

  WeightModelSpec spec_;
  std::vector<double> params_;
  std::vector<double> mask_;
  std::size_t in_w_ = 0, in_b_ = 0, out_w_ = 0, out_b_ = 0;
  std::vector<Block> blocks_;
};

}  // namespace nits
