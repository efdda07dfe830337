#include "nits/weight_model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nits/error.hpp"

namespace nits {

std::string_view to_string(Masking m) noexcept {
  return m == Masking::independent ? "independent" : "autoregressive";
}

Masking parse_masking(std::string_view text) {
  if (text == "independent") return Masking::independent;
  if (text == "autoregressive") return Masking::autoregressive;
  throw InvalidParameter("unknown masking mode '" + std::string(text) +
                         "' (expected independent or autoregressive)");
}

void WeightModelSpec::validate() const {
  if (data_dim < 1) throw InvalidParameter("data_dim must be at least 1");
  if (params_per_dim < 1) throw InvalidParameter("params_per_dim must be at least 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw InvalidParameter("dropout_rate must lie in [0, 1)");
  }
  if (hidden_dim == 0 && residual_blocks > 0) {
    throw InvalidParameter("residual blocks need a positive hidden_dim");
  }
}

namespace {

void matvec(const double* w, const double* b, std::span<const double> x, std::size_t rows,
            double* y) {
  const std::size_t cols = x.size();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = w + r * cols;
    double acc = b[r];
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

// g_x += W^T g_y ; g_W += mask * (g_y x^T) ; g_b += g_y
void matvec_backward(const double* w, const double* mask, std::span<const double> x,
                     std::span<const double> g_y, double* g_w, double* g_b, double* g_x) {
  const std::size_t cols = x.size();
  for (std::size_t r = 0; r < g_y.size(); ++r) {
    const double g = g_y[r];
    g_b[r] += g;
    if (g == 0.0) continue;
    const double* row = w + r * cols;
    const double* mrow = mask + r * cols;
    double* grow = g_w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) grow[c] += g * x[c] * mrow[c];
    if (g_x != nullptr) {
      for (std::size_t c = 0; c < cols; ++c) g_x[c] += row[c] * g;
    }
  }
}

}  // namespace

WeightModel::WeightModel(WeightModelSpec spec) : spec_(spec) {
  spec_.validate();
  const std::size_t d = spec_.data_dim;
  const std::size_t h = spec_.hidden_dim;
  const std::size_t out = output_size();
  std::size_t offset = 0;
  in_w_ = offset;
  offset += h * d;
  in_b_ = offset;
  offset += h;
  for (std::size_t r = 0; r < spec_.residual_blocks; ++r) {
    Block b{};
    b.w1 = offset;
    offset += h * h;
    b.b1 = offset;
    offset += h;
    b.w2 = offset;
    offset += h * h;
    b.b2 = offset;
    offset += h;
    blocks_.push_back(b);
  }
  out_w_ = offset;
  offset += out * h;
  out_b_ = offset;
  offset += out;
  params_.assign(offset, 0.0);
  mask_.assign(offset, 1.0);

  const bool causal = spec_.masking == Masking::autoregressive && d > 1;
  for (std::size_t k = 0; k < h; ++k) {
    for (std::size_t j = 0; j < d; ++j) {
      mask_[in_w_ + k * d + j] = causal && (j + 1) <= degree(k) ? 1.0 : 0.0;
    }
  }
  for (const Block& b : blocks_) {
    for (std::size_t k = 0; k < h; ++k) {
      for (std::size_t k2 = 0; k2 < h; ++k2) {
        const double m = causal && degree(k) >= degree(k2) ? 1.0 : 0.0;
        mask_[b.w1 + k * h + k2] = m;
        mask_[b.w2 + k * h + k2] = m;
      }
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t p = 0; p < spec_.params_per_dim; ++p) {
      const std::size_t row = i * spec_.params_per_dim + p;
      for (std::size_t k = 0; k < h; ++k) {
        mask_[out_w_ + row * h + k] = causal && degree(k) < i + 1 ? 1.0 : 0.0;
      }
    }
  }
}

std::size_t WeightModel::degree(std::size_t k) const {
  const std::size_t d = spec_.data_dim;
  return d > 1 ? 1 + k % (d - 1) : 1;
}

bool WeightModel::output_is_constant() const noexcept {
  return spec_.masking == Masking::independent || spec_.data_dim == 1 || spec_.hidden_dim == 0;
}

void WeightModel::set_params(std::span<const double> phi) {
  if (phi.size() != params_.size()) {
    throw InvalidParameter("expected " + std::to_string(params_.size()) +
                           " weight-model parameters, got " + std::to_string(phi.size()));
  }
  for (std::size_t k = 0; k < phi.size(); ++k) {
    if (!std::isfinite(phi[k])) throw InvalidParameter("weight-model parameters must be finite");
    if (mask_[k] == 0.0 && phi[k] != 0.0) {
      throw InvalidParameter("masked weight-model parameter " + std::to_string(k) +
                             " is nonzero");
    }
  }
  std::copy(phi.begin(), phi.end(), params_.begin());
}

void WeightModel::apply_update(std::span<const double> step) {
  if (step.size() != params_.size()) throw UsageError("update has the wrong size");
  for (std::size_t k = 0; k < params_.size(); ++k) params_[k] = (params_[k] - step[k]) * mask_[k];
}

void WeightModel::initialize(std::uint64_t seed, std::span<const double> output_bias) {
  if (output_bias.size() != output_size()) {
    throw InvalidParameter("output bias has the wrong size");
  }
  Rng rng = make_stream(seed, 0x77656967u);
  const std::size_t d = spec_.data_dim;
  const std::size_t h = spec_.hidden_dim;
  std::fill(params_.begin(), params_.end(), 0.0);
  auto fill_uniform = [&](std::size_t offset, std::size_t count, std::size_t fan_in) {
    const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t k = 0; k < count; ++k) {
      params_[offset + k] = limit * (2.0 * uniform01(rng) - 1.0) * mask_[offset + k];
    }
  };
  if (h > 0) {
    fill_uniform(in_w_, h * d, d);
    for (const Block& b : blocks_) {
      fill_uniform(b.w1, h * h, h);
      fill_uniform(b.w2, h * h, h);
    }
  }
  std::copy(output_bias.begin(), output_bias.end(),
            params_.begin() + static_cast<std::ptrdiff_t>(out_b_));
}

std::vector<double> WeightModel::forward(std::span<const double> x) const {
  return run(x, nullptr, nullptr);
}

std::vector<double> WeightModel::forward(std::span<const double> x, Tape& tape,
                                         Rng* dropout_rng) const {
  return run(x, &tape, dropout_rng);
}

std::vector<double> WeightModel::run(std::span<const double> x, Tape* tape,
                                     Rng* dropout_rng) const {
  if (x.size() != spec_.data_dim) {
    throw UsageError("weight model expects " + std::to_string(spec_.data_dim) +
                     " inputs, got " + std::to_string(x.size()));
  }
  const std::size_t h = spec_.hidden_dim;
  const std::size_t out = output_size();
  const double* p = params_.data();
  if (tape != nullptr) {
    *tape = Tape{};
    tape->owner = this;
    tape->x.assign(x.begin(), x.end());
  }
  std::vector<double> y(p + out_b_, p + out_b_ + out);
  if (output_is_constant()) return y;

  std::vector<double> hid(h);
  matvec(p + in_w_, p + in_b_, x, h, hid.data());
  const bool dropping = dropout_rng != nullptr && spec_.dropout_rate > 0.0;
  const double keep_scale = 1.0 / (1.0 - spec_.dropout_rate);
  std::vector<double> t0(h), mid(h), act(h), delta(h);
  for (const Block& b : blocks_) {
    for (std::size_t k = 0; k < h; ++k) t0[k] = std::max(hid[k], 0.0);
    matvec(p + b.w1, p + b.b1, t0, h, mid.data());
    std::vector<double> drop;
    if (dropping) drop.resize(h);
    for (std::size_t k = 0; k < h; ++k) {
      act[k] = std::max(mid[k], 0.0);
      if (dropping) {
        drop[k] = uniform01(*dropout_rng) < spec_.dropout_rate ? 0.0 : keep_scale;
        act[k] *= drop[k];
      }
    }
    matvec(p + b.w2, p + b.b2, act, h, delta.data());
    if (tape != nullptr) {
      tape->block_in.push_back(hid);
      tape->block_mid.push_back(mid);
      tape->block_act.push_back(act);
      tape->drop_mask.push_back(std::move(drop));
    }
    for (std::size_t k = 0; k < h; ++k) hid[k] += delta[k];
  }
  for (std::size_t r = 0; r < out; ++r) {
    const double* row = p + out_w_ + r * h;
    double acc = 0.0;
    for (std::size_t k = 0; k < h; ++k) acc += row[k] * hid[k];
    y[r] += acc;
  }
  if (tape != nullptr) tape->h_out = hid;
  return y;
}

void WeightModel::backward(const Tape& tape, std::span<const double> grad_out,
                           std::span<double> grad_phi) const {
  if (tape.owner != this) throw UsageError("tape was recorded by a different weight model");
  if (grad_out.size() != output_size() || grad_phi.size() != params_.size()) {
    throw UsageError("gradient buffers do not match the weight model");
  }
  if (output_is_constant()) {
    for (std::size_t r = 0; r < grad_out.size(); ++r) grad_phi[out_b_ + r] += grad_out[r];
    return;
  }
  if (tape.h_out.size() != spec_.hidden_dim) throw UsageError("tape is incomplete");

  const std::size_t h = spec_.hidden_dim;
  const double* p = params_.data();
  const double* m = mask_.data();
  std::vector<double> g_h(h, 0.0);
  matvec_backward(p + out_w_, m + out_w_, tape.h_out, grad_out, grad_phi.data() + out_w_,
                  grad_phi.data() + out_b_, g_h.data());
  std::vector<double> g_act(h), g_mid(h), g_t0(h), t0(h);
  for (std::size_t bi = blocks_.size(); bi-- > 0;) {
    const Block& b = blocks_[bi];
    const auto& h_in = tape.block_in[bi];
    const auto& mid = tape.block_mid[bi];
    const auto& act = tape.block_act[bi];
    const auto& drop = tape.drop_mask[bi];
    std::fill(g_act.begin(), g_act.end(), 0.0);
    matvec_backward(p + b.w2, m + b.w2, act, g_h, grad_phi.data() + b.w2,
                    grad_phi.data() + b.b2, g_act.data());
    for (std::size_t k = 0; k < h; ++k) {
      double g = mid[k] > 0.0 ? g_act[k] : 0.0;
      if (!drop.empty()) g *= drop[k];
      g_mid[k] = g;
      t0[k] = std::max(h_in[k], 0.0);
    }
    std::fill(g_t0.begin(), g_t0.end(), 0.0);
    matvec_backward(p + b.w1, m + b.w1, t0, g_mid, grad_phi.data() + b.w1,
                    grad_phi.data() + b.b1, g_t0.data());
    for (std::size_t k = 0; k < h; ++k) {
      if (h_in[k] > 0.0) g_h[k] += g_t0[k];
    }
  }
  matvec_backward(p + in_w_, m + in_w_, tape.x, g_h, grad_phi.data() + in_w_,
                  grad_phi.data() + in_b_, nullptr);
}

}  // namespace nits
