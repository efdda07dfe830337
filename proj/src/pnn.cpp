#include "nits/pnn.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>

#include "nits/error.hpp"
#include "nits/rng.hpp"

namespace nits {

namespace {

std::atomic<std::uint64_t> g_clamps{0};

void note_clamp() noexcept { g_clamps.fetch_add(1, std::memory_order_relaxed); }

void check_finite(double v, std::size_t layer, const char* what) {
  if (!std::isfinite(v)) {
    throw NumericalError("non-finite " + std::string(what) + " in PNN layer " +
                             std::to_string(layer),
                         static_cast<std::ptrdiff_t>(layer));
  }
}

}  // namespace

namespace diagnostics {
std::uint64_t clamp_count() noexcept { return g_clamps.load(std::memory_order_relaxed); }
void reset_clamp_count() noexcept { g_clamps.store(0, std::memory_order_relaxed); }
}  // namespace diagnostics

void Bounds::validate() const {
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi)) {
    throw InvalidParameter("bounds must be finite with lo < hi, got [" + std::to_string(lo) +
                           ", " + std::to_string(hi) + "]");
  }
}

PnnSpec::PnnSpec(std::vector<std::size_t> widths, Bounds bounds)
    : widths_(std::move(widths)), bounds_(bounds) {
  bounds_.validate();
  if (widths_.size() < 3) {
    throw InvalidParameter("a PNN needs at least one hidden layer and an output layer");
  }
  if (widths_.front() != 1 || widths_.back() != 1) {
    throw InvalidParameter("PNN input and output widths must both be 1");
  }
  if (std::find(widths_.begin(), widths_.end(), std::size_t{0}) != widths_.end()) {
    throw InvalidParameter("PNN layer widths must be positive");
  }
  std::size_t offset = 0;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    weight_offsets_.push_back(offset);
    offset += widths_[l] * widths_[l + 1];
    if (!is_final(l)) offset += widths_[l + 1];
  }
  param_count_ = offset;
}

PnnSpec PnnSpec::standard(Bounds bounds) { return PnnSpec({1, 16, 16, 1}, bounds); }

std::size_t PnnSpec::bias_offset(std::size_t layer) const {
  if (is_final(layer)) throw InvalidParameter("the final PNN layer has no bias");
  return weight_offsets_.at(layer) + fan_in(layer) * fan_out(layer);
}

PnnParams::PnnParams(const PnnSpec& spec, std::vector<double> values)
    : values_(std::move(values)) {
  if (values_.size() != spec.param_count()) {
    throw InvalidParameter("expected " + std::to_string(spec.param_count()) +
                           " PNN parameters, got " + std::to_string(values_.size()));
  }
  for (double v : values_) {
    if (!std::isfinite(v)) throw InvalidParameter("PNN parameters must be finite");
  }
}

namespace pnn {

double sigmoid(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::vector<double> transform_weights(std::span<const double> raw) {
  std::vector<double> out(raw.size());
  for (std::size_t k = 0; k < raw.size(); ++k) {
    double w = std::exp(-raw[k]);
    if (!(w >= kMinPositiveWeight)) {
      w = kMinPositiveWeight;
      note_clamp();
    } else if (w > kMaxPositiveWeight) {
      w = kMaxPositiveWeight;
      note_clamp();
    }
    out[k] = w;
  }
  return out;
}

namespace {

std::vector<double> column_means(std::span<const double> weights, std::size_t fan_in,
                                 std::size_t fan_out) {
  std::vector<double> mean(fan_out, 0.0);
  for (std::size_t i = 0; i < fan_in; ++i) {
    for (std::size_t j = 0; j < fan_out; ++j) mean[j] += weights[i * fan_out + j];
  }
  for (double& m : mean) m /= static_cast<double>(fan_in);
  return mean;
}

}  // namespace

std::vector<double> transform_bias(std::span<const double> raw_bias,
                                   std::span<const double> raw_weights, std::size_t fan_in,
                                   std::size_t fan_out) {
  if (raw_bias.size() != fan_out || raw_weights.size() != fan_in * fan_out) {
    throw InvalidParameter("bias/weight shape mismatch in h_b");
  }
  const auto scale = column_means(transform_weights(raw_weights), fan_in, fan_out);
  std::vector<double> out(fan_out);
  for (std::size_t j = 0; j < fan_out; ++j) out[j] = -scale[j] * raw_bias[j];
  return out;
}

std::vector<double> transform_final(std::span<const double> raw) {
  std::vector<double> out(raw.size());
  if (raw.empty()) return out;
  const double top = *std::max_element(raw.begin(), raw.end());
  double total = 0.0;
  for (std::size_t k = 0; k < raw.size(); ++k) {
    out[k] = std::exp(raw[k] - top);
    total += out[k];
  }
  for (double& v : out) v /= total;
  return out;
}

Network::Network(const PnnSpec& spec, std::span<const double> raw) : spec_(spec) {
  if (raw.size() != spec.param_count()) {
    throw InvalidParameter("expected " + std::to_string(spec.param_count()) +
                           " PNN parameters, got " + std::to_string(raw.size()));
  }
  const std::size_t layers = spec.num_layers();
  weights_.resize(layers);
  bias_scale_.resize(layers - 1);
  bias_.resize(layers - 1);
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t n_in = spec.fan_in(l);
    const std::size_t n_out = spec.fan_out(l);
    const auto raw_w = raw.subspan(spec.weight_offset(l), n_in * n_out);
    if (spec.is_final(l)) {
      mixture_ = transform_final(raw_w);
      continue;
    }
    weights_[l] = transform_weights(raw_w);
    bias_scale_[l] = column_means(weights_[l], n_in, n_out);
    const auto raw_b = raw.subspan(spec.bias_offset(l), n_out);
    bias_[l].resize(n_out);
    for (std::size_t j = 0; j < n_out; ++j) {
      bias_[l][j] = -bias_scale_[l][j] * raw_b[j];
      check_finite(bias_[l][j], l, "bias");
    }
  }
  f_lo_ = value(spec.bounds().lo);
  f_hi_ = value(spec.bounds().hi);
  partition_ = f_hi_ - f_lo_;
  if (!(partition_ >= kLogFloor)) {
    note_clamp();
    log_partition_ = std::log(kLogFloor);
  } else {
    log_partition_ = std::log(partition_);
  }
}

double Network::value(double x) const {
  std::vector<double> prev{x};
  std::vector<double> next;
  for (std::size_t l = 0; l + 1 < spec_.num_layers(); ++l) {
    const std::size_t n_in = spec_.fan_in(l);
    const std::size_t n_out = spec_.fan_out(l);
    const auto& w = weights_[l];
    next.assign(bias_[l].begin(), bias_[l].end());
    for (std::size_t i = 0; i < n_in; ++i) {
      const double a = prev[i];
      const double* row = &w[i * n_out];
      for (std::size_t j = 0; j < n_out; ++j) next[j] += row[j] * a;
    }
    for (std::size_t j = 0; j < n_out; ++j) {
      check_finite(next[j], l, "pre-activation");
      next[j] = sigmoid(next[j]);
    }
    prev.swap(next);
  }
  double f = 0.0;
  for (std::size_t j = 0; j < prev.size(); ++j) f += mixture_[j] * prev[j];
  return f;
}

Forward Network::forward(double x) const {
  Forward out;
  out.x = x;
  const std::size_t hidden = spec_.num_layers() - 1;
  out.hidden.resize(hidden);
  std::vector<double> a_in{x};
  std::vector<double> da_in{1.0};
  for (std::size_t l = 0; l < hidden; ++l) {
    const std::size_t n_in = spec_.fan_in(l);
    const std::size_t n_out = spec_.fan_out(l);
    const auto& w = weights_[l];
    LayerTrace& t = out.hidden[l];
    std::vector<double> z(bias_[l]);
    t.dpre.assign(n_out, 0.0);
    for (std::size_t i = 0; i < n_in; ++i) {
      const double a = a_in[i];
      const double da = da_in[i];
      const double* row = &w[i * n_out];
      for (std::size_t j = 0; j < n_out; ++j) {
        z[j] += row[j] * a;
        t.dpre[j] += row[j] * da;
      }
    }
    t.act.resize(n_out);
    t.one_minus.resize(n_out);
    t.dact.resize(n_out);
    for (std::size_t j = 0; j < n_out; ++j) {
      check_finite(z[j], l, "pre-activation");
      check_finite(t.dpre[j], l, "input derivative");
      t.act[j] = sigmoid(z[j]);
      t.one_minus[j] = sigmoid(-z[j]);
      t.dact[j] = t.act[j] * t.one_minus[j] * t.dpre[j];
    }
    a_in = t.act;
    da_in = t.dact;
  }
  for (std::size_t j = 0; j < a_in.size(); ++j) {
    out.value += mixture_[j] * a_in[j];
    out.dvalue += mixture_[j] * da_in[j];
  }
  check_finite(out.dvalue, spec_.num_layers() - 1, "output derivative");
  return out;
}

void Network::check_domain(double x) const {
  if (!spec_.bounds().contains(x)) {
    throw DomainError("x = " + std::to_string(x) + " lies outside the support [" +
                      std::to_string(spec_.bounds().lo) + ", " +
                      std::to_string(spec_.bounds().hi) + "]");
  }
}

double Network::cdf(double x) const {
  check_domain(x);
  if (x == spec_.bounds().lo) return 0.0;
  if (x == spec_.bounds().hi) return 1.0;
  const double c = (value(x) - f_lo_) / std::max(partition_, kLogFloor);
  return std::clamp(c, 0.0, 1.0);
}

double Network::pdf(double x) const {
  check_domain(x);
  return forward(x).dvalue / std::max(partition_, kLogFloor);
}

double Network::log_pdf(double x) const {
  check_domain(x);
  return std::log(std::max(forward(x).dvalue, kLogFloor)) - log_partition_;
}

PnnEval Network::evaluate(double x) const {
  check_domain(x);
  PnnEval e;
  e.trace = forward(x);
  e.partition = partition_;
  e.log_pdf = std::log(std::max(e.trace.dvalue, kLogFloor)) - log_partition_;
  e.pdf_value = std::exp(e.log_pdf);
  e.cdf_value = cdf(x);
  return e;
}

Forward forward(const PnnSpec& spec, std::span<const double> raw, double x) {
  return Network(spec, raw).forward(x);
}

double cdf(const PnnSpec& spec, std::span<const double> raw, double x) {
  return Network(spec, raw).cdf(x);
}

double log_pdf(const PnnSpec& spec, std::span<const double> raw, double x) {
  return Network(spec, raw).log_pdf(x);
}

double partition(const PnnSpec& spec, std::span<const double> raw) {
  return Network(spec, raw).partition();
}

PnnEval evaluate(const PnnSpec& spec, std::span<const double> raw, double x) {
  return Network(spec, raw).evaluate(x);
}

std::vector<double> reference_params(const PnnSpec& spec) {
  std::vector<double> raw(spec.param_count(), 0.0);
  const Bounds b = spec.bounds();
  for (std::size_t l = 0; l + 1 < spec.num_layers(); ++l) {
    const std::size_t n_in = spec.fan_in(l);
    const std::size_t n_out = spec.fan_out(l);
    // Input range of this layer: the data axis for the first layer, the sum
    // of the previous sigmoids (0 .. n_in) afterwards.
    const double lo = l == 0 ? b.lo : 0.0;
    const double span = l == 0 ? b.width() : static_cast<double>(n_in);
    const double step = span / static_cast<double>(n_out);
    const double slope_scale = 2.0 * step;
    const double raw_weight = std::log(slope_scale);
    std::fill_n(raw.begin() + static_cast<std::ptrdiff_t>(spec.weight_offset(l)), n_in * n_out,
                raw_weight);
    const std::size_t bo = spec.bias_offset(l);
    for (std::size_t j = 0; j < n_out; ++j) {
      raw[bo + j] = lo + (static_cast<double>(j) + 0.5) * step;
    }
  }
  return raw;
}

PnnParams random_params(const PnnSpec& spec, std::uint64_t seed, double scale) {
  Rng rng = make_stream(seed, 0x706e6eu);
  std::vector<double> raw(spec.param_count());
  for (double& v : raw) v = scale * standard_normal(rng);
  return PnnParams(spec, std::move(raw));
}

}  // namespace pnn
}  // namespace nits
