#include "nits/train.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include "json.hpp"
#include <numbers>
#include <string>

#include "nits/error.hpp"
#include "nits/grad.hpp"
#include "nits/parallel.hpp"
#include "nits/pnn.hpp"
#include "nits/rng.hpp"

namespace nits::train {

Adam::Adam(std::size_t size, AdamConfig config)
    : config_(config), m_(size, 0.0), v_(size, 0.0) {}

std::vector<double> Adam::step(std::span<const double> grad) {
  if (grad.size() != m_.size()) throw UsageError("Adam: gradient has the wrong size");
  ++t_;
  const double t = static_cast<double>(t_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  std::vector<double> delta(grad.size());
  for (std::size_t k = 0; k < grad.size(); ++k) {
    m_[k] = config_.beta1 * m_[k] + (1.0 - config_.beta1) * grad[k];
    v_[k] = config_.beta2 * v_[k] + (1.0 - config_.beta2) * grad[k] * grad[k];
    const double m_hat = m_[k] / c1;
    const double v_hat = v_[k] / c2;
    delta[k] = config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.eps);
  }
  return delta;
}

double clip_grad_norm(std::span<double> grad, double max_norm) {
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (double& g : grad) g *= s;
  }
  return norm;
}

void TrainConfig::validate() const {
  if (batch_size == 0 || max_epochs == 0 || patience == 0 || threads == 0) {
    throw InvalidParameter("batch_size, max_epochs, patience and threads must be positive");
  }
  if (!(learning_rate > 0.0) || !(clip_norm > 0.0) || !(adam_eps > 0.0)) {
    throw InvalidParameter("learning rate, clip norm and Adam eps must be positive");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw InvalidParameter("Adam betas must lie in [0, 1)");
  }
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw InvalidParameter("val_fraction must lie in (0, 1)");
  }
}

std::string TrainReport::to_jsonl(bool include_timing) const {
  std::string out;
  for (const EpochRecord& e : epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["train_nll"] = e.train_nll;
    j["val_nll"] = e.val_nll;
    j["skipped_batches"] = e.skipped_batches;
    if (include_timing) j["seconds"] = e.seconds;
    out += j.dump() + "\n";
  }
  nlohmann::ordered_json s;
  s["best_epoch"] = best_epoch;
  s["best_val_nll"] = best_val_nll;
  s["clamps"] = clamp_count;
  s["nonfinite_batches"] = nonfinite_batches;
  s["excluded_val_rows"] = excluded_val_rows;
  s["aborted"] = aborted;
  if (include_timing) s["wall_seconds"] = wall_seconds;
  out += s.dump() + "\n";
  return out;
}

double nats_to_bits_per_dim(double nats, std::size_t dims) {
  return nats * std::numbers::log2e / static_cast<double>(dims);
}

namespace {

constexpr std::size_t kReductionChunks = 8;
constexpr std::size_t kMaxConsecutiveBad = 10;

// Loss (model units) of one point, adding its gradient into grad_phi.
double accumulate_point(const NitsModel& model, std::span<const double> z, Rng* dropout,
                        std::span<double> grad_phi, std::vector<double>& g_theta,
                        WeightModel::Tape& tape) {
  const WeightModel& wm = model.weight_model();
  const auto theta = wm.forward(z, tape, dropout);
  std::fill(g_theta.begin(), g_theta.end(), 0.0);
  const std::size_t p = model.params_per_dim();
  double loss = 0.0;
  for (std::size_t i = 0; i < model.dims(); ++i) {
    const grad::GradTape gt(model.pnn_spec(i), model.theta_slice(theta, i), z[i]);
    loss += gt.loss();
    gt.backward_into(std::span<double>(g_theta).subspan(i * p, p));
  }
  wm.backward(tape, g_theta, grad_phi);
  return loss;
}

double model_units_nll(const NitsModel& model, std::span<const double> z) {
  double ll = 0.0;
  for (double v : model.conditional_log_pdfs(z)) ll += v;
  return -ll;
}

struct Prepared {
  Matrix train;
  Matrix val;
  std::size_t excluded_val = 0;
};

Prepared prepare(const NitsModel& model, const data::Dataset& ds, const TrainConfig& cfg) {
  if (ds.dims() != model.dims()) throw UsageError("dataset and model dimensions differ");
  std::vector<std::size_t> train_idx = ds.split.train;
  std::vector<std::size_t> val_idx = ds.split.val;
  if (val_idx.empty()) {
    const auto cut = data::make_split(train_idx.size(), cfg.seed, 1.0 - cfg.val_fraction,
                                      cfg.val_fraction);
    std::vector<std::size_t> t, v;
    for (std::size_t k : cut.train) t.push_back(train_idx[k]);
    for (std::size_t k : cut.val) v.push_back(train_idx[k]);
    train_idx = std::move(t);
    val_idx = std::move(v);
  }
  if (train_idx.empty() || val_idx.empty()) {
    throw DataError("training needs non-empty training and validation splits");
  }
  Prepared p;
  for (std::size_t r : train_idx) {
    const auto z = model.to_model_units(ds.rows.row(r));
    model.check_in_bounds(z);
    p.train.push_row(z);
  }
  for (std::size_t r : val_idx) {
    const auto z = model.to_model_units(ds.rows.row(r));
    bool inside = true;
    for (std::size_t i = 0; i < z.size(); ++i) inside = inside && model.bounds()[i].contains(z[i]);
    if (inside) {
      p.val.push_row(z);
    } else {
      ++p.excluded_val;
    }
  }
  if (p.val.empty()) throw DataError("every validation row lies outside the model bounds");
  return p;
}

double mean_nll(const NitsModel& model, const Matrix& rows, std::size_t threads) {
  std::vector<double> per_row(rows.rows());
  parallel_for(rows.rows(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) per_row[r] = model_units_nll(model, rows.row(r));
  });
  double total = 0.0;
  for (double v : per_row) total += v;
  return total / static_cast<double>(rows.rows()) + model.transform().log_abs_det();
}

}  // namespace

FitResult fit(NitsModel model, const data::Dataset& dataset, const TrainConfig& cfg) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  const std::uint64_t clamps_before = diagnostics::clamp_count();
  const Prepared prep = prepare(model, dataset, cfg);
  const Matrix& train = prep.train;
  const std::size_t n = train.rows();
  const std::size_t n_params = model.weight_model().param_count();
  const double log_det = model.transform().log_abs_det();
  const bool dropout = model.weight_model().spec().dropout_rate > 0.0;

  TrainReport report;
  report.excluded_val_rows = prep.excluded_val;
  {
    EpochRecord e0;
    e0.train_nll = mean_nll(model, train, cfg.threads);
    e0.val_nll = mean_nll(model, prep.val, cfg.threads);
    report.epochs.push_back(e0);
    report.best_val_nll = e0.val_nll;
  }
  std::vector<double> best_params(model.weight_model().params().begin(),
                                  model.weight_model().params().end());

  Adam adam(n_params, AdamConfig{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps});
  Rng shuffle_rng = make_stream(cfg.seed, 0x73687566u);
  std::vector<std::size_t> order(n);
  std::vector<std::vector<double>> chunk_grads(kReductionChunks, std::vector<double>(n_params));
  std::vector<double> chunk_loss(kReductionChunks);
  std::vector<char> chunk_ok(kReductionChunks);
  std::vector<double> grad(n_params);
  std::size_t consecutive_bad = 0;
  std::uint64_t datum_counter = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs && !report.aborted; ++epoch) {
    const auto t_epoch = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng() % i)]);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t batch = std::min(cfg.batch_size, n - start);
      const std::size_t chunks = std::min(kReductionChunks, batch);
      const std::uint64_t batch_base = datum_counter;
      datum_counter += batch;
      parallel_for(chunks, cfg.threads, [&](std::size_t c_begin, std::size_t c_end) {
        std::vector<double> g_theta(model.weight_model().output_size());
        WeightModel::Tape tape;
        for (std::size_t c = c_begin; c < c_end; ++c) {
          auto& g = chunk_grads[c];
          std::fill(g.begin(), g.end(), 0.0);
          chunk_loss[c] = 0.0;
          chunk_ok[c] = 1;
          const std::size_t lo = batch * c / chunks;
          const std::size_t hi = batch * (c + 1) / chunks;
          try {
            for (std::size_t k = lo; k < hi; ++k) {
              const auto z = train.row(order[start + k]);
              if (dropout) {
                Rng drop_rng = make_stream(cfg.seed ^ 0x64726f70u, batch_base + k);
                chunk_loss[c] += accumulate_point(model, z, &drop_rng, g, g_theta, tape);
              } else {
                chunk_loss[c] += accumulate_point(model, z, nullptr, g, g_theta, tape);
              }
            }
          } catch (const NumericalError&) {
            chunk_ok[c] = 0;
          }
        }
      });
      bool ok = true;
      double batch_loss = 0.0;
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t c = 0; c < chunks; ++c) {
        ok = ok && chunk_ok[c] && std::isfinite(chunk_loss[c]);
        batch_loss += chunk_loss[c];
        for (std::size_t k = 0; k < n_params; ++k) grad[k] += chunk_grads[c][k];
      }
      const double inv = 1.0 / static_cast<double>(batch);
      for (double& g : grad) {
        g *= inv;
        ok = ok && std::isfinite(g);
      }
      if (!ok) {
        ++rec.skipped_batches;
        ++report.nonfinite_batches;
        if (++consecutive_bad >= kMaxConsecutiveBad) {
          report.aborted = true;
          break;
        }
        continue;
      }
      consecutive_bad = 0;
      clip_grad_norm(grad, cfg.clip_norm);
      model.weight_model().apply_update(adam.step(grad));
      loss_sum += batch_loss;
      loss_count += batch;
    }
    rec.train_nll = loss_count > 0 ? loss_sum / static_cast<double>(loss_count) + log_det
                                   : std::numeric_limits<double>::quiet_NaN();
    try {
      rec.val_nll = mean_nll(model, prep.val, cfg.threads);
    } catch (const NumericalError&) {
      rec.val_nll = std::numeric_limits<double>::infinity();
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_epoch).count();
    report.epochs.push_back(rec);
    if (rec.val_nll < report.best_val_nll) {
      report.best_val_nll = rec.val_nll;
      report.best_epoch = epoch;
      const auto p = model.weight_model().params();
      best_params.assign(p.begin(), p.end());
    } else if (epoch - report.best_epoch >= cfg.patience) {
      break;
    }
  }
  model.weight_model().set_params(best_params);
  report.clamp_count = diagnostics::clamp_count() - clamps_before;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return FitResult{std::move(model), std::move(report)};
}

NllResult evaluate_nll(const NitsModel& model, const Matrix& rows, std::size_t threads) {
  if (rows.cols() != model.dims()) throw UsageError("data and model dimensions differ");
  std::vector<double> per_row(rows.rows());
  std::vector<char> used(rows.rows());
  parallel_for(rows.rows(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      try {
        per_row[r] = -model.log_likelihood(rows.row(r));
        used[r] = 1;
      } catch (const DomainError&) {
        used[r] = 0;
      }
    }
  });
  NllResult out;
  double total = 0.0;
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    if (used[r]) {
      total += per_row[r];
      ++out.used;
    } else {
      ++out.excluded;
    }
  }
  if (out.used == 0) throw DomainError("every evaluation row lies outside the model bounds");
  out.mean_nats = total / static_cast<double>(out.used);
  out.bits_per_dim = nats_to_bits_per_dim(out.mean_nats, model.dims());
  return out;
}

}  // namespace nits::train
