#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "nits/checkpoint.hpp"
#include "nits/data.hpp"
#include "nits/error.hpp"
#include "nits/model.hpp"
#include "nits/sampler.hpp"
#include "nits/train.hpp"
#include "nits/verify.hpp"

namespace nits::cli {

namespace {

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string_view strip(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string t(strip(item));
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(t, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != t.size()) {
      throw UsageError(std::string(what) + ": cannot parse '" + t + "' as a number");
    }
    out.push_back(v);
  }
  return out;
}

// Where the data come from: a CSV file or a named generator.
struct DataSource {
  std::string path;
  std::string synthetic;
  std::size_t n = 5000;
  bool header = false;
  std::string delimiter = ",";

  void add_to(CLI::App* app) {
    app->add_option("--data", path, "CSV file of samples, one row per point");
    app->add_option("--synthetic", synthetic, "Generator name")
        ->check(CLI::IsMember(data::synthetic_names()));
    app->add_option("--n", n, "Number of synthetic points")->check(CLI::PositiveNumber);
    app->add_flag("--header", header, "The CSV file starts with a header row");
    app->add_option("--delimiter", delimiter, "CSV field separator");
  }

  data::Dataset load(std::uint64_t seed) const {
    if (path.empty() == synthetic.empty()) {
      throw UsageError("give exactly one of --data and --synthetic");
    }
    if (!synthetic.empty()) return data::make_synthetic(synthetic, n, seed).data;
    if (delimiter.size() != 1) throw UsageError("--delimiter must be a single character");
    return data::load_csv(path, {header, delimiter[0]}, seed);
  }
};

struct Globals {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct TrainArgs {
  DataSource source;
  std::string out;
  std::string report;
  bool standardize = true;
  train::TrainConfig cfg;
  ModelConfig model;
  std::string masking = "autoregressive";
  std::string widths = "1,16,16,1";
};

int cmd_train(const TrainArgs& a, const Globals& g, std::ostream& out) {
  train::TrainConfig cfg = a.cfg;
  cfg.seed = g.seed;
  cfg.threads = g.threads;
  cfg.validate();
  ModelConfig mc = a.model;
  mc.masking = parse_masking(a.masking);
  mc.pnn_widths.clear();
  for (double w : parse_list(a.widths, "--pnn-widths")) {
    if (!(w >= 1.0) || w != std::floor(w)) throw UsageError("--pnn-widths needs positive integers");
    mc.pnn_widths.push_back(static_cast<std::size_t>(w));
  }
  const data::Dataset ds = a.source.load(g.seed);
  std::vector<Bounds> bounds = ds.bounds;
  AffineMap transform = AffineMap::identity(ds.dims());
  if (a.standardize) {
    const auto s = data::standardize(ds);
    bounds = s.data.bounds;
    transform = s.transform;
  }
  auto fitted = train::fit(NitsModel(mc, bounds, g.seed, transform), ds, cfg);
  checkpoint::save(fitted.model, a.out);
  const std::string report_path = a.report.empty() ? a.out + ".report.jsonl" : a.report;
  {
    std::ofstream rep(report_path, std::ios::binary);
    if (!rep) throw Error("cannot write " + report_path);
    rep << fitted.report.to_jsonl(false);
  }
  const auto& r = fitted.report;
  out << "epochs run: " << r.epochs.size() - 1 << ", best epoch: " << r.best_epoch << "\n";
  out << "initial val NLL: " << fixed4(r.epochs.front().val_nll)
      << " nats, best val NLL: " << fixed4(r.best_val_nll) << " nats\n";
  if (!ds.split.test.empty()) {
    const auto nll = train::evaluate_nll(fitted.model, ds.select(ds.split.test), g.threads);
    out << "test NLL: " << fixed4(nll.mean_nats) << " nats, " << fixed4(nll.bits_per_dim)
        << " bits/dim\n";
  }
  if (r.nonfinite_batches > 0) out << "skipped non-finite batches: " << r.nonfinite_batches << "\n";
  if (r.aborted) {
    out << "training aborted after repeated non-finite batches\n";
    return kFailure;
  }
  out << "wrote " << a.out << " and " << report_path << "\n";
  return kOk;
}

struct NllArgs {
  DataSource source;
  std::string model;
  std::string split = "test";
};

int cmd_nll(const NllArgs& a, const Globals& g, std::ostream& out, std::ostream& err) {
  const NitsModel model = checkpoint::load(a.model);
  const data::Dataset ds = a.source.load(g.seed);
  Matrix rows;
  if (a.split == "all") {
    rows = ds.rows;
  } else {
    const auto& idx = a.split == "train" ? ds.split.train
                      : a.split == "val" ? ds.split.val
                                         : ds.split.test;
    rows = ds.select(idx);
  }
  if (rows.empty()) throw DataError("the " + a.split + " split is empty");
  const auto r = train::evaluate_nll(model, rows, g.threads);
  out << "mean NLL: " << fixed4(r.mean_nats) << " nats\n";
  out << "bits/dim: " << fixed4(r.bits_per_dim) << "\n";
  out << "rows used: " << r.used << "\n";
  if (r.excluded > 0) {
    err << "warning: " << r.excluded << " of " << rows.rows()
        << " rows lie outside the model bounds and were excluded\n";
  }
  return kOk;
}

struct SampleArgs {
  std::string model;
  std::size_t n = 1000;
  std::optional<double> eps;
  std::string out;
};

int cmd_sample(const SampleArgs& a, const Globals& g, std::ostream& out) {
  const NitsModel model = checkpoint::load(a.model);
  sampler::SamplingOptions opts;
  opts.tolerance = a.eps;
  opts.threads = g.threads;
  const Matrix xs = sampler::sample_ancestral(model, a.n, g.seed, opts);
  data::write_csv(a.out, xs);
  out << "wrote " << xs.rows() << " samples of dimension " << xs.cols() << " to " << a.out
      << "\n";
  return kOk;
}

struct GridArgs {
  std::string model;
  std::size_t resolution = 200;
  std::string dims = "1";
  std::string at;
  std::string out;
};

int cmd_density_grid(const GridArgs& a, std::ostream& out) {
  const NitsModel model = checkpoint::load(a.model);
  const std::size_t d = model.dims();
  std::vector<std::size_t> axes;
  for (double v : parse_list(a.dims, "--dims")) {
    if (v != std::floor(v) || v < 1.0 || v > static_cast<double>(d)) {
      throw UsageError("--dims entries must be integers in [1, " + std::to_string(d) + "]");
    }
    axes.push_back(static_cast<std::size_t>(v) - 1);
  }
  if (axes.empty() || axes.size() > 2 || (axes.size() == 2 && axes[0] == axes[1])) {
    throw UsageError("--dims takes one index or two distinct indices");
  }
  const auto& tr = model.transform();
  std::vector<double> lo(d), hi(d), point(d);
  for (std::size_t i = 0; i < d; ++i) {
    lo[i] = tr.to_data(i, model.bounds()[i].lo);
    hi[i] = tr.to_data(i, model.bounds()[i].hi);
    point[i] = 0.5 * (lo[i] + hi[i]);
  }
  if (!a.at.empty()) {
    const auto at = parse_list(a.at, "--at");
    if (at.size() != d) throw UsageError("--at needs " + std::to_string(d) + " values");
    point = at;
  }
  auto coord = [&](std::size_t axis, std::size_t k) {
    if (k + 1 == a.resolution) return hi[axis];
    const double t = static_cast<double>(k) / static_cast<double>(a.resolution - 1);
    return lo[axis] + t * (hi[axis] - lo[axis]);
  };
  std::ofstream f(a.out, std::ios::binary);
  if (!f) throw Error("cannot write " + a.out);
  std::size_t rows = 0;
  if (axes.size() == 1) {
    f << "x,logpdf\n";
    for (std::size_t k = 0; k < a.resolution; ++k) {
      point[axes[0]] = coord(axes[0], k);
      f << g17(point[axes[0]]) << ',' << g17(model.log_likelihood(point)) << '\n';
      ++rows;
    }
  } else {
    f << "x,y,logpdf\n";
    for (std::size_t k = 0; k < a.resolution; ++k) {
      point[axes[0]] = coord(axes[0], k);
      for (std::size_t m = 0; m < a.resolution; ++m) {
        point[axes[1]] = coord(axes[1], m);
        f << g17(point[axes[0]]) << ',' << g17(point[axes[1]]) << ','
          << g17(model.log_likelihood(point)) << '\n';
        ++rows;
      }
    }
  }
  out << "wrote " << rows << " grid rows to " << a.out << "\n";
  return kOk;
}

struct VerifyArgs {
  bool full = false;
  bool quick = false;
  std::vector<int> only;
};

int cmd_verify(const VerifyArgs& a, const Globals& g, std::ostream& out) {
  if (a.full && a.quick) throw UsageError("--quick and --full are exclusive");
  verify::VerifyOptions opts;
  opts.full = a.full;
  opts.threads = g.threads;
  opts.only = a.only;
  const auto results = verify::run_checks(opts, [&](const verify::CheckResult& r) {
    out << verify::format_line(r) << std::endl;
  });
  const auto passed = std::count_if(results.begin(), results.end(),
                                    [](const verify::CheckResult& r) { return r.passed; });
  out << passed << "/" << results.size() << " checks passed\n";
  return passed == static_cast<long>(results.size()) ? kOk : kFailure;
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

std::vector<std::string> long_names(const CLI::App* app) {
  std::vector<std::string> out;
  for (const CLI::App* a = app; a != nullptr; a = a->get_parent()) {
    for (const CLI::Option* o : a->get_options()) {
      for (const auto& n : o->get_lnames()) out.push_back("--" + n);
    }
  }
  return out;
}

std::string option_key(const std::string& arg) {
  if (!arg.starts_with("--")) return {};
  return arg.substr(0, arg.find('='));
}

}  // namespace

std::string suggest(const std::string& word, const std::vector<std::string>& candidates) {
  std::string best;
  std::size_t best_d = std::max<std::size_t>(3, word.size() / 3) + 1;
  for (const auto& c : candidates) {
    const std::size_t dist = edit_distance(word, c);
    if (dist < best_d) {
      best_d = dist;
      best = c;
    }
  }
  return best;
}

std::vector<std::string> merge_config(const std::vector<std::string>& args,
                                      const std::string& config_text) {
  std::set<std::string> given;
  for (const auto& a : args) {
    const auto k = option_key(a);
    if (!k.empty()) given.insert(k);
  }
  std::vector<std::string> out = args;
  std::istringstream in(config_text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = strip(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) {
      throw UsageError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key(strip(t.substr(0, eq)));
    const std::string value(strip(t.substr(eq + 1)));
    if (key.empty()) throw UsageError("config line " + std::to_string(line_no) + ": empty key");
    if (given.contains("--" + key)) continue;
    out.push_back("--" + key + "=" + value);
  }
  return out;
}

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Neural inverse transform sampler: fit, evaluate and sample 1D and autoregressive "
               "densities"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_help_all_flag("--help-all", "Help for every subcommand");
  Globals g;
  std::string config_path;
  app.add_option("--config", config_path, "File of key=value lines; command-line flags win");
  app.add_option("--seed", g.seed, "Seed for data splits, initialization, training and sampling");
  app.add_option("--threads", g.threads, "Worker threads; results do not depend on this")
      ->check(CLI::PositiveNumber);

  TrainArgs ta;
  CLI::App* train_cmd = app.add_subcommand("train", "Fit a model by maximum likelihood");
  ta.source.add_to(train_cmd);
  train_cmd->add_option("--out", ta.out, "Checkpoint path")->required();
  train_cmd->add_option("--report", ta.report, "Training report path (default <out>.report.jsonl)");
  train_cmd->add_option("--standardize", ta.standardize, "Standardize columns before fitting");
  train_cmd->add_option("--batch-size", ta.cfg.batch_size)->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", ta.cfg.learning_rate, "Adam learning rate");
  train_cmd->add_option("--patience", ta.cfg.patience, "Early-stopping patience in epochs");
  train_cmd->add_option("--max-epochs", ta.cfg.max_epochs);
  train_cmd->add_option("--clip-norm", ta.cfg.clip_norm, "Global gradient-norm clip");
  train_cmd->add_option("--val-fraction", ta.cfg.val_fraction);
  train_cmd->add_option("--hidden-dim", ta.model.hidden_dim, "Weight-model width");
  train_cmd->add_option("--blocks", ta.model.residual_blocks, "Residual blocks");
  train_cmd->add_option("--dropout", ta.model.dropout_rate);
  train_cmd->add_option("--masking", ta.masking)
      ->check(CLI::IsMember({"autoregressive", "independent"}));
  train_cmd->add_option("--pnn-widths", ta.widths, "Comma-separated PNN layer widths");

  NllArgs na;
  CLI::App* nll = app.add_subcommand("nll", "Mean negative log-likelihood of a data split");
  na.source.add_to(nll);
  nll->add_option("--model", na.model, "Checkpoint path")->required();
  nll->add_option("--split", na.split)->check(CLI::IsMember({"train", "val", "test", "all"}));

  SampleArgs sa;
  CLI::App* sample = app.add_subcommand("sample", "Draw samples by inverse transform");
  sample->add_option("--model", sa.model, "Checkpoint path")->required();
  sample->add_option("--n", sa.n, "Number of samples")->check(CLI::PositiveNumber);
  sample->add_option("--eps", sa.eps, "Bisection tolerance in model units")
      ->check(CLI::PositiveNumber);
  sample->add_option("--out", sa.out, "CSV output path")->required();

  GridArgs ga;
  CLI::App* grid = app.add_subcommand("density-grid", "Log-density on a 1D or 2D grid");
  grid->add_option("--model", ga.model, "Checkpoint path")->required();
  grid->add_option("--resolution", ga.resolution, "Points per axis")->check(CLI::Range(2, 100000));
  grid->add_option("--dims", ga.dims, "One or two 1-based coordinate indices, e.g. 1,2");
  grid->add_option("--at", ga.at, "Values of the other coordinates (data units)");
  grid->add_option("--out", ga.out, "CSV output path")->required();

  VerifyArgs va;
  CLI::App* ver = app.add_subcommand("verify", "Run the oracle suite");
  ver->add_flag("--quick", va.quick, "Fast checks only (default)");
  ver->add_flag("--full", va.full, "Include training-based checks");
  ver->add_option("--only", va.only, "Criterion ids to run")->delimiter(',');

  std::vector<std::string> args = raw_args;
  try {
    for (std::size_t k = 0; k < args.size(); ++k) {
      std::string path;
      if (args[k] == "--config" && k + 1 < args.size()) path = args[k + 1];
      if (args[k].starts_with("--config=")) path = args[k].substr(9);
      if (path.empty()) continue;
      std::ifstream in(path);
      if (!in) throw UsageError("cannot read config file " + path);
      std::stringstream text;
      text << in.rdbuf();
      args = merge_config(args, text.str());
      break;
    }
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ExtrasError& e) {
    const CLI::App* active = &app;
    for (const CLI::App* s : app.get_subcommands()) active = s;
    err << "error: " << e.what() << "\n";
    for (const auto& a : args) {
      const auto key = option_key(a);
      if (key.empty()) continue;
      const auto names = long_names(active);
      if (std::find(names.begin(), names.end(), key) != names.end()) continue;
      const auto s = suggest(key, names);
      if (!s.empty()) err << "unknown flag " << key << "; did you mean " << s << "?\n";
    }
    return kUsage;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(ta, g, out);
    if (nll->parsed()) return cmd_nll(na, g, out, err);
    if (sample->parsed()) return cmd_sample(sa, g, out);
    if (grid->parsed()) return cmd_density_grid(ga, out);
    if (ver->parsed()) return cmd_verify(va, g, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const InvalidParameter& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

}  // namespace nits::cli
