// Copyright (c) 2026, The budgetvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "budgetvit/trainer.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "budgetvit/errors.hpp"
#include "budgetvit/random.hpp"

namespace fs = std::filesystem;

namespace budgetvit {
namespace {

using Clock = std::chrono::steady_clock;

std::string shortest(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

template <typename T>
DType dtype_of() {
  return std::is_same_v<T, float> ? DType::F32 : DType::F64;
}

double lr_at(const RunConfig& cfg, double progress) {
  if (cfg.optim.lr_schedule == LrSchedule::Constant) return cfg.optim.lr;
  const double p = std::clamp(progress, 0.0, 1.0);
  return 0.5 * cfg.optim.lr * (1.0 + std::cos(std::numbers::pi * p));
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

}  // namespace

// ---- optimizer ------------------------------------------------------------

AdamWHyper adamw_hyper(const OptimConfig& o) {
  return AdamWHyper{o.lr, o.beta1, o.beta2, o.eps, o.weight_decay};
}

template <typename T>
AdamW<T>::AdamW(const VitModel<T>& model, const AdamWHyper& hp) : hp_(hp) {
  for (const Param<T>* p : model.parameters()) {
    if (p->name == "pos_embed") pos_index_ = names.size();
    names.push_back(p->name);
    m.push_back(Tensor<T>::zeros_like(p->value));
    v.push_back(Tensor<T>::zeros_like(p->value));
  }
}

template <typename T>
void AdamW<T>::step(VitModel<T>& model, double lr) {
  ++t_;
  AdamWHyper hp = hp_;
  hp.lr = lr;
  auto params = model.parameters();
  if (params.size() != m.size()) throw StateError("AdamW: parameter count changed since construction");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param<T>& p = *params[i];
    hp.weight_decay = p.decay ? hp_.weight_decay : 0.0;
    adamw_step(p.value, p.grad, m[i], v[i], hp, t_);
  }
}

template <typename T>
void AdamW<T>::resize_pos_embed(int old_grid, int new_grid, bool has_class_token) {
  m[pos_index_] = interpolate_embedding_rows(m[pos_index_], old_grid, new_grid, has_class_token);
  v[pos_index_] = interpolate_embedding_rows(v[pos_index_], old_grid, new_grid, has_class_token);
  // Bilinear weights are non-negative, so the second moment stays >= 0.
}

// ---- step and evaluation --------------------------------------------------

template <typename T>
double train_step(VitModel<T>& model, AdamW<T>& opt, const Batch<T>& batch, double label_smoothing, double lr) {
  VitCache<T> cache;
  Tensor<T> logits = model.forward(batch.images, cache);
  Tensor<T> dlogits;
  const double loss = static_cast<double>(cross_entropy_ls(logits, batch.labels, label_smoothing, &dlogits));
  if (!std::isfinite(loss)) return loss;
  model.zero_grad();
  model.backward(cache, dlogits);
  opt.step(model, lr);
  return loss;
}

template <typename T>
double evaluate(const Predictor<T>& predict, const Dataset& val, int image_size, const Normalization& norm,
                int batch_size, int patch_size) {
  BatchOptions bo;
  bo.image_size = image_size;
  bo.batch_size = batch_size;
  bo.augment = false;
  bo.norm = norm;
  bo.patch_size = patch_size;
  BatchStream<T> stream(val, bo);
  std::size_t correct = 0, total = 0;
  while (auto batch = stream.next()) {
    const Tensor<T> logits = predict(batch->images);
    const std::size_t classes = logits.dim(1);
    for (std::size_t b = 0; b < batch->labels.size(); ++b) {
      const T* row = logits.data() + b * classes;
      const auto pred = static_cast<int>(std::max_element(row, row + classes) - row);
      correct += pred == batch->labels[b];
      ++total;
    }
  }
  if (total == 0) throw IngestionError("evaluate: no decodable validation samples");
  return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

template <typename T>
double evaluate(const VitModel<T>& model, const Dataset& val, int image_size, const Normalization& norm,
                int batch_size) {
  const int p = model.config().patch_size;
  if (image_size % p != 0) {
    throw ShapeError("evaluate: image size " + std::to_string(image_size) + " is not divisible by patch size " +
                     std::to_string(p));
  }
  if (image_size != model.current_image_size()) {
    throw StateError("evaluate: model positional grid is " + std::to_string(model.current_grid()) +
                     " but image size " + std::to_string(image_size) + " needs " + std::to_string(image_size / p));
  }
  Predictor<T> predict = [&model](const Tensor<T>& x) { return model.forward(x); };
  return evaluate(predict, val, image_size, norm, batch_size, p);
}

// ---- metrics CSV ----------------------------------------------------------

void write_metrics_row(std::ostream& os, const MetricsRecord& r) {
  os << r.epoch << ',' << shortest(r.wall_clock_s) << ',' << r.image_size << ',' << shortest(r.train_loss) << ','
     << shortest(r.val_top1) << ',' << r.steps << '\n';
}

std::vector<MetricsRecord> read_metrics_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kMetricsHeader) {
    throw IngestionError("metrics: missing or unexpected header '" + line + "'");
  }
  std::vector<MetricsRecord> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 6) throw IngestionError("metrics: line " + std::to_string(lineno) + " has " +
                                            std::to_string(f.size()) + " fields, expected 6");
    try {
      std::size_t used = 0;
      auto full = [&](const std::string& s) {
        if (used != s.size()) throw std::invalid_argument(s);
      };
      MetricsRecord r;
      r.epoch = std::stoi(f[0], &used), full(f[0]);
      r.wall_clock_s = std::stod(f[1], &used), full(f[1]);
      r.image_size = std::stoi(f[2], &used), full(f[2]);
      r.train_loss = std::stod(f[3], &used), full(f[3]);
      r.val_top1 = std::stod(f[4], &used), full(f[4]);
      r.steps = std::stoi(f[5], &used), full(f[5]);
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw IngestionError("metrics: line " + std::to_string(lineno) + " is not numeric: " + line);
    }
  }
  return rows;
}

std::vector<MetricsRecord> read_metrics_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open metrics file " + path.string());
  return read_metrics_csv(in);
}

std::string to_string(StopReason r) { return r == StopReason::Budget ? "budget" : "max_epochs"; }

// ---- checkpoints ----------------------------------------------------------

template <typename T>
Checkpoint make_checkpoint(const RunConfig& cfg, const TrainState& state, const VitModel<T>& model,
                           const AdamW<T>& opt) {
  Checkpoint ck{cfg, state, {}};
  ck.state.grid = model.current_grid();
  ck.state.optimizer_step = opt.steps();
  const auto params = model.parameters();
  for (const Param<T>* p : params) ck.tensors.push_back({"p/" + p->name, dtype_of<T>(), tensor_cast<double>(p->value)});
  for (std::size_t i = 0; i < opt.m.size(); ++i) {
    ck.tensors.push_back({"m/" + opt.names[i], dtype_of<T>(), tensor_cast<double>(opt.m[i])});
    ck.tensors.push_back({"v/" + opt.names[i], dtype_of<T>(), tensor_cast<double>(opt.v[i])});
  }
  return ck;
}

template <typename T>
void save_checkpoint(const fs::path& path, const RunConfig& cfg, const TrainState& state, const VitModel<T>& model,
                     const AdamW<T>& opt) {
  write_checkpoint(path, make_checkpoint(cfg, state, model, opt));
}

template <typename T>
std::pair<VitModel<T>, AdamW<T>> restore(const Checkpoint& ck, const ModelConfig& expected) {
  const ModelConfig& got = ck.config.model;
  auto mismatch = [](const char* field, const std::string& a, const std::string& b) {
    throw CheckpointError(std::string("model.") + field + ": checkpoint has " + a + ", expected " + b);
  };
  if (got.num_classes != expected.num_classes) {
    mismatch("num_classes", std::to_string(got.num_classes), std::to_string(expected.num_classes));
  }
  if (got.embed_dim != expected.embed_dim) mismatch("embed_dim", std::to_string(got.embed_dim), std::to_string(expected.embed_dim));
  if (got.depth != expected.depth) mismatch("depth", std::to_string(got.depth), std::to_string(expected.depth));
  if (got.num_heads != expected.num_heads) mismatch("num_heads", std::to_string(got.num_heads), std::to_string(expected.num_heads));
  if (got.patch_size != expected.patch_size) {
    mismatch("patch_size", std::to_string(got.patch_size), std::to_string(expected.patch_size));
  }
  if (got.ffn_kind != expected.ffn_kind) mismatch("ffn", to_string(got.ffn_kind), to_string(expected.ffn_kind));
  if (got.use_class_token != expected.use_class_token) {
    mismatch("use_class_token", got.use_class_token ? "true" : "false", expected.use_class_token ? "true" : "false");
  }
  if (!(got == expected)) throw CheckpointError("model: checkpoint config differs from the expected model config");

  VitModel<T> model(got, 0);
  const bool cls = got.use_class_token;
  // pos_embed is stored at the checkpointed grid; reshape before copying.
  const int grid = ck.state.grid;
  if (grid < 1) throw CheckpointError("state.grid: must be >= 1, got " + std::to_string(grid));
  model.pos_embed = Param<T>("pos_embed",
                             Tensor<T>({static_cast<std::size_t>(grid * grid + (cls ? 1 : 0)),
                                        static_cast<std::size_t>(got.embed_dim)}),
                             false);
  model.set_grid(grid);
  auto load_into = [&](const std::string& name, Tensor<T>& dst) {
    const NamedTensor* t = ck.find(name);
    if (!t) throw CheckpointError("checkpoint is missing tensor '" + name + "'");
    if (t->value.shape() != dst.shape()) {
      throw CheckpointError("tensor '" + name + "': shape " + shape_str(t->value.shape()) + " does not match " +
                            shape_str(dst.shape()));
    }
    dst = tensor_cast<T>(t->value);
  };
  for (Param<T>* p : model.parameters()) load_into("p/" + p->name, p->value);

  AdamW<T> opt(model, adamw_hyper(ck.config.optim));
  for (std::size_t i = 0; i < opt.m.size(); ++i) {
    load_into("m/" + opt.names[i], opt.m[i]);
    load_into("v/" + opt.names[i], opt.v[i]);
  }
  opt.set_steps(ck.state.optimizer_step);
  return {std::move(model), std::move(opt)};
}

template <typename T>
std::pair<VitModel<T>, AdamW<T>> restore(const Checkpoint& ck) {
  return restore<T>(ck, ck.config.model);
}

fs::path latest_checkpoint(const fs::path& run_dir) {
  std::ifstream in(run_dir / "ckpt_latest");
  std::string name;
  if (!in || !std::getline(in, name) || name.empty()) {
    throw CheckpointError("no ckpt_latest manifest in " + run_dir.string());
  }
  return run_dir / name;
}

// ---- training loop --------------------------------------------------------

template <typename T>
TrainResult<T> train(const RunConfig& cfg, const Dataset& train_ds, const Dataset& val_ds,
                     const TrainOptions& options) {
  if (auto v = cfg.validate(DataCheck::SkipPaths); !v.empty()) throw ConfigError(std::move(v));
  std::vector<std::string> mismatch;
  if (train_ds.num_classes() != cfg.model.num_classes) {
    mismatch.push_back("model.num_classes: " + std::to_string(cfg.model.num_classes) +
                       " does not match the training set's " + std::to_string(train_ds.num_classes()) + " classes");
  }
  if (val_ds.num_classes() != train_ds.num_classes()) {
    mismatch.push_back("data.val_path: validation set has " + std::to_string(val_ds.num_classes()) +
                       " classes, training set " + std::to_string(train_ds.num_classes()));
  }
  if (!mismatch.empty()) throw ConfigError(std::move(mismatch));

  const ImageSizeSchedule schedule = cfg.make_schedule();
  ModelConfig mcfg = cfg.model;
  mcfg.final_image_size = cfg.schedule.final_size;
  const int patch = mcfg.patch_size;
  const Normalization norm = cfg.data.normalization();

  VitModel<T> init_model(mcfg, derive_seed(cfg.seed, Stream::ModelInit));
  AdamW<T> init_opt(init_model, adamw_hyper(cfg.optim));
  TrainResult<T> res{std::move(init_model), std::move(init_opt), {}, {}, {}, StopReason::Budget};
  res.state.seed = cfg.seed;
  if (!options.resume_from.empty()) {
    const Checkpoint ck = read_checkpoint(options.resume_from);
    auto [model, opt] = restore<T>(ck, mcfg);
    res.model = std::move(model);
    res.optimizer = std::move(opt);
    res.state = ck.state;
    if (ck.state.seed != cfg.seed) {
      spdlog::warn("resuming with seed {} over a checkpoint trained with seed {}", cfg.seed, ck.state.seed);
      res.state.seed = cfg.seed;
    }
  }
  VitModel<T>& model = res.model;
  AdamW<T>& opt = res.optimizer;
  TrainState& state = res.state;

  const bool files = options.write_files && !cfg.run_dir.empty();
  const fs::path run_dir = cfg.run_dir;
  std::ofstream metrics;
  if (files) {
    fs::create_directories(run_dir);
    write_text_file(run_dir / "config.ini", to_ini(cfg));
    const fs::path mpath = run_dir / "metrics.csv";
    const bool append = !options.resume_from.empty() && fs::exists(mpath);
    metrics.open(mpath, append ? std::ios::app : std::ios::trunc);
    if (!metrics) throw Error("cannot write " + mpath.string());
    if (!append) metrics << kMetricsHeader << '\n' << std::flush;
  }

  const auto start = Clock::now() - std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(state.elapsed));
  auto elapsed = [&start] { return std::chrono::duration<double>(Clock::now() - start).count(); };
  const double limit = cfg.budget.wall_clock_limit;

  auto save = [&](const fs::path& path) {
    state.elapsed = elapsed();
    state.grid = model.current_grid();
    save_checkpoint(path, cfg, state, model, opt);
  };
  auto save_epoch = [&](int epoch) {
    if (!files) return;
    const std::string name = "ckpt_epoch_" + std::to_string(epoch) + ".bin";
    save(run_dir / name);
    write_text_file(run_dir / "ckpt_latest", name + "\n");
  };

  for (int epoch = state.epoch;; ++epoch) {
    if (cfg.budget.max_epochs > 0 && epoch >= cfg.budget.max_epochs) {
      res.stop = StopReason::MaxEpochs;
      break;
    }
    if (elapsed() >= limit) {
      res.stop = StopReason::Budget;
      break;
    }
    const int size = schedule.size_for_epoch(epoch);
    const int grid = size / patch;
    if (grid != model.current_grid()) {
      const int old_grid = model.current_grid();
      if (epoch > 0 && schedule.size_for_epoch(epoch - 1) < size) {
        res.transitions.push_back({epoch, schedule.size_for_epoch(epoch - 1), size,
                                   schedule.size_for_epoch(epoch - 1) / patch, grid});
      }
      opt.resize_pos_embed(old_grid, grid, mcfg.use_class_token);
      model.interpolate_pos_embed(grid);
    }
    state.epoch = epoch;
    state.current_image_size = size;

    BatchOptions bo;
    bo.image_size = size;
    bo.batch_size = cfg.optim.batch_size;
    bo.epoch = epoch;
    bo.seed = cfg.seed;
    bo.augment = cfg.data.augment;
    bo.norm = norm;
    bo.patch_size = patch;
    BatchStream<T> stream(train_ds, bo);
    const double nb = static_cast<double>(stream.num_batches());

    int steps = 0;
    double loss_sum = 0.0;
    bool expired = false;
    while (true) {
      if (elapsed() >= limit) {
        expired = true;
        break;
      }
      const auto step_start = Clock::now();
      auto batch = stream.next();
      if (!batch) break;
      const double progress = cfg.budget.max_epochs > 0 ? (epoch + steps / nb) / cfg.budget.max_epochs
                                                         : elapsed() / limit;
      const double loss = train_step(model, opt, *batch, cfg.optim.label_smoothing, lr_at(cfg, progress));
      if (!std::isfinite(loss)) {
        std::string diag;
        if (files) {
          diag = (run_dir / "ckpt_nonfinite.bin").string();
          save(diag);
        }
        throw NonFiniteLossError("non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                                     std::to_string(state.global_step),
                                 diag);
      }
      res.max_step_s = std::max(res.max_step_s, std::chrono::duration<double>(Clock::now() - step_start).count());
      loss_sum += loss;
      ++steps;
      ++state.global_step;
    }

    if (steps > 0) {
      const int eval_size = cfg.eval_size > 0 ? cfg.eval_size : size;
      double top1 = 0.0;
      const auto eval_start = Clock::now();
      if (eval_size == model.current_image_size()) {
        top1 = evaluate(model, val_ds, eval_size, norm, cfg.optim.batch_size);
      } else {
        VitModel<T> probe = model;
        probe.interpolate_pos_embed(eval_size / patch);
        top1 = evaluate(probe, val_ds, eval_size, norm, cfg.optim.batch_size);
      }
      res.last_eval_s = std::chrono::duration<double>(Clock::now() - eval_start).count();
      MetricsRecord rec{epoch, elapsed(), size, loss_sum / steps, top1, steps};
      res.metrics.push_back(rec);
      if (files) {
        write_metrics_row(metrics, rec);
        metrics.flush();
      }
      if (options.on_epoch) options.on_epoch(rec);
    }
    state.epoch = epoch + 1;
    save_epoch(epoch);
    if (expired) {
      res.stop = StopReason::Budget;
      break;
    }
  }
  state.elapsed = elapsed();
  state.grid = model.current_grid();
  state.optimizer_step = opt.steps();
  if (files && res.metrics.empty() && !fs::exists(run_dir / "ckpt_latest")) {
    // Nothing ran; still leave a loadable checkpoint behind.
    save_epoch(state.epoch);
  }
  return res;
}

// ---- throughput -----------------------------------------------------------

double median(std::vector<double> xs) {
  if (xs.empty()) throw ArgumentError("median of an empty sample");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

template <typename T>
std::vector<BenchRow> throughput_bench(const ModelConfig& cfg, const std::vector<int>& sizes, int steps, int batch_size,
                                       std::uint64_t seed, int warmup) {
  if (steps < 1) throw ArgumentError("throughput_bench: steps must be >= 1");
  if (batch_size < 1) throw ArgumentError("throughput_bench: batch size must be >= 1");
  for (int s : sizes) {
    if (s < 1 || s % cfg.patch_size != 0) {
      throw ShapeError("throughput_bench: size " + std::to_string(s) + " is not divisible by patch size " +
                       std::to_string(cfg.patch_size));
    }
  }
  const VitModel<T> base(cfg, derive_seed(seed, Stream::ModelInit));
  std::vector<BenchRow> rows;
  for (int s : sizes) {
    VitModel<T> model = base;
    model.interpolate_pos_embed(s / cfg.patch_size);
    const auto b = static_cast<std::size_t>(batch_size), us = static_cast<std::size_t>(s);
    Tensor<T> images({b, 3, us, us});
    std::mt19937_64 rng(derive_seed(seed, Stream::Synthetic, static_cast<std::uint64_t>(s)));
    for (std::size_t i = 0; i < images.size(); ++i) images[i] = static_cast<T>(2.0 * unit_uniform(rng) - 1.0);
    std::vector<int> labels(b);
    for (std::size_t i = 0; i < b; ++i) labels[i] = static_cast<int>(i % static_cast<std::size_t>(cfg.num_classes));

    std::vector<double> times;
    for (int it = 0; it < warmup + steps; ++it) {
      const auto t0 = Clock::now();
      VitCache<T> cache;
      Tensor<T> logits = model.forward(images, cache);
      Tensor<T> dlogits;
      cross_entropy_ls(logits, labels, 0.1, &dlogits);
      model.zero_grad();
      model.backward(cache, dlogits);
      const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
      if (it >= warmup) times.push_back(ms);
    }
    const std::size_t g = us / static_cast<std::size_t>(cfg.patch_size);
    rows.push_back({s, g * g, median(times)});
  }
  return rows;
}

#define BUDGETVIT_INSTANTIATE(T)                                                                                     \
  template class AdamW<T>;                                                                                           \
  template double train_step(VitModel<T>&, AdamW<T>&, const Batch<T>&, double, double);                              \
  template double evaluate(const Predictor<T>&, const Dataset&, int, const Normalization&, int, int);                \
  template double evaluate(const VitModel<T>&, const Dataset&, int, const Normalization&, int);                      \
  template TrainResult<T> train(const RunConfig&, const Dataset&, const Dataset&, const TrainOptions&);              \
  template Checkpoint make_checkpoint(const RunConfig&, const TrainState&, const VitModel<T>&, const AdamW<T>&);     \
  template void save_checkpoint(const fs::path&, const RunConfig&, const TrainState&, const VitModel<T>&,            \
                                const AdamW<T>&);                                                                    \
  template std::pair<VitModel<T>, AdamW<T>> restore(const Checkpoint&, const ModelConfig&);                          \
  template std::pair<VitModel<T>, AdamW<T>> restore(const Checkpoint&);                                              \
  template std::vector<BenchRow> throughput_bench<T>(const ModelConfig&, const std::vector<int>&, int, int,          \
                                                     std::uint64_t, int);

BUDGETVIT_INSTANTIATE(float)
BUDGETVIT_INSTANTIATE(double)
#undef BUDGETVIT_INSTANTIATE

}  // namespace budgetvit
