#include "pasnet/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <iostream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "pasnet/losses.hpp"
#include "pasnet/rng.hpp"

namespace pasnet {
using nlohmann::json;

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr: must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma: must lie in (0, 1]");
  if (batch_size < 1) throw ConfigError("batch_size: must be at least 1");
  if (epochs < 1) throw ConfigError("epochs: must be at least 1");
  if (!(lambda >= 0.0f) || !std::isfinite(lambda)) throw ConfigError("lambda: must be non-negative");
  if (lr_step_epochs < 1) throw ConfigError("lr_step_epochs: must be at least 1");
  if (k_folds < 2) throw ConfigError("k_folds: must be at least 2");
  if (n_f < 1) throw ConfigError("n_f: must be at least 1");
  if (eval_every < 1) throw ConfigError("eval_every: must be at least 1");
  if (parallel_folds < 1) throw ConfigError("parallel_folds: must be at least 1");
}

ModelConfig TrainConfig::model_config(const VolumeGeometry& geometry) const {
  if (geometry.h != geometry.w) throw ConfigError("geometry: volumes must be square, got " +
                                                  std::to_string(geometry.h) + "x" + std::to_string(geometry.w));
  ModelConfig m;
  m.n_in = geometry.n_in;
  m.n_f = n_f;
  m.input_hw = geometry.h;
  m.with_decoder = with_decoder;
  m.validate();
  return m;
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"lr", c.lr},
           {"batch_size", c.batch_size},
           {"epochs", c.epochs},
           {"lambda", c.lambda},
           {"gamma", c.gamma},
           {"lr_step_epochs", c.lr_step_epochs},
           {"k_folds", c.k_folds},
           {"seed", c.seed},
           {"with_decoder", c.with_decoder},
           {"n_f", c.n_f},
           {"eval_every", c.eval_every},
           {"parallel_folds", c.parallel_folds}};
}

void from_json(const json& j, TrainConfig& c) {
  auto take = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  take("lr", c.lr);
  take("batch_size", c.batch_size);
  take("epochs", c.epochs);
  take("lambda", c.lambda);
  take("gamma", c.gamma);
  take("lr_step_epochs", c.lr_step_epochs);
  take("k_folds", c.k_folds);
  take("seed", c.seed);
  take("with_decoder", c.with_decoder);
  take("n_f", c.n_f);
  take("eval_every", c.eval_every);
  take("parallel_folds", c.parallel_folds);
}

AdamState AdamState::for_params(std::span<const Tensor> params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.numel(), 0.0f);
    s.v.emplace_back(p.numel(), 0.0f);
  }
  return s;
}

void adam_step(std::span<Tensor> params, AdamState& state, double lr) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state tracks " + std::to_string(state.m.size()) + " tensors, got " +
                     std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].numel() || state.v[i].size() != params[i].numel()) {
      throw ShapeError("adam_step: moment buffer " + std::to_string(i) + " does not match parameter shape " +
                       shape_str(params[i].shape()));
    }
    for (float gv : params[i].grad()) {
      if (!std::isfinite(gv)) throw NumericError("adam_step: non-finite gradient in parameter " + std::to_string(i));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  const float b1 = static_cast<float>(state.beta1), b2 = static_cast<float>(state.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].data();
    auto gr = params[i].grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (1.0f - b1) * gr[j];
      v[j] = b2 * v[j] + (1.0f - b2) * gr[j] * gr[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      w[j] -= static_cast<float>(lr * m_hat / (std::sqrt(v_hat) + state.eps));
    }
  }
}

double lr_at(std::size_t epoch, const TrainConfig& cfg) {
  const auto decays = static_cast<double>(epoch / cfg.lr_step_epochs);
  return cfg.lr * std::pow(cfg.gamma, decays);
}

json RunRecord::to_json() const {
  json ep = json::array();
  for (const auto& e : epochs) {
    ep.push_back({{"epoch", e.epoch}, {"lr", e.lr}, {"total", e.total}, {"cls", e.cls}, {"seg", e.seg}});
  }
  json ev = json::array();
  for (const auto& e : evals) {
    ev.push_back({{"epoch", e.epoch},
                  {"auc", std::isnan(e.auc) ? json(nullptr) : json(e.auc)},
                  {"accuracy", e.accuracy}});
  }
  return json{{"fold", fold},
              {"seed", seed},
              {"config", config},
              {"model", {{"n_in", model.n_in},
                         {"n_f", model.n_f},
                         {"n_classes", model.n_classes},
                         {"input_hw", model.input_hw},
                         {"with_decoder", model.with_decoder}}},
              {"epochs", ep},
              {"evals", ev},
              {"wall_clock_seconds", wall_clock_seconds},
              {"aborted", aborted},
              {"error", error}};
}

namespace {

struct Batch {
  Tensor images;
  Tensor masks;
  std::vector<int> labels;
};

Batch make_batch(const Dataset& data, std::span<const std::size_t> idx) {
  const auto& g = data.geometry();
  const std::size_t vox = g.voxels();
  Batch b;
  std::vector<float> img(idx.size() * vox), msk(idx.size() * vox);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& s = data.samples.at(idx[i]);
    std::copy(s.image.begin(), s.image.end(), img.begin() + static_cast<std::ptrdiff_t>(i * vox));
    std::transform(s.mask.begin(), s.mask.end(), msk.begin() + static_cast<std::ptrdiff_t>(i * vox),
                   [](std::uint8_t m) { return static_cast<float>(m); });
    b.labels.push_back(static_cast<int>(s.label));
  }
  const Shape shape{idx.size(), g.n_in, g.h, g.w};
  b.images = Tensor::from(shape, std::move(img));
  b.masks = Tensor::from(shape, std::move(msk));
  return b;
}

std::vector<NamedTensor> snapshot(const PasNet& net) {
  std::vector<NamedTensor> out;
  for (const auto& [name, t] : net.state()) out.push_back({name, t.clone()});
  return out;
}

double safe_macro_auc(const PredictionSet& p) {
  try {
    return macro_auc_ovr(p);
  } catch (const UndefinedMetricError&) {
    return std::nan("");
  }
}

}  // namespace

double dice(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("dice: size mismatch");
  std::size_t inter = 0, a = 0, b = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    inter += predicted[i] && truth[i];
    a += predicted[i] != 0;
    b += truth[i] != 0;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

Evaluation evaluate(PasNet& net, const Dataset& data, std::span<const std::size_t> indices, std::size_t batch_size) {
  Evaluation ev;
  const auto vox = data.geometry().voxels();
  double dice_sum = 0.0;
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const auto idx = indices.subspan(start, std::min(batch_size, indices.size() - start));
    Batch b = make_batch(data, idx);
    Graph g(false);
    auto out = net.forward(g, b.images, false);
    for (auto& row : softmax_scores(out.class_logits)) ev.predictions.scores.push_back(row);
    ev.predictions.labels.insert(ev.predictions.labels.end(), b.labels.begin(), b.labels.end());
    if (out.mask_logits) {
      const float* logits = out.mask_logits->data().data();
      std::vector<std::uint8_t> pred(vox);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < vox; ++j) pred[j] = logits[i * vox + j] > 0.0f;
        dice_sum += dice(pred, data.samples[idx[i]].mask);
      }
    }
  }
  ev.mean_dice = net.config().with_decoder && !indices.empty() ? dice_sum / static_cast<double>(indices.size())
                                                               : std::nan("");
  return ev;
}

PasNet initial_model(const Dataset& data, const std::vector<std::size_t>& train, const TrainConfig& cfg,
                     std::uint64_t model_seed) {
  PasNet net = PasNet::build(cfg.model_config(data.geometry()), model_seed);
  if (!net.config().with_decoder || train.empty()) return net;
  std::size_t on = 0, total = 0;
  for (auto i : train) {
    const auto& m = data.samples.at(i).mask;
    on += static_cast<std::size_t>(std::count(m.begin(), m.end(), std::uint8_t{1}));
    total += m.size();
  }
  const double p = std::clamp(static_cast<double>(on) / static_cast<double>(total), 1e-3, 1.0 - 1e-3);
  for (auto& [name, t] : net.parameters()) {
    auto d = t.data();
    if (name == "decoder.head.weight") {
      const std::size_t row = t.shape()[1];
      for (std::size_t r = 1; r < t.shape()[0]; ++r) std::copy_n(d.begin(), row, d.begin() + static_cast<std::ptrdiff_t>(r * row));
    }
    if (name == "decoder.head.bias") std::fill(d.begin(), d.end(), static_cast<float>(std::log(p / (1.0 - p))));
  }
  return net;
}

TrainResult train_model(const Dataset& data, const std::vector<std::size_t>& train,
                        const std::vector<std::size_t>& validation, const TrainConfig& cfg, std::uint64_t model_seed,
                        std::uint64_t stream_seed, std::size_t fold) {
  cfg.validate();
  if (train.empty()) throw ConfigError("train: empty training set");
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result{initial_model(data, train, cfg, model_seed), {}};
  PasNet& net = result.net;
  RunRecord& rec = result.record;
  rec.fold = fold;
  rec.seed = cfg.seed;
  rec.config = cfg;
  rec.model = net.config();

  std::vector<Tensor> params;
  for (auto& p : net.parameters()) params.push_back(p.tensor);
  AdamState adam = AdamState::for_params(params);
  const LossConfig loss_cfg{cfg.lambda};
  auto last_good = snapshot(net);
  std::vector<std::size_t> order = train;

  auto validate_now = [&](std::size_t epoch) {
    if (validation.empty()) return;
    const auto ev = evaluate(net, data, validation, cfg.batch_size);
    rec.evals.push_back({epoch, safe_macro_auc(ev.predictions), accuracy(ev.predictions)});
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    Rng rng(derive_seed(stream_seed, epoch));
    rng.shuffle(order.begin(), order.end());
    EpochRecord er{epoch, lr, 0.0, 0.0, 0.0};
    try {
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const auto idx = std::span<const std::size_t>(order).subspan(start, std::min(cfg.batch_size, order.size() - start));
        Batch b = make_batch(data, idx);
        Graph g;
        auto out = net.forward(g, b.images, true);
        Tensor l_cls = cross_entropy_logits(g, out.class_logits, b.labels);
        Tensor loss = l_cls;
        double seg = 0.0;
        if (out.mask_logits) {
          Tensor l_seg = bce_with_logits(g, *out.mask_logits, b.masks);
          seg = l_seg.item();
          loss = total_loss(g, l_cls, l_seg, loss_cfg);
        }
        for (auto& p : params) p.zero_grad();
        g.backward(loss);
        adam_step(params, adam, lr);
        const double w = static_cast<double>(idx.size()) / static_cast<double>(order.size());
        er.total += w * loss.item();
        er.cls += w * l_cls.item();
        er.seg += w * seg;
      }
      if (!std::isfinite(er.total)) throw NumericError("epoch loss is not finite");
    } catch (const NumericError& e) {
      rec.aborted = true;
      std::ostringstream msg;
      msg << "fold " << fold << " aborted at epoch " << epoch << ": " << e.what();
      rec.error = msg.str();
      rec.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      throw TrainingAborted(rec.error, rec, std::move(last_good));
    }
    rec.epochs.push_back(er);
    last_good = snapshot(net);
    if ((epoch + 1) % cfg.eval_every == 0 && epoch + 1 != cfg.epochs) validate_now(epoch);
  }
  validate_now(cfg.epochs - 1);
  rec.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

FoldPlan fold_plan_for(const Dataset& data, const TrainConfig& cfg) {
  return stratified_kfold(data.labels(), cfg.k_folds, derive_seed(cfg.seed, hash_name("folds")));
}

TrainResult train_fold(const Dataset& data, const FoldPlan& plan, std::size_t fold, const TrainConfig& cfg) {
  const std::uint64_t model_seed = derive_seed(derive_seed(cfg.seed, hash_name("model")), fold);
  const std::uint64_t stream_seed = derive_seed(derive_seed(cfg.seed, hash_name("batches")), fold);
  return train_model(data, plan.training_indices(fold), plan.validation_indices(fold), cfg, model_seed, stream_seed,
                     fold);
}

CrossValidationResult cross_validate(const Dataset& data, const TrainConfig& cfg, const FoldCallback& on_fold) {
  cfg.validate();
  CrossValidationResult cv;
  cv.plan = fold_plan_for(data, cfg);
  const std::size_t k = cv.plan.k;
  cv.report.folds.resize(k);
  cv.runs.resize(k);

  auto run_fold = [&](std::size_t f) {
    FoldMetrics& fm = cv.report.folds[f];
    fm.fold = f;
    try {
      auto result = train_fold(data, cv.plan, f, cfg);
      const auto val = cv.plan.validation_indices(f);
      const auto ev = evaluate(result.net, data, val, cfg.batch_size);
      fm.auc = macro_auc_ovr(ev.predictions);
      fm.accuracy = accuracy(ev.predictions);
      fm.class_auc = per_class_auc(ev.predictions);
      fm.completed = true;
      cv.runs[f] = result.record;
      if (on_fold) on_fold(f, result.net, result.record);
    } catch (const TrainingAborted& e) {
      fm.error = e.what();
      cv.runs[f] = e.record();
    } catch (const NumericError& e) {
      fm.error = e.what();
    } catch (const UndefinedMetricError& e) {
      fm.error = e.what();
    }
  };

  const std::size_t workers = std::min(cfg.parallel_folds, k);
  if (workers <= 1) {
    for (std::size_t f = 0; f < k; ++f) run_fold(f);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::mutex err_mu;
    std::exception_ptr first_error;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t f = next++; f < k; f = next++) {
          try {
            run_fold(f);
          } catch (...) {
            std::lock_guard lock(err_mu);
            if (!first_error) first_error = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }
  cv.report.summarize();
  if (cv.report.incomplete) {
    std::cerr << "warning: " << std::count_if(cv.report.folds.begin(), cv.report.folds.end(),
                                              [](const FoldMetrics& f) { return !f.completed; })
              << " fold(s) failed; means cover completed folds only\n";
  }
  return cv;
}

std::string BranchAblation::csv() const {
  std::ostringstream os;
  os << "backbone,segmentation_branch,auc\n";
  os << "1,0," << format_double(backbone.report.mean_auc) << '\n';
  os << "1,1," << format_double(full.report.mean_auc) << '\n';
  return os.str();
}

BranchAblation ablate_branch(const Dataset& data, const TrainConfig& cfg) {
  TrainConfig backbone = cfg;
  backbone.with_decoder = false;
  TrainConfig full = cfg;
  full.with_decoder = true;
  full.lambda = 1.0f;
  return BranchAblation{cross_validate(data, backbone), cross_validate(data, full)};
}

std::string LambdaSweep::csv() const {
  std::ostringstream os;
  os << "lambda,auc,accuracy\n";
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    os << format_float(lambdas[i]) << ',' << format_double(runs[i].report.mean_auc) << ','
       << format_double(runs[i].report.mean_accuracy) << '\n';
  }
  return os.str();
}

LambdaSweep sweep_lambda(const Dataset& data, const TrainConfig& cfg, const std::vector<float>& lambdas) {
  if (lambdas.empty()) throw ConfigError("lambdas: need at least one value");
  for (float l : lambdas) {
    if (!(l >= 0.0f) || !std::isfinite(l)) throw ConfigError("lambdas: values must be non-negative");
  }
  LambdaSweep sweep;
  sweep.lambdas = lambdas;
  for (float l : lambdas) {
    TrainConfig c = cfg;
    c.lambda = l;
    c.with_decoder = true;
    sweep.runs.push_back(cross_validate(data, c));
  }
  return sweep;
}

}  // namespace pasnet
