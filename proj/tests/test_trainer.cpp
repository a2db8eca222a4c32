#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "pasnet/checkpoint.hpp"
#include "pasnet/errors.hpp"
#include "pasnet/losses.hpp"
#include "pasnet/rng.hpp"
#include "pasnet/trainer.hpp"

using namespace pasnet;

namespace {

const Dataset& tiny_data() {
  static const Dataset d = generate_dataset_in_memory({4, 4, 4, 4}, {4, 32, 32}, 3);
  return d;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.n_f = 4;
  c.epochs = 3;
  c.batch_size = 4;
  c.k_folds = 2;
  c.lr = 1e-3;
  c.eval_every = 2;
  c.seed = 5;
  return c;
}

std::vector<std::size_t> all_indices(const Dataset& d) {
  std::vector<std::size_t> v(d.samples.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = i;
  return v;
}

std::vector<std::vector<std::string>> rows(const std::string& csv) {
  std::vector<std::vector<std::string>> out;
  std::istringstream in(csv);
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    out.push_back(cells);
  }
  return out;
}

// Scalar replay of the bias-corrected Adam recurrence.
struct ScalarAdam {
  double m = 0, v = 0;
  int t = 0;
  double step(double w, double g, double lr) {
    ++t;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    return w - lr * mh / (std::sqrt(vh) + 1e-8);
  }
};

}  // namespace

TEST(Adam, ZeroGradientLeavesParameters) {
  auto w = Tensor::from({3}, {1.0f, -2.0f, 0.5f}, true);
  std::vector<Tensor> params{w};
  auto state = AdamState::for_params(params);
  for (int i = 0; i < 10; ++i) {
    w.zero_grad();
    adam_step(params, state, 1e-2);
  }
  EXPECT_EQ(w.data()[0], 1.0f);
  EXPECT_EQ(w.data()[1], -2.0f);
  EXPECT_EQ(w.data()[2], 0.5f);
  EXPECT_EQ(state.step, 10u);
}

TEST(Adam, ConstantGradientStepApproachesLr) {
  auto w = Tensor::from({1}, {0.0f}, true);
  std::vector<Tensor> params{w};
  auto state = AdamState::for_params(params);
  ScalarAdam oracle;
  double ow = 0.0;
  for (int i = 0; i < 200; ++i) {
    const float before = w.data()[0];
    w.zero_grad();
    w.grad()[0] = 0.3f;
    adam_step(params, state, 1e-3);
    ow = oracle.step(ow, 0.3, 1e-3);
    EXPECT_NEAR(w.data()[0], ow, 1e-5);
    EXPECT_NEAR(before - w.data()[0], 1e-3, 1e-6);
  }
}

TEST(Adam, QuadraticBowlConverges) {
  Rng rng(1);
  std::vector<float> init(8);
  for (auto& v : init) v = static_cast<float>(rng.uniform(-1, 1));
  auto w = Tensor::from({8}, init, true);
  std::vector<Tensor> params{w};
  auto state = AdamState::for_params(params);
  for (int i = 0; i < 500; ++i) {
    w.zero_grad();
    for (std::size_t j = 0; j < 8; ++j) w.grad()[j] = w.data()[j];
    adam_step(params, state, 1e-2);
  }
  double norm = 0.0;
  for (float v : w.data()) norm += static_cast<double>(v) * v;
  EXPECT_LT(std::sqrt(norm), 1e-3);
}

TEST(Adam, RejectsBadGradientsBeforeUpdating) {
  auto a = Tensor::from({2}, {1.0f, 2.0f}, true);
  auto b = Tensor::from({1}, {3.0f}, true);
  std::vector<Tensor> params{a, b};
  auto state = AdamState::for_params(params);
  a.grad()[0] = 1.0f;
  b.grad()[0] = NAN;
  EXPECT_THROW(adam_step(params, state, 1e-2), NumericError);
  EXPECT_EQ(a.data()[0], 1.0f);
  EXPECT_EQ(state.step, 0u);
  std::vector<Tensor> fewer{a};
  EXPECT_THROW(adam_step(fewer, state, 1e-2), ShapeError);
}

TEST(Schedule, StepDecay) {
  const TrainConfig c;
  EXPECT_DOUBLE_EQ(lr_at(0, c), 1e-4);
  EXPECT_DOUBLE_EQ(lr_at(99, c), 1e-4);
  EXPECT_DOUBLE_EQ(lr_at(100, c), 5e-5);
  EXPECT_DOUBLE_EQ(lr_at(250, c), 2.5e-5);
  EXPECT_DOUBLE_EQ(lr_at(499, c), 1e-4 / 16);
}

TEST(Config, DefaultsAndValidation) {
  const TrainConfig c;
  EXPECT_EQ(c.lr, 1e-4);
  EXPECT_EQ(c.batch_size, 16u);
  EXPECT_EQ(c.epochs, 500u);
  EXPECT_EQ(c.lambda, 1.0f);
  EXPECT_EQ(c.gamma, 0.5);
  EXPECT_EQ(c.lr_step_epochs, 100u);
  EXPECT_EQ(c.k_folds, 5u);
  EXPECT_NO_THROW(c.validate());
  auto bad = [](auto mutate, const std::string& field) {
    TrainConfig t;
    mutate(t);
    try {
      t.validate();
      ADD_FAILURE() << field;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
    }
  };
  bad([](TrainConfig& t) { t.lr = 0; }, "lr");
  bad([](TrainConfig& t) { t.gamma = 1.5; }, "gamma");
  bad([](TrainConfig& t) { t.gamma = 0; }, "gamma");
  bad([](TrainConfig& t) { t.batch_size = 0; }, "batch_size");
  bad([](TrainConfig& t) { t.epochs = 0; }, "epochs");
  bad([](TrainConfig& t) { t.lambda = -1; }, "lambda");
}

TEST(Config, JsonRoundTrip) {
  TrainConfig c = tiny_config();
  c.lambda = 0.9f;
  c.with_decoder = false;
  const nlohmann::json j = c;
  EXPECT_EQ(j.get<TrainConfig>(), c);
  EXPECT_EQ(nlohmann::json::object().get<TrainConfig>(), TrainConfig{});
}

TEST(Dice, Cases) {
  const std::vector<std::uint8_t> a = {1, 1, 0, 0}, b = {1, 0, 1, 0}, z = {0, 0, 0, 0};
  EXPECT_EQ(dice(a, a), 1.0);
  EXPECT_EQ(dice(a, b), 0.5);
  EXPECT_EQ(dice(z, z), 1.0);
  EXPECT_EQ(dice(a, z), 0.0);
}

TEST(InitialModel, MaskHeadStartsAtPrior) {
  const auto& d = tiny_data();
  const auto train = all_indices(d);
  auto net = initial_model(d, train, tiny_config(), 1);
  double on = 0, total = 0;
  for (const auto& s : d.samples) {
    for (auto m : s.mask) on += m;
    total += static_cast<double>(s.mask.size());
  }
  const double p = on / total;
  for (const auto& [name, t] : net.parameters()) {
    if (name == "decoder.head.bias") {
      for (float v : t.data()) EXPECT_NEAR(v, std::log(p / (1 - p)), 1e-6);
    }
    if (name == "decoder.head.weight") {
      const std::size_t row = t.shape()[1];
      for (std::size_t r = 1; r < t.shape()[0]; ++r)
        for (std::size_t j = 0; j < row; ++j) EXPECT_EQ(t.data()[r * row + j], t.data()[j]);
    }
  }
}

TEST(Train, LambdaZeroFreezesDecoder) {
  const auto& d = tiny_data();
  auto cfg = tiny_config();
  cfg.lambda = 0.0f;
  const auto train = all_indices(d);
  const auto init = initial_model(d, train, cfg, 11).parameters();
  const auto result = train_model(d, train, {}, cfg, 11, 12);
  const auto after = result.net.parameters();
  ASSERT_EQ(init.size(), after.size());
  bool encoder_moved = false;
  for (std::size_t i = 0; i < init.size(); ++i) {
    const bool decoder = init[i].name.rfind("decoder.", 0) == 0;
    for (std::size_t j = 0; j < init[i].tensor.numel(); ++j) {
      if (decoder) EXPECT_EQ(after[i].tensor.data()[j], init[i].tensor.data()[j]) << init[i].name;
      else encoder_moved = encoder_moved || after[i].tensor.data()[j] != init[i].tensor.data()[j];
    }
  }
  EXPECT_TRUE(encoder_moved);
}

TEST(Train, LambdaZeroDecoderGradientsExactlyZero) {
  const auto& d = tiny_data();
  auto net = PasNet::build(tiny_config().model_config(d.geometry()), 2);
  std::vector<float> img;
  std::vector<float> mask;
  std::vector<int> labels;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& s = d.samples[i * 4];
    img.insert(img.end(), s.image.begin(), s.image.end());
    mask.insert(mask.end(), s.mask.begin(), s.mask.end());
    labels.push_back(static_cast<int>(s.label));
  }
  Graph g;
  auto out = net.forward(g, Tensor::from({4, 4, 32, 32}, img), true);
  auto l_cls = cross_entropy_logits(g, out.class_logits, labels);
  auto l_seg = bce_with_logits(g, *out.mask_logits, Tensor::from({4, 4, 32, 32}, mask));
  g.backward(total_loss(g, l_cls, l_seg, {0.0f}));
  for (const auto& [name, t] : net.parameters()) {
    if (name.rfind("decoder.", 0) != 0) continue;
    for (float v : t.grad()) EXPECT_EQ(v, 0.0f) << name;
  }
}

TEST(Train, DeterministicTrace) {
  const auto& d = tiny_data();
  auto cfg = tiny_config();
  cfg.epochs = 5;
  const auto plan = fold_plan_for(d, cfg);
  const auto a = train_fold(d, plan, 0, cfg);
  const auto b = train_fold(d, plan, 0, cfg);
  ASSERT_EQ(a.record.epochs.size(), 5u);
  ASSERT_EQ(b.record.epochs.size(), 5u);
  for (std::size_t e = 0; e < 5; ++e) {
    EXPECT_EQ(a.record.epochs[e].total, b.record.epochs[e].total);
    EXPECT_EQ(a.record.epochs[e].cls, b.record.epochs[e].cls);
    EXPECT_EQ(a.record.epochs[e].seg, b.record.epochs[e].seg);
  }
  EXPECT_EQ(encode_checkpoint(a.net.state()), encode_checkpoint(b.net.state()));
}

TEST(Train, RecordStructure) {
  const auto& d = tiny_data();
  auto cfg = tiny_config();
  cfg.epochs = 5;
  const auto plan = fold_plan_for(d, cfg);
  const auto r = train_fold(d, plan, 1, cfg).record;
  EXPECT_EQ(r.epochs.size(), cfg.epochs);
  ASSERT_EQ(r.evals.size(), 3u);  // epochs 1, 3 and the final one
  EXPECT_EQ(r.evals[0].epoch, 1u);
  EXPECT_EQ(r.evals[2].epoch, 4u);
  for (const auto& e : r.epochs) {
    EXPECT_TRUE(std::isfinite(e.total));
    EXPECT_NEAR(e.total, e.cls + cfg.lambda * e.seg, 1e-5);
  }
  const auto j = r.to_json();
  EXPECT_EQ(j.at("epochs").size(), 5u);
  EXPECT_EQ(j.at("config").at("epochs"), 5);
  EXPECT_FALSE(r.aborted);
}

TEST(Train, CheckpointReproducesEvaluation) {
  const auto& d = tiny_data();
  auto cfg = tiny_config();
  const auto plan = fold_plan_for(d, cfg);
  auto result = train_fold(d, plan, 0, cfg);
  const auto val = plan.validation_indices(0);
  const auto before = evaluate(result.net, d, val, 3);
  auto reloaded = PasNet::build(infer_config(decode_checkpoint(encode_checkpoint(result.net.state())), 32), 0);
  reloaded.load_state(decode_checkpoint(encode_checkpoint(result.net.state())));
  const auto after = evaluate(reloaded, d, val, 3);
  EXPECT_EQ(before.predictions.scores, after.predictions.scores);
  EXPECT_EQ(before.predictions.labels, after.predictions.labels);
  EXPECT_EQ(before.mean_dice, after.mean_dice);
}

TEST(Train, EvaluationIndependentOfBatchSize) {
  const auto& d = tiny_data();
  auto net = PasNet::build(tiny_config().model_config(d.geometry()), 4);
  const auto idx = all_indices(d);
  const auto a = evaluate(net, d, idx, 1);
  const auto b = evaluate(net, d, idx, 16);
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(a.predictions.scores[i][c], b.predictions.scores[i][c], 1e-6);
}

TEST(Train, RejectsEmptyTrainingSet) {
  EXPECT_THROW(train_model(tiny_data(), {}, {}, tiny_config(), 0, 0), ConfigError);
}

TEST(CrossValidation, ReportStructure) {
  const auto& d = tiny_data();
  const auto cfg = tiny_config();
  std::vector<std::size_t> seen;
  const auto cv = cross_validate(d, cfg, [&](std::size_t f, const PasNet&, const RunRecord&) { seen.push_back(f); });
  EXPECT_EQ(seen, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(cv.plan, fold_plan_for(d, cfg));
  ASSERT_EQ(cv.report.folds.size(), 2u);
  double sum = 0.0;
  for (const auto& f : cv.report.folds) {
    EXPECT_TRUE(f.completed);
    sum += f.auc;
  }
  EXPECT_NEAR(cv.report.mean_auc, sum / 2.0, 1e-12);
  const auto r = rows(metrics_csv(cv.report));
  ASSERT_EQ(r.size(), 4u);
  EXPECT_EQ(r[3][0], "mean");
}

TEST(CrossValidation, ParallelFoldsMatchSequential) {
  const auto& d = tiny_data();
  auto cfg = tiny_config();
  const auto seq = cross_validate(d, cfg);
  cfg.parallel_folds = 2;
  const auto par = cross_validate(d, cfg);
  for (std::size_t f = 0; f < 2; ++f) {
    EXPECT_EQ(seq.report.folds[f].auc, par.report.folds[f].auc);
    EXPECT_EQ(seq.runs[f].epochs.back().total, par.runs[f].epochs.back().total);
  }
}

TEST(Ablation, BranchTableStructure) {
  const auto& d = tiny_data();
  const auto ab = ablate_branch(d, tiny_config());
  EXPECT_EQ(ab.backbone.plan, ab.full.plan);
  EXPECT_FALSE(ab.backbone.runs[0].model.with_decoder);
  EXPECT_TRUE(ab.full.runs[0].model.with_decoder);
  EXPECT_EQ(ab.full.runs[0].config.lambda, 1.0f);
  const auto r = rows(ab.csv());
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r[0], (std::vector<std::string>{"backbone", "segmentation_branch", "auc"}));
  EXPECT_EQ(r[1][0], "1");
  EXPECT_EQ(r[1][1], "0");
  EXPECT_EQ(r[2][1], "1");
}

TEST(Ablation, LambdaSweepStructure) {
  const auto& d = tiny_data();
  const auto sw = sweep_lambda(d, tiny_config(), {0.5f, 0.9f, 1.0f});
  const auto r = rows(sw.csv());
  ASSERT_EQ(r.size(), 4u);
  EXPECT_EQ(r[0], (std::vector<std::string>{"lambda", "auc", "accuracy"}));
  EXPECT_EQ(r[1][0], "0.5");
  EXPECT_EQ(r[2][0], "0.9");
  EXPECT_EQ(r[3][0], "1");
  for (const auto& run : sw.runs) EXPECT_EQ(run.plan, sw.runs[0].plan);
  EXPECT_THROW(sweep_lambda(d, tiny_config(), {}), ConfigError);
  EXPECT_THROW(sweep_lambda(d, tiny_config(), {-1.0f}), ConfigError);
}

TEST(Ablation, RepeatedLambdaGivesIdenticalRows) {
  const auto& d = tiny_data();
  const auto r = rows(sweep_lambda(d, tiny_config(), {0.9f, 0.9f}).csv());
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r[1], r[2]);
}
