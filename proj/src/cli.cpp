#include "pasnet/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <sstream>

#include "pasnet/checkpoint.hpp"
#include "pasnet/dataset.hpp"
#include "pasnet/gradcheck_suite.hpp"
#include "pasnet/metrics.hpp"
#include "pasnet/trainer.hpp"

namespace pasnet {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flag values as parsed; unset optionals fall back to the config file, then
/// to defaults.
struct Flags {
  std::optional<std::string> config_path;
  std::optional<std::string> data;
  std::optional<std::string> out;

  std::optional<double> lr;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> epochs;
  std::optional<float> lambda;
  std::optional<double> gamma;
  std::optional<std::size_t> lr_step;
  std::optional<std::size_t> k_folds;
  std::optional<std::uint64_t> seed;
  bool no_decoder = false;
  std::optional<std::size_t> n_f;
  std::optional<std::size_t> eval_every;
  std::optional<std::size_t> parallel_folds;

  std::optional<std::size_t> fold;
  std::optional<std::vector<float>> lambdas;
  std::optional<std::string> checkpoint;

  std::optional<std::vector<std::size_t>> counts;
  std::optional<std::size_t> hw;
  std::optional<std::size_t> n_in;

  std::optional<std::string> ops;
  std::optional<std::size_t> instances;
};

void add_train_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--lr", f.lr, "Learning rate (default 1e-4)");
  cmd->add_option("--batch-size", f.batch_size, "Mini-batch size (default 16)");
  cmd->add_option("--epochs", f.epochs, "Epochs per fold (default 500)");
  cmd->add_option("--lambda", f.lambda, "Segmentation loss weight (default 1.0)");
  cmd->add_option("--gamma", f.gamma, "LR decay factor per step (default 0.5)");
  cmd->add_option("--lr-step", f.lr_step, "Epochs between LR decays (default 100)");
  cmd->add_option("--k-folds", f.k_folds, "Cross-validation folds (default 5)");
  cmd->add_flag("--no-decoder", f.no_decoder, "Backbone only, no segmentation branch");
  cmd->add_option("--n-f", f.n_f, "Base filter count (default 16)");
  cmd->add_option("--eval-every", f.eval_every, "Validation cadence in epochs (default 10)");
  cmd->add_option("--parallel-folds", f.parallel_folds, "Folds trained concurrently (default 1)");
}

struct Resolved {
  std::string command;
  json file = json::object();  // config file contents
  TrainConfig train;
  std::string data;
  std::string out;
};

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  try {
    json j = json::parse(in);
    if (!j.is_object()) throw ParseError("config " + path.string() + ": top level must be an object");
    return j;
  } catch (const json::exception& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }
}

template <class T>
void overlay(T& field, const std::optional<T>& flag) {
  if (flag) field = *flag;
}

Resolved resolve(const std::string& command, const Flags& f) {
  Resolved r;
  r.command = command;
  if (f.config_path) {
    r.file = read_json_file(*f.config_path);
    try {
      from_json(r.file.contains("train") ? r.file.at("train") : r.file, r.train);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    if (r.file.contains("data")) r.data = r.file.at("data").get<std::string>();
    if (r.file.contains("out")) r.out = r.file.at("out").get<std::string>();
  }
  overlay(r.train.lr, f.lr);
  overlay(r.train.batch_size, f.batch_size);
  overlay(r.train.epochs, f.epochs);
  overlay(r.train.lambda, f.lambda);
  overlay(r.train.gamma, f.gamma);
  overlay(r.train.lr_step_epochs, f.lr_step);
  overlay(r.train.k_folds, f.k_folds);
  overlay(r.train.seed, f.seed);
  if (f.no_decoder) r.train.with_decoder = false;
  overlay(r.train.n_f, f.n_f);
  overlay(r.train.eval_every, f.eval_every);
  overlay(r.train.parallel_folds, f.parallel_folds);
  overlay(r.data, f.data);
  overlay(r.out, f.out);
  r.train.validate();
  return r;
}

void require_paths(const Resolved& r, bool need_data) {
  if (need_data && r.data.empty()) throw UsageError("--data is required");
  if (r.out.empty()) throw UsageError("--out is required");
}

fs::path prepare_out(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + out + ": " + ec.message());
  return fs::path(out);
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json snapshot_json(const Resolved& r, json extra = json::object()) {
  json j{{"command", r.command}, {"train", r.train}, {"data", r.data}, {"out", r.out}};
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  return j;
}

void write_cv_artifacts(const fs::path& dir, const CrossValidationResult& cv) {
  write_text(dir / "metrics.csv", metrics_csv(cv.report));
  write_text(dir / "per_class_auc.csv", per_class_auc_csv(cv.report));
  json runs = json::array();
  for (const auto& r : cv.runs) runs.push_back(r.to_json());
  json folds = json::array();
  for (const auto& f : cv.plan.folds) folds.push_back(f);
  write_json(dir / "run.json", json{{"fold_plan", {{"k", cv.plan.k}, {"seed", cv.plan.seed}, {"folds", folds}}},
                                    {"runs", runs}});
}

FoldCallback checkpoint_writer(const fs::path& dir) {
  return [dir](std::size_t fold, const PasNet& net, const RunRecord&) {
    save_checkpoint(dir / ("fold_" + std::to_string(fold) + ".pasw"), net.state());
  };
}

void print_report(std::ostream& out, const MetricsReport& rep) {
  for (const auto& f : rep.folds) {
    if (f.completed) {
      out << "fold " << f.fold << ": auc " << format_double(f.auc) << " accuracy " << format_double(f.accuracy) << '\n';
    } else {
      out << "fold " << f.fold << ": FAILED (" << f.error << ")\n";
    }
  }
  out << "mean: auc " << format_double(rep.mean_auc) << " accuracy " << format_double(rep.mean_accuracy) << '\n';
}

int cmd_gen_data(const Flags& f, std::ostream& out) {
  if (!f.out) throw UsageError("--out is required");
  std::vector<std::size_t> counts = f.counts.value_or(std::vector<std::size_t>{10, 10, 10, 10});
  if (counts.size() != kLabelCount) throw UsageError("--counts takes exactly four values");
  ClassCounts cc{};
  std::copy(counts.begin(), counts.end(), cc.begin());
  const VolumeGeometry geo{f.n_in.value_or(10), f.hw.value_or(64), f.hw.value_or(64)};
  const auto m = generate_dataset(*f.out, cc, geo, f.seed.value_or(0));
  out << "wrote " << m.samples.size() << " samples (" << geo.n_in << "x" << geo.h << "x" << geo.w << ") to " << *f.out
      << "\n";
  for (int c = 0; c < kLabelCount; ++c) {
    out << "  " << label_name(static_cast<Label>(c)) << ": " << m.counts[static_cast<std::size_t>(c)] << "\n";
  }
  return kExitOk;
}

int cmd_train(const Flags& f, std::ostream& out) {
  auto r = resolve("train", f);
  require_paths(r, true);
  const auto dir = prepare_out(r.out);
  const std::size_t fold = f.fold.value_or(r.file.value("fold", std::size_t{0}));
  write_json(dir / "config.json", snapshot_json(r, {{"fold", fold}}));
  const auto data = load_dataset(r.data);
  const auto plan = fold_plan_for(data, r.train);
  if (fold >= plan.k) throw UsageError("--fold must be below --k-folds");
  try {
    auto result = train_fold(data, plan, fold, r.train);
    save_checkpoint(dir / ("fold_" + std::to_string(fold) + ".pasw"), result.net.state());
    const auto ev = evaluate(result.net, data, plan.validation_indices(fold), r.train.batch_size);
    MetricsReport rep;
    FoldMetrics fm;
    fm.fold = fold;
    fm.completed = true;
    fm.auc = macro_auc_ovr(ev.predictions);
    fm.accuracy = accuracy(ev.predictions);
    fm.class_auc = per_class_auc(ev.predictions);
    rep.folds.push_back(fm);
    rep.summarize();
    write_text(dir / "metrics.csv", metrics_csv(rep));
    write_text(dir / "per_class_auc.csv", per_class_auc_csv(rep));
    write_json(dir / "run.json", result.record.to_json());
    print_report(out, rep);
  } catch (const TrainingAborted& e) {
    write_json(dir / "run.json", e.record().to_json());
    save_checkpoint(dir / ("fold_" + std::to_string(fold) + ".last_good.pasw"), e.last_good_state());
    throw;
  }
  return kExitOk;
}

int cmd_cv(const Flags& f, std::ostream& out) {
  auto r = resolve("cv", f);
  require_paths(r, true);
  const auto dir = prepare_out(r.out);
  write_json(dir / "config.json", snapshot_json(r));
  const auto data = load_dataset(r.data);
  const auto cv = cross_validate(data, r.train, checkpoint_writer(dir));
  write_cv_artifacts(dir, cv);
  print_report(out, cv.report);
  return cv.report.incomplete ? kExitNumeric : kExitOk;
}

int cmd_ablate(const Flags& f, std::ostream& out) {
  auto r = resolve("ablate", f);
  require_paths(r, true);
  const auto dir = prepare_out(r.out);
  write_json(dir / "config.json", snapshot_json(r));
  const auto data = load_dataset(r.data);
  const auto ab = ablate_branch(data, r.train);
  for (const auto& [name, cv] : {std::pair{"backbone", &ab.backbone}, std::pair{"full", &ab.full}}) {
    write_cv_artifacts(prepare_out((dir / name).string()), *cv);
  }
  write_text(dir / "ablation.csv", ab.csv());
  out << ab.csv();
  return ab.backbone.report.incomplete || ab.full.report.incomplete ? kExitNumeric : kExitOk;
}

int cmd_sweep(const Flags& f, std::ostream& out) {
  auto r = resolve("sweep", f);
  require_paths(r, true);
  std::vector<float> lambdas{0.5f, 0.9f, 1.0f};
  if (r.file.contains("lambdas")) lambdas = r.file.at("lambdas").get<std::vector<float>>();
  overlay(lambdas, f.lambdas);
  const auto dir = prepare_out(r.out);
  write_json(dir / "config.json", snapshot_json(r, {{"lambdas", lambdas}}));
  const auto data = load_dataset(r.data);
  const auto sw = sweep_lambda(data, r.train, lambdas);
  bool incomplete = false;
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    write_cv_artifacts(prepare_out((dir / ("lambda_" + format_float(lambdas[i]))).string()), sw.runs[i]);
    incomplete = incomplete || sw.runs[i].report.incomplete;
  }
  write_text(dir / "sweep.csv", sw.csv());
  out << sw.csv();
  return incomplete ? kExitNumeric : kExitOk;
}

int cmd_eval(const Flags& f, std::ostream& out) {
  Resolved r;
  r.command = "eval";
  if (f.config_path) {
    r.file = read_json_file(*f.config_path);
    r.data = r.file.value("data", "");
    r.out = r.file.value("out", "");
  }
  overlay(r.data, f.data);
  overlay(r.out, f.out);
  std::string ckpt = r.file.value("checkpoint", "");
  overlay(ckpt, f.checkpoint);
  if (ckpt.empty()) throw UsageError("--checkpoint is required");
  require_paths(r, true);
  const std::size_t batch = f.batch_size.value_or(16);
  const auto dir = prepare_out(r.out);
  write_json(dir / "config.json",
             json{{"command", "eval"}, {"data", r.data}, {"out", r.out}, {"checkpoint", ckpt}, {"batch_size", batch}});
  const auto data = load_dataset(r.data);
  const auto state = load_checkpoint(ckpt);
  PasNet net = PasNet::build(infer_config(state, data.geometry().h), 0);
  net.load_state(state);
  std::vector<std::size_t> all(data.samples.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto ev = evaluate(net, data, all, batch);
  MetricsReport rep;
  FoldMetrics fm;
  fm.completed = true;
  fm.auc = macro_auc_ovr(ev.predictions);
  fm.accuracy = accuracy(ev.predictions);
  fm.class_auc = per_class_auc(ev.predictions);
  rep.folds.push_back(fm);
  rep.summarize();
  write_text(dir / "metrics.csv", metrics_csv(rep));
  write_text(dir / "per_class_auc.csv", per_class_auc_csv(rep));
  print_report(out, rep);
  if (net.config().with_decoder) out << "mean dice: " << format_double(ev.mean_dice) << '\n';
  return kExitOk;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_gradcheck(const Flags& f, std::ostream& out) {
  const auto ops = split_csv(f.ops.value_or("all"));
  const auto results = run_gradcheck_suite(ops, f.seed.value_or(1), f.instances.value_or(20));
  bool ok = true;
  for (const auto& c : results) {
    out << (c.passed() ? "PASS " : "FAIL ") << std::left << std::setw(22) << c.op << " max_rel_error "
        << std::scientific << std::setprecision(3) << c.max_error << std::defaultfloat << " (" << c.instances
        << " instances)\n";
    ok = ok && c.passed();
  }
  return ok ? kExitOk : kExitNumeric;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-branch classification/segmentation network: data, training, evaluation", "pasnet"};
  app.require_subcommand(1);
  Flags f;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic phantom dataset");
  gen->add_option("--counts", f.counts, "Per-class counts non-PAS,PA,PI,PP")->delimiter(',');
  gen->add_option("--hw", f.hw, "Slice height and width (default 64)");
  gen->add_option("--n-in", f.n_in, "Slices per volume (default 10)");
  gen->add_option("--seed", f.seed, "Base seed (default 0)");
  gen->add_option("--out", f.out, "Output directory")->required();

  std::vector<CLI::App*> training;
  auto* train = app.add_subcommand("train", "Train one cross-validation fold");
  train->add_option("--fold", f.fold, "Fold index (default 0)");
  training.push_back(train);
  training.push_back(app.add_subcommand("cv", "Stratified k-fold cross-validation"));
  training.push_back(app.add_subcommand("ablate", "Backbone-only vs. full model on identical folds"));
  auto* sweep = app.add_subcommand("sweep", "Cross-validate each lambda on identical folds");
  sweep->add_option("--lambdas", f.lambdas, "Comma-separated lambda values (default 0.5,0.9,1.0)")->delimiter(',');
  training.push_back(sweep);
  for (auto* cmd : training) {
    cmd->add_option("--config", f.config_path, "JSON config; explicit flags override it");
    cmd->add_option("--data", f.data, "Dataset directory");
    cmd->add_option("--out", f.out, "Output directory");
    cmd->add_option("--seed", f.seed, "Base seed (default 0)");
    add_train_flags(cmd, f);
  }

  auto* eval = app.add_subcommand("eval", "Score a checkpoint on a dataset");
  eval->add_option("--config", f.config_path, "JSON config; explicit flags override it");
  eval->add_option("--checkpoint", f.checkpoint, "PASW weight file");
  eval->add_option("--data", f.data, "Dataset directory");
  eval->add_option("--out", f.out, "Output directory");
  eval->add_option("--batch-size", f.batch_size, "Inference batch size (default 16)");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gc->add_option("--ops", f.ops, "'all' or a comma-separated list of: " + [] {
    std::string s;
    for (const auto& n : gradcheck_op_names()) s += (s.empty() ? "" : ",") + n;
    return s;
  }());
  gc->add_option("--seed", f.seed, "Seed (default 1)");
  gc->add_option("--instances", f.instances, "Random instances per op (default 20)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(f, out);
    if (train->parsed()) return cmd_train(f, out);
    if (app.got_subcommand("cv")) return cmd_cv(f, out);
    if (app.got_subcommand("ablate")) return cmd_ablate(f, out);
    if (sweep->parsed()) return cmd_sweep(f, out);
    if (eval->parsed()) return cmd_eval(f, out);
    if (gc->parsed()) return cmd_gradcheck(f, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const ParseError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const UndefinedMetricError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace pasnet
