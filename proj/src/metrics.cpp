#include "pasnet/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>

#include "pasnet/errors.hpp"

namespace pasnet {

void PredictionSet::validate() const {
  if (scores.size() != labels.size()) throw std::invalid_argument("PredictionSet: scores and labels differ in length");
  for (int l : labels) {
    if (l < 0 || l >= static_cast<int>(kNumClasses)) {
      throw std::out_of_range("PredictionSet: label " + std::to_string(l) + " outside [0,4)");
    }
  }
}

int argmax(const ClassScores& row) {
  int best = 0;
  for (int c = 1; c < static_cast<int>(row.size()); ++c) {
    if (row[c] > row[best]) best = c;
  }
  return best;
}

double accuracy(const PredictionSet& p) {
  p.validate();
  if (p.labels.empty()) throw std::invalid_argument("accuracy: empty prediction set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < p.labels.size(); ++i) hits += argmax(p.scores[i]) == p.labels[i];
  return static_cast<double>(hits) / static_cast<double>(p.labels.size());
}

double auc_binary(std::span<const double> scores, std::span<const bool> positives) {
  if (scores.size() != positives.size()) throw std::invalid_argument("auc_binary: length mismatch");
  const auto n = scores.size();
  const auto n_pos = static_cast<std::size_t>(std::count(positives.begin(), positives.end(), true));
  const auto n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw UndefinedMetricError("auc_binary: needs at least one positive and one negative");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  // Sum of 1-based midranks of the positives.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (positives[order[k]]) rank_sum += midrank;
    }
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

PerClassAuc per_class_auc(const PredictionSet& p) {
  p.validate();
  PerClassAuc out{};
  std::vector<double> col(p.labels.size());
  auto pos = std::make_unique<bool[]>(p.labels.size());
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < p.labels.size(); ++i) {
      col[i] = p.scores[i][c];
      pos[i] = p.labels[i] == static_cast<int>(c);
      count += pos[i];
    }
    if (count == 0 || count == p.labels.size()) continue;
    out[c] = auc_binary(col, std::span<const bool>(pos.get(), p.labels.size()));
  }
  return out;
}

double macro_auc_ovr(const PredictionSet& p) {
  p.validate();
  std::array<bool, kNumClasses> present{};
  for (int l : p.labels) present[static_cast<std::size_t>(l)] = true;
  if (std::count(present.begin(), present.end(), true) < 2) {
    throw UndefinedMetricError("macro_auc_ovr: needs at least two distinct labels");
  }
  const auto per = per_class_auc(p);
  double acc = 0.0;
  int n = 0;
  for (const auto& a : per) {
    if (a) {
      acc += *a;
      ++n;
    }
  }
  return acc / n;
}

std::vector<ClassScores> softmax_scores(const Tensor& logits) {
  if (logits.rank() != 2 || logits.dim(1) != kNumClasses) {
    throw ShapeError("softmax_scores: expected [N,4], got " + shape_str(logits.shape()));
  }
  std::vector<ClassScores> out(logits.dim(0));
  const float* x = logits.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float* row = x + i * kNumClasses;
    const double mx = *std::max_element(row, row + kNumClasses);
    double z = 0.0;
    for (std::size_t c = 0; c < kNumClasses; ++c) z += std::exp(row[c] - mx);
    for (std::size_t c = 0; c < kNumClasses; ++c) out[i][c] = std::exp(row[c] - mx) / z;
  }
  return out;
}

void MetricsReport::summarize() {
  double auc_sum = 0.0, acc_sum = 0.0;
  std::size_t done = 0;
  std::array<double, kNumClasses> class_sum{};
  std::array<std::size_t, kNumClasses> class_n{};
  for (const auto& f : folds) {
    if (!f.completed) continue;
    auc_sum += f.auc;
    acc_sum += f.accuracy;
    ++done;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      if (f.class_auc[c]) {
        class_sum[c] += *f.class_auc[c];
        ++class_n[c];
      }
    }
  }
  incomplete = done != folds.size();
  mean_auc = done ? auc_sum / static_cast<double>(done) : std::nan("");
  mean_accuracy = done ? acc_sum / static_cast<double>(done) : std::nan("");
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    mean_class_auc[c] = class_n[c] ? std::optional(class_sum[c] / static_cast<double>(class_n[c])) : std::nullopt;
  }
}

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_float(float v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::string fmt_opt(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }

}  // namespace

std::string metrics_csv(const MetricsReport& r) {
  std::ostringstream os;
  os << "fold,auc,accuracy\n";
  for (const auto& f : r.folds) {
    if (f.completed) {
      os << f.fold << ',' << format_double(f.auc) << ',' << format_double(f.accuracy) << '\n';
    } else {
      os << f.fold << ",NA,NA\n";
    }
  }
  os << "mean," << format_double(r.mean_auc) << ',' << format_double(r.mean_accuracy) << '\n';
  return os.str();
}

std::string per_class_auc_csv(const MetricsReport& r) {
  std::ostringstream os;
  os << "fold";
  for (auto name : kClassNames) os << ',' << name;
  os << '\n';
  for (const auto& f : r.folds) {
    os << f.fold;
    for (const auto& a : f.class_auc) os << ',' << (f.completed ? fmt_opt(a) : "NA");
    os << '\n';
  }
  os << "mean";
  for (const auto& a : r.mean_class_auc) os << ',' << fmt_opt(a);
  os << '\n';
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace pasnet
