#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pasnet/model.hpp"

namespace pasnet {

using ClassScores = std::array<double, kNumClasses>;
using PerClassAuc = std::array<std::optional<double>, kNumClasses>;

struct PredictionSet {
  std::vector<ClassScores> scores;  // softmax probabilities per sample
  std::vector<int> labels;

  void validate() const;
};

/// Index of the largest score, lowest index on ties.
int argmax(const ClassScores& row);

double accuracy(const PredictionSet& p);

/// Mann-Whitney AUC: share of (positive, negative) pairs ranked correctly,
/// ties counted as one half. O(N log N) via midranks. Throws
/// UndefinedMetricError unless both classes are present.
double auc_binary(std::span<const double> scores, std::span<const bool> positives);

/// One-vs-rest AUC per class; nullopt for classes absent from the labels.
PerClassAuc per_class_auc(const PredictionSet& p);

/// Unweighted mean of per_class_auc over the classes present. Needs at least
/// two distinct labels.
double macro_auc_ovr(const PredictionSet& p);

/// Row-wise softmax of [N,4] logits.
std::vector<ClassScores> softmax_scores(const Tensor& logits);

struct FoldMetrics {
  std::size_t fold = 0;
  bool completed = false;
  double auc = 0.0;
  double accuracy = 0.0;
  PerClassAuc class_auc{};
  std::string error;  // set when !completed
};

struct MetricsReport {
  std::vector<FoldMetrics> folds;
  double mean_auc = 0.0;
  double mean_accuracy = 0.0;
  PerClassAuc mean_class_auc{};
  /// True when some fold failed and the means cover only completed folds.
  bool incomplete = false;

  /// Recomputes means from `folds`.
  void summarize();
};

inline constexpr std::array<const char*, kNumClasses> kClassNames = {"non_pas", "pa", "pi", "pp"};

/// fold,auc,accuracy rows then a mean row. Failed folds print "NA".
std::string metrics_csv(const MetricsReport& r);
/// fold,non_pas,pa,pi,pp rows then a mean row.
std::string per_class_auc_csv(const MetricsReport& r);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Shortest decimal string that round-trips the double.
std::string format_double(double v);
std::string format_float(float v);

}  // namespace pasnet
