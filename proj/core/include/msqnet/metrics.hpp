#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "msqnet/tensor.hpp"

namespace msqnet {

// Scores (monotone in confidence) and multi-hot truth for M samples, K classes.
struct EvalBatch {
  Tensor scores;  // [M x K]
  Tensor truth;   // [M x K], entries in {0,1}
};

// Non-interpolated average precision of one class column. Ranking sorts by
// descending score with ties broken by ascending original index. Returns
// nullopt when the column has no positives (the class is undefined).
std::optional<double> average_precision(const Tensor& scores, const Tensor& truth);

// Unweighted mean of per-class AP over classes with at least one positive.
// Throws when no class has a positive.
double mean_ap(const EvalBatch& batch);

// Fraction of rows whose argmax (lowest index wins ties) is the positive
// class. Every row must have exactly one positive.
double top1_accuracy(const EvalBatch& batch);

// Mean over all M*K entries of 1[(score >= threshold) == truth]. Scores must
// be post-activation values in [0,1].
double multilabel_accuracy(const EvalBatch& batch, double threshold = 0.5);

// Stricter variant: a row counts only when every label matches.
double subset_accuracy(const EvalBatch& batch, double threshold = 0.5);

// One `metric,value` row per entry, 6 decimal places.
std::string format_metric_report(const std::vector<std::pair<std::string, double>>& metrics);

}  // namespace msqnet
