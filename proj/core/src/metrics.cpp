#include "msqnet/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace msqnet {

namespace {

void require_batch(const EvalBatch& b, const char* op) {
  if (b.scores.ndim() != 2 || b.truth.ndim() != 2 || b.scores.shape() != b.truth.shape()) {
    throw std::invalid_argument(std::string(op) + ": scores " + shape_str(b.scores.shape()) +
                                " and truth " + shape_str(b.truth.shape()) + " must match as [M x K]");
  }
  for (int i = 0; i < b.truth.size(); ++i) {
    const double t = b.truth.at(i);
    if (t != 0.0 && t != 1.0) throw std::invalid_argument(std::string(op) + ": truth entries must be 0 or 1");
  }
}

}  // namespace

std::optional<double> average_precision(const Tensor& scores, const Tensor& truth) {
  if (scores.ndim() != 1 || truth.ndim() != 1 || scores.size() != truth.size()) {
    throw std::invalid_argument("average_precision: expected equal-length vectors");
  }
  const int m = scores.size();
  int positives = 0;
  for (int i = 0; i < m; ++i) positives += truth.at(i) != 0.0 ? 1 : 0;
  if (positives == 0) return std::nullopt;

  std::vector<int> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores.at(a) != scores.at(b)) return scores.at(a) > scores.at(b);
    return a < b;
  });

  double ap = 0.0;
  int hits = 0;
  for (int rank = 1; rank <= m; ++rank) {
    if (truth.at(order[static_cast<std::size_t>(rank - 1)]) != 0.0) {
      ++hits;
      ap += static_cast<double>(hits) / rank;
    }
  }
  return ap / positives;
}

double mean_ap(const EvalBatch& batch) {
  require_batch(batch, "mean_ap");
  const int m = batch.scores.rows(), k = batch.scores.cols();
  double total = 0.0;
  int defined = 0;
  for (int c = 0; c < k; ++c) {
    Tensor s({m}), t({m});
    for (int i = 0; i < m; ++i) {
      s.at(i) = batch.scores.at(i, c);
      t.at(i) = batch.truth.at(i, c);
    }
    if (auto ap = average_precision(s, t)) {
      total += *ap;
      ++defined;
    }
  }
  if (defined == 0) throw std::invalid_argument("mean_ap: no class has a positive sample");
  return total / defined;
}

double top1_accuracy(const EvalBatch& batch) {
  require_batch(batch, "top1_accuracy");
  const int m = batch.scores.rows(), k = batch.scores.cols();
  int correct = 0;
  for (int i = 0; i < m; ++i) {
    int positives = 0, truth_class = -1;
    for (int c = 0; c < k; ++c) {
      if (batch.truth.at(i, c) != 0.0) {
        ++positives;
        truth_class = c;
      }
    }
    if (positives != 1) {
      throw std::invalid_argument("top1_accuracy: row " + std::to_string(i) + " has " +
                                  std::to_string(positives) + " positives, expected exactly 1");
    }
    int best = 0;
    for (int c = 1; c < k; ++c) {
      if (batch.scores.at(i, c) > batch.scores.at(i, best)) best = c;  // ties keep the lower index
    }
    correct += best == truth_class ? 1 : 0;
  }
  return static_cast<double>(correct) / m;
}

double multilabel_accuracy(const EvalBatch& batch, double threshold) {
  require_batch(batch, "multilabel_accuracy");
  for (int i = 0; i < batch.scores.size(); ++i) {
    const double s = batch.scores.at(i);
    if (s < 0.0 || s > 1.0) {
      throw std::invalid_argument("multilabel_accuracy: scores must be post-activation values in [0,1]");
    }
  }
  int agree = 0;
  for (int i = 0; i < batch.scores.size(); ++i) {
    const bool predicted = batch.scores.at(i) >= threshold;
    const bool actual = batch.truth.at(i) != 0.0;
    agree += predicted == actual ? 1 : 0;
  }
  return static_cast<double>(agree) / batch.scores.size();
}

double subset_accuracy(const EvalBatch& batch, double threshold) {
  require_batch(batch, "subset_accuracy");
  const int m = batch.scores.rows(), k = batch.scores.cols();
  int exact = 0;
  for (int i = 0; i < m; ++i) {
    bool all = true;
    for (int c = 0; c < k; ++c) {
      const bool predicted = batch.scores.at(i, c) >= threshold;
      if (predicted != (batch.truth.at(i, c) != 0.0)) {
        all = false;
        break;
      }
    }
    exact += all ? 1 : 0;
  }
  return static_cast<double>(exact) / m;
}

std::string format_metric_report(const std::vector<std::pair<std::string, double>>& metrics) {
  std::string out;
  char line[128];
  for (const auto& [name, value] : metrics) {
    std::snprintf(line, sizeof line, "%s,%.6f\n", name.c_str(), value);
    out += line;
  }
  return out;
}

}  // namespace msqnet
