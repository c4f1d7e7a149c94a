#include "imbgan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace imbgan {

std::size_t ConfusionMatrix::row_sum(std::size_t c) const {
  std::size_t s = 0;
  for (std::size_t p = 0; p < num_classes; ++p) s += at(c, p);
  return s;
}

std::size_t ConfusionMatrix::col_sum(std::size_t c) const {
  std::size_t s = 0;
  for (std::size_t t = 0; t < num_classes; ++t) s += at(t, c);
  return s;
}

std::size_t ConfusionMatrix::total() const {
  std::size_t s = 0;
  for (auto v : counts) s += v;
  return s;
}

std::size_t ConfusionMatrix::majority_class() const {
  if (training_counts.empty()) return 0;
  return static_cast<std::size_t>(
      std::max_element(training_counts.begin(), training_counts.end()) -
      training_counts.begin());
}

std::size_t ConfusionMatrix::minority_class() const {
  if (training_counts.empty()) return num_classes - 1;
  return static_cast<std::size_t>(
      std::min_element(training_counts.begin(), training_counts.end()) -
      training_counts.begin());
}

ConfusionMatrix confusion(std::span<const int> y_true,
                          std::span<const int> y_pred,
                          std::size_t num_classes) {
  if (y_true.size() != y_pred.size()) {
    throw DomainError("confusion: " + std::to_string(y_true.size()) +
                      " true labels vs " + std::to_string(y_pred.size()) +
                      " predictions");
  }
  if (num_classes == 0) throw DomainError("confusion: no classes");
  ConfusionMatrix cm;
  cm.num_classes = num_classes;
  cm.counts.assign(num_classes * num_classes, 0);
  auto check = [num_classes](int y, const char* which) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw DomainError(std::string("confusion: ") + which + " label " +
                        std::to_string(y) + " outside [0, " +
                        std::to_string(num_classes) + ")");
    }
    return static_cast<std::size_t>(y);
  };
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    ++cm.counts[check(y_true[i], "true") * num_classes +
                check(y_pred[i], "predicted")];
  }
  return cm;
}

ConfusionMatrix confusion(std::span<const int> y_true,
                          std::span<const int> y_pred,
                          std::span<const std::size_t> training_counts) {
  ConfusionMatrix cm = confusion(y_true, y_pred, training_counts.size());
  cm.training_counts.assign(training_counts.begin(), training_counts.end());
  return cm;
}

double recall(const ConfusionMatrix& cm, std::size_t c) {
  const std::size_t n = cm.row_sum(c);
  if (n == 0) {
    throw UndefinedMetricError("recall undefined: class " + std::to_string(c) +
                               " has no scored samples");
  }
  return static_cast<double>(cm.at(c, c)) / static_cast<double>(n);
}

double acsa(const ConfusionMatrix& cm) {
  if (cm.num_classes == 0) throw UndefinedMetricError("acsa of an empty matrix");
  double s = 0.0;
  for (std::size_t c = 0; c < cm.num_classes; ++c) s += recall(cm, c);
  return s / static_cast<double>(cm.num_classes);
}

double r_min(const ConfusionMatrix& cm) {
  return recall(cm, cm.minority_class());
}

double p_maj(const ConfusionMatrix& cm) {
  const std::size_t m = cm.majority_class();
  const std::size_t col = cm.col_sum(m);
  return col == 0 ? 0.0
                  : static_cast<double>(cm.at(m, m)) / static_cast<double>(col);
}

double f_macro(const ConfusionMatrix& cm) {
  double s = 0.0;
  for (std::size_t c = 0; c < cm.num_classes; ++c) {
    const double tp = static_cast<double>(cm.at(c, c));
    const std::size_t col = cm.col_sum(c), row = cm.row_sum(c);
    const double p = col == 0 ? 0.0 : tp / static_cast<double>(col);
    const double r = row == 0 ? 0.0 : tp / static_cast<double>(row);
    s += (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }
  return s / static_cast<double>(cm.num_classes);
}

double g_macro(const ConfusionMatrix& cm) {
  double product = 1.0;
  for (std::size_t c = 0; c < cm.num_classes; ++c) {
    const std::size_t row = cm.row_sum(c);
    if (row == 0 || cm.at(c, c) == 0) return 0.0;
    product *= static_cast<double>(cm.at(c, c)) / static_cast<double>(row);
  }
  return std::pow(product, 1.0 / static_cast<double>(cm.num_classes));
}

MetricsReport evaluate(const ConfusionMatrix& cm) {
  return {acsa(cm), f_macro(cm), g_macro(cm), p_maj(cm), r_min(cm)};
}

std::string format_metrics_table(
    const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::size_t width = 8;
  for (const auto& r : rows) width = std::max(width, r.first.size());
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-*s %8s %8s %8s %8s %8s\n",
                static_cast<int>(width), "run", "ACSA", "F_macro", "G_macro",
                "R_min", "P_maj");
  os << buf;
  for (const auto& [label, m] : rows) {
    std::snprintf(buf, sizeof buf, "%-*s %8.4f %8.4f %8.4f %8.4f %8.4f\n",
                  static_cast<int>(width), label.c_str(), m.acsa, m.f_macro,
                  m.g_macro, m.r_min, m.p_maj);
    os << buf;
  }
  return os.str();
}

}  // namespace imbgan
