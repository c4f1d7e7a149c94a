#pragma once

#include <span>
#include <string>
#include <vector>

#include "imbgan/error.hpp"

namespace imbgan {

class UndefinedMetricError : public DomainError {
 public:
  using DomainError::DomainError;
};

// Rows are true classes, columns predicted classes. The majority/minority
// classes come from the training counts, not from the scored data; with no
// training counts, class 0 is the majority and class C-1 the minority.
struct ConfusionMatrix {
  std::size_t num_classes = 0;
  std::vector<std::size_t> counts;  // row-major C x C
  std::vector<std::size_t> training_counts;

  std::size_t at(std::size_t truth, std::size_t pred) const {
    return counts[truth * num_classes + pred];
  }
  std::size_t row_sum(std::size_t c) const;
  std::size_t col_sum(std::size_t c) const;
  std::size_t total() const;
  std::size_t majority_class() const;
  std::size_t minority_class() const;
};

ConfusionMatrix confusion(std::span<const int> y_true,
                          std::span<const int> y_pred, std::size_t num_classes);
ConfusionMatrix confusion(std::span<const int> y_true,
                          std::span<const int> y_pred,
                          std::span<const std::size_t> training_counts);

// Per-class recall; throws UndefinedMetricError for a class with no samples.
double recall(const ConfusionMatrix& cm, std::size_t c);

double acsa(const ConfusionMatrix& cm);
double r_min(const ConfusionMatrix& cm);
double p_maj(const ConfusionMatrix& cm);
double f_macro(const ConfusionMatrix& cm);
double g_macro(const ConfusionMatrix& cm);

struct MetricsReport {
  double acsa = 0.0;
  double f_macro = 0.0;
  double g_macro = 0.0;
  double p_maj = 0.0;
  double r_min = 0.0;
};

MetricsReport evaluate(const ConfusionMatrix& cm);

// Text table with one row per (label, report).
std::string format_metrics_table(
    const std::vector<std::pair<std::string, MetricsReport>>& rows);

}  // namespace imbgan
