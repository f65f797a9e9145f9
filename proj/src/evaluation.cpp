#include "ag/evaluation.hpp"

#include <algorithm>

#include "ag/common.hpp"

namespace ag {

double mask_iou_3d(std::span<const int> a, std::span<const int> b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t inter = 0, i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) ++i;
    else if (b[j] < a[i]) ++j;
    else { ++inter; ++i; ++j; }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

EvalRecord make_record(std::string query_id, std::optional<std::vector<int>> predicted,
                       std::vector<int> ground_truth) {
  EvalRecord r;
  r.query_id = std::move(query_id);
  std::sort(ground_truth.begin(), ground_truth.end());
  if (predicted) {
    std::sort(predicted->begin(), predicted->end());
    r.iou = mask_iou_3d(*predicted, ground_truth);
  } else {
    r.iou = 0.0;
  }
  r.predicted = std::move(predicted);
  r.ground_truth = std::move(ground_truth);
  return r;
}

Metrics compute_metrics(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw ContractViolation("compute_metrics: no records");
  Metrics m;
  const double n = static_cast<double>(records.size());
  for (const auto& r : records) {
    m.miou += r.iou;
    if (r.iou >= 0.25) { m.ap25 += 1; m.ar25 += 1; }
    if (r.iou >= 0.50) { m.ap50 += 1; m.ar50 += 1; }
  }
  m.ap25 /= n;
  m.ap50 /= n;
  m.ar25 /= n;
  m.ar50 /= n;
  m.miou /= n;
  return m;
}

}  // namespace ag
