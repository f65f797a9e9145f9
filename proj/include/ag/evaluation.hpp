#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ag {

struct EvalRecord {
  std::string query_id;
  std::optional<std::vector<int>> predicted;  // sorted; nullopt = no prediction
  std::vector<int> ground_truth;              // sorted
  double iou = 0;
};

struct Metrics {
  double ap25 = 0, ap50 = 0, ar25 = 0, ar50 = 0, miou = 0;
};

/// |a∩b| / |a∪b| on sorted index sets; both empty -> 0.
double mask_iou_3d(std::span<const int> a, std::span<const int> b);

EvalRecord make_record(std::string query_id, std::optional<std::vector<int>> predicted,
                       std::vector<int> ground_truth);

/// One unscored prediction per query, so AP_t = AR_t = fraction of records
/// with iou >= t.
Metrics compute_metrics(const std::vector<EvalRecord>& records);

}  // namespace ag
