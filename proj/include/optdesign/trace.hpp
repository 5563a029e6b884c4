#pragma once

#include <vector>

namespace optdesign {

enum class TerminationReason {
  ImprovementTooSmall,
  TargetReached,
  IterationCap,
  EmptyRemovalSet
};

inline const char* termination_name(TerminationReason r) {
  switch (r) {
    case TerminationReason::ImprovementTooSmall: return "improvement-too-small";
    case TerminationReason::TargetReached: return "target-reached";
    case TerminationReason::IterationCap: return "iteration-cap";
    case TerminationReason::EmptyRemovalSet: return "empty-removal-set";
  }
  return "?";
}

// One executed (or attempted) exchange; -1 marks an empty slot.
struct ExchangeStep {
  int t = 0;
  int removed = -1;
  int added = -1;
  double objective_before = 0.0;
  double objective_after = 0.0;
  double lambda_min_after = 0.0;
  double delta_plus = 0.0;
  double delta_minus = 0.0;
};

struct ExchangeTrace {
  std::vector<ExchangeStep> steps;
  TerminationReason terminated_reason = TerminationReason::ImprovementTooSmall;
};

}  // namespace optdesign
