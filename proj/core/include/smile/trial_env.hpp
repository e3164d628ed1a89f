#pragma once

#include <cstdint>

#include "smile/dataset.hpp"

namespace smile {

/// What the training loop needs from an environment: episode lifecycle and
/// a reward per applied trial. The recommender simulation implements this;
/// tests drive the same loop with synthetic rewards.
class TrialEnvironment {
 public:
  virtual ~TrialEnvironment() = default;

  virtual void reset_episode(uint64_t seed) = 0;

  /// Applies the free trial for `adopter` and returns the resulting reward.
  virtual double step(UserId adopter) = 0;

  /// Bookkeeping from the most recent step, for the episode log.
  struct StepInfo {
    size_t appended = 0;
    size_t skipped = 0;
  };
  virtual StepInfo last_step_info() const { return {}; }
};

}  // namespace smile
