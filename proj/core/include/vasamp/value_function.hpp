#pragma once

#include "vasamp/mdp.hpp"

namespace vas {

// Read-only state-value predictor: exact tables, trained estimators and
// linear compositions all implement this.
class ValueFunction {
 public:
  virtual ~ValueFunction() = default;
  // Deterministic; finite for every valid state.
  virtual double predict(const State& state) const = 0;
};

}  // namespace vas
