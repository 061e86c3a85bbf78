#pragma once

#include <ostream>

#include "config.hpp"
#include "vasamp/errors.hpp"

namespace vas::cli {

// An identity or output invariant checked by a command did not hold.
class VerificationFailure : public Error {
 public:
  using Error::Error;
};

void cmd_train_value(const RunConfig& config, std::ostream& os);
void cmd_decode(const RunConfig& config, std::ostream& os);
void cmd_frontier(const RunConfig& config, std::ostream& os);
void cmd_ablate(const RunConfig& config, std::ostream& os);
void cmd_bench_cost(const RunConfig& config, std::ostream& os);
void cmd_oracle_check(const RunConfig& config, std::ostream& os);
void cmd_compose(const RunConfig& config, std::ostream& os);

}  // namespace vas::cli
