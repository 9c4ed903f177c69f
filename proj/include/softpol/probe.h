#pragma once

// Process-wide operation counters. Tests use them to check that the fast
// training path never touches the full catalog.

#include <cstdint>

namespace softpol::probe {

struct Snapshot {
  std::uint64_t scores_evaluated = 0;
  std::uint64_t rewards_evaluated = 0;
  std::uint64_t full_catalog_passes = 0;
  // SNIS estimates whose effective sample size fell below 1% of S.
  std::uint64_t low_ess_events = 0;
};

void add_scores(std::uint64_t n);
void add_rewards(std::uint64_t n);
void add_full_pass();
void add_low_ess();

Snapshot snapshot();
void reset();

}  // namespace softpol::probe
