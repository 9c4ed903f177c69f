#include "softpol/probe.h"

#include <atomic>

namespace softpol::probe {
namespace {

std::atomic<std::uint64_t> g_scores{0};
std::atomic<std::uint64_t> g_rewards{0};
std::atomic<std::uint64_t> g_full_passes{0};
std::atomic<std::uint64_t> g_low_ess{0};

}  // namespace

void add_scores(std::uint64_t n) { g_scores.fetch_add(n, std::memory_order_relaxed); }
void add_rewards(std::uint64_t n) { g_rewards.fetch_add(n, std::memory_order_relaxed); }
void add_full_pass() { g_full_passes.fetch_add(1, std::memory_order_relaxed); }
void add_low_ess() { g_low_ess.fetch_add(1, std::memory_order_relaxed); }

Snapshot snapshot() {
  return {g_scores.load(std::memory_order_relaxed), g_rewards.load(std::memory_order_relaxed),
          g_full_passes.load(std::memory_order_relaxed), g_low_ess.load(std::memory_order_relaxed)};
}

void reset() {
  g_scores = 0;
  g_rewards = 0;
  g_full_passes = 0;
  g_low_ess = 0;
}

}  // namespace softpol::probe
