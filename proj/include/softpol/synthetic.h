#pragma once

// Synthetic workloads for tests, benchmarks and demos.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "softpol/data.h"

namespace softpol {

// Users draw sessions mostly from one latent topic; items inside a topic
// follow a Zipf-like popularity. X and Y of a user share the topic, so the
// held-out items are predictable from the observed ones.
struct PlantedConfig {
  std::size_t num_users = 2000;
  std::size_t num_items = 1000;
  std::size_t num_topics = 20;
  std::size_t min_session = 4;
  std::size_t max_session = 16;
  double in_topic = 0.85;   // probability an interaction comes from the user's topic
  double zipf_exponent = 0.8;
  std::uint64_t seed = 1;
};

std::vector<RawInteraction> generate_planted_interactions(const PlantedConfig& config);

void write_interactions_tsv(std::ostream& out, const std::vector<RawInteraction>& rows, bool header = true);

// Embedding-level task for timing: Gaussian item embeddings, contexts that
// average a few item rows, and random label sets.
struct SyntheticTask {
  ItemEmbeddings beta;
  EmbeddedDataset train;
  EmbeddedDataset test;
};

SyntheticTask make_random_task(std::size_t num_items, std::size_t dim, std::size_t num_train, std::size_t num_test,
                               std::size_t labels_per_user, std::uint64_t seed);

}  // namespace softpol
