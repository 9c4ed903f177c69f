#include "softpol/synthetic.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

#include "softpol/errors.h"
#include "softpol/seeding.h"

namespace softpol {

std::vector<RawInteraction> generate_planted_interactions(const PlantedConfig& config) {
  if (config.num_topics == 0 || config.num_items < config.num_topics || config.min_session < 2 ||
      config.max_session < config.min_session || config.max_session > config.num_items) {
    throw ConfigError("invalid planted dataset configuration");
  }
  Rng rng(splitmix64(config.seed));

  // Random topic assignment, then a popularity rank inside each topic.
  std::vector<std::uint64_t> items(config.num_items);
  std::iota(items.begin(), items.end(), 0);
  std::shuffle(items.begin(), items.end(), rng);
  std::vector<std::vector<std::uint64_t>> topics(config.num_topics);
  for (std::size_t i = 0; i < items.size(); ++i) topics[i % config.num_topics].push_back(items[i]);
  std::vector<std::discrete_distribution<std::size_t>> popularity;
  for (const auto& members : topics) {
    std::vector<double> w(members.size());
    for (std::size_t r = 0; r < w.size(); ++r) w[r] = std::pow(static_cast<double>(r + 1), -config.zipf_exponent);
    popularity.emplace_back(w.begin(), w.end());
  }

  std::uniform_int_distribution<std::size_t> pick_topic(0, config.num_topics - 1);
  std::uniform_int_distribution<std::size_t> pick_len(config.min_session, config.max_session);
  std::bernoulli_distribution stay(config.in_topic);
  std::vector<RawInteraction> rows;
  for (std::uint64_t u = 0; u < config.num_users; ++u) {
    const std::size_t home = pick_topic(rng);
    const std::size_t len = pick_len(rng);
    std::set<std::uint64_t> session;
    for (std::size_t attempts = 0; session.size() < len && attempts < 50 * len; ++attempts) {
      const std::size_t t = stay(rng) ? home : pick_topic(rng);
      session.insert(topics[t][popularity[t](rng)]);
    }
    for (std::uint64_t item : session) rows.emplace_back(u, item);
  }
  return rows;
}

void write_interactions_tsv(std::ostream& out, const std::vector<RawInteraction>& rows, bool header) {
  if (header) out << "user_id\titem_id\n";
  for (const auto& [u, i] : rows) out << u << '\t' << i << '\n';
}

SyntheticTask make_random_task(std::size_t num_items, std::size_t dim, std::size_t num_train, std::size_t num_test,
                               std::size_t labels_per_user, std::uint64_t seed) {
  if (num_items < 2 || dim == 0 || labels_per_user == 0 || labels_per_user > num_items) {
    throw ConfigError("invalid synthetic task shape");
  }
  Rng rng(splitmix64(seed));
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  RowMatrix beta(static_cast<Eigen::Index>(num_items), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < beta.size(); ++i) beta.data()[i] = normal(rng);

  std::uniform_int_distribution<std::size_t> any_item(0, num_items - 1);
  auto make_split = [&](std::size_t n, std::uint32_t first_user) {
    EmbeddedDataset ds;
    ds.contexts = RowMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    ds.labels.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
      ds.users.push_back(first_user + static_cast<std::uint32_t>(r));
      constexpr int kObserved = 4;
      for (int k = 0; k < kObserved; ++k) ds.contexts.row(static_cast<Eigen::Index>(r)) += beta.row(static_cast<Eigen::Index>(any_item(rng)));
      ds.contexts.row(static_cast<Eigen::Index>(r)) /= kObserved;
      std::set<ActionId> labels;
      while (labels.size() < labels_per_user) labels.insert(static_cast<ActionId>(any_item(rng)));
      ds.labels[r].assign(labels.begin(), labels.end());
    }
    return ds;
  };
  EmbeddedDataset train = make_split(num_train, 0);
  EmbeddedDataset test = make_split(num_test, static_cast<std::uint32_t>(num_train));
  return SyntheticTask{ItemEmbeddings(std::move(beta)), std::move(train), std::move(test)};
}

}  // namespace softpol
