#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "leap/embedding.hpp"
#include "leap/events.hpp"

namespace leap::testing {

/// Builds a Dataset from explicit rows, assigning uids by position.
struct Row {
  std::string subject, relation, object, date, text;
};
Dataset make_dataset(const std::vector<Row>& rows);

/// 20 entities, 5 relations, object = (3·s + 7·r + 1) mod 20 for every
/// (s, r) pair; `days` days with `per_day` random pairs each.
Dataset functional_dataset(int days = 30, int per_day = 12, std::uint64_t seed = 7);

/// 60 days; relation k occurs on day d iff d mod 3 == k mod 3 (6 relations).
Dataset periodic_dataset(int days = 60);

/// One-hot of the relation (dim 8) plus seeded noise of amplitude `noise`.
EmbeddingStore relation_onehot_store(const Dataset& data, double noise = 0.05, std::uint64_t seed = 3);

/// Split with every event in train and nothing held out.
DatasetSplit train_only(const Dataset& data);

std::string read_text(const std::string& path);
std::string fixture_dir();

/// Path of the ICEWS India file(s) when supplied via LEAP_INDIA_DATA or
/// tests/fixtures/india; nullopt otherwise.
std::optional<std::string> india_data_path();

/// Parses one file, or a directory holding train/valid/test files.
Dataset load_dataset_path(const std::string& path);

}  // namespace leap::testing
