#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "harmonic/table.hpp"

namespace harmonic {

/// Gower-style distance over the schema features (label excluded): the mean of
/// |a - b| / range for numerical features and a 0/1 mismatch for categorical
/// ones. Zero-width ranges contribute 0. Per-feature numerical terms are
/// clamped to 1 so values outside the schema range stay in [0, 1].
double mixed_distance(const Record& a, const Record& b, const Schema& schema);

/// As mixed_distance, but the label is counted as one more categorical
/// feature. Used for record-level privacy distances.
double mixed_distance_with_label(const Record& a, const Record& b, const Schema& schema);

/// Copy of `dataset.schema` whose numerical ranges span only `rows`.
Schema schema_with_ranges(const Dataset& dataset, const std::vector<std::size_t>& rows);

enum class GroupPurpose { finetune, prompt };

struct NeighborGroup {
  // Absent for prompt groups, which have no reference answer.
  std::optional<std::size_t> target;
  // Dataset record indices; ascending distance for finetune groups.
  std::vector<std::size_t> neighbors;
  bool kept = true;

  bool operator==(const NeighborGroup&) const = default;
};

struct GroupSet {
  std::vector<NeighborGroup> groups;
  std::size_t k = 0;
  GroupPurpose purpose = GroupPurpose::finetune;

  bool operator==(const GroupSet&) const = default;
};

inline constexpr std::size_t kDefaultNeighbors = 5;

/// One group per training record holding its k nearest training neighbors.
/// Distances use training-split ranges; ties go to the lower record index.
/// `threads` = 0 picks the hardware concurrency; the result does not depend on it.
GroupSet knn_groups(const Dataset& dataset, std::size_t k, unsigned threads = 0);

/// Drops every group in which strictly more than k/2 neighbors carry a label
/// different from the target's.
GroupSet filter_groups(const GroupSet& groups, const Dataset& dataset);

/// `count` groups of k distinct training records drawn uniformly; draws are
/// independent across groups.
GroupSet build_prompt_groups(const Dataset& dataset, std::size_t k, std::size_t count, std::uint64_t seed);

/// Audit export: one JSON object per group.
void write_groups_jsonl(const GroupSet& groups, std::ostream& out);
GroupSet read_groups_jsonl(std::istream& in);

}  // namespace harmonic
