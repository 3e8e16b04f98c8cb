// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <utility>
#include <vector>

#include "sheetstream/engine.hpp"
#include "sheetstream/model.hpp"

namespace sheetstream {

using Key = Literal;

inline constexpr std::size_t kDefaultMaxPartitions = 10000;

/// SELECT: true iff the stream has no select clause or the tuple's select
/// attribute equals the literal exactly (text is case-sensitive).
bool admit(const StreamDecl& stream, std::span<const Value> tuple);

/// Key agreement: a partitioned model must partition every stream by the
/// same attribute name with the same type. Empty for unpartitioned models.
std::vector<Diagnostic> check_keys(const SheetModel& model);

/// The key carried by a number or text value.
std::optional<Key> key_of(const Value& v);

class RoutingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// PARTITION: one independent engine instance per distinct key, created on
/// first sight of the key from a prebuilt prototype.
class PartitionManager {
 public:
  explicit PartitionManager(std::shared_ptr<const SheetModel> model,
                            std::size_t max_partitions = kDefaultMaxPartitions);

  /// Applies the tuple to the instance for its key only. Throws RoutingError
  /// when a new key would exceed max_partitions, TupleError on bad input.
  std::pair<Key, ChangeSet> route(std::string_view stream, std::span<const Value> tuple, Timestamp ts);

  const Engine* find(const Key& key) const;
  std::size_t size() const { return instances_.size(); }
  std::size_t max_partitions() const { return max_partitions_; }
  const std::vector<Key>& creation_order() const { return creation_order_; }
  const Engine& prototype() const { return prototype_; }

  /// Applies an edited model to every instance (and to the prototype used
  /// for future keys). All-or-nothing: on ModelError nothing changes.
  std::vector<std::pair<Key, ChangeSet>> rebind(std::shared_ptr<const SheetModel> model);

 private:
  Engine prototype_;
  std::map<Key, Engine> instances_;
  std::vector<Key> creation_order_;
  std::size_t max_partitions_;
};

/// Routes tuples of any model: SELECT filtering first, then either the
/// single instance (unpartitioned) or the partition manager.
class Operator {
 public:
  struct Step {
    bool admitted = false;
    bool created = false;  // a new partition instance was created
    std::optional<Key> key;
    ChangeSet changes;
    const Engine* instance = nullptr;
  };

  explicit Operator(std::shared_ptr<const SheetModel> model, std::size_t max_partitions = kDefaultMaxPartitions);

  Step push(std::string_view stream, std::span<const Value> tuple, Timestamp ts);

  bool partitioned() const { return partitions_.has_value(); }
  const SheetModel& model() const;
  std::shared_ptr<const SheetModel> model_ptr() const;
  /// nullopt selects the single instance of an unpartitioned model.
  const Engine* instance(const std::optional<Key>& key) const;
  /// The pristine instance new keys are copied from (the single instance
  /// when unpartitioned).
  const Engine& prototype() const { return partitions_ ? partitions_->prototype() : *single_; }
  std::vector<Key> keys() const;
  std::size_t partitions_created() const { return partitions_ ? partitions_->size() : 0; }
  std::uint64_t evaluation_passes() const;

  std::vector<std::pair<std::optional<Key>, ChangeSet>> rebind(std::shared_ptr<const SheetModel> model);

 private:
  std::optional<Engine> single_;
  std::optional<PartitionManager> partitions_;
};

}  // namespace sheetstream
