// SPDX-License-Identifier: Apache-2.0

#include "sheetstream/partition.hpp"

#include <set>

namespace sheetstream {

bool admit(const StreamDecl& stream, std::span<const Value> tuple) {
  if (!stream.select) return true;
  int k = stream.attr_index(stream.select->attr);
  if (k < 0 || static_cast<std::size_t>(k) >= tuple.size()) return false;
  auto key = key_of(tuple[static_cast<std::size_t>(k)]);
  return key && *key == stream.select->value;
}

std::optional<Key> key_of(const Value& v) {
  if (v.is_number()) return Key(v.as_number());
  if (v.is_text()) return Key(v.as_text());
  return std::nullopt;
}

std::vector<Diagnostic> check_keys(const SheetModel& model) {
  std::vector<Diagnostic> out;
  if (!model.partitioned()) return out;

  std::vector<std::string> missing;
  std::set<std::string> attrs;
  std::set<AttrType> types;
  std::string described;
  for (const auto& s : model.streams) {
    if (!s.partition_by) {
      missing.push_back(s.name);
      continue;
    }
    int k = s.attr_index(*s.partition_by);
    if (k < 0) continue;  // reported by validate()
    const Attr& a = s.attrs[static_cast<std::size_t>(k)];
    attrs.insert(a.name);
    types.insert(a.type);
    if (!described.empty()) described += ", ";
    described += s.name + "." + a.name + " (" + std::string(attr_type_name(a.type)) + ")";
  }
  if (!missing.empty()) {
    std::string names;
    for (const auto& m : missing) names += (names.empty() ? "" : ", ") + m;
    out.push_back({"streams", "partition key agreement: all streams must declare partition_by; partitioned: " +
                                  described + "; missing on: " + names});
  }
  if (types.size() > 1) {
    out.push_back({"streams", "partition key types differ: " + described});
  } else if (attrs.size() > 1) {
    out.push_back({"streams", "partition key agreement: streams partition by different attributes: " + described});
  }
  return out;
}

PartitionManager::PartitionManager(std::shared_ptr<const SheetModel> model, std::size_t max_partitions)
    : prototype_(Engine::build(std::move(model))), max_partitions_(max_partitions) {
  if (max_partitions_ == 0) throw std::invalid_argument("max_partitions must be positive");
  if (!prototype_.model().partitioned()) throw std::invalid_argument("model is not partitioned");
}

std::pair<Key, ChangeSet> PartitionManager::route(std::string_view stream, std::span<const Value> tuple,
                                                  Timestamp ts) {
  const StreamDecl* decl = prototype_.model().find_stream(stream);
  if (decl == nullptr) throw TupleError("unknown stream '" + std::string(stream) + "'");
  int k = decl->attr_index(*decl->partition_by);
  if (static_cast<std::size_t>(k) >= tuple.size())
    throw TupleError("stream '" + decl->name + "' tuple lacks partition attribute");
  auto key = key_of(tuple[static_cast<std::size_t>(k)]);
  if (!key) throw TupleError("partition attribute '" + *decl->partition_by + "' is neither number nor text");

  auto it = instances_.find(*key);
  if (it == instances_.end()) {
    if (instances_.size() >= max_partitions_)
      throw RoutingError("partition limit reached: key '" + format_literal(*key) + "' would be partition " +
                         std::to_string(instances_.size() + 1) + " (max_partitions " +
                         std::to_string(max_partitions_) + ")");
    Engine fresh = prototype_;
    // Validate the tuple before recording the key so a rejected first
    // tuple does not leave an instance behind.
    ChangeSet cs = fresh.apply_tuple(stream, tuple, ts);
    instances_.emplace(*key, std::move(fresh));
    creation_order_.push_back(*key);
    return {*key, std::move(cs)};
  }
  return {*key, it->second.apply_tuple(stream, tuple, ts)};
}

const Engine* PartitionManager::find(const Key& key) const {
  auto it = instances_.find(key);
  return it == instances_.end() ? nullptr : &it->second;
}

std::vector<std::pair<Key, ChangeSet>> PartitionManager::rebind(std::shared_ptr<const SheetModel> model) {
  Engine proto = prototype_;
  proto.rebind(model);
  if (!proto.model().partitioned()) throw ModelError(std::vector<Diagnostic>{{"streams", "edited model must stay partitioned"}});
  std::map<Key, Engine> next = instances_;
  std::vector<std::pair<Key, ChangeSet>> out;
  for (const Key& key : creation_order_) out.emplace_back(key, next.at(key).rebind(model));
  prototype_ = std::move(proto);
  instances_ = std::move(next);
  return out;
}

Operator::Operator(std::shared_ptr<const SheetModel> model, std::size_t max_partitions) {
  if (model->partitioned())
    partitions_.emplace(std::move(model), max_partitions);
  else
    single_.emplace(Engine::build(std::move(model)));
}

const SheetModel& Operator::model() const { return *model_ptr(); }

std::shared_ptr<const SheetModel> Operator::model_ptr() const {
  return partitions_ ? partitions_->prototype().model_ptr() : single_->model_ptr();
}

Operator::Step Operator::push(std::string_view stream, std::span<const Value> tuple, Timestamp ts) {
  Step step;
  const StreamDecl* decl = model().find_stream(stream);
  if (decl == nullptr) throw TupleError("unknown stream '" + std::string(stream) + "'");
  if (!admit(*decl, tuple)) return step;
  step.admitted = true;
  if (partitions_) {
    std::size_t before = partitions_->size();
    auto [key, cs] = partitions_->route(stream, tuple, ts);
    step.created = partitions_->size() != before;
    step.instance = partitions_->find(key);
    step.key = std::move(key);
    step.changes = std::move(cs);
  } else {
    step.changes = single_->apply_tuple(stream, tuple, ts);
    step.instance = &*single_;
  }
  return step;
}

const Engine* Operator::instance(const std::optional<Key>& key) const {
  if (!partitions_) return key ? nullptr : &*single_;
  return key ? partitions_->find(*key) : nullptr;
}

std::vector<Key> Operator::keys() const { return partitions_ ? partitions_->creation_order() : std::vector<Key>{}; }

std::uint64_t Operator::evaluation_passes() const {
  if (!partitions_) return single_->evaluation_passes();
  std::uint64_t total = 0;
  for (const Key& k : partitions_->creation_order()) total += partitions_->find(k)->evaluation_passes();
  return total;
}

std::vector<std::pair<std::optional<Key>, ChangeSet>> Operator::rebind(std::shared_ptr<const SheetModel> model) {
  std::vector<std::pair<std::optional<Key>, ChangeSet>> out;
  if (partitions_) {
    for (auto& [k, cs] : partitions_->rebind(std::move(model))) out.emplace_back(k, std::move(cs));
  } else {
    Engine next = *single_;
    ChangeSet cs = next.rebind(std::move(model));
    if (next.model().partitioned()) throw ModelError(std::vector<Diagnostic>{{"streams", "edited model must stay unpartitioned"}});
    single_ = std::move(next);
    out.emplace_back(std::nullopt, std::move(cs));
  }
  return out;
}

}  // namespace sheetstream
