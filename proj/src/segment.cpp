#include "robusthar/segment.hpp"

#include "robusthar/error.hpp"

namespace robusthar {

const char* split_name(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::test: return "test";
    case Split::unassigned: break;
  }
  return "unassigned";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "test") return Split::test;
  if (name == "unassigned") return Split::unassigned;
  throw ValueError("unknown split '" + name + "'");
}

std::vector<Tensor> SegmentSet::tensors() const {
  std::vector<Tensor> out;
  out.reserve(segments.size());
  for (const auto& s : segments) out.push_back(s.data);
  return out;
}

std::vector<int> SegmentSet::labels() const {
  std::vector<int> out;
  out.reserve(segments.size());
  for (const auto& s : segments) out.push_back(s.label);
  return out;
}

void require_train_split(const SegmentSet& set, const char* who) {
  if (set.split != Split::train) {
    throw ValueError(std::string(who) + ": refusing to train on a '" + split_name(set.split) + "' split");
  }
  if (set.empty()) throw ValueError(std::string(who) + ": empty dataset");
}

}  // namespace robusthar
