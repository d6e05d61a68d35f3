#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "robusthar/tensor.hpp"

namespace robusthar {

enum class Split { unassigned, train, test };

const char* split_name(Split split);
Split parse_split(const std::string& name);

struct Provenance {
  std::string dataset;
  std::string subject;
  std::size_t window = 0;
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

// One labelled [time, channel] window.
struct Segment {
  Tensor data;
  int label = 0;
  Provenance provenance;
};

// Segments that all belong to one side of a train/test split. Trainers only
// accept sets tagged Split::train.
struct SegmentSet {
  std::vector<Segment> segments;
  Split split = Split::unassigned;

  std::size_t size() const { return segments.size(); }
  bool empty() const { return segments.empty(); }
  std::vector<Tensor> tensors() const;
  std::vector<int> labels() const;
};

// Throws ValueError unless `set` is a non-empty training split.
void require_train_split(const SegmentSet& set, const char* who);

}  // namespace robusthar
