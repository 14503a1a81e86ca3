#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "crfu/dataset.hpp"
#include "crfu/ib.hpp"
#include "crfu/tensor.hpp"

namespace crfu {

/// Pixel-patch backdoor trigger stamped at a fixed anchor.
struct Trigger {
  Tensor pattern;  // [ph, pw], values in [0,1]
  std::size_t anchor_row = 0;
  std::size_t anchor_col = 0;
  std::uint32_t target_label = 0;
};

/// All-`value` size x size patch; the default erasure-verification trigger.
Trigger square_trigger(std::size_t size, float value, std::size_t anchor_row,
                       std::size_t anchor_col, std::uint32_t target_label);

/// Stamps the patch over a flattened rows x cols image in place. Idempotent;
/// throws InputError if the patch overruns the image at its anchor.
void apply_trigger(std::span<float> image, std::size_t rows, std::size_t cols,
                   const Trigger& trigger);
/// Pure variant for a single [rows, cols] image.
Tensor apply_trigger(const Tensor& image, const Trigger& trigger);

/// Full set partitioned into triggered/relabeled erased samples and the
/// untouched remaining samples. Index sets are disjoint and cover the set.
struct DatasetSplit {
  LabeledSet full;  // poisoned at erased indices
  std::vector<std::uint32_t> erased_idx;
  std::vector<std::uint32_t> remaining_idx;
  double edr = 0.0;

  LabeledSet erased() const { return full.subset(erased_idx); }
  LabeledSet remaining() const { return full.subset(remaining_idx); }
};

/// Seeded uniform choice of round(edr * n) samples; those get the trigger and
/// the target label, everything else is untouched.
DatasetSplit poison_split(const LabeledSet& data, double edr, const Trigger& trigger,
                          std::uint64_t seed);

/// Fraction of erased (triggered) samples classified as the trigger target;
/// deterministic eps = 0 evaluation. The erased set carries the target label
/// on every sample by construction, so this is accuracy on that set.
double backdoor_accuracy(const IBModel& model, const LabeledSet& erased);

}  // namespace crfu
