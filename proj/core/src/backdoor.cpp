#include "crfu/backdoor.hpp"

#include <algorithm>
#include <cmath>

#include "crfu/errors.hpp"
#include "crfu/metrics.hpp"
#include "crfu/rng.hpp"

namespace crfu {

Trigger square_trigger(std::size_t size, float value, std::size_t anchor_row,
                       std::size_t anchor_col, std::uint32_t target_label) {
  if (size == 0) throw InputError("square_trigger: size must be positive");
  return Trigger{Tensor::full({size, size}, value), anchor_row, anchor_col, target_label};
}

void apply_trigger(std::span<float> image, std::size_t rows, std::size_t cols,
                   const Trigger& trigger) {
  if (image.size() != rows * cols) throw InputError("apply_trigger: image size mismatch");
  const std::size_t ph = trigger.pattern.rows(), pw = trigger.pattern.cols();
  if (trigger.anchor_row + ph > rows || trigger.anchor_col + pw > cols) {
    throw InputError("apply_trigger: patch outside image bounds");
  }
  for (std::size_t r = 0; r < ph; ++r) {
    for (std::size_t c = 0; c < pw; ++c) {
      image[(trigger.anchor_row + r) * cols + trigger.anchor_col + c] =
          trigger.pattern.data[r * pw + c];
    }
  }
}

Tensor apply_trigger(const Tensor& image, const Trigger& trigger) {
  Tensor out = image;
  apply_trigger(std::span<float>(out.data), image.rows(), image.cols(), trigger);
  return out;
}

DatasetSplit poison_split(const LabeledSet& data, double edr, const Trigger& trigger,
                          std::uint64_t seed) {
  data.validate();
  if (!(edr > 0.0 && edr < 1.0)) throw InputError("poison_split: edr must be in (0, 1)");
  const std::size_t n = data.size();
  const std::size_t ne = static_cast<std::size_t>(std::llround(edr * static_cast<double>(n)));
  if (ne == 0) throw InputError("poison_split: erased set would be empty");
  if (ne >= n) throw InputError("poison_split: remaining set would be empty");
  if (trigger.target_label >= data.class_count) {
    throw InputError("poison_split: target label out of range");
  }

  std::vector<std::uint32_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<std::uint32_t>(i);
  Rng rng = Rng::substream(seed, "poison");
  rng.shuffle(idx);

  DatasetSplit split;
  split.edr = edr;
  split.erased_idx.assign(idx.begin(), idx.begin() + ne);
  split.remaining_idx.assign(idx.begin() + ne, idx.end());
  std::sort(split.erased_idx.begin(), split.erased_idx.end());
  std::sort(split.remaining_idx.begin(), split.remaining_idx.end());

  split.full = data;
  const std::size_t d = split.full.images.cols();
  for (std::uint32_t i : split.erased_idx) {
    apply_trigger(std::span<float>(split.full.images.data.data() + i * d, d), split.full.rows,
                  split.full.cols, trigger);
    split.full.labels[i] = trigger.target_label;
  }
  return split;
}

double backdoor_accuracy(const IBModel& model, const LabeledSet& erased) {
  if (erased.size() == 0) throw InputError("backdoor_accuracy: empty erased set");
  return accuracy(model, erased);
}

}  // namespace crfu
