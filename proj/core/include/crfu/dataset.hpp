#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "crfu/tensor.hpp"

namespace crfu {

/// Labeled image set. Images are flattened row-major with values in [0, 1];
/// rows/cols keep the 2-D geometry for trigger placement.
struct LabeledSet {
  Tensor images;                     // [n, rows*cols]
  std::vector<std::uint32_t> labels; // [n], each < class_count
  std::size_t class_count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return labels.size(); }
  /// Validates the type invariants; throws InputError on violation.
  void validate() const;
  /// New set holding the given sample indices, in order.
  LabeledSet subset(const std::vector<std::uint32_t>& indices) const;
};

/// IDX (MNIST-family) container, big-endian headers.
Tensor parse_idx_images(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint32_t> parse_idx_labels(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> write_idx_images(const Tensor& images, std::size_t rows, std::size_t cols);
std::vector<std::uint8_t> write_idx_labels(const std::vector<std::uint32_t>& labels);

LabeledSet load_idx(const std::string& images_path, const std::string& labels_path,
                    std::size_t class_count);

/// Gaussian class blobs around seeded per-class mean patterns, clipped to
/// [0,1]. Balanced labels; images are side x side with side^2 == d.
LabeledSet synth_blobs(std::uint64_t seed, std::size_t n, std::size_t classes, std::size_t d);
/// Same class means as synth_blobs for this seed, fresh noise: a matched
/// held-out set (label `which` picks an independent draw, e.g. 1 for test).
LabeledSet synth_blobs_matched(std::uint64_t seed, std::size_t n, std::size_t classes,
                               std::size_t d, std::uint32_t which);

/// Seeded disjoint partition with |first| == round(fraction * n).
std::pair<LabeledSet, LabeledSet> holdout_split(const LabeledSet& set, double fraction,
                                                std::uint64_t seed);

}  // namespace crfu
