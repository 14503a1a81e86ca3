#include "crfu/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "crfu/errors.hpp"
#include "crfu/rng.hpp"

namespace crfu {

namespace {

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
constexpr float kBlobNoise = 0.12f;

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t pos) {
  if (pos + 4 > bytes.size()) throw FormatError("idx: truncated header");
  return (static_cast<std::uint32_t>(bytes[pos]) << 24) |
         (static_cast<std::uint32_t>(bytes[pos + 1]) << 16) |
         (static_cast<std::uint32_t>(bytes[pos + 2]) << 8) |
         static_cast<std::uint32_t>(bytes[pos + 3]);
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open: " + path);
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
}

}  // namespace

void LabeledSet::validate() const {
  if (size() == 0) throw InputError("labeled set is empty");
  if (images.rank() != 2 || images.rows() != size()) {
    throw InputError("labeled set: images " + images.shape_str() + " vs " +
                     std::to_string(size()) + " labels");
  }
  if (rows * cols != images.cols()) throw InputError("labeled set: rows*cols != image width");
  for (std::uint32_t y : labels) {
    if (y >= class_count) throw InputError("labeled set: label out of range");
  }
  for (float v : images.data) {
    if (!(v >= 0.0f && v <= 1.0f)) throw InputError("labeled set: pixel outside [0,1]");
  }
}

LabeledSet LabeledSet::subset(const std::vector<std::uint32_t>& indices) const {
  LabeledSet out;
  out.class_count = class_count;
  out.rows = rows;
  out.cols = cols;
  const std::size_t d = images.cols();
  out.images = Tensor::zeros({indices.size(), d});
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::uint32_t src = indices[i];
    if (src >= size()) throw InputError("subset: index out of range");
    std::copy_n(images.data.begin() + src * d, d, out.images.data.begin() + i * d);
    out.labels.push_back(labels[src]);
  }
  return out;
}

Tensor parse_idx_images(const std::vector<std::uint8_t>& bytes) {
  if (read_be32(bytes, 0) != kIdxImageMagic) throw FormatError("idx: bad image magic");
  std::size_t n = read_be32(bytes, 4);
  std::size_t rows = read_be32(bytes, 8);
  std::size_t cols = read_be32(bytes, 12);
  std::size_t need = 16 + n * rows * cols;
  if (bytes.size() != need) throw FormatError("idx: payload size mismatch");
  Tensor out = Tensor::zeros({n, rows * cols});
  for (std::size_t i = 0; i < n * rows * cols; ++i) {
    out.data[i] = static_cast<float>(bytes[16 + i]) / 255.0f;
  }
  return out;
}

std::vector<std::uint32_t> parse_idx_labels(const std::vector<std::uint8_t>& bytes) {
  if (read_be32(bytes, 0) != kIdxLabelMagic) throw FormatError("idx: bad label magic");
  std::size_t n = read_be32(bytes, 4);
  if (bytes.size() != 8 + n) throw FormatError("idx: payload size mismatch");
  std::vector<std::uint32_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = bytes[8 + i];
  return out;
}

std::vector<std::uint8_t> write_idx_images(const Tensor& images, std::size_t rows,
                                           std::size_t cols) {
  if (images.rank() != 2 || images.cols() != rows * cols) {
    throw InputError("write_idx_images: shape mismatch");
  }
  std::vector<std::uint8_t> out;
  write_be32(out, kIdxImageMagic);
  write_be32(out, static_cast<std::uint32_t>(images.rows()));
  write_be32(out, static_cast<std::uint32_t>(rows));
  write_be32(out, static_cast<std::uint32_t>(cols));
  for (float v : images.data) {
    out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0f)));
  }
  return out;
}

std::vector<std::uint8_t> write_idx_labels(const std::vector<std::uint32_t>& labels) {
  std::vector<std::uint8_t> out;
  write_be32(out, kIdxLabelMagic);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (std::uint32_t y : labels) {
    if (y > 255) throw InputError("write_idx_labels: label exceeds one byte");
    out.push_back(static_cast<std::uint8_t>(y));
  }
  return out;
}

LabeledSet load_idx(const std::string& images_path, const std::string& labels_path,
                    std::size_t class_count) {
  std::vector<std::uint8_t> ib = read_file(images_path);
  std::size_t rows = read_be32(ib, 8);
  std::size_t cols = read_be32(ib, 12);
  LabeledSet out;
  out.images = parse_idx_images(ib);
  out.labels = parse_idx_labels(read_file(labels_path));
  out.class_count = class_count;
  out.rows = rows;
  out.cols = cols;
  if (out.images.rows() != out.labels.size()) {
    throw FormatError("idx: image/label count mismatch");
  }
  out.validate();
  return out;
}

LabeledSet synth_blobs_matched(std::uint64_t seed, std::size_t n, std::size_t classes,
                               std::size_t d, std::uint32_t which) {
  if (classes < 2) throw InputError("synth_blobs: need at least 2 classes");
  if (n == 0 || n % classes != 0) throw InputError("synth_blobs: n must be a positive multiple of classes");
  if (d == 0) throw InputError("synth_blobs: d must be positive");

  std::size_t side_probe = static_cast<std::size_t>(std::sqrt(static_cast<double>(d)));
  bool square = side_probe * side_probe == d;
  std::size_t mrows = square ? side_probe : 1;
  std::size_t mcols = square ? side_probe : d;

  // MNIST-like geometry: class-informative centers over a dark border band,
  // so corner trigger patches land on quiet background.
  auto envelope = [](std::size_t i, std::size_t extent) {
    if (extent == 1) return 1.0;
    double margin = static_cast<double>(extent) / 4.0;
    double edge = static_cast<double>(std::min(i, extent - 1 - i)) + 0.5;
    return std::min(1.0, edge / margin);
  };

  // Class means depend only on (seed, class index) so matched draws share them.
  Rng means_rng = Rng::substream(seed, "blobs.means");
  std::vector<float> means(classes * d);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t j = 0; j < d; ++j) {
      double u = means_rng.uniform();
      double w = envelope(j / mcols, mrows) * envelope(j % mcols, mcols);
      means[c * d + j] = static_cast<float>(0.06 + w * (0.14 + 0.72 * u));
    }
  }

  Rng noise_rng = Rng::substream(seed, "blobs.samples:" + std::to_string(which));
  LabeledSet out;
  out.class_count = classes;
  std::size_t side = static_cast<std::size_t>(std::sqrt(static_cast<double>(d)));
  if (side * side == d) {
    out.rows = side;
    out.cols = side;
  } else {
    out.rows = 1;
    out.cols = d;
  }
  out.images = Tensor::zeros({n, d});
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t c = static_cast<std::uint32_t>(i % classes);
    out.labels[i] = c;
    const float* m = means.data() + c * d;
    float* px = out.images.data.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) {
      float v = m[j] + kBlobNoise * noise_rng.normal();
      px[j] = std::clamp(v, 0.0f, 1.0f);
    }
  }
  return out;
}

LabeledSet synth_blobs(std::uint64_t seed, std::size_t n, std::size_t classes, std::size_t d) {
  return synth_blobs_matched(seed, n, classes, d, 0);
}

std::pair<LabeledSet, LabeledSet> holdout_split(const LabeledSet& set, double fraction,
                                                std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw InputError("holdout_split: fraction must be in (0, 1)");
  }
  std::size_t n = set.size();
  std::size_t na = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<std::uint32_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<std::uint32_t>(i);
  Rng rng = Rng::substream(seed, "holdout");
  rng.shuffle(idx);
  std::vector<std::uint32_t> a(idx.begin(), idx.begin() + na);
  std::vector<std::uint32_t> b(idx.begin() + na, idx.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return {set.subset(a), set.subset(b)};
}

}  // namespace crfu
