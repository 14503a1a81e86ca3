#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "crfu/backdoor.hpp"
#include "crfu/dataset.hpp"
#include "crfu/ib.hpp"
#include "crfu/params.hpp"
#include "crfu/unlearn.hpp"

namespace crfu {

/// What the adversary observes per probe: representation-level deltas (the
/// attack upper bound) or black-box output-probability deltas.
enum class DeltaMode { representation, output_probability };

/// Per-probe difference of model responses before/after unlearning, eps = 0.
/// representation mode: [mu_after - mu_before | logvar_after - logvar_before]
/// (2K columns); output mode: probability deltas (C columns).
Tensor response_delta(const IBModel& before, const IBModel& after, const Tensor& probe,
                      DeltaMode mode);
inline Tensor representation_delta(const IBModel& before, const IBModel& after,
                                   const Tensor& probe) {
  return response_delta(before, after, probe, DeltaMode::representation);
}

/// One shadow observation: the delta and the erased sample it came from.
struct DeltaRecord {
  Tensor delta;         // [delta_dim]
  Tensor target_image;  // [d], values in [0,1]
  std::uint32_t target_label = 0;
};

/// Everything the adversary replicates about the victim's pipeline.
struct ShadowProtocol {
  TrainConfig train;
  ModelDims dims;
  UnlearnConfig unlearn;
  Trigger trigger;
  double edr = 0.06;
  double shadow_fraction = 0.5;  // share of aux data each shadow trains on
  DeltaMode mode = DeltaMode::representation;
};

/// Runs `n_shadow` full train->poison->unlearn replicas on seeded subsamples
/// of the (victim-disjoint) aux data and collects (delta, erased sample)
/// pairs, ordered by shadow index. All seeds derive from `seed`.
std::vector<DeltaRecord> build_shadow_corpus(const LabeledSet& aux, std::size_t n_shadow,
                                             const ShadowProtocol& protocol, std::uint64_t seed);

/// Encoder/decoder reconstructor trained on shadow deltas. The decoder output
/// goes through a logistic squash, so reconstructions live in (0,1).
struct AttackNet {
  ParamSet enc;
  ParamSet dec;
  std::vector<std::size_t> enc_dims;
  std::vector<std::size_t> dec_dims;
  float final_train_mse = 0.0f;  // on [0,1] pixels
};

AttackNet train_reconstructor(const std::vector<DeltaRecord>& corpus, std::size_t epochs,
                              float lr, std::uint64_t seed);

/// Decoder(encoder(delta)) for a batch of deltas -> images in (0,1).
Tensor reconstruct(const AttackNet& net, const Tensor& deltas);

/// Mean over the erased set of per-pixel squared error between the
/// reconstruction from the victim's delta and the true erased image, both
/// scaled to [0,255].
double reconstruction_mse(const AttackNet& net, const IBModel& before, const IBModel& after,
                          const LabeledSet& erased, DeltaMode mode = DeltaMode::representation);

/// Rank-based AUC (ties get half credit) of delta-norm membership scores,
/// erased samples positive.
double membership_auc(const IBModel& before, const IBModel& after, const LabeledSet& erased,
                      const LabeledSet& non_member, DeltaMode mode = DeltaMode::representation);

/// AUC of raw score sets; exposed for oracle tests.
double auc_from_scores(std::span<const double> positives, std::span<const double> negatives);

}  // namespace crfu
