#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bdma/dictionary.hpp"
#include "bdma/losses.hpp"
#include "bdma/mapper.hpp"

namespace bdma {

struct TrainingConfig {
    int batch_size = 128;
    double learning_rate = 5e-4;
    double lr_decay = 0.98;   // applied after every epoch
    double lr_shrink = 0.5;   // applied when validation P@1 does not improve
    double map_beta = 1e-3;
    bool ortho = true;
    int epochs = 50;
    LossKind loss = LossKind::CosinePlusRcsls;
    int rcsls_k = 10;
    int csls_k = 10;  // validation retrieval neighborhood
    MapperKind arch = MapperKind::Linear;
    int hidden = 4096;
    Sharing sharing = Sharing::SharedTranspose;
    std::uint64_t seed = 42;
    std::string direction_label = "s2t";

    void validate() const;
};

struct AdamState {
    std::vector<Matrix> m;
    std::vector<Matrix> v;
    long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState for_params(const std::vector<Matrix>& params);
};

// One bias-corrected Adam update, in place. Non-finite gradients are an
// error.
void adam_step(std::vector<Matrix>& params, const std::vector<Matrix>& grads, AdamState& state,
               double lr);

// Deterministic permutation of [0, n) keyed on (seed, epoch).
std::vector<Eigen::Index> shuffle_epoch(std::size_t n, std::uint64_t seed, int epoch);

struct EpochStats {
    int epoch = 0;       // 1-based
    double loss = 0.0;   // mean batch objective
    double val_p1 = 0.0;
    double lr = 0.0;     // rate used during this epoch
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    int best_epoch = 0;
    double best_val_p1 = 0.0;
    std::string direction_label;
    double wall_seconds = 0.0;  // logged, never serialized
};

// One JSON object per epoch: {"epoch":..,"loss":..,"val_p1":..,"lr":..}.
std::string report_jsonl(const TrainReport& report);

// Mini-batch training of the cycle-consistency objective (plus the
// orthogonal penalty when enabled) with Adam. Batches are drawn from a
// deterministic per-epoch shuffle; the final partial batch is used. After
// each epoch a savepoint candidate is formed from the current parameters:
// linear mappers trained with the penalty are snapped to the polar factor
// (nearest orthogonal matrix) of each weight, and any flow whose outputs
// anti-correlate with its training targets is sign-flipped (the unsigned
// cosine term cannot tell the two apart, signed retrieval can). Forward P@1
// of the candidate is measured with csls over the bound validation target
// pool, and the candidate with the highest validation P@1 is returned.
std::pair<Mapper, TrainReport> train(const EmbeddingSet& src, const EmbeddingSet& tgt,
                                     const IndexedPairs& pairs, const EvalGroups& val,
                                     const TrainingConfig& cfg);

}  // namespace bdma
