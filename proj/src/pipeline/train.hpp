#ifndef A2V_PIPELINE_TRAIN_HPP
#define A2V_PIPELINE_TRAIN_HPP

#include "checkpoint.hpp"
#include "config.hpp"

namespace a2v::pipeline {

// Stage 1: codec reconstruction training + speech autoencoder pretraining on
// the corpus named by the config. Deterministic per (config, seed).
Checkpoint train_stage1(const ExperimentConfig& cfg);

// Stage 2: backbone training with the asynchronous forward process (sample
// (t1,t2), build the t-vector, add noise, predict, masked flow-matching
// loss). The codec stays frozen; the speech autoencoder is frozen unless the
// arm dictates otherwise. cfg.stage2.arm selects the ablation recipe.
Checkpoint train_stage2(const ExperimentConfig& cfg, const Checkpoint& stage1);

}  // namespace a2v::pipeline

#endif
