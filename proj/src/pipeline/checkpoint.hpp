#ifndef A2V_PIPELINE_CHECKPOINT_HPP
#define A2V_PIPELINE_CHECKPOINT_HPP

#include <map>
#include <string>
#include <vector>

#include "../core/graph.hpp"
#include "config.hpp"

namespace a2v::pipeline {

// Versioned single-file container of per-module parameter namespaces plus a
// config snapshot and training metadata. Arrays are stored exactly (float64)
// so a save/load roundtrip reproduces forward outputs bitwise on the same
// platform.
struct Checkpoint {
    ExperimentConfig config;
    int stage = 0;
    int64_t step = 0;
    ParamStore codec_params;
    ParamStore speechae_params;  // may be empty for the no-speechae arm
    ParamStore backbone_params;  // empty after stage 1
    std::map<std::string, std::vector<double>> loss_curves;
    int64_t dropout_speech = 0, dropout_ref = 0, dropout_steps = 0;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);

    bool has_speechae() const { return !speechae_params.order.empty(); }
    bool has_backbone() const { return !backbone_params.order.empty(); }
};

// crc of the serialized file, for provenance lines in reports
uint32_t checkpoint_file_crc(const std::string& path);

}  // namespace a2v::pipeline

#endif
