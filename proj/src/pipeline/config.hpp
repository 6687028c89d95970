#ifndef A2V_PIPELINE_CONFIG_HPP
#define A2V_PIPELINE_CONFIG_HPP

#include <string>

#include "../backbone/backbone.hpp"
#include "../codec/codec.hpp"
#include "../data/data.hpp"
#include "../sched/sched.hpp"
#include "../speechae/speechae.hpp"

namespace a2v::pipeline {

// Ablation arms of the training/inference recipe.
enum class Arm {
    Full,        // pretrained speech AE (frozen) + asynchronous noise training
    NoPretrain,  // speech AE trained jointly from scratch with the backbone
    NoSpeechAE,  // raw features injected via a learned linear projection
    NoAns,       // synchronous add-noise training + concatenation inference
};

const char* arm_name(Arm a);
Arm arm_from_name(const std::string& s);

struct Stage1Config {
    double codec_lr = 2e-3;
    int64_t codec_epochs = 12;
    double speechae_lr = 1e-4;  // paper default
    int64_t speechae_epochs = 25;
};

struct Stage2Config {
    double lr = 1e-5;  // paper default
    int64_t steps = 1500;
    int64_t batch_size = 1;  // paper default
    bool freeze_speechae = true;
    Arm arm = Arm::Full;
};

struct ExperimentConfig {
    uint64_t seed = 7;
    data::CorpusConfig corpus;
    codec::CodecConfig codec;
    speechae::SpeechAEConfig speechae;
    backbone::BackboneConfig backbone;
    sched::SamplerConfig sampler;
    Stage1Config stage1;
    Stage2Config stage2;

    ExperimentConfig();

    // Fills the backbone's latent geometry from corpus/codec settings and
    // checks cross-module consistency (shared temporal ratio, valid frame
    // counts, matching audio token dims).
    void derive_and_validate();

    std::string to_json_text() const;
    static ExperimentConfig from_json_text(const std::string& text);
    void save(const std::string& path) const;
    static ExperimentConfig load(const std::string& path);
};

}  // namespace a2v::pipeline

#endif
