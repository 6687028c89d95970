#ifndef A2V_PIPELINE_GENERATE_HPP
#define A2V_PIPELINE_GENERATE_HPP

#include <optional>
#include <string>

#include "../sched/sched.hpp"
#include "checkpoint.hpp"

namespace a2v::pipeline {

// Driving audio: either a synthetic scene (envelope + oscillator features)
// or a real WAV ingested through the log-mel front end.
struct AudioSource {
    enum class Kind { Synthetic, Wav };
    Kind kind = Kind::Synthetic;
    data::SceneSpec scene;  // synthetic envelope parameters
    std::string wav_path;

    static AudioSource synthetic(const data::SceneSpec& s) {
        AudioSource a;
        a.kind = Kind::Synthetic;
        a.scene = s;
        return a;
    }
    static AudioSource wav(const std::string& path) {
        AudioSource a;
        a.kind = Kind::Wav;
        a.wav_path = path;
        return a;
    }
};

struct GenerateOptions {
    int64_t frames = 57;  // requested pixel frames; latent count rounds up, output is trimmed
    int64_t steps = 8;    // paper default
    sched::CfgMode mode = sched::CfgMode::Split;
    double alpha = 2.0;  // paper defaults for split guidance
    double beta = 6.0;
    uint64_t seed = 1;
    std::string out_dir;  // when set: PNG frames + run manifest
};

struct GenerateOutput {
    data::VideoTensor video;  // trimmed to the requested frame count
    Tensor latents;           // (N+1, h, w, d_v), reference at slot 0
    sched::GenerateStats stats;
    int64_t latent_frames = 0;
    int64_t clips = 0;
    data::Envelope envelope;  // synthetic sources: the driving envelope (trimmed)
    std::string manifest_path;
};

// Full pipeline: reference image -> z_R, audio -> speech latents, guided
// reverse process, decode, write frames. Deterministic per seed. The
// checkpoint's training arm decides the conditioning path and (for the
// synchronous baseline) the concatenation inference strategy.
GenerateOutput generate_video(const Checkpoint& ckpt, const AudioSource& audio, const Tensor& reference_image,
                              const GenerateOptions& opt);

}  // namespace a2v::pipeline

#endif
