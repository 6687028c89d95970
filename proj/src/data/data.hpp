#ifndef A2V_DATA_HPP
#define A2V_DATA_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "../core/rng.hpp"
#include "../core/tensor.hpp"

namespace a2v::data {

// Per-frame scalar amplitude in [0,1]; the lip-sync ground truth.
struct Envelope {
    std::vector<double> values;
    int64_t frames() const { return static_cast<int64_t>(values.size()); }
};

enum class EnvelopeKind { Constant, Sine, RandomWalk };

const char* envelope_kind_name(EnvelopeKind k);
EnvelopeKind envelope_kind_from_name(const std::string& s);

struct Rect {
    int64_t x = 0, y = 0, w = 0, h = 0;
    bool inside(int64_t W, int64_t H) const { return x >= 0 && y >= 0 && w > 0 && h > 0 && x + w <= W && y + h <= H; }
    bool contains(const Rect& o) const { return o.x >= x && o.y >= y && o.x + o.w <= x + w && o.y + o.h <= y + h; }
};

// Fully determines one synthetic clip: a flat-shaded background with a slow
// global intensity drift, a gradient-shaded "face" rectangle (the identity)
// and a mouth rectangle whose intensity tracks the envelope exactly.
struct SceneSpec {
    uint64_t seed = 0;
    EnvelopeKind kind = EnvelopeKind::Sine;
    int64_t width = 32, height = 32;
    Rect face{6, 5, 20, 22};
    Rect mouth{12, 19, 8, 4};
    double bg_drift_amp = 0.06;
    double bg_drift_period = 64.0;
    double bg_drift_phase = 0.0;
    double bg_base[3] = {0.22, 0.25, 0.30};
    double face_base[3] = {0.55, 0.45, 0.40};
    double face_grad_x[3] = {0.2, 0.1, 0.0};
    double face_grad_y[3] = {0.0, 0.15, 0.1};
    // envelope parameters
    double env_constant = 0.5;
    double env_period = 16.0;
    double env_phase = 0.0;
    double env_amp = 0.4;
    double env_walk_step = 0.12;

    void validate() const;  // throws on invalid geometry
};

// Jitter ranges used when sampling corpus scenes.
struct SceneDistribution {
    int64_t width = 32, height = 32;
    double p_sine = 0.5;  // remainder is random-walk
    double env_period_min = 10.0, env_period_max = 26.0;
    double env_amp_min = 0.3, env_amp_max = 0.45;
    double walk_step_min = 0.08, walk_step_max = 0.16;
    double drift_amp_min = 0.03, drift_amp_max = 0.08;
};

SceneSpec sample_scene(const SceneDistribution& dist, uint64_t seed);

// Raw per-frame speech features S, shape (F, H_w, D_A).
struct SpeechFeatureSeq {
    Tensor data;
    double fps = 25.0;
    int64_t frames() const { return data.ndim() == 3 ? data.shape[0] : 0; }
};

// Pixel video, shape (F, H, W, D_v), values in [0,1].
struct VideoTensor {
    Tensor data;
    double fps = 25.0;
    int64_t frames() const { return data.ndim() == 4 ? data.shape[0] : 0; }
};

Envelope make_envelope(const SceneSpec& spec, int64_t frames);

// Renders the clip; mouth-region mean intensity of frame i equals
// envelope[i] bitwise (envelope values are quantized to a dyadic grid so
// the region mean is exact in double arithmetic).
VideoTensor render_video(const SceneSpec& spec, const Envelope& env);

// Deterministic oscillator bank modulated by the envelope plus small seeded
// per-frame detail; stands in for a real speech-feature extractor on the
// synthetic task.
SpeechFeatureSeq synthetic_features(const Envelope& env, uint64_t seed, int64_t window, int64_t dim, double fps);

struct ClipTriple {
    VideoTensor video;
    SpeechFeatureSeq features;
    Envelope envelope;
    SceneSpec spec;
};

ClipTriple make_pair(const SceneSpec& spec, int64_t frames, int64_t feat_window = 2, int64_t feat_dim = 32,
                     double fps = 25.0);

// ---- WAV / log-mel ingestion ----

struct WavAudio {
    std::vector<double> samples;  // mono, [-1, 1]
    int sample_rate = 16000;
};

WavAudio read_wav(const std::string& path);
void write_wav(const std::string& path, const WavAudio& audio);  // PCM16 mono

struct MelConfig {
    int64_t n_fft = 1024;
    int64_t n_mels = 32;
    int64_t window_splits = 2;  // H_w sub-windows per video frame
    double fmin = 0.0;
    double fmax = 8000.0;
    double power_floor = 1e-10;
    bool normalized = true;  // affine map of log power into [0,1]
    double log_ceiling = 5.0;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular mel filterbank, rows = filters, cols = FFT bins (n_fft/2+1).
Tensor mel_filterbank(const MelConfig& cfg, int sample_rate);

// F feature frames from mono PCM; frame i covers the audio span of video
// frame i, split into window_splits sub-windows.
SpeechFeatureSeq logmel_features(const WavAudio& audio, double fps, int64_t frames, const MelConfig& cfg);

// In-place radix-2 FFT on interleaved re/im pairs; n must be a power of two.
void fft_radix2(std::vector<double>& re, std::vector<double>& im);

// ---- corpus on disk ----

struct CorpusConfig {
    std::string path;
    int64_t n_clips = 200;
    int64_t frames = 57;
    double fps = 25.0;
    int64_t feat_window = 2;
    int64_t feat_dim = 32;
    uint64_t seed = 7;
    SceneDistribution dist;
};

// Writes one directory per clip (video/features/envelope arrays) plus
// manifest.json. Content is a pure function of (config, seed).
void make_dataset(const CorpusConfig& cfg);

struct Corpus {
    CorpusConfig cfg;
    std::vector<SceneSpec> specs;

    static Corpus open(const std::string& path);
    int64_t size() const { return static_cast<int64_t>(specs.size()); }
    ClipTriple load(int64_t index) const;
};

}  // namespace a2v::data

#endif
