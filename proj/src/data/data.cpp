#include "data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "../core/serialize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace a2v::data {

namespace {

// Envelope values live on a 2^-40 grid so that mouth-region sums (a few
// hundred equal terms) stay exact in double arithmetic and the region mean
// reproduces the envelope bitwise.
double quantize_env(double v) {
    v = std::clamp(v, 0.0, 1.0);
    return std::ldexp(std::nearbyint(std::ldexp(v, 40)), -40);
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

double hash_unit(uint64_t seed, uint64_t a, uint64_t b, uint64_t c) {
    uint64_t buf[4] = {seed, a, b, c};
    uint64_t h = fnv1a(buf, sizeof(buf));
    return static_cast<double>(h >> 11) * 0x1.0p-53;  // [0,1)
}

}  // namespace

const char* envelope_kind_name(EnvelopeKind k) {
    switch (k) {
        case EnvelopeKind::Constant: return "constant";
        case EnvelopeKind::Sine: return "sine";
        case EnvelopeKind::RandomWalk: return "random-walk";
    }
    return "?";
}

EnvelopeKind envelope_kind_from_name(const std::string& s) {
    if (s == "constant") return EnvelopeKind::Constant;
    if (s == "sine") return EnvelopeKind::Sine;
    if (s == "random-walk") return EnvelopeKind::RandomWalk;
    throw std::invalid_argument("unknown envelope kind: " + s);
}

void SceneSpec::validate() const {
    if (width < 8 || height < 8) throw std::invalid_argument("scene: frame too small");
    if (!face.inside(width, height)) throw std::invalid_argument("scene: face rectangle outside frame bounds");
    if (!mouth.inside(width, height)) throw std::invalid_argument("scene: mouth rectangle outside frame bounds");
    if (!face.contains(mouth)) throw std::invalid_argument("scene: mouth rectangle not inside face");
    if (env_amp < 0.0 || env_amp > 0.5) throw std::invalid_argument("scene: envelope amplitude outside [0, 0.5]");
    if (env_constant < 0.0 || env_constant > 1.0) throw std::invalid_argument("scene: constant envelope outside [0,1]");
    if (bg_drift_period <= 0.0) throw std::invalid_argument("scene: drift period must be positive");
}

SceneSpec sample_scene(const SceneDistribution& dist, uint64_t seed) {
    Rng rng(Rng::derive(seed, 0x5ce));
    SceneSpec s;
    s.seed = seed;
    s.width = dist.width;
    s.height = dist.height;

    s.face.w = 16 + static_cast<int64_t>(rng.below(7));
    s.face.h = 18 + static_cast<int64_t>(rng.below(7));
    s.face.x = 2 + static_cast<int64_t>(rng.below(static_cast<uint64_t>(s.width - s.face.w - 3)));
    s.face.y = 1 + static_cast<int64_t>(rng.below(static_cast<uint64_t>(s.height - s.face.h - 2)));

    s.mouth.w = 8;
    s.mouth.h = 4;
    int64_t mx = s.face.x + (s.face.w - s.mouth.w) / 2 + static_cast<int64_t>(rng.below(5)) - 2;
    int64_t my = s.face.y + (s.face.h * 2) / 3 + static_cast<int64_t>(rng.below(3)) - 1;
    s.mouth.x = std::clamp(mx, s.face.x, s.face.x + s.face.w - s.mouth.w);
    s.mouth.y = std::clamp(my, s.face.y, s.face.y + s.face.h - s.mouth.h);

    s.kind = rng.uniform() < dist.p_sine ? EnvelopeKind::Sine : EnvelopeKind::RandomWalk;
    s.env_period = rng.uniform_range(dist.env_period_min, dist.env_period_max);
    s.env_phase = rng.uniform_range(0.0, 2.0 * M_PI);
    s.env_amp = rng.uniform_range(dist.env_amp_min, dist.env_amp_max);
    s.env_walk_step = rng.uniform_range(dist.walk_step_min, dist.walk_step_max);

    s.bg_drift_amp = rng.uniform_range(dist.drift_amp_min, dist.drift_amp_max);
    s.bg_drift_period = rng.uniform_range(40.0, 90.0);
    s.bg_drift_phase = rng.uniform_range(0.0, 2.0 * M_PI);
    for (int c = 0; c < 3; ++c) {
        s.bg_base[c] = rng.uniform_range(0.15, 0.35);
        s.face_base[c] = rng.uniform_range(0.35, 0.70);
        s.face_grad_x[c] = rng.uniform_range(-0.25, 0.25);
        s.face_grad_y[c] = rng.uniform_range(-0.25, 0.25);
    }
    s.validate();
    return s;
}

Envelope make_envelope(const SceneSpec& spec, int64_t frames) {
    if (frames < 1) throw std::invalid_argument("envelope: frame count must be >= 1");
    Envelope env;
    env.values.resize(static_cast<size_t>(frames));
    switch (spec.kind) {
        case EnvelopeKind::Constant:
            for (auto& v : env.values) v = quantize_env(spec.env_constant);
            break;
        case EnvelopeKind::Sine:
            for (int64_t i = 0; i < frames; ++i)
                env.values[static_cast<size_t>(i)] =
                    quantize_env(0.5 + spec.env_amp * std::sin(2.0 * M_PI * static_cast<double>(i) / spec.env_period +
                                                               spec.env_phase));
            break;
        case EnvelopeKind::RandomWalk: {
            Rng rng(Rng::derive(spec.seed, 0xe47));
            double v = 0.5;
            for (int64_t i = 0; i < frames; ++i) {
                env.values[static_cast<size_t>(i)] = quantize_env(v);
                v = std::clamp(v + spec.env_walk_step * (2.0 * rng.uniform() - 1.0), 0.0, 1.0);
            }
            break;
        }
    }
    return env;
}

VideoTensor render_video(const SceneSpec& spec, const Envelope& env) {
    spec.validate();
    int64_t F = env.frames(), H = spec.height, W = spec.width;
    VideoTensor video;
    video.data = Tensor({F, H, W, 3});
    Tensor& X = video.data;
    for (int64_t i = 0; i < F; ++i) {
        double drift = spec.bg_drift_amp *
                       std::sin(2.0 * M_PI * static_cast<double>(i) / spec.bg_drift_period + spec.bg_drift_phase);
        double bg[3];
        for (int c = 0; c < 3; ++c) bg[c] = clamp01(spec.bg_base[c] + drift);
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x)
                for (int64_t c = 0; c < 3; ++c) X.at4(i, y, x, c) = bg[c];
        for (int64_t y = spec.face.y; y < spec.face.y + spec.face.h; ++y) {
            double fy = spec.face.h > 1 ? static_cast<double>(y - spec.face.y) / static_cast<double>(spec.face.h - 1) : 0.0;
            for (int64_t x = spec.face.x; x < spec.face.x + spec.face.w; ++x) {
                double fx = spec.face.w > 1 ? static_cast<double>(x - spec.face.x) / static_cast<double>(spec.face.w - 1) : 0.0;
                for (int64_t c = 0; c < 3; ++c)
                    X.at4(i, y, x, c) =
                        clamp01(spec.face_base[c] + spec.face_grad_x[c] * (fx - 0.5) + spec.face_grad_y[c] * (fy - 0.5));
            }
        }
        double m = env.values[static_cast<size_t>(i)];
        for (int64_t y = spec.mouth.y; y < spec.mouth.y + spec.mouth.h; ++y)
            for (int64_t x = spec.mouth.x; x < spec.mouth.x + spec.mouth.w; ++x)
                for (int64_t c = 0; c < 3; ++c) X.at4(i, y, x, c) = m;
    }
    return video;
}

SpeechFeatureSeq synthetic_features(const Envelope& env, uint64_t seed, int64_t window, int64_t dim, double fps) {
    int64_t F = env.frames();
    SpeechFeatureSeq out;
    out.fps = fps;
    out.data = Tensor({F, window, dim});
    for (int64_t i = 0; i < F; ++i) {
        double e = env.values[static_cast<size_t>(i)];
        for (int64_t u = 0; u < window; ++u)
            for (int64_t k = 0; k < dim; ++k) {
                double omega = 0.30 + 1.9 * static_cast<double>(k) / static_cast<double>(dim);
                double phase = 2.399963229728653 * static_cast<double>(k) + 0.37 * static_cast<double>(u);
                double osc = 0.5 + 0.5 * std::sin(omega * static_cast<double>(i) + phase);
                double detail = 2.0 * hash_unit(seed, static_cast<uint64_t>(i), static_cast<uint64_t>(u),
                                                static_cast<uint64_t>(k)) -
                                1.0;
                out.data.at3(i, u, k) = e * osc + 0.02 * detail;
            }
    }
    return out;
}

ClipTriple make_pair(const SceneSpec& spec, int64_t frames, int64_t feat_window, int64_t feat_dim, double fps) {
    spec.validate();
    ClipTriple t;
    t.spec = spec;
    t.envelope = make_envelope(spec, frames);
    t.video = render_video(spec, t.envelope);
    t.video.fps = fps;
    t.features = synthetic_features(t.envelope, spec.seed, feat_window, feat_dim, fps);
    return t;
}

// --------------------------------------------------------------------- WAV

WavAudio read_wav(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("wav: cannot open " + path);
    std::vector<unsigned char> file((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (file.size() < 44 || std::memcmp(file.data(), "RIFF", 4) != 0 || std::memcmp(file.data() + 8, "WAVE", 4) != 0)
        throw std::runtime_error("wav: not a RIFF/WAVE file: " + path);

    auto u16 = [&](size_t off) { return static_cast<uint32_t>(file[off]) | (static_cast<uint32_t>(file[off + 1]) << 8); };
    auto u32 = [&](size_t off) {
        return static_cast<uint32_t>(file[off]) | (static_cast<uint32_t>(file[off + 1]) << 8) |
               (static_cast<uint32_t>(file[off + 2]) << 16) | (static_cast<uint32_t>(file[off + 3]) << 24);
    };

    WavAudio out;
    bool got_fmt = false;
    size_t p = 12;
    while (p + 8 <= file.size()) {
        uint32_t len = u32(p + 4);
        const char* id = reinterpret_cast<const char*>(&file[p]);
        size_t body = p + 8;
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (len < 16) throw std::runtime_error("wav: malformed fmt chunk");
            uint32_t format = u16(body);
            uint32_t channels = u16(body + 2);
            uint32_t rate = u32(body + 4);
            uint32_t bits = u16(body + 14);
            if (format != 1) throw std::runtime_error("wav: only PCM (format 1) supported");
            if (channels != 1) throw std::runtime_error("wav: only mono audio supported, got " + std::to_string(channels) + " channels");
            if (bits != 16) throw std::runtime_error("wav: only 16-bit PCM supported, got " + std::to_string(bits));
            if (rate != 16000 && rate != 22050 && rate != 44100 && rate != 48000)
                throw std::runtime_error("wav: unsupported sample rate " + std::to_string(rate));
            out.sample_rate = static_cast<int>(rate);
            got_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            if (!got_fmt) throw std::runtime_error("wav: data chunk before fmt chunk");
            if (body + len > file.size()) throw std::runtime_error("wav: truncated data chunk");
            size_t n = len / 2;
            out.samples.resize(n);
            for (size_t i = 0; i < n; ++i) {
                int16_t s;
                std::memcpy(&s, &file[body + 2 * i], 2);
                out.samples[i] = static_cast<double>(s) / 32768.0;
            }
            if (out.samples.empty()) throw std::runtime_error("wav: empty audio in " + path);
            return out;
        }
        p = body + len + (len & 1);
    }
    throw std::runtime_error("wav: no data chunk in " + path);
}

void write_wav(const std::string& path, const WavAudio& audio) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("wav: cannot open for write: " + path);
    uint32_t n = static_cast<uint32_t>(audio.samples.size());
    uint32_t data_len = n * 2;
    uint32_t riff_len = 36 + data_len;
    auto w16 = [&](uint32_t v) {
        unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
        os.write(reinterpret_cast<char*>(b), 2);
    };
    auto w32 = [&](uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
        os.write(reinterpret_cast<char*>(b), 4);
    };
    os.write("RIFF", 4);
    w32(riff_len);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    w32(16);
    w16(1);  // PCM
    w16(1);  // mono
    w32(static_cast<uint32_t>(audio.sample_rate));
    w32(static_cast<uint32_t>(audio.sample_rate) * 2);
    w16(2);
    w16(16);
    os.write("data", 4);
    w32(data_len);
    for (double v : audio.samples) {
        double c = std::clamp(v, -1.0, 1.0);
        int16_t s = static_cast<int16_t>(std::lround(c * 32767.0));
        unsigned char b[2] = {static_cast<unsigned char>(s & 0xff), static_cast<unsigned char>((s >> 8) & 0xff)};
        os.write(reinterpret_cast<char*>(b), 2);
    }
}

// ------------------------------------------------------------------ log-mel

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Tensor mel_filterbank(const MelConfig& cfg, int sample_rate) {
    int64_t bins = cfg.n_fft / 2 + 1;
    double mel_lo = hz_to_mel(cfg.fmin);
    double mel_hi = hz_to_mel(std::min(cfg.fmax, sample_rate / 2.0));
    std::vector<double> edges(static_cast<size_t>(cfg.n_mels + 2));
    for (int64_t j = 0; j < cfg.n_mels + 2; ++j)
        edges[static_cast<size_t>(j)] =
            mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(j) / static_cast<double>(cfg.n_mels + 1));
    Tensor fb({cfg.n_mels, bins});
    for (int64_t m = 0; m < cfg.n_mels; ++m) {
        double lo = edges[static_cast<size_t>(m)], mid = edges[static_cast<size_t>(m + 1)],
               hi = edges[static_cast<size_t>(m + 2)];
        for (int64_t k = 0; k < bins; ++k) {
            double f = static_cast<double>(k) * sample_rate / static_cast<double>(cfg.n_fft);
            double wgt = 0.0;
            if (f > lo && f < mid)
                wgt = (f - lo) / (mid - lo);
            else if (f >= mid && f < hi)
                wgt = (hi - f) / (hi - mid);
            fb.at2(m, k) = wgt;
        }
    }
    return fb;
}

void fft_radix2(std::vector<double>& re, std::vector<double>& im) {
    size_t n = re.size();
    if (n == 0 || (n & (n - 1)) != 0 || im.size() != n)
        throw std::invalid_argument("fft: size must be a power of two");
    // bit reversal
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        double ang = -2.0 * M_PI / static_cast<double>(len);
        double wre = std::cos(ang), wim = std::sin(ang);
        for (size_t i = 0; i < n; i += len) {
            double cre = 1.0, cim = 0.0;
            for (size_t k = 0; k < len / 2; ++k) {
                double ure = re[i + k], uim = im[i + k];
                double vre = re[i + k + len / 2] * cre - im[i + k + len / 2] * cim;
                double vim = re[i + k + len / 2] * cim + im[i + k + len / 2] * cre;
                re[i + k] = ure + vre;
                im[i + k] = uim + vim;
                re[i + k + len / 2] = ure - vre;
                im[i + k + len / 2] = uim - vim;
                double nre = cre * wre - cim * wim;
                cim = cre * wim + cim * wre;
                cre = nre;
            }
        }
    }
}

SpeechFeatureSeq logmel_features(const WavAudio& audio, double fps, int64_t frames, const MelConfig& cfg) {
    if (audio.samples.empty()) throw std::invalid_argument("logmel: empty audio");
    if (audio.sample_rate != 16000 && audio.sample_rate != 22050 && audio.sample_rate != 44100 &&
        audio.sample_rate != 48000)
        throw std::invalid_argument("logmel: unsupported sample rate " + std::to_string(audio.sample_rate));
    if (frames < 1) throw std::invalid_argument("logmel: frame count must be >= 1");
    double hop = static_cast<double>(audio.sample_rate) / fps;
    double needed = static_cast<double>(frames) * hop;
    if (static_cast<double>(audio.samples.size()) + 0.5 < needed)
        throw std::invalid_argument("logmel: audio too short: need " + std::to_string(frames) + " frames at " +
                                    std::to_string(fps) + " fps (" + std::to_string(needed) + " samples), got " +
                                    std::to_string(audio.samples.size()));

    Tensor fb = mel_filterbank(cfg, audio.sample_rate);
    int64_t bins = cfg.n_fft / 2 + 1;
    int64_t H_w = cfg.window_splits;
    SpeechFeatureSeq out;
    out.fps = fps;
    out.data = Tensor({frames, H_w, cfg.n_mels});

    double log_floor = std::log(cfg.power_floor);
    std::vector<double> re(static_cast<size_t>(cfg.n_fft)), im(static_cast<size_t>(cfg.n_fft));
    // analysis window spans a full frame hop (sub-windows overlap); keeps the
    // mainlobe narrow enough that a pure tone lands in one mel filter
    int64_t win = std::min(cfg.n_fft, static_cast<int64_t>(std::floor(hop)));
    for (int64_t i = 0; i < frames; ++i) {
        for (int64_t u = 0; u < H_w; ++u) {
            int64_t start = static_cast<int64_t>(std::floor((static_cast<double>(i) + static_cast<double>(u) / H_w) * hop));
            std::fill(re.begin(), re.end(), 0.0);
            std::fill(im.begin(), im.end(), 0.0);
            for (int64_t s = 0; s < win && s < cfg.n_fft; ++s) {
                int64_t idx = start + s;
                if (idx < 0 || idx >= static_cast<int64_t>(audio.samples.size())) continue;
                double hann = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(s) / static_cast<double>(win));
                re[static_cast<size_t>(s)] = audio.samples[static_cast<size_t>(idx)] * hann;
            }
            fft_radix2(re, im);
            for (int64_t m = 0; m < cfg.n_mels; ++m) {
                double p = 0.0;
                for (int64_t k = 0; k < bins; ++k) {
                    double w = fb.at2(m, k);
                    if (w == 0.0) continue;
                    size_t kk = static_cast<size_t>(k);
                    p += w * (re[kk] * re[kk] + im[kk] * im[kk]);
                }
                double lv = std::log(p + cfg.power_floor);
                if (cfg.normalized) lv = std::clamp((lv - log_floor) / (cfg.log_ceiling - log_floor), 0.0, 1.0);
                out.data.at3(i, u, m) = lv;
            }
        }
    }
    return out;
}

// ------------------------------------------------------------------- corpus

namespace {

json scene_to_json(const SceneSpec& s) {
    json j;
    j["seed"] = s.seed;
    j["kind"] = envelope_kind_name(s.kind);
    j["width"] = s.width;
    j["height"] = s.height;
    j["face"] = {s.face.x, s.face.y, s.face.w, s.face.h};
    j["mouth"] = {s.mouth.x, s.mouth.y, s.mouth.w, s.mouth.h};
    j["bg_drift_amp"] = s.bg_drift_amp;
    j["bg_drift_period"] = s.bg_drift_period;
    j["bg_drift_phase"] = s.bg_drift_phase;
    j["bg_base"] = {s.bg_base[0], s.bg_base[1], s.bg_base[2]};
    j["face_base"] = {s.face_base[0], s.face_base[1], s.face_base[2]};
    j["face_grad_x"] = {s.face_grad_x[0], s.face_grad_x[1], s.face_grad_x[2]};
    j["face_grad_y"] = {s.face_grad_y[0], s.face_grad_y[1], s.face_grad_y[2]};
    j["env_constant"] = s.env_constant;
    j["env_period"] = s.env_period;
    j["env_phase"] = s.env_phase;
    j["env_amp"] = s.env_amp;
    j["env_walk_step"] = s.env_walk_step;
    return j;
}

SceneSpec scene_from_json(const json& j) {
    SceneSpec s;
    s.seed = j.at("seed").get<uint64_t>();
    s.kind = envelope_kind_from_name(j.at("kind").get<std::string>());
    s.width = j.at("width").get<int64_t>();
    s.height = j.at("height").get<int64_t>();
    auto rect = [](const json& a) { return Rect{a[0].get<int64_t>(), a[1].get<int64_t>(), a[2].get<int64_t>(), a[3].get<int64_t>()}; };
    s.face = rect(j.at("face"));
    s.mouth = rect(j.at("mouth"));
    s.bg_drift_amp = j.at("bg_drift_amp").get<double>();
    s.bg_drift_period = j.at("bg_drift_period").get<double>();
    s.bg_drift_phase = j.at("bg_drift_phase").get<double>();
    for (int c = 0; c < 3; ++c) {
        s.bg_base[c] = j.at("bg_base")[static_cast<size_t>(c)].get<double>();
        s.face_base[c] = j.at("face_base")[static_cast<size_t>(c)].get<double>();
        s.face_grad_x[c] = j.at("face_grad_x")[static_cast<size_t>(c)].get<double>();
        s.face_grad_y[c] = j.at("face_grad_y")[static_cast<size_t>(c)].get<double>();
    }
    s.env_constant = j.at("env_constant").get<double>();
    s.env_period = j.at("env_period").get<double>();
    s.env_phase = j.at("env_phase").get<double>();
    s.env_amp = j.at("env_amp").get<double>();
    s.env_walk_step = j.at("env_walk_step").get<double>();
    return s;
}

std::string clip_dir(const std::string& root, int64_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "clip_%05lld", static_cast<long long>(index));
    return (fs::path(root) / buf).string();
}

}  // namespace

void make_dataset(const CorpusConfig& cfg) {
    if (cfg.n_clips < 1) throw std::invalid_argument("make_dataset: n_clips must be >= 1");
    fs::create_directories(cfg.path);

    json manifest;
    manifest["version"] = 1;
    manifest["seed"] = cfg.seed;
    manifest["n_clips"] = cfg.n_clips;
    manifest["frames"] = cfg.frames;
    manifest["fps"] = cfg.fps;
    manifest["feat_window"] = cfg.feat_window;
    manifest["feat_dim"] = cfg.feat_dim;
    json clips = json::array();

    for (int64_t i = 0; i < cfg.n_clips; ++i) {
        uint64_t clip_seed = Rng::derive(cfg.seed, static_cast<uint64_t>(i));
        SceneSpec spec = sample_scene(cfg.dist, clip_seed);
        ClipTriple t = make_pair(spec, cfg.frames, cfg.feat_window, cfg.feat_dim, cfg.fps);

        std::string dir = clip_dir(cfg.path, i);
        fs::create_directories(dir);
        save_tensor((fs::path(dir) / "video.arr").string(), t.video.data);
        save_tensor((fs::path(dir) / "features.arr").string(), t.features.data);
        Tensor env({t.envelope.frames()}, t.envelope.values);
        save_tensor((fs::path(dir) / "envelope.arr").string(), env);

        json c;
        c["index"] = i;
        c["scene"] = scene_to_json(spec);
        clips.push_back(c);
    }
    manifest["clips"] = clips;

    std::ofstream os(fs::path(cfg.path) / "manifest.json", std::ios::trunc);
    if (!os) throw std::runtime_error("make_dataset: cannot write manifest in " + cfg.path);
    os << manifest.dump(2) << "\n";
    if (!os) throw std::runtime_error("make_dataset: manifest write failed in " + cfg.path);
}

Corpus Corpus::open(const std::string& path) {
    std::ifstream is(fs::path(path) / "manifest.json");
    if (!is) throw std::runtime_error("corpus: cannot open manifest in " + path);
    json manifest = json::parse(is);
    Corpus c;
    c.cfg.path = path;
    c.cfg.seed = manifest.at("seed").get<uint64_t>();
    c.cfg.n_clips = manifest.at("n_clips").get<int64_t>();
    c.cfg.frames = manifest.at("frames").get<int64_t>();
    c.cfg.fps = manifest.at("fps").get<double>();
    c.cfg.feat_window = manifest.at("feat_window").get<int64_t>();
    c.cfg.feat_dim = manifest.at("feat_dim").get<int64_t>();
    for (const auto& e : manifest.at("clips")) c.specs.push_back(scene_from_json(e.at("scene")));
    return c;
}

ClipTriple Corpus::load(int64_t index) const {
    if (index < 0 || index >= size()) throw std::out_of_range("corpus: clip index out of range");
    std::string dir = clip_dir(cfg.path, index);
    ClipTriple t;
    t.spec = specs[static_cast<size_t>(index)];
    t.video.data = load_tensor((fs::path(dir) / "video.arr").string());
    t.video.fps = cfg.fps;
    t.features.data = load_tensor((fs::path(dir) / "features.arr").string());
    t.features.fps = cfg.fps;
    Tensor env = load_tensor((fs::path(dir) / "envelope.arr").string());
    t.envelope.values = env.data;
    return t;
}

}  // namespace a2v::data
