#ifndef A2V_CODEC_HPP
#define A2V_CODEC_HPP

#include <functional>
#include <vector>

#include "../core/graph.hpp"
#include "../core/tensor.hpp"
#include "../data/data.hpp"

namespace a2v::codec {

// Resolves parameter names to graph nodes; lets the same network builder run
// in no-grad inference and in training (via Binder).
using ParamLookup = std::function<NodeId(const std::string&)>;

struct CodecConfig {
    int64_t spatial_ratio = 8;    // pixels per latent cell per axis
    int64_t temporal_ratio = 8;   // pixel frames per latent frame (first frame maps alone)
    int64_t pixel_channels = 3;
    int64_t latent_channels = 8;
    int64_t hidden = 40;
    void validate() const;
    int64_t patch_values() const { return spatial_ratio * spatial_ratio * pixel_channels; }
};

// Compressed video latents, shape (f, h, w, d_v). When has_reference is set,
// index 0 holds the encoded reference frame rather than clip content.
struct LatentVideo {
    Tensor data;
    bool has_reference = false;
    int64_t frames() const { return data.ndim() == 4 ? data.shape[0] : 0; }
};

struct Shape3 {
    int64_t f = 0, h = 0, w = 0;
};

// (F, H, W) -> (1+(F-1)/r_t, H/r_s, W/r_s); throws naming the offending axis.
Shape3 compression_shape(int64_t F, int64_t H, int64_t W, const CodecConfig& cfg);

ParamStore init_params(const CodecConfig& cfg, uint64_t seed);

// Graph builders. x is (F, H, W, D_v) flattened row-major as a graph node;
// outputs are (f*h*w, d_v) / (F*H*W*C) 2-D token layouts documented in the .cpp.
NodeId build_encoder(Graph& g, NodeId x, int64_t F, int64_t H, int64_t W, const CodecConfig& cfg, const ParamLookup& p);
NodeId build_decoder(Graph& g, NodeId z, int64_t f, int64_t h, int64_t w, const CodecConfig& cfg, const ParamLookup& p);

LatentVideo encode_video(const data::VideoTensor& X, const CodecConfig& cfg, const ParamStore& params);

// Encodes a single reference image (H, W, D_v) as a one-frame clip.
Tensor encode_reference(const Tensor& image, const CodecConfig& cfg, const ParamStore& params);

// Inverts the compression; output clamped to [0,1]. Z.has_reference must be
// false (strip the reference before decoding).
data::VideoTensor decode_latents(const LatentVideo& Z, const CodecConfig& cfg, const ParamStore& params);

struct TrainResult {
    std::vector<double> loss_curve;  // per-epoch mean reconstruction loss
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

// Plain deterministic MSE autoencoder training; single-threaded, seeded.
TrainResult train_codec(ParamStore& params, const CodecConfig& cfg, const std::vector<Tensor>& clips,
                        int64_t epochs, double lr, uint64_t seed);

}  // namespace a2v::codec

#endif
