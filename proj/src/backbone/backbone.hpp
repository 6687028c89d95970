#ifndef A2V_BACKBONE_HPP
#define A2V_BACKBONE_HPP

#include <optional>
#include <vector>

#include "../core/graph.hpp"
#include "../core/rng.hpp"
#include "../core/tensor.hpp"

namespace a2v::backbone {

using ParamLookup = std::function<NodeId(const std::string&)>;

struct BackboneConfig {
    int64_t blocks = 4;
    int64_t width = 128;  // model dim d, divisible by heads
    int64_t heads = 4;
    int64_t patch = 2;  // spatial patch over latent cells
    int64_t latent_channels = 8;
    int64_t latent_h = 4, latent_w = 4;
    int64_t clip_frames = 8;  // f, non-reference frames per clip
    int64_t audio_window = 2;  // h_w tokens per speech latent frame
    int64_t audio_dim = 16;    // d_A
    int64_t mlp_ratio = 4;
    double p_drop = 0.1;  // condition dropout probability per signal
    bool text_branch = false;
    int64_t text_tokens = 4;
    int64_t text_dim = 32;
    // Eq-16 style unconditional branch: drop the reference together with the
    // speech condition (switchable).
    bool drop_ref_in_uncond = true;

    void validate() const;
    int64_t tokens_per_frame() const { return (latent_h / patch) * (latent_w / patch); }
    int64_t patch_dim() const { return patch * patch * latent_channels; }
};

// Conditioning signals; absent optionals are replaced by learned null
// embeddings inside the network.
struct ConditionSet {
    std::optional<Tensor> speech;     // (f, h_w, d_A)
    std::optional<Tensor> reference;  // (h, w, d_v)
    std::optional<Tensor> text;       // (n, text_dim); needs cfg.text_branch
};

// Graph-level conditioning (for training paths that backpropagate through
// the condition, e.g. jointly trained speech encoders).
struct CondNodes {
    std::optional<NodeId> speech;     // [f*h_w, d_A] token rows
    std::optional<NodeId> reference;  // flat [h*w*d_v]
    std::optional<NodeId> text;       // [n, text_dim]
};

// ---- patch layout ----

// (f, h, w, c) -> (f*m, p*p*c) token rows, frame-major; exact inverse below.
Tensor patchify(const Tensor& Z, int64_t patch);
Tensor unpatchify(const Tensor& tokens, int64_t f, int64_t h, int64_t w, int64_t c, int64_t patch);

// Sinusoidal embedding of per-frame noise times, (frames, dim).
Tensor timestep_embedding(const std::vector<double>& tvec, int64_t dim);

ParamStore init_params(const BackboneConfig& cfg, uint64_t seed);

// Standalone frame-level audio cross-attention: H (f, n, d) + per-frame
// attention over C (f, h_w, d_A); queries of frame i see only C frame i.
// With a zero output projection the result equals H exactly.
Tensor frame_cross_attention(const Tensor& H, const Tensor& C, const Tensor& wq, const Tensor& wk, const Tensor& wv,
                             const Tensor& wo);

// Full denoiser graph. zt is the flat (f+1)*h*w*d_v noised stack whose slot 0
// is the reference position; tvec has f+1 entries with tvec[0] == 0 when the
// reference is attached. Returns the flat velocity prediction, same shape.
NodeId build_forward(Graph& g, NodeId zt, const CondNodes& cond, const std::vector<double>& tvec,
                     const BackboneConfig& cfg, const ParamLookup& p);

Tensor forward(const Tensor& Zt, const ConditionSet& cond, const std::vector<double>& tvec,
               const BackboneConfig& cfg, const ParamStore& params);

// Independently nulls speech and reference with probability p_drop each.
ConditionSet condition_dropout(const ConditionSet& cond, double p_drop, Rng& rng);

}  // namespace a2v::backbone

#endif
