#ifndef A2V_SPEECHAE_HPP
#define A2V_SPEECHAE_HPP

#include <vector>

#include "../core/graph.hpp"
#include "../core/tensor.hpp"
#include "../data/data.hpp"

namespace a2v::speechae {

using ParamLookup = std::function<NodeId(const std::string&)>;

struct SpeechAEConfig {
    int64_t input_window = 2;    // H_w
    int64_t input_dim = 32;      // D_A
    int64_t latent_window = 2;   // h_w
    int64_t latent_dim = 16;     // d_A
    int64_t temporal_ratio = 8;  // must equal the codec's temporal ratio
    int64_t hidden = 48;
    int64_t mix_kernel = 2;      // causal mixing conv kernel
    double tau = 0.1;
    double alpha_loss = 1.0;
    double beta_loss = 0.1;
    // When set, the contrastive denominator includes the positive pair
    // (textbook InfoNCE). Off by default: the loss excludes it.
    bool standard_infonce = false;
    void validate() const;
    int64_t frame_values() const { return input_window * input_dim; }
    int64_t latent_values() const { return latent_window * latent_dim; }
};

// Compressed speech latent codes, shape (f, h_w, d_A), aligned 1:1 with the
// video latent frames.
struct SpeechLatent {
    Tensor data;
    int64_t frames() const { return data.ndim() == 3 ? data.shape[0] : 0; }
};

ParamStore init_params(const SpeechAEConfig& cfg, uint64_t seed);

// s is [F, H_w*D_A]; result [f, h_w*d_A]. Causal in time: latent frame i
// depends only on feature frames with index <= 1 + i*r_t (1-based).
NodeId build_encoder(Graph& g, NodeId s, int64_t F, const SpeechAEConfig& cfg, const ParamLookup& p);
NodeId build_decoder(Graph& g, NodeId c, int64_t f, const SpeechAEConfig& cfg, const ParamLookup& p);

SpeechLatent encode_speech(const data::SpeechFeatureSeq& S, const SpeechAEConfig& cfg, const ParamStore& params);
data::SpeechFeatureSeq decode_speech(const SpeechLatent& C, const SpeechAEConfig& cfg, const ParamStore& params);

// ---- pretraining losses ----

// mean of squared elementwise differences
NodeId loss_mse_node(Graph& g, NodeId s, NodeId s_hat);
double loss_mse(const Tensor& S, const Tensor& S_hat);

// frame-contrastive loss over cosine similarities of flattened frame
// vectors; the denominator sums over j != i unless standard_infonce.
NodeId loss_contrastive_node(Graph& g, NodeId s, NodeId s_hat, int64_t frames, double tau, bool standard_infonce);
double loss_contrastive(const Tensor& S, const Tensor& S_hat, double tau, bool standard_infonce = false);

// combined alpha*MSE + beta*CON
NodeId loss_speechae_node(Graph& g, NodeId s, NodeId s_hat, int64_t frames, const SpeechAEConfig& cfg);
double loss_speechae(const Tensor& S, const Tensor& S_hat, const SpeechAEConfig& cfg);

// Core of the contrastive loss given a precomputed similarity matrix
// sims[i][j] = sim(s_hat_i, s_j). Kept separate so tests can probe the
// loss/similarity relationship directly.
double contrastive_from_sims(const Tensor& sims, double tau, bool standard_infonce = false);

// Cosine-similarity matrix of flattened frames; throws on zero-norm frames.
Tensor frame_similarities(const Tensor& S, const Tensor& S_hat);

struct PretrainResult {
    std::vector<double> loss_curve;  // per-epoch mean combined loss
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

PretrainResult pretrain(ParamStore& params, const SpeechAEConfig& cfg, const std::vector<Tensor>& feature_clips,
                        double lr, int64_t epochs, uint64_t seed);

}  // namespace a2v::speechae

#endif
