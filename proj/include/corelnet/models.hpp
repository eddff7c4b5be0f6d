#pragma once

#include <string>
#include <vector>

#include "corelnet/tasks.hpp"
#include "corelnet/tensor.hpp"

namespace corelnet {

enum class HeadKind { corelnet, corelnet_t, transformer, lstm, esbn };
enum class SimMode { symmetric, asymmetric };

const char* head_name(HeadKind k);
HeadKind head_from_name(const std::string& name);

struct EncoderConfig {
    int image_size = 32;
    int conv_layers = 3;
    int channels = 32;
    int in_channels = 3;
    int kernel = 4;
    int stride = 2;
    int pad = 1;
    int fc_hidden = 256;
    int out_dim = 128;

    int conv_out_spatial() const;
    int flat_dim() const;
};

struct ModelConfig {
    HeadKind head = HeadKind::corelnet;
    SimMode sim = SimMode::symmetric;  // transformer: symmetric ties K to Q
    bool concat_sensory = false;
    bool random_encoder = false;  // frozen at initialization
    bool train_tcn = true;
    double l1_lambda = 0.0;  // > 0 inserts a linear 128->128 layer with L1 loss
    double tcn_eps = 1e-8;

    EncoderConfig enc;
    int seq_len = 2;      // per-task fixed T
    int num_classes = 2;

    int decoder_hidden = 256;  // corelnet MLP
    int tf_dim = 512;          // corelnet_t / transformer
    int tf_heads = 8;
    int tf_qk_dim = 8;
    int tf_pos_dim = 8;
    int tf_ffn_mult = 4;
    int lstm_hidden = 512;     // lstm baseline and esbn controller
    int esbn_key_dim = 256;
};

template <typename T>
class Model {
public:
    Model(ModelConfig cfg, uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    ParamStore<T>& params() { return params_; }
    const ParamStore<T>& params() const { return params_; }

    // Leaf ids of every parameter on a fresh tape, in store order.
    struct Bound {
        Tape<T>* tape = nullptr;
        std::vector<NodeId> ids;
    };
    Bound bind(Tape<T>& tape) const;

    // [N,3,H,W] stack -> [N,out_dim] encodings (plus the L1 layer when
    // configured). Also reports the L1 activations node (or -1).
    NodeId encode_stack(Bound& b, NodeId images, NodeId* l1_activations = nullptr) const;

    // temporal context normalization across the T rows of one episode
    NodeId tcn(Bound& b, NodeId episode_rows) const;

    struct Sim {
        NodeId S = -1;  // pre-softmax scores
        NodeId R = -1;  // row-stochastic coefficients
    };
    Sim similarity(Bound& b, NodeId Z) const;

    // head on normalized encodings Z [T,out_dim] -> logits [num_classes]
    NodeId head_logits(Bound& b, NodeId Z) const;

    // full forward for one episode (build images leaf, encode, TCN, head)
    NodeId forward_episode(Bound& b, const Episode& ep) const;

    struct BatchOut {
        std::vector<NodeId> logits;  // per episode
        NodeId loss = -1;            // mean cross-entropy + l1 term
    };
    BatchOut forward_batch(Bound& b, const std::vector<const Episode*>& eps) const;

    uint64_t encoder_checksum() const;

private:
    ModelConfig cfg_;
    ParamStore<T> params_;

    NodeId pid(Bound& b, const std::string& name) const;
    NodeId dense(Bound& b, NodeId x, const std::string& prefix) const;
    NodeId episode_rows(Bound& b, NodeId all, int episode, int seq_len) const;
    NodeId transformer_block(Bound& b, NodeId X, const std::string& prefix, bool tie_qk,
                             bool mirror_scores) const;
    NodeId head_corelnet(Bound& b, NodeId Z) const;
    NodeId head_corelnet_t(Bound& b, NodeId Z) const;
    NodeId head_transformer(Bound& b, NodeId Z) const;
    NodeId head_lstm(Bound& b, NodeId Z) const;
    NodeId head_esbn(Bound& b, NodeId Z) const;
};

// Versioned little-endian checkpoint: magic, version, parameter manifest
// (names and shapes), raw 32-bit values.
void save_checkpoint(const Model<float>& model, const std::string& path);
void load_checkpoint(Model<float>& model, const std::string& path);

extern template class Model<float>;
extern template class Model<double>;

}  // namespace corelnet
