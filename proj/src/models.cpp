#include "corelnet/models.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>

namespace corelnet {

const char* head_name(HeadKind k) {
    switch (k) {
        case HeadKind::corelnet: return "corelnet";
        case HeadKind::corelnet_t: return "corelnet_t";
        case HeadKind::transformer: return "transformer";
        case HeadKind::lstm: return "lstm";
        case HeadKind::esbn: return "esbn";
    }
    return "?";
}

HeadKind head_from_name(const std::string& name) {
    for (HeadKind k : {HeadKind::corelnet, HeadKind::corelnet_t, HeadKind::transformer,
                       HeadKind::lstm, HeadKind::esbn})
        if (name == head_name(k)) return k;
    fail("unknown model head '", name, "'");
}

int EncoderConfig::conv_out_spatial() const {
    int s = image_size;
    for (int i = 0; i < conv_layers; ++i) s = (s + 2 * pad - kernel) / stride + 1;
    require(s >= 1, "encoder convolutions collapse a ", image_size, "px input to nothing");
    return s;
}

int EncoderConfig::flat_dim() const {
    int s = conv_out_spatial();
    return channels * s * s;
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

template <typename T>
Model<T>::Model(ModelConfig cfg, uint64_t seed) : cfg_(cfg) {
    require(cfg.seq_len >= 2, "sequence length must be >= 2 (TCN needs a context), got ",
            cfg.seq_len);
    require(cfg.num_classes >= 2, "need at least 2 classes, got ", cfg.num_classes);
    require(cfg.l1_lambda >= 0, "l1_lambda must be >= 0, got ", cfg.l1_lambda);
    Rng rng = Rng::from(seed, 0x30D1);
    const EncoderConfig& e = cfg.enc;
    const bool enc_train = !cfg.random_encoder;
    int cin = e.in_channels;
    for (int i = 0; i < e.conv_layers; ++i) {
        int fan = cin * e.kernel * e.kernel;
        params_.add("enc.conv" + std::to_string(i) + ".w", {e.channels, cin, e.kernel, e.kernel},
                    fan, rng, enc_train);
        params_.add_zeros("enc.conv" + std::to_string(i) + ".b", {e.channels}, enc_train);
        cin = e.channels;
    }
    params_.add("enc.fc1.w", {e.flat_dim(), e.fc_hidden}, e.flat_dim(), rng, enc_train);
    params_.add_zeros("enc.fc1.b", {e.fc_hidden}, enc_train);
    params_.add("enc.fc2.w", {e.fc_hidden, e.out_dim}, e.fc_hidden, rng, enc_train);
    params_.add_zeros("enc.fc2.b", {e.out_dim}, enc_train);

    const int d = e.out_dim;
    if (cfg.l1_lambda > 0) {
        params_.add("l1.w", {d, d}, d, rng);
        params_.add_zeros("l1.b", {d});
    }
    params_.add_const("tcn.gain", {d}, T(1), cfg.train_tcn);
    params_.add_zeros("tcn.bias", {d}, cfg.train_tcn);

    const int T_ = cfg.seq_len, k = cfg.num_classes;
    auto add_dense = [&](const std::string& p, int in, int out) {
        params_.add(p + ".w", {in, out}, in, rng);
        params_.add_zeros(p + ".b", {out});
    };
    auto add_block = [&](const std::string& p, bool tie_qk) {
        int dv = cfg.tf_dim / cfg.tf_heads;
        for (int h = 0; h < cfg.tf_heads; ++h) {
            std::string hs = std::to_string(h);
            params_.add(p + ".q" + hs, {cfg.tf_dim, cfg.tf_qk_dim}, cfg.tf_dim, rng);
            if (!tie_qk) params_.add(p + ".k" + hs, {cfg.tf_dim, cfg.tf_qk_dim}, cfg.tf_dim, rng);
            params_.add(p + ".v" + hs, {cfg.tf_dim, dv}, cfg.tf_dim, rng);
        }
        add_dense(p + ".o", cfg.tf_dim, cfg.tf_dim);
        add_dense(p + ".f1", cfg.tf_dim, cfg.tf_dim * cfg.tf_ffn_mult);
        add_dense(p + ".f2", cfg.tf_dim * cfg.tf_ffn_mult, cfg.tf_dim);
    };

    switch (cfg.head) {
        case HeadKind::corelnet: {
            if (cfg.sim == SimMode::asymmetric) {
                params_.add("sim.w1", {d, d}, d, rng);
                params_.add("sim.w2", {d, d}, d, rng);
            }
            int in = T_ * T_ + (cfg.concat_sensory ? T_ * d : 0);
            add_dense("dec.h", in, cfg.decoder_hidden);
            add_dense("dec.out", cfg.decoder_hidden, k);
            break;
        }
        case HeadKind::corelnet_t: {
            if (cfg.sim == SimMode::asymmetric) {
                params_.add("sim.w1", {d, d}, d, rng);
                params_.add("sim.w2", {d, d}, d, rng);
            }
            params_.add("tf.pos", {T_, cfg.tf_pos_dim}, cfg.tf_pos_dim, rng);
            int tok = T_ + cfg.tf_pos_dim + (cfg.concat_sensory ? d : 0);
            add_dense("tf.proj", tok, cfg.tf_dim);
            add_block("tf", false);
            add_dense("tf.out", cfg.tf_dim, k);
            break;
        }
        case HeadKind::transformer: {
            params_.add("tf.pos", {T_, cfg.tf_pos_dim}, cfg.tf_pos_dim, rng);
            add_dense("tf.proj", d + cfg.tf_pos_dim, cfg.tf_dim);
            add_block("tf", cfg.sim == SimMode::symmetric);
            add_dense("tf.out", cfg.tf_dim, k);
            break;
        }
        case HeadKind::lstm: {
            int h = cfg.lstm_hidden;
            params_.add("rnn.wx", {4 * h, d}, d, rng);
            params_.add("rnn.wh", {4 * h, h}, h, rng);
            params_.add_zeros("rnn.b", {4 * h});
            int in = h + (cfg.concat_sensory ? T_ * d : 0);
            add_dense("rnn.out", in, k);
            break;
        }
        case HeadKind::esbn: {
            int h = cfg.lstm_hidden, key = cfg.esbn_key_dim;
            params_.add("esbn.wx", {4 * h, key + 1}, key + 1, rng);
            params_.add("esbn.wh", {4 * h, h}, h, rng);
            params_.add_zeros("esbn.b", {4 * h});
            add_dense("esbn.key", h, key);
            params_.add_const("esbn.conf.a", {1}, T(1));
            params_.add_zeros("esbn.conf.b", {1});
            int in = h + (cfg.concat_sensory ? T_ * d : 0);
            add_dense("esbn.out", in, k);
            break;
        }
    }
}

template <typename T>
typename Model<T>::Bound Model<T>::bind(Tape<T>& tape) const {
    Bound b;
    b.tape = &tape;
    b.ids.reserve(params_.count());
    for (const auto& p : params_) b.ids.push_back(tape.leaf(p.value, p.trainable));
    return b;
}

template <typename T>
NodeId Model<T>::pid(Bound& b, const std::string& name) const {
    for (size_t i = 0; i < params_.count(); ++i)
        if (params_.at(i).name == name) return b.ids[i];
    fail("model has no parameter named '", name, "'");
}

template <typename T>
NodeId Model<T>::dense(Bound& b, NodeId x, const std::string& prefix) const {
    Tape<T>& t = *b.tape;
    return t.add(t.matmul(x, pid(b, prefix + ".w")), pid(b, prefix + ".b"));
}

// ---------------------------------------------------------------------------
// Forward pieces
// ---------------------------------------------------------------------------

template <typename T>
NodeId Model<T>::encode_stack(Bound& b, NodeId images, NodeId* l1_activations) const {
    Tape<T>& t = *b.tape;
    const EncoderConfig& e = cfg_.enc;
    NodeId x = images;
    for (int i = 0; i < e.conv_layers; ++i) {
        std::string p = "enc.conv" + std::to_string(i);
        x = t.relu(t.conv2d(x, pid(b, p + ".w"), pid(b, p + ".b"), e.stride, e.pad));
    }
    x = t.flatten(x, 1);  // [N, flat]
    x = t.relu(dense(b, x, "enc.fc1"));
    x = dense(b, x, "enc.fc2");
    if (l1_activations) *l1_activations = -1;
    if (cfg_.l1_lambda > 0) {
        x = dense(b, x, "l1");
        if (l1_activations) *l1_activations = x;
    }
    return x;
}

template <typename T>
NodeId Model<T>::tcn(Bound& b, NodeId rows) const {
    Tape<T>& t = *b.tape;
    require(t.val(rows).shape.size() == 2, "TCN expects [T,d] encodings");
    require(t.val(rows).shape[0] >= 2, "TCN needs at least 2 positions, got ",
            t.val(rows).shape[0]);
    NodeId mu = t.mean(rows, 0);
    NodeId var = t.variance(rows, 0);
    NodeId inv = t.rsqrt(var, cfg_.tcn_eps);
    NodeId centered = t.sub(rows, mu);
    NodeId scaled = t.mul(centered, inv);
    return t.add(t.mul(scaled, pid(b, "tcn.gain")), pid(b, "tcn.bias"));
}

template <typename T>
typename Model<T>::Sim Model<T>::similarity(Bound& b, NodeId Z) const {
    Tape<T>& t = *b.tape;
    Sim out;
    if (cfg_.sim == SimMode::symmetric) {
        NodeId M = t.matmul(Z, t.transpose(Z));
        // mirror once so S is symmetric bit-for-bit
        out.S = t.scale(t.add(M, t.transpose(M)), 0.5);
    } else {
        NodeId a = t.matmul(Z, pid(b, "sim.w1"));
        NodeId c = t.matmul(Z, pid(b, "sim.w2"));
        out.S = t.matmul(a, t.transpose(c));
    }
    out.R = t.softmax(out.S, 1);  // no temperature
    return out;
}

template <typename T>
NodeId Model<T>::transformer_block(Bound& b, NodeId X, const std::string& prefix, bool tie_qk,
                                   bool mirror_scores) const {
    Tape<T>& t = *b.tape;
    std::vector<NodeId> heads;
    for (int h = 0; h < cfg_.tf_heads; ++h) {
        std::string hs = std::to_string(h);
        NodeId Q = t.matmul(X, pid(b, prefix + ".q" + hs));
        NodeId K = tie_qk ? Q : t.matmul(X, pid(b, prefix + ".k" + hs));
        NodeId scores = t.scale(t.matmul(Q, t.transpose(K)),
                                1.0 / std::sqrt(static_cast<double>(cfg_.tf_qk_dim)));
        if (mirror_scores) scores = t.scale(t.add(scores, t.transpose(scores)), 0.5);
        NodeId attn = t.softmax(scores, 1);
        NodeId V = t.matmul(X, pid(b, prefix + ".v" + hs));
        heads.push_back(t.matmul(attn, V));
    }
    NodeId O = dense(b, t.concat(heads, 1), prefix + ".o");
    NodeId X1 = t.add(X, O);
    NodeId F = dense(b, t.relu(dense(b, X1, prefix + ".f1")), prefix + ".f2");
    return t.add(X1, F);
}

template <typename T>
NodeId Model<T>::head_corelnet(Bound& b, NodeId Z) const {
    Tape<T>& t = *b.tape;
    Sim sim = similarity(b, Z);
    NodeId x = t.flatten(sim.R, 2);  // [1, T*T]
    if (cfg_.concat_sensory) x = t.concat({x, t.flatten(Z, 2)}, 1);
    NodeId h = t.relu(dense(b, x, "dec.h"));
    return t.flatten(dense(b, h, "dec.out"), 0);
}

template <typename T>
NodeId Model<T>::head_corelnet_t(Bound& b, NodeId Z) const {
    Tape<T>& t = *b.tape;
    Sim sim = similarity(b, Z);
    std::vector<NodeId> parts = {sim.R};
    if (cfg_.concat_sensory) parts.push_back(Z);
    parts.push_back(pid(b, "tf.pos"));
    NodeId tokens = t.concat(parts, 1);  // rows of R as tokens + positional embedding
    NodeId X = dense(b, tokens, "tf.proj");
    NodeId Y = transformer_block(b, X, "tf", false, false);
    NodeId pooled = t.flatten(t.mean(Y, 0), 2);  // [1, tf_dim]
    return t.flatten(dense(b, pooled, "tf.out"), 0);
}

template <typename T>
NodeId Model<T>::head_transformer(Bound& b, NodeId Z) const {
    Tape<T>& t = *b.tape;
    NodeId tokens = t.concat({Z, pid(b, "tf.pos")}, 1);
    NodeId X = dense(b, tokens, "tf.proj");
    bool symmetric = cfg_.sim == SimMode::symmetric;
    NodeId Y = transformer_block(b, X, "tf", symmetric, symmetric);
    NodeId pooled = t.flatten(t.mean(Y, 0), 2);
    return t.flatten(dense(b, pooled, "tf.out"), 0);
}

template <typename T>
NodeId Model<T>::head_lstm(Bound& b, NodeId Z) const {
    Tape<T>& t = *b.tape;
    const int T_ = t.val(Z).shape[0], h = cfg_.lstm_hidden;
    NodeId hh = t.leaf(Array<T>({h}));
    NodeId cc = t.leaf(Array<T>({h}));
    for (int step = 0; step < T_; ++step) {
        NodeId x = t.flatten(t.embed_row(Z, step), 0);
        NodeId out = t.lstm_cell(x, hh, cc, pid(b, "rnn.wx"), pid(b, "rnn.wh"), pid(b, "rnn.b"));
        hh = t.flatten(t.embed_row(out, 0), 0);
        cc = t.flatten(t.embed_row(out, 1), 0);
    }
    NodeId feat = t.flatten(hh, 2);
    if (cfg_.concat_sensory) feat = t.concat({feat, t.flatten(Z, 2)}, 1);
    return t.flatten(dense(b, feat, "rnn.out"), 0);
}

template <typename T>
NodeId Model<T>::head_esbn(Bound& b, NodeId Z) const {
    Tape<T>& t = *b.tape;
    const int T_ = t.val(Z).shape[0], h = cfg_.lstm_hidden, key = cfg_.esbn_key_dim;
    NodeId hh = t.leaf(Array<T>({h}));
    NodeId cc = t.leaf(Array<T>({h}));
    NodeId Mk = -1, Mv = -1;  // controller-written keys / stored encodings
    for (int step = 0; step < T_; ++step) {
        NodeId z_row = t.embed_row(Z, step);  // [1,d]
        NodeId retrieved;
        if (step == 0) {
            retrieved = t.leaf(Array<T>({key + 1}));  // empty memory: zero vector
        } else {
            NodeId s = t.matmul(Mv, t.transpose(z_row));  // [n,1] dot-product similarities
            NodeId w = t.softmax(s, 0);
            NodeId conf = t.sigmoid(t.add(t.mul(s, pid(b, "esbn.conf.a")), pid(b, "esbn.conf.b")));
            NodeId kr = t.matmul(t.transpose(w), Mk);    // [1,key]
            NodeId cr = t.matmul(t.transpose(w), conf);  // [1,1]
            retrieved = t.flatten(t.concat({kr, cr}, 1), 0);
        }
        NodeId out =
            t.lstm_cell(retrieved, hh, cc, pid(b, "esbn.wx"), pid(b, "esbn.wh"), pid(b, "esbn.b"));
        hh = t.flatten(t.embed_row(out, 0), 0);
        cc = t.flatten(t.embed_row(out, 1), 0);
        NodeId k_row = dense(b, t.flatten(hh, 2), "esbn.key");  // [1,key]
        Mk = step == 0 ? k_row : t.concat({Mk, k_row}, 0);
        Mv = step == 0 ? z_row : t.concat({Mv, z_row}, 0);
    }
    NodeId feat = t.flatten(hh, 2);
    if (cfg_.concat_sensory) feat = t.concat({feat, t.flatten(Z, 2)}, 1);
    return t.flatten(dense(b, feat, "esbn.out"), 0);
}

template <typename T>
NodeId Model<T>::head_logits(Bound& b, NodeId Z) const {
    require(b.tape->val(Z).shape ==
                Shape{cfg_.seq_len, cfg_.enc.out_dim},
            "head expects [", cfg_.seq_len, ",", cfg_.enc.out_dim, "] encodings, got ",
            shape_str(b.tape->val(Z).shape));
    switch (cfg_.head) {
        case HeadKind::corelnet: return head_corelnet(b, Z);
        case HeadKind::corelnet_t: return head_corelnet_t(b, Z);
        case HeadKind::transformer: return head_transformer(b, Z);
        case HeadKind::lstm: return head_lstm(b, Z);
        case HeadKind::esbn: return head_esbn(b, Z);
    }
    fail("unknown head");
}

template <typename T>
NodeId Model<T>::episode_rows(Bound& b, NodeId all, int episode, int T_) const {
    Tape<T>& t = *b.tape;
    std::vector<NodeId> rows;
    rows.reserve(T_);
    for (int i = 0; i < T_; ++i) rows.push_back(t.embed_row(all, episode * T_ + i));
    return t.concat(rows, 0);
}

namespace {

template <typename T>
Array<T> stack_images(const std::vector<const Episode*>& eps, const EncoderConfig& e) {
    require(!eps.empty(), "empty episode batch");
    const int T_ = static_cast<int>(eps[0]->images.size());
    Array<T> out({static_cast<int>(eps.size()) * T_, e.in_channels, e.image_size, e.image_size});
    long per = static_cast<long>(e.in_channels) * e.image_size * e.image_size;
    long at = 0;
    for (const Episode* ep : eps) {
        require(static_cast<int>(ep->images.size()) == T_, "episode batch mixes sequence lengths");
        for (const auto& img : ep->images) {
            require(img.size() == per, "episode image shape ", shape_str(img.shape),
                    " does not match encoder input ", e.in_channels, "x", e.image_size, "x",
                    e.image_size);
            for (long i = 0; i < per; ++i) out[at + i] = static_cast<T>(img[i]);
            at += per;
        }
    }
    return out;
}

}  // namespace

template <typename T>
NodeId Model<T>::forward_episode(Bound& b, const Episode& ep) const {
    Tape<T>& t = *b.tape;
    require(static_cast<int>(ep.images.size()) == cfg_.seq_len, "episode has ",
            ep.images.size(), " images, model expects T = ", cfg_.seq_len);
    NodeId images = t.leaf(stack_images<T>({&ep}, cfg_.enc));
    NodeId q = encode_stack(b, images);
    NodeId z = tcn(b, q);
    return head_logits(b, z);
}

template <typename T>
typename Model<T>::BatchOut Model<T>::forward_batch(Bound& b,
                                                    const std::vector<const Episode*>& eps) const {
    Tape<T>& t = *b.tape;
    const int T_ = cfg_.seq_len;
    const int B = static_cast<int>(eps.size());
    NodeId images = t.leaf(stack_images<T>(eps, cfg_.enc));
    NodeId l1_act = -1;
    NodeId q_all = encode_stack(b, images, &l1_act);

    BatchOut out;
    std::vector<NodeId> ces;
    for (int e = 0; e < B; ++e) {
        require(eps[e]->label >= 0 && eps[e]->label < cfg_.num_classes, "episode label ",
                eps[e]->label, " out of range for ", cfg_.num_classes, " classes");
        NodeId rows = episode_rows(b, q_all, e, T_);
        NodeId z = tcn(b, rows);
        NodeId logits = head_logits(b, z);
        out.logits.push_back(logits);
        ces.push_back(t.cross_entropy(logits, eps[e]->label));
    }
    NodeId loss = t.mean(t.concat(ces, 0), 0);
    if (l1_act >= 0 && cfg_.l1_lambda > 0) {
        // per-example l1 norm of the regularized activations, batch mean
        loss = t.add(loss, t.scale(t.l1_norm(l1_act), cfg_.l1_lambda / B));
    }
    out.loss = loss;
    return out;
}

template <typename T>
uint64_t Model<T>::encoder_checksum() const {
    uint64_t h = 0xCBF29CE484222325ull;
    for (const auto& p : params_)
        if (p.name.rfind("enc.", 0) == 0) h = checksum(p.value, h);
    return h;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'C', 'R', 'N', 'M'};
constexpr uint16_t kVersion = 1;

void put_u16(FILE* f, uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    std::fwrite(b, 1, 2, f);
}

void put_u32(FILE* f, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    std::fwrite(b, 1, 4, f);
}

uint16_t get_u16(FILE* f) {
    unsigned char b[2];
    require(std::fread(b, 1, 2, f) == 2, "checkpoint truncated");
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t get_u32(FILE* f) {
    unsigned char b[4];
    require(std::fread(b, 1, 4, f) == 4, "checkpoint truncated");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const Model<float>& model, const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "wb");
    require(f != nullptr, "cannot open ", path, " for writing");
    std::fwrite(kMagic, 1, 4, f);
    put_u16(f, kVersion);
    put_u32(f, static_cast<uint32_t>(model.params().count()));
    for (const auto& p : model.params()) {
        put_u16(f, static_cast<uint16_t>(p.name.size()));
        std::fwrite(p.name.data(), 1, p.name.size(), f);
        put_u16(f, static_cast<uint16_t>(p.value.shape.size()));
        for (int d : p.value.shape) put_u32(f, static_cast<uint32_t>(d));
        static_assert(sizeof(float) == 4);
        std::fwrite(p.value.data(), sizeof(float), p.value.size(), f);
    }
    std::fclose(f);
}

void load_checkpoint(Model<float>& model, const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "rb");
    require(f != nullptr, "cannot open ", path);
    char magic[4];
    require(std::fread(magic, 1, 4, f) == 4, "checkpoint truncated");
    if (std::memcmp(magic, kMagic, 4) != 0) {
        std::fclose(f);
        fail("bad checkpoint magic '", std::string(magic, 4), "', expected 'CRNM'");
    }
    uint16_t ver = get_u16(f);
    if (ver != kVersion) {
        std::fclose(f);
        fail("unsupported checkpoint version ", ver, ", expected ", kVersion);
    }
    uint32_t count = get_u32(f);
    if (count != model.params().count()) {
        std::fclose(f);
        fail("checkpoint has ", count, " parameters, model expects ", model.params().count());
    }
    for (size_t i = 0; i < count; ++i) {
        uint16_t nlen = get_u16(f);
        std::string name(nlen, '\0');
        require(std::fread(name.data(), 1, nlen, f) == nlen, "checkpoint truncated");
        Parameter<float>* p = model.params().find(name);
        if (!p) {
            std::fclose(f);
            fail("checkpoint parameter '", name, "' not present in model");
        }
        uint16_t ndim = get_u16(f);
        Shape shape(ndim);
        for (int d = 0; d < ndim; ++d) shape[d] = static_cast<int>(get_u32(f));
        if (shape != p->value.shape) {
            std::fclose(f);
            fail("checkpoint parameter '", name, "' has shape ", shape_str(shape),
                 ", model expects ", shape_str(p->value.shape));
        }
        size_t n = static_cast<size_t>(p->value.size());
        if (std::fread(p->value.data(), sizeof(float), n, f) != n) {
            std::fclose(f);
            fail("checkpoint truncated while reading '", name, "'");
        }
    }
    std::fclose(f);
}

template class Model<float>;
template class Model<double>;

}  // namespace corelnet
