#include "hynd/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "hynd/ops.hpp"
#include "hynd/tape.hpp"

namespace hynd {

namespace {

[[noreturn]] void fail(const std::string& why) {
    throw std::invalid_argument("backbone: " + why);
}

void need(bool ok, const char* why) {
    if (!ok) fail(why);
}

double xavier_bound(std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

Tensor uniform_tensor(Shape shape, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = dist(rng);
    return Tensor::from_data(std::move(shape), std::move(values), /*requires_grad=*/true);
}

Tensor linear_weight(std::size_t out_w, std::size_t in_w, std::mt19937_64& rng) {
    return uniform_tensor({out_w, in_w}, xavier_bound(in_w, out_w), rng);
}

bool is_hyena(MixerKind kind) { return kind != MixerKind::attention; }

HyenaConfig hyena_config_for(MixerKind kind, const ModelConfig& cfg) {
    HyenaConfig h;
    h.channels = cfg.channels;
    h.order = cfg.hyena_order;
    h.direction = cfg.hyena_direction;
    h.filter_m = cfg.filter_m;
    h.window = cfg.window;
    const std::size_t side = cfg.tokens_per_side();
    h.axes_hint = {side, side};
    switch (kind) {
        case MixerKind::hyena_1d: h.variant = HyenaVariant::hyena_1d; break;
        case MixerKind::hyena_2d: h.variant = HyenaVariant::hyena_nd; break;
        case MixerKind::hyena_2d_product: h.variant = HyenaVariant::hyena_nd_product; break;
        case MixerKind::attention: fail("attention block asked for a hyena config");
    }
    return h;
}

const char* attention_param_names[] = {"wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo"};

} // namespace

MixerPlan build_plan(std::size_t depth, PlanMode mode, MixerKind hyena_kind) {
    need(depth >= 1, "depth must be at least 1");
    if (mode != PlanMode::attention_only)
        need(is_hyena(hyena_kind), "hyena_kind must name a hyena mixer");

    MixerPlan plan(depth, hyena_kind);
    switch (mode) {
        case PlanMode::attention_only:
            std::fill(plan.begin(), plan.end(), MixerKind::attention);
            break;
        case PlanMode::hyena_only:
            break;
        case PlanMode::hyena_first:
            for (std::size_t i = (depth + 1) / 2; i < depth; ++i)
                plan[i] = MixerKind::attention;
            break;
        case PlanMode::attention_first:
            for (std::size_t i = 0; i < (depth + 1) / 2; ++i) plan[i] = MixerKind::attention;
            break;
        case PlanMode::alternate:
            need(depth % 2 == 0, "alternate needs an even depth");
            for (std::size_t i = 1; i < depth; i += 2) plan[i] = MixerKind::attention;
            break;
    }
    return plan;
}

Tensor patchify(const Tensor& images, std::size_t patch, const Tensor& weight,
                const Tensor& bias) {
    need(images.ndim() == 4 && images.shape()[3] == 3, "images must be (B, H, W, 3)");
    need(patch >= 1, "patch must be positive");
    const std::size_t batch = images.shape()[0];
    const std::size_t height = images.shape()[1];
    const std::size_t width = images.shape()[2];
    need(height % patch == 0 && width % patch == 0, "patch must divide both image sides");
    const std::size_t rows = height / patch, cols = width / patch;
    const std::size_t patch_len = patch * patch * 3;
    need(weight.ndim() == 2 && weight.shape()[1] == patch_len,
         "embedding width must match p*p*3");

    // Gather each patch into a contiguous vector via one token permutation.
    std::vector<std::size_t> perm(height * width * 3);
    std::size_t out = 0;
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            for (std::size_t di = 0; di < patch; ++di)
                for (std::size_t dj = 0; dj < patch; ++dj)
                    for (std::size_t c = 0; c < 3; ++c)
                        perm[out++] = ((i * patch + di) * width + (j * patch + dj)) * 3 + c;

    Tensor flat = ops::reshape(images, {batch, height * width * 3, 1});
    Tensor gathered = ops::permute_tokens(flat, perm);
    Tensor vectors = ops::reshape(gathered, {batch, rows * cols, patch_len});
    Tensor embedded = ops::linear(vectors, weight, bias);
    return ops::reshape(embedded, {batch, rows, cols, weight.shape()[0]});
}

Tensor AttentionMixer::forward(const Tensor& tokens) const {
    need(tokens.ndim() == 3, "attention expects (B, T, C) tokens");
    const std::size_t channels = tokens.shape()[2];
    need(channels % heads == 0, "channel width must divide evenly across heads");
    const double scale = 1.0 / std::sqrt(static_cast<double>(channels / heads));

    Tensor q = ops::heads_front(ops::linear(tokens, wq, bq), heads);
    Tensor k = ops::heads_front(ops::linear(tokens, wk, bk), heads);
    Tensor v = ops::heads_front(ops::linear(tokens, wv, bv), heads);
    Tensor scores = ops::bmm_nt(q, k, scale);     // the quadratic buffer
    Tensor weights = ops::softmax_last(scores);
    Tensor mixed = ops::heads_back(ops::bmm_nn(weights, v), heads);
    return ops::linear(mixed, wo, bo);
}

std::vector<Tensor> AttentionMixer::parameters() const {
    return {wq, bq, wk, bk, wv, bv, wo, bo};
}

AttentionMixer make_attention_mixer(std::size_t channels, std::size_t heads,
                                    std::uint64_t seed) {
    need(channels >= 1 && heads >= 1, "channels and heads must be positive");
    need(channels % heads == 0, "channel width must divide evenly across heads");
    std::mt19937_64 rng(seed);
    AttentionMixer mixer;
    mixer.heads = heads;
    mixer.wq = linear_weight(channels, channels, rng);
    mixer.bq = Tensor::zeros({channels}, true);
    mixer.wk = linear_weight(channels, channels, rng);
    mixer.bk = Tensor::zeros({channels}, true);
    mixer.wv = linear_weight(channels, channels, rng);
    mixer.bv = Tensor::zeros({channels}, true);
    mixer.wo = linear_weight(channels, channels, rng);
    mixer.bo = Tensor::zeros({channels}, true);
    return mixer;
}

Tensor Block::forward(const Tensor& tokens, const Shape& spatial) const {
    Tensor normed = ops::layer_norm(tokens, norm1_gamma, norm1_beta);
    Tensor mixed;
    if (kind == MixerKind::attention) {
        mixed = attention->forward(normed);
    } else {
        const std::size_t batch = tokens.shape()[0];
        const std::size_t channels = tokens.shape()[2];
        Shape grid{batch};
        for (std::size_t len : spatial) grid.push_back(len);
        grid.push_back(channels);
        Tensor folded = ops::reshape(normed, std::move(grid));
        mixed = ops::reshape(hyena->forward(folded), tokens.shape());
    }
    Tensor t1 = ops::add(tokens, mixed);

    Tensor normed2 = ops::layer_norm(t1, norm2_gamma, norm2_beta);
    Tensor hiddenv = ops::gelu(ops::linear(normed2, mlp_w1, mlp_b1));
    Tensor expanded = ops::linear(hiddenv, mlp_w2, mlp_b2);
    return ops::add(t1, expanded);
}

std::vector<Tensor> Block::parameters() const {
    std::vector<Tensor> params = {norm1_gamma, norm1_beta};
    if (kind == MixerKind::attention) {
        for (const Tensor& p : attention->parameters()) params.push_back(p);
    } else {
        for (const Tensor& p : hyena->parameters()) params.push_back(p);
    }
    params.push_back(norm2_gamma);
    params.push_back(norm2_beta);
    params.push_back(mlp_w1);
    params.push_back(mlp_b1);
    params.push_back(mlp_w2);
    params.push_back(mlp_b2);
    return params;
}

Classifier::Classifier(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
    const ModelConfig& cfg = config_;
    need(cfg.image_size >= 1 && cfg.patch >= 1, "image and patch sizes must be positive");
    need(cfg.image_size % cfg.patch == 0, "patch must divide the image size");
    need(cfg.classes >= 2, "need at least two classes");
    plan_ = build_plan(cfg.depth, cfg.plan_mode, cfg.hyena_kind);
    if (cfg.use_cls)
        need(cfg.plan_mode == PlanMode::attention_only,
             "CLS readout is an attention-only toggle");

    const std::size_t channels = cfg.channels;
    const std::size_t side = cfg.tokens_per_side();
    const std::size_t tokens = side * side + (cfg.use_cls ? 1 : 0);
    const bool any_attention =
        std::any_of(plan_.begin(), plan_.end(),
                    [](MixerKind k) { return k == MixerKind::attention; });

    std::mt19937_64 rng(seed);
    embed_weight = linear_weight(channels, cfg.patch * cfg.patch * 3, rng);
    embed_bias = Tensor::zeros({channels}, true);
    if (any_attention) pos_table = uniform_tensor({tokens, channels}, 0.02, rng);
    if (cfg.use_cls) cls_token = uniform_tensor({channels}, 0.02, rng);

    for (MixerKind kind : plan_) {
        Block block;
        block.kind = kind;
        block.norm1_gamma = Tensor::full({channels}, 1.0, true);
        block.norm1_beta = Tensor::zeros({channels}, true);
        if (kind == MixerKind::attention)
            block.attention = make_attention_mixer(channels, cfg.heads, rng());
        else
            block.hyena.emplace(hyena_config_for(kind, cfg), rng());
        block.norm2_gamma = Tensor::full({channels}, 1.0, true);
        block.norm2_beta = Tensor::zeros({channels}, true);
        block.mlp_w1 = linear_weight(4 * channels, channels, rng);
        block.mlp_b1 = Tensor::zeros({4 * channels}, true);
        block.mlp_w2 = linear_weight(channels, 4 * channels, rng);
        block.mlp_b2 = Tensor::zeros({channels}, true);
        blocks.push_back(std::move(block));
    }

    final_gamma = Tensor::full({channels}, 1.0, true);
    final_beta = Tensor::zeros({channels}, true);
    head_weight = linear_weight(cfg.classes, channels, rng);
    head_bias = Tensor::zeros({cfg.classes}, true);
}

Tensor Classifier::forward(const Tensor& images) const {
    need(images.ndim() == 4, "images must be (B, H, W, 3)");
    need(images.shape()[1] == config_.image_size && images.shape()[2] == config_.image_size,
         "image size differs from the configured model");
    const std::size_t side = config_.tokens_per_side();
    const Shape spatial{side, side};

    Tensor grid = patchify(images, config_.patch, embed_weight, embed_bias);
    Tensor tokens = ops::reshape(grid, {images.shape()[0], side * side, config_.channels});
    if (config_.use_cls) tokens = ops::prepend_token(tokens, cls_token);
    if (pos_table.defined()) tokens = ops::add_position(tokens, pos_table);

    for (const Block& block : blocks) tokens = block.forward(tokens, spatial);

    tokens = ops::layer_norm(tokens, final_gamma, final_beta);
    Tensor pooled = config_.use_cls ? ops::select_token(tokens, 0) : ops::mean_tokens(tokens);
    return ops::linear(pooled, head_weight, head_bias);
}

std::vector<Tensor> Classifier::parameters() const {
    std::vector<Tensor> params = {embed_weight, embed_bias};
    if (pos_table.defined()) params.push_back(pos_table);
    if (cls_token.defined()) params.push_back(cls_token);
    for (const Block& block : blocks)
        for (const Tensor& p : block.parameters()) params.push_back(p);
    params.push_back(final_gamma);
    params.push_back(final_beta);
    params.push_back(head_weight);
    params.push_back(head_bias);
    return params;
}

std::vector<std::string> Classifier::parameter_names() const {
    std::vector<std::string> names = {"embed.weight", "embed.bias"};
    if (pos_table.defined()) names.push_back("pos_table");
    if (cls_token.defined()) names.push_back("cls_token");
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const std::string prefix = "block" + std::to_string(i) + ".";
        names.push_back(prefix + "norm1.gamma");
        names.push_back(prefix + "norm1.beta");
        if (blocks[i].kind == MixerKind::attention) {
            for (const char* leaf : attention_param_names)
                names.push_back(prefix + "attn." + leaf);
        } else {
            const std::size_t count = blocks[i].hyena->parameters().size();
            for (std::size_t j = 0; j < count; ++j)
                names.push_back(prefix + "hyena.param" + std::to_string(j));
        }
        names.push_back(prefix + "norm2.gamma");
        names.push_back(prefix + "norm2.beta");
        names.push_back(prefix + "mlp.w1");
        names.push_back(prefix + "mlp.b1");
        names.push_back(prefix + "mlp.w2");
        names.push_back(prefix + "mlp.b2");
    }
    names.push_back("final.gamma");
    names.push_back("final.beta");
    names.push_back("head.weight");
    names.push_back("head.bias");
    return names;
}

std::vector<Tensor> Classifier::buffers() const {
    std::vector<Tensor> out;
    for (const Block& block : blocks)
        if (block.hyena)
            for (const Tensor& b : block.hyena->buffers()) out.push_back(b);
    return out;
}

std::vector<std::string> Classifier::buffer_names() const {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < blocks.size(); ++i)
        if (blocks[i].hyena) {
            const std::size_t count = blocks[i].hyena->buffers().size();
            for (std::size_t j = 0; j < count; ++j)
                names.push_back("block" + std::to_string(i) + ".hyena.buffer" +
                                std::to_string(j));
        }
    return names;
}

std::size_t Classifier::parameter_count() const {
    std::size_t total = 0;
    for (const Tensor& p : parameters()) total += p.numel();
    return total;
}

void Classifier::set_training(bool training) {
    for (Block& block : blocks)
        if (block.hyena) block.hyena->set_training(training);
}

// ---- training -------------------------------------------------------------------

Adam::Adam(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Tensor& p : params_) {
        m_.emplace_back(p.numel(), 0.0);
        v_.emplace_back(p.numel(), 0.0);
    }
}

void Adam::step(const std::vector<Tensor>& grads) {
    if (grads.size() != params_.size())
        fail("optimizer step needs one gradient per parameter");
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto g = grads[i].data();
        auto p = params_[i].data_mut();
        if (g.size() != p.size()) fail("gradient shape mismatch in optimizer step");
        for (std::size_t k = 0; k < p.size(); ++k) {
            m_[i][k] = config_.beta1 * m_[i][k] + (1.0 - config_.beta1) * g[k];
            v_[i][k] = config_.beta2 * v_[i][k] + (1.0 - config_.beta2) * g[k] * g[k];
            const double m_hat = m_[i][k] / bc1;
            const double v_hat = v_[i][k] / bc2;
            p[k] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
        }
    }
}

namespace {

// Copies the chosen samples into a batch (constant) tensor + label list.
std::pair<Tensor, std::vector<std::size_t>> gather_batch(const Dataset& data,
                                                         const std::vector<std::size_t>& idx) {
    const Shape& full = data.images.shape();
    const std::size_t sample = full[1] * full[2] * full[3];
    std::vector<double> values(idx.size() * sample);
    std::vector<std::size_t> labels(idx.size());
    auto src = data.images.data();
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::copy_n(src.begin() + idx[i] * sample, sample, values.begin() + i * sample);
        labels[i] = data.labels[idx[i]];
    }
    return {Tensor::from_data({idx.size(), full[1], full[2], full[3]}, std::move(values)),
            std::move(labels)};
}

std::vector<double> run_training(Classifier& model, const Dataset& data,
                                 const TrainConfig& config,
                                 const std::vector<std::vector<std::size_t>>& batches) {
    need(data.size() > 0, "dataset is empty");
    need(data.images.ndim() == 4 && data.images.shape()[0] == data.size(),
         "dataset images and labels disagree");
    model.set_training(true);
    auto params = model.parameters();
    Adam opt(params, config.adam);

    std::vector<double> losses;
    losses.reserve(batches.size());
    for (std::size_t step = 0; step < batches.size(); ++step) {
        auto [images, labels] = gather_batch(data, batches[step]);
        GradTape tape;
        TapeScope scope(tape);
        Tensor loss = ops::cross_entropy(model.forward(images), labels);
        const double value = loss.value();
        if (!std::isfinite(value))
            throw std::runtime_error("backbone: training diverged at step " +
                                     std::to_string(step));
        opt.step(gradient_of(loss, params));
        losses.push_back(value);
    }
    return losses;
}

} // namespace

std::vector<double> train_steps(Classifier& model, const Dataset& data,
                                const TrainConfig& config) {
    need(config.batch >= 1, "batch size must be positive");
    std::mt19937_64 rng(config.seed);
    std::vector<std::vector<std::size_t>> batches(config.steps);
    for (auto& batch : batches) {
        batch.resize(config.batch);
        for (std::size_t& index : batch) index = rng() % data.size();
    }
    return run_training(model, data, config, batches);
}

std::vector<double> train_epoch(Classifier& model, const Dataset& data,
                                const TrainConfig& config) {
    need(config.batch >= 1, "batch size must be positive");
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(config.seed);
    for (std::size_t i = order.size(); i-- > 1;) std::swap(order[i], order[rng() % (i + 1)]);

    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch) {
        const std::size_t end = std::min(begin + config.batch, order.size());
        batches.emplace_back(order.begin() + begin, order.begin() + end);
    }
    return run_training(model, data, config, batches);
}

double accuracy(const Classifier& model, const Dataset& data, std::size_t batch) {
    need(batch >= 1, "batch size must be positive");
    need(data.size() > 0, "dataset is empty");
    NoTapeScope quiet;
    std::size_t hits = 0;
    std::vector<std::size_t> idx;
    for (std::size_t begin = 0; begin < data.size(); begin += batch) {
        const std::size_t end = std::min(begin + batch, data.size());
        idx.resize(end - begin);
        for (std::size_t i = begin; i < end; ++i) idx[i - begin] = i;
        auto [images, labels] = gather_batch(data, idx);
        Tensor logits = model.forward(images);
        const std::size_t classes = logits.shape()[1];
        for (std::size_t b = 0; b < labels.size(); ++b) {
            std::size_t best = 0;
            for (std::size_t k = 1; k < classes; ++k)
                if (logits.data()[b * classes + k] > logits.data()[b * classes + best])
                    best = k;
            hits += best == labels[b];
        }
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

// ---- checkpoints ----------------------------------------------------------------

void save_checkpoint(const Classifier& model, const std::string& path) {
    auto params = model.parameters();
    auto names = model.parameter_names();
    for (const Tensor& b : model.buffers()) params.push_back(b);
    for (const std::string& n : model.buffer_names()) names.push_back(n);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("backbone: cannot write " + path);

    out << "hynd-checkpoint 1\n" << params.size() << "\n";
    for (std::size_t i = 0; i < params.size(); ++i) {
        out << names[i] << " " << params[i].ndim();
        for (std::size_t len : params[i].shape()) out << " " << len;
        out << "\n";
    }
    out << "DATA\n";
    static_assert(sizeof(double) == 8);
    for (const Tensor& p : params) {
        auto data = p.data();
        out.write(reinterpret_cast<const char*>(data.data()),
                  static_cast<std::streamsize>(data.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("backbone: failed while writing " + path);
}

void load_checkpoint(Classifier& model, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("backbone: cannot read " + path);

    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "hynd-checkpoint" || version != 1)
        throw std::runtime_error("backbone: " + path + " is not a checkpoint");

    std::size_t count = 0;
    in >> count;
    auto params = model.parameters();
    auto names = model.parameter_names();
    for (const Tensor& b : model.buffers()) params.push_back(b);
    for (const std::string& n : model.buffer_names()) names.push_back(n);
    if (count != params.size())
        throw std::runtime_error("backbone: checkpoint holds " + std::to_string(count) +
                                 " parameters, model has " + std::to_string(params.size()));

    for (std::size_t i = 0; i < count; ++i) {
        std::string name;
        std::size_t ndim = 0;
        in >> name >> ndim;
        Shape shape(ndim);
        for (std::size_t& len : shape) in >> len;
        if (name != names[i] || shape != params[i].shape())
            throw std::runtime_error("backbone: checkpoint mismatch at " + names[i]);
    }
    std::string marker;
    in >> marker;
    if (marker != "DATA") throw std::runtime_error("backbone: malformed checkpoint header");
    in.ignore(1); // the newline before the payload

    for (Tensor& p : params) {
        auto dst = p.data_mut();
        in.read(reinterpret_cast<char*>(dst.data()),
                static_cast<std::streamsize>(dst.size() * sizeof(double)));
    }
    if (!in) throw std::runtime_error("backbone: checkpoint payload truncated");

    // Memoized kernels were built from the old weights.
    for (Block& block : model.blocks)
        if (block.hyena) block.hyena->invalidate_kernels();
}

} // namespace hynd
