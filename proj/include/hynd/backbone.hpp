#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hynd/hyena.hpp"
#include "hynd/tensor.hpp"

namespace hynd {

enum class MixerKind { attention, hyena_1d, hyena_2d, hyena_2d_product };
enum class PlanMode { attention_only, hyena_only, hyena_first, attention_first, alternate };

using MixerPlan = std::vector<MixerKind>;

/// hyena_first fills the first ceil(depth/2) slots with hyena_kind;
/// attention_first is its mirror; alternate is [H, A] repeated (even depth).
MixerPlan build_plan(std::size_t depth, PlanMode mode,
                     MixerKind hyena_kind = MixerKind::hyena_2d);

/// (B, H*W*3 patch-major) -> (B, H/p, W/p, C): gathers p x p x 3 patch
/// vectors and embeds each with one shared linear map.
Tensor patchify(const Tensor& images, std::size_t patch, const Tensor& weight,
                const Tensor& bias);

/// Multi-head scaled dot-product self-attention over (B, T, C) tokens. The
/// (B*heads, T, T) score buffer is the quadratic allocation the memory
/// benchmarks track.
struct AttentionMixer {
    std::size_t heads = 1;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;

    Tensor forward(const Tensor& tokens) const;
    std::vector<Tensor> parameters() const;
};
AttentionMixer make_attention_mixer(std::size_t channels, std::size_t heads,
                                    std::uint64_t seed);

/// Pre-norm residual block: t += mixer(norm(t)); t += MLP(norm(t)), MLP
/// expansion x4 with GELU.
struct Block {
    MixerKind kind = MixerKind::attention;
    Tensor norm1_gamma, norm1_beta;
    std::optional<AttentionMixer> attention;
    std::optional<HyenaLayer> hyena;
    Tensor norm2_gamma, norm2_beta;
    Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;

    /// tokens: (B, T, C); spatial: the token grid behind T (hyena mixers
    /// fold tokens back onto it).
    Tensor forward(const Tensor& tokens, const Shape& spatial) const;
    std::vector<Tensor> parameters() const;
};

struct ModelConfig {
    std::size_t image_size = 32;
    std::size_t patch = 4;
    std::size_t channels = 64;
    std::size_t heads = 4;
    std::size_t classes = 10;
    std::size_t depth = 4;
    PlanMode plan_mode = PlanMode::hyena_only;
    MixerKind hyena_kind = MixerKind::hyena_2d;
    Direction hyena_direction = Direction::causal;
    std::size_t hyena_order = 2;
    std::size_t filter_m = 32;
    WindowVariant window = WindowVariant::dimensional;
    bool use_cls = false; // attention_only models may read out a CLS token

    std::size_t tokens_per_side() const { return image_size / patch; }
};

/// Patch embedding, mixer blocks per plan, final norm, mean pooling (or CLS
/// readout), linear head. Learned positional table only when the plan
/// contains attention; Hyena kernels already encode position.
class Classifier {
public:
    Classifier(ModelConfig config, std::uint64_t seed);

    /// images: (B, H, W, 3) -> logits (B, classes).
    Tensor forward(const Tensor& images) const;

    std::vector<Tensor> parameters() const;
    std::vector<std::string> parameter_names() const;
    /// Non-learnable state (frozen window decays) checkpoints must carry.
    std::vector<Tensor> buffers() const;
    std::vector<std::string> buffer_names() const;
    std::size_t parameter_count() const;
    void set_training(bool training);

    const ModelConfig& config() const { return config_; }
    const MixerPlan& plan() const { return plan_; }

    Tensor embed_weight, embed_bias; // (C, p*p*3), (C)
    Tensor pos_table;                // (T(+1), C) when any block attends
    Tensor cls_token;                // (C) when use_cls
    std::vector<Block> blocks;
    Tensor final_gamma, final_beta;
    Tensor head_weight, head_bias;   // (classes, C)

private:
    ModelConfig config_;
    MixerPlan plan_;
};

// ---- training -------------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adaptive-moment descent over a fixed parameter list; each step consumes
/// one gradient per parameter, in parameter order.
class Adam {
public:
    Adam(std::vector<Tensor> params, AdamConfig config);
    void step(const std::vector<Tensor>& grads);

private:
    std::vector<Tensor> params_;
    AdamConfig config_;
    std::vector<std::vector<double>> m_, v_;
    std::size_t t_ = 0;
};

struct Dataset {
    Tensor images; // (N, H, W, 3)
    std::vector<std::size_t> labels;

    std::size_t size() const { return labels.size(); }
};

struct TrainConfig {
    AdamConfig adam;
    std::size_t batch = 16;
    std::size_t steps = 100;
    std::uint64_t seed = 0;
};

/// Mini-batch steps with uniformly sampled batches; returns the per-step
/// cross-entropy losses. Throws on a non-finite loss, naming the step.
std::vector<double> train_steps(Classifier& model, const Dataset& data,
                                const TrainConfig& config);

/// One shuffled pass over the dataset.
std::vector<double> train_epoch(Classifier& model, const Dataset& data,
                                const TrainConfig& config);

double accuracy(const Classifier& model, const Dataset& data, std::size_t batch = 64);

/// Flat checkpoint: text manifest (name, shape per parameter), then the
/// payload as little-endian 64-bit floats in manifest order.
void save_checkpoint(const Classifier& model, const std::string& path);
void load_checkpoint(Classifier& model, const std::string& path);

} // namespace hynd
