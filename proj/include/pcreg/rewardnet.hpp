#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pcreg/agent.hpp"
#include "pcreg/cloud.hpp"

namespace pcreg {

/// Network shape. Desk-scale defaults keep finite-difference checking cheap;
/// the paper-scale figures (1024-dim embeddings, five edgeconv layers) are
/// reachable through the same fields.
struct NetConfig {
    std::size_t n_points = 64; // expected cloud size during training
    std::size_t knn_k = 8;
    std::vector<std::size_t> edgeconv_widths{16, 16, 32};
    std::size_t embed_dim = 32;
    std::size_t attn_heads = 2;
    std::vector<std::size_t> shared_mlp_widths{32};
    std::vector<std::size_t> head_mlp_widths{16};
    std::size_t n_actions = 24;
    // Fuse the pooled embeddings by difference instead of concatenation.
    bool fuse_difference = false;

    void validate() const;
};

struct ParamBlock {
    std::string name;
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 0; // 1 for vectors

    std::size_t count() const { return rows * cols; }
};

/// Every learnable tensor of the network in one flat vector. Both cloud
/// branches read the same storage, so the DGCNN and attention weights are
/// shared by construction.
class NetworkParameters {
public:
    explicit NetworkParameters(const NetConfig& cfg); // all zeros

    /// Weights uniform in (-1/sqrt(fan_in), +1/sqrt(fan_in)), biases zero,
    /// layer-norm scale one / offset zero. Draw order follows blocks().
    static NetworkParameters init(const NetConfig& cfg, std::uint64_t seed);

    const NetConfig& config() const { return cfg_; }
    std::size_t size() const { return flat_.size(); }
    std::vector<double>& flat() { return flat_; }
    const std::vector<double>& flat() const { return flat_; }
    const std::vector<ParamBlock>& blocks() const { return blocks_; }

    const ParamBlock& block_info(std::string_view name) const;
    double* block(std::string_view name);
    const double* block(std::string_view name) const;

private:
    NetConfig cfg_;
    std::vector<ParamBlock> blocks_;
    std::vector<double> flat_;
};

std::size_t net_param_count(const NetConfig& cfg);

/// k nearest neighbors per node by Euclidean distance in the given embedding
/// (row-major n x dim), self excluded, ties to the lower index. Row i of the
/// result holds node i's neighbors, nearest first.
std::vector<std::size_t> knn_graph(const std::vector<double>& embedding, std::size_t n,
                                   std::size_t dim, std::size_t k);

/// One edge convolution: out[i][m] = max over neighbors j of
/// ReLU(w_m . x_i + v_m . x_j). w and v are c_out x c_in row-major.
std::vector<double> edgeconv_forward(const std::vector<double>& x, std::size_t n,
                                     std::size_t c_in, const std::vector<std::size_t>& edges,
                                     std::size_t k, const double* w, const double* v,
                                     std::size_t c_out);

/// Residual cross attention over both clouds with shared weights:
/// phi_src = f_src + phi(f_src, f_tgt) and symmetrically. Row counts may
/// differ. Optionally captures the softmax rows (heads x n_q x n_kv,
/// query-major) of each direction.
std::pair<std::vector<double>, std::vector<double>> cross_attention(
    const NetworkParameters& params, const std::vector<double>& f_src, std::size_t n_src,
    const std::vector<double>& f_tgt, std::size_t n_tgt,
    std::vector<double>* probs_src_to_tgt = nullptr,
    std::vector<double>* probs_tgt_to_src = nullptr);

/// Full pipeline: shared DGCNN on each cloud, cross attention, per-cloud
/// column maxpool, fusion, shared MLP, and the two 12-way heads, assembled
/// in canonical action order (rotations then translations).
std::vector<double> net_forward(const NetworkParameters& params, const PointCloud& source,
                                const PointCloud& target);

struct TrainingSample {
    PointCloud source;
    PointCloud target;
    std::vector<double> reward_target; // group-normalized oracle rewards
};

/// (1/n_actions) * ||g - h||^2 + lambda * ||params||^2.
double net_loss(const std::vector<double>& h, const std::vector<double>& g,
                const NetworkParameters& params, double lambda);

struct BackwardResult {
    double loss = 0.0;               // mean batch loss including the decay term
    std::vector<double> gradients;   // same layout as NetworkParameters::flat
};

/// Gradient of the mean batch loss for every parameter. Throws when any
/// gradient entry is non-finite, naming the parameter block.
BackwardResult net_backward(const NetworkParameters& params,
                            const std::vector<TrainingSample>& batch, double lambda);

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_block;
    std::vector<std::pair<std::string, double>> per_block; // max rel err per block
};

/// Central finite differences over every parameter entry against
/// net_backward. Relative error uses max(|analytic|, |numeric|, 1e-6) as the
/// denominator.
GradCheckReport gradient_check(const NetworkParameters& params,
                               const std::vector<TrainingSample>& batch, double lambda,
                               double fd_step = 1e-5);

/// Learned reward source for the agent loop: moves the observed source by
/// the accumulator and scores the pair. Reads only the observed clouds.
class NetworkRewardSource final : public RewardSource {
public:
    explicit NetworkRewardSource(const NetworkParameters& params) : params_(&params) {}
    std::vector<double> rewards(const CloudPair& pair,
                                const AccumulatedTransform& acc) override;
    const char* name() const override { return "network"; }

private:
    const NetworkParameters* params_;
};

} // namespace pcreg
