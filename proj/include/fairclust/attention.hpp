#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fairclust/common.hpp"
#include "fairclust/neighborhood.hpp"

namespace fairclust {

/// Shape of an Intraformer. Sub-cluster size is n / k.
struct Hyper {
    std::size_t d = 32;
    std::size_t n = 32;
    std::size_t k = 4;
    std::size_t n_block = 2;
    std::size_t n_head = 4;
    std::size_t ff_dim = 64;

    std::size_t s() const { return n / k; }
    std::size_t head_dim() const { return d / n_head; }
    /// Throws ConfigError on zero sizes, k not dividing n, or n_head not dividing d.
    void validate() const;

    bool operator==(const Hyper&) const = default;
};

struct LayerNormParams {
    Matrix gain;  // 1 x d
    Matrix bias;  // 1 x d
};

/// One pre-norm encoder block: x + MHA(LN(x)), then x + FFN(LN(x)).
struct BlockParams {
    Matrix query, key, value, output;  // d x d; heads split the columns
    LayerNormParams attn_norm;
    LayerNormParams ffn_norm;
    Matrix ffn_in;        // d x ff
    Matrix ffn_in_bias;   // 1 x ff
    Matrix ffn_out;       // ff x d
    Matrix ffn_out_bias;  // 1 x d
};

/// Every trainable tensor of the network. The same type holds gradients.
struct IntraformerParams {
    Hyper hyper;
    Matrix rank_embedding;                // n x d, added to the token at each rank
    std::vector<BlockParams> self_blocks;   // stack over the centroid sub-cluster
    std::vector<BlockParams> cross_blocks;  // stack shared by sub-clusters 1..k-1
    Matrix correlation;                   // d x d, centroid-to-token correlation matrix
    LayerNormParams final_norm;
    Matrix head_weight;  // d x 1
    Matrix head_bias;    // 1 x 1

    /// Correctly shaped, all tensors zero.
    static IntraformerParams zeros(const Hyper& hyper);

    /// Calls fn(name, tensor) for every tensor in declaration order (checkpoint order).
    template <typename Fn>
    void visit(Fn&& fn) { visit_impl(*this, fn); }
    template <typename Fn>
    void visit(Fn&& fn) const { visit_impl(*this, fn); }

    std::size_t parameter_count() const;
    bool all_finite() const;

private:
    template <typename Self, typename Fn>
    static void visit_impl(Self& self, Fn& fn) {
        fn(std::string("rank_embedding"), self.rank_embedding);
        auto blocks = [&fn](auto& stack, const std::string& prefix) {
            for (std::size_t b = 0; b < stack.size(); ++b) {
                const std::string p = prefix + "." + std::to_string(b) + ".";
                auto& blk = stack[b];
                fn(p + "query", blk.query);
                fn(p + "key", blk.key);
                fn(p + "value", blk.value);
                fn(p + "output", blk.output);
                fn(p + "attn_norm.gain", blk.attn_norm.gain);
                fn(p + "attn_norm.bias", blk.attn_norm.bias);
                fn(p + "ffn_norm.gain", blk.ffn_norm.gain);
                fn(p + "ffn_norm.bias", blk.ffn_norm.bias);
                fn(p + "ffn_in", blk.ffn_in);
                fn(p + "ffn_in_bias", blk.ffn_in_bias);
                fn(p + "ffn_out", blk.ffn_out);
                fn(p + "ffn_out_bias", blk.ffn_out_bias);
            }
        };
        blocks(self.self_blocks, "self");
        blocks(self.cross_blocks, "cross");
        fn(std::string("correlation"), self.correlation);
        fn(std::string("final_norm.gain"), self.final_norm.gain);
        fn(std::string("final_norm.bias"), self.final_norm.bias);
        fn(std::string("head_weight"), self.head_weight);
        fn(std::string("head_bias"), self.head_bias);
    }
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) projections, identity correlation matrix,
/// unit norm gains, zero biases. Deterministic per seed.
IntraformerParams init_params(const Hyper& hyper, std::uint64_t seed);

// --- building blocks, exposed for testing -------------------------------------------------

struct LayerNormCache {
    Matrix normalized;
    Vector inv_std;
};

Matrix layer_norm_forward(const Matrix& x, const LayerNormParams& p, LayerNormCache* cache = nullptr);
Matrix layer_norm_backward(const Matrix& dy, const LayerNormParams& p, const LayerNormCache& cache,
                           LayerNormParams& grad);

struct AttentionCache {
    Matrix input, query, key, value, mixed;
    std::vector<Matrix> weights;  // per head, s x s, rows sum to 1
};

/// Multi-head scaled dot-product attention: softmax(Q_h K_h^T / sqrt(d/h)) V_h per head,
/// concatenated and projected by the output matrix.
Matrix self_attention(const Matrix& tokens, const BlockParams& p, std::size_t n_head, AttentionCache* cache = nullptr);
Matrix self_attention_backward(const Matrix& dout, const BlockParams& p, std::size_t n_head, const AttentionCache& cache,
                               BlockParams& grad);

struct FeedForwardCache {
    Matrix input, pre, act;
};

struct BlockCache {
    LayerNormCache attn_norm;
    AttentionCache attn;
    LayerNormCache ffn_norm;
    FeedForwardCache ffn;
};

Matrix transformer_block_forward(const Matrix& x, const BlockParams& p, std::size_t n_head, BlockCache* cache = nullptr);
Matrix transformer_block_backward(const Matrix& dy, const BlockParams& p, std::size_t n_head, const BlockCache& cache,
                                  BlockParams& grad);

/// a_j = softmax_j(x_o W x_j^T) over the rows of `subcluster`.
RowVector cross_attention_scores(const RowVector& centroid, const Matrix& subcluster, const Matrix& correlation);

/// h = sum_j a_j x_j.
RowVector cross_attention_feature(const RowVector& centroid, const Matrix& subcluster, const Matrix& correlation);

struct CrossBlockCache {
    Matrix tokens;
    RowVector projected;  // x_o W
    RowVector scores;
    BlockCache block;
};

/// One Cross@Transformer block: tokens + broadcast(h(x_o, tokens)), then a transformer block.
Matrix cross_transformer_forward(const Matrix& subcluster, const RowVector& centroid, const BlockParams& p,
                                 const Matrix& correlation, std::size_t n_head, CrossBlockCache* cache = nullptr);

// --- full network ---------------------------------------------------------------------------

struct ForwardTrace {
    Hyper hyper;
    std::vector<BlockCache> anchor;                   // one per self block
    std::vector<std::vector<CrossBlockCache>> cross;  // [sub-cluster - 1][block]
    RowVector centroid;                               // final representation of rank 0
    LayerNormCache final_norm;
    Vector logits;
    Vector probabilities;
};

struct ForwardResult {
    Vector probabilities;  // n values in (0, 1), rank order
    ForwardTrace trace;
};

ForwardResult intraformer_forward(const SubClusterBatch& batch, const IntraformerParams& params);

/// Same as intraformer_forward without retaining activations.
Vector intraformer_predict(const SubClusterBatch& batch, const IntraformerParams& params);

/// Reverse-mode pass; adds d(loss)/d(param) into `grads` given d(loss)/d(probabilities).
void intraformer_backward(const ForwardTrace& trace, const IntraformerParams& params, std::span<const double> loss_grad,
                          IntraformerParams& grads);
IntraformerParams intraformer_backward(const ForwardTrace& trace, const IntraformerParams& params,
                                       std::span<const double> loss_grad);

// --- checkpoints ----------------------------------------------------------------------------

/// "FCPT", u32 version, u64 provenance hash, u64 x6 hyper (d n k n_block n_head ff_dim),
/// then every tensor in visit order as little-endian f64, row-major.
void save_checkpoint(const IntraformerParams& params, const std::filesystem::path& path, std::uint64_t provenance = 0);
IntraformerParams load_checkpoint(const std::filesystem::path& path);

}  // namespace fairclust
