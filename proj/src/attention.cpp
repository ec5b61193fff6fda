#include "fairclust/attention.hpp"

#include <cmath>
#include <random>

namespace fairclust {

namespace {

constexpr double kNormEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

Matrix zeros(std::size_t rows, std::size_t cols) {
    return Matrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void softmax_rows(Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        auto row = m.row(i);
        row.array() -= row.maxCoeff();
        row = row.array().exp().matrix();
        row /= row.sum();
    }
}

RowVector softmax(const RowVector& logits) {
    RowVector out = (logits.array() - logits.maxCoeff()).exp().matrix();
    return out / out.sum();
}

double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); }

double gelu_grad(double x) {
    const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Matrix feed_forward(const Matrix& x, const BlockParams& p, FeedForwardCache* cache) {
    Matrix pre = x * p.ffn_in;
    pre.rowwise() += p.ffn_in_bias.row(0);
    Matrix act = pre.unaryExpr([](double v) { return gelu(v); });
    Matrix out = act * p.ffn_out;
    out.rowwise() += p.ffn_out_bias.row(0);
    if (cache) {
        cache->input = x;
        cache->pre = std::move(pre);
        cache->act = std::move(act);
    }
    return out;
}

Matrix feed_forward_backward(const Matrix& dout, const BlockParams& p, const FeedForwardCache& cache, BlockParams& grad) {
    grad.ffn_out.noalias() += cache.act.transpose() * dout;
    grad.ffn_out_bias.row(0) += dout.colwise().sum();
    Matrix dact = dout * p.ffn_out.transpose();
    Matrix dpre = dact.cwiseProduct(cache.pre.unaryExpr([](double v) { return gelu_grad(v); }));
    grad.ffn_in.noalias() += cache.input.transpose() * dpre;
    grad.ffn_in_bias.row(0) += dpre.colwise().sum();
    return dpre * p.ffn_in.transpose();
}

/// Adds the centroid context h to every token; fills the cache used by the backward pass.
Matrix inject_context(const Matrix& tokens, const RowVector& centroid, const Matrix& correlation, CrossBlockCache* cache) {
    RowVector projected = centroid * correlation;
    RowVector scores = softmax((tokens * projected.transpose()).transpose());
    RowVector context = scores * tokens;
    Matrix out = tokens;
    out.rowwise() += context;
    if (cache) {
        cache->tokens = tokens;
        cache->projected = std::move(projected);
        cache->scores = std::move(scores);
    }
    return out;
}

/// Backward of inject_context. Returns d(tokens); accumulates into d(centroid) and d(W).
Matrix inject_context_backward(const Matrix& dout, const RowVector& centroid, const Matrix& correlation,
                               const CrossBlockCache& cache, RowVector& dcentroid, Matrix& dcorrelation) {
    const Matrix& x = cache.tokens;
    const RowVector& a = cache.scores;
    const RowVector dcontext = dout.colwise().sum();
    Matrix dx = dout;
    dx.noalias() += a.transpose() * dcontext;
    const RowVector dscores = (x * dcontext.transpose()).transpose();
    const RowVector dlogits = a.cwiseProduct((dscores.array() - a.dot(dscores)).matrix());
    dx.noalias() += dlogits.transpose() * cache.projected;
    const RowVector dprojected = dlogits * x;
    dcorrelation.noalias() += centroid.transpose() * dprojected;
    dcentroid.noalias() += dprojected * correlation.transpose();
    return dx;
}

BlockParams zero_block(const Hyper& h) {
    BlockParams b;
    b.query = zeros(h.d, h.d);
    b.key = zeros(h.d, h.d);
    b.value = zeros(h.d, h.d);
    b.output = zeros(h.d, h.d);
    b.attn_norm = {zeros(1, h.d), zeros(1, h.d)};
    b.ffn_norm = {zeros(1, h.d), zeros(1, h.d)};
    b.ffn_in = zeros(h.d, h.ff_dim);
    b.ffn_in_bias = zeros(1, h.ff_dim);
    b.ffn_out = zeros(h.ff_dim, h.d);
    b.ffn_out_bias = zeros(1, h.d);
    return b;
}

void check_batch(const SubClusterBatch& batch, const Hyper& h) {
    if (batch.k != h.k || batch.sequences.size() != h.k || batch.s != h.s())
        throw ConfigError("sub-cluster batch shape (k=" + std::to_string(batch.k) + ", s=" + std::to_string(batch.s) +
                          ") does not match model (k=" + std::to_string(h.k) + ", s=" + std::to_string(h.s()) + ")");
    for (const auto& seq : batch.sequences)
        if (static_cast<std::size_t>(seq.rows()) != h.s() || static_cast<std::size_t>(seq.cols()) != h.d)
            throw ConfigError("token matrix shape does not match model dimension d=" + std::to_string(h.d));
}

Vector forward_impl(const SubClusterBatch& batch, const IntraformerParams& params, ForwardTrace* trace) {
    const Hyper& h = params.hyper;
    check_batch(batch, h);
    const auto s = static_cast<Eigen::Index>(h.s());
    const auto d = static_cast<Eigen::Index>(h.d);

    if (trace) {
        trace->hyper = h;
        trace->anchor.assign(h.n_block, {});
        trace->cross.assign(h.k - 1, std::vector<CrossBlockCache>(h.n_block));
    }

    Matrix anchor = batch.sequences[0] + params.rank_embedding.topRows(s);
    for (std::size_t b = 0; b < h.n_block; ++b)
        anchor = transformer_block_forward(anchor, params.self_blocks[b], h.n_head, trace ? &trace->anchor[b] : nullptr);
    const RowVector centroid = anchor.row(0);

    Matrix encoded(static_cast<Eigen::Index>(h.n), d);
    encoded.topRows(s) = anchor;
    for (std::size_t m = 1; m < h.k; ++m) {
        const auto offset = static_cast<Eigen::Index>(m) * s;
        Matrix x = batch.sequences[m] + params.rank_embedding.middleRows(offset, s);
        for (std::size_t b = 0; b < h.n_block; ++b)
            x = cross_transformer_forward(x, centroid, params.cross_blocks[b], params.correlation, h.n_head,
                                          trace ? &trace->cross[m - 1][b] : nullptr);
        encoded.middleRows(offset, s) = x;
    }

    const Matrix normed = layer_norm_forward(encoded, params.final_norm, trace ? &trace->final_norm : nullptr);
    Vector logits = normed * params.head_weight.col(0);
    logits.array() += params.head_bias(0, 0);
    Vector probs = logits.unaryExpr([](double v) { return sigmoid(v); });
    if (trace) {
        trace->centroid = centroid;
        trace->logits = logits;
        trace->probabilities = probs;
    }
    return probs;
}

}  // namespace

void Hyper::validate() const {
    if (d == 0 || n == 0 || k == 0 || n_block == 0 || n_head == 0 || ff_dim == 0)
        throw ConfigError("model sizes must all be positive");
    if (n % k != 0) throw ConfigError("k=" + std::to_string(k) + " does not divide n=" + std::to_string(n));
    if (d % n_head != 0) throw ConfigError("n_head=" + std::to_string(n_head) + " does not divide d=" + std::to_string(d));
}

IntraformerParams IntraformerParams::zeros(const Hyper& h) {
    h.validate();
    IntraformerParams p;
    p.hyper = h;
    p.rank_embedding = fairclust::zeros(h.n, h.d);
    for (std::size_t b = 0; b < h.n_block; ++b) {
        p.self_blocks.push_back(zero_block(h));
        p.cross_blocks.push_back(zero_block(h));
    }
    p.correlation = fairclust::zeros(h.d, h.d);
    p.final_norm = {fairclust::zeros(1, h.d), fairclust::zeros(1, h.d)};
    p.head_weight = fairclust::zeros(h.d, 1);
    p.head_bias = fairclust::zeros(1, 1);
    return p;
}

std::size_t IntraformerParams::parameter_count() const {
    std::size_t total = 0;
    visit([&total](const std::string&, const Matrix& t) { total += static_cast<std::size_t>(t.size()); });
    return total;
}

bool IntraformerParams::all_finite() const {
    bool ok = true;
    visit([&ok](const std::string&, const Matrix& t) { ok = ok && t.allFinite(); });
    return ok;
}

IntraformerParams init_params(const Hyper& hyper, std::uint64_t seed) {
    IntraformerParams p = IntraformerParams::zeros(hyper);
    std::mt19937_64 rng(seed);
    auto fill = [&rng](Matrix& m, double scale) {
        std::uniform_real_distribution<double> dist(-scale, scale);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    };
    const double inv_d = 1.0 / std::sqrt(static_cast<double>(hyper.d));
    const double inv_ff = 1.0 / std::sqrt(static_cast<double>(hyper.ff_dim));
    fill(p.rank_embedding, 0.1 * inv_d);
    for (auto* stack : {&p.self_blocks, &p.cross_blocks}) {
        for (auto& blk : *stack) {
            fill(blk.query, inv_d);
            fill(blk.key, inv_d);
            fill(blk.value, inv_d);
            fill(blk.output, inv_d);
            blk.attn_norm.gain.setOnes();
            blk.ffn_norm.gain.setOnes();
            fill(blk.ffn_in, inv_d);
            fill(blk.ffn_out, inv_ff);
        }
    }
    p.correlation.setIdentity();
    p.final_norm.gain.setOnes();
    fill(p.head_weight, inv_d);
    return p;
}

Matrix layer_norm_forward(const Matrix& x, const LayerNormParams& p, LayerNormCache* cache) {
    const auto cols = static_cast<double>(x.cols());
    Matrix normalized(x.rows(), x.cols());
    Vector inv_std(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double mean = x.row(i).sum() / cols;
        const RowVector centred = x.row(i).array() - mean;
        const double var = centred.squaredNorm() / cols;
        inv_std[i] = 1.0 / std::sqrt(var + kNormEps);
        normalized.row(i) = centred * inv_std[i];
    }
    Matrix out = normalized.array().rowwise() * p.gain.row(0).array();
    out.rowwise() += p.bias.row(0);
    if (cache) {
        cache->normalized = std::move(normalized);
        cache->inv_std = std::move(inv_std);
    }
    return out;
}

Matrix layer_norm_backward(const Matrix& dy, const LayerNormParams& p, const LayerNormCache& cache,
                           LayerNormParams& grad) {
    grad.gain.row(0) += dy.cwiseProduct(cache.normalized).colwise().sum();
    grad.bias.row(0) += dy.colwise().sum();
    const Matrix dnorm = dy.array().rowwise() * p.gain.row(0).array();
    const auto cols = static_cast<double>(dy.cols());
    Matrix dx(dy.rows(), dy.cols());
    for (Eigen::Index i = 0; i < dy.rows(); ++i) {
        const double mean_d = dnorm.row(i).sum() / cols;
        const double mean_dx = dnorm.row(i).dot(cache.normalized.row(i)) / cols;
        dx.row(i) = cache.inv_std[i] *
                    (dnorm.row(i).array() - mean_d - cache.normalized.row(i).array() * mean_dx).matrix();
    }
    return dx;
}

Matrix self_attention(const Matrix& tokens, const BlockParams& p, std::size_t n_head, AttentionCache* cache) {
    const auto d = tokens.cols();
    const auto dh = d / static_cast<Eigen::Index>(n_head);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Matrix q = tokens * p.query;
    Matrix k = tokens * p.key;
    Matrix v = tokens * p.value;
    Matrix mixed(tokens.rows(), d);
    if (cache) cache->weights.clear();
    for (std::size_t head = 0; head < n_head; ++head) {
        const auto c0 = static_cast<Eigen::Index>(head) * dh;
        Matrix w = q.middleCols(c0, dh) * k.middleCols(c0, dh).transpose() * scale;
        softmax_rows(w);
        mixed.middleCols(c0, dh).noalias() = w * v.middleCols(c0, dh);
        if (cache) cache->weights.push_back(std::move(w));
    }
    Matrix out = mixed * p.output;
    if (cache) {
        cache->input = tokens;
        cache->query = std::move(q);
        cache->key = std::move(k);
        cache->value = std::move(v);
        cache->mixed = std::move(mixed);
    }
    return out;
}

Matrix self_attention_backward(const Matrix& dout, const BlockParams& p, std::size_t n_head, const AttentionCache& cache,
                               BlockParams& grad) {
    const auto d = dout.cols();
    const auto dh = d / static_cast<Eigen::Index>(n_head);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    grad.output.noalias() += cache.mixed.transpose() * dout;
    const Matrix dmixed = dout * p.output.transpose();

    Matrix dq(dout.rows(), d), dk(dout.rows(), d), dv(dout.rows(), d);
    for (std::size_t head = 0; head < n_head; ++head) {
        const auto c0 = static_cast<Eigen::Index>(head) * dh;
        const Matrix& w = cache.weights[head];
        const auto dm = dmixed.middleCols(c0, dh);
        const Matrix dw = dm * cache.value.middleCols(c0, dh).transpose();
        dv.middleCols(c0, dh).noalias() = w.transpose() * dm;
        Matrix dlogits = w.cwiseProduct(dw);
        const Vector row_dot = dlogits.rowwise().sum();
        dlogits -= row_dot.asDiagonal() * w;
        dlogits *= scale;
        dq.middleCols(c0, dh).noalias() = dlogits * cache.key.middleCols(c0, dh);
        dk.middleCols(c0, dh).noalias() = dlogits.transpose() * cache.query.middleCols(c0, dh);
    }
    grad.query.noalias() += cache.input.transpose() * dq;
    grad.key.noalias() += cache.input.transpose() * dk;
    grad.value.noalias() += cache.input.transpose() * dv;
    Matrix dx = dq * p.query.transpose();
    dx.noalias() += dk * p.key.transpose();
    dx.noalias() += dv * p.value.transpose();
    return dx;
}

Matrix transformer_block_forward(const Matrix& x, const BlockParams& p, std::size_t n_head, BlockCache* cache) {
    Matrix x1 = x + self_attention(layer_norm_forward(x, p.attn_norm, cache ? &cache->attn_norm : nullptr), p, n_head,
                                   cache ? &cache->attn : nullptr);
    return x1 + feed_forward(layer_norm_forward(x1, p.ffn_norm, cache ? &cache->ffn_norm : nullptr), p,
                             cache ? &cache->ffn : nullptr);
}

Matrix transformer_block_backward(const Matrix& dy, const BlockParams& p, std::size_t n_head, const BlockCache& cache,
                                  BlockParams& grad) {
    Matrix dx1 = dy + layer_norm_backward(feed_forward_backward(dy, p, cache.ffn, grad), p.ffn_norm, cache.ffn_norm,
                                          grad.ffn_norm);
    return dx1 + layer_norm_backward(self_attention_backward(dx1, p, n_head, cache.attn, grad), p.attn_norm,
                                     cache.attn_norm, grad.attn_norm);
}

RowVector cross_attention_scores(const RowVector& centroid, const Matrix& subcluster, const Matrix& correlation) {
    const RowVector projected = centroid * correlation;
    return softmax((subcluster * projected.transpose()).transpose());
}

RowVector cross_attention_feature(const RowVector& centroid, const Matrix& subcluster, const Matrix& correlation) {
    return cross_attention_scores(centroid, subcluster, correlation) * subcluster;
}

Matrix cross_transformer_forward(const Matrix& subcluster, const RowVector& centroid, const BlockParams& p,
                                 const Matrix& correlation, std::size_t n_head, CrossBlockCache* cache) {
    const Matrix injected = inject_context(subcluster, centroid, correlation, cache);
    return transformer_block_forward(injected, p, n_head, cache ? &cache->block : nullptr);
}

ForwardResult intraformer_forward(const SubClusterBatch& batch, const IntraformerParams& params) {
    ForwardResult result;
    result.probabilities = forward_impl(batch, params, &result.trace);
    return result;
}

Vector intraformer_predict(const SubClusterBatch& batch, const IntraformerParams& params) {
    return forward_impl(batch, params, nullptr);
}

void intraformer_backward(const ForwardTrace& trace, const IntraformerParams& params, std::span<const double> loss_grad,
                          IntraformerParams& grads) {
    const Hyper& h = trace.hyper;
    if (!(h == params.hyper) || !(h == grads.hyper)) throw ConfigError("trace, parameters and gradients disagree on shape");
    if (loss_grad.size() != h.n) throw ConfigError("loss gradient length does not match n");
    const auto s = static_cast<Eigen::Index>(h.s());
    const auto n = static_cast<Eigen::Index>(h.n);

    Vector dlogits(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double q = trace.probabilities[j];
        dlogits[j] = loss_grad[static_cast<std::size_t>(j)] * q * (1.0 - q);
    }
    const Matrix& normed_unit = trace.final_norm.normalized;
    // Head input is gain * normalized + bias; rebuild it rather than storing a copy.
    Matrix head_in = normed_unit.array().rowwise() * params.final_norm.gain.row(0).array();
    head_in.rowwise() += params.final_norm.bias.row(0);
    grads.head_weight.col(0).noalias() += head_in.transpose() * dlogits;
    grads.head_bias(0, 0) += dlogits.sum();
    const Matrix dhead_in = dlogits * params.head_weight.col(0).transpose();
    const Matrix dencoded = layer_norm_backward(dhead_in, params.final_norm, trace.final_norm, grads.final_norm);

    RowVector dcentroid = RowVector::Zero(static_cast<Eigen::Index>(h.d));
    for (std::size_t m = 1; m < h.k; ++m) {
        const auto offset = static_cast<Eigen::Index>(m) * s;
        Matrix dx = dencoded.middleRows(offset, s);
        for (std::size_t b = h.n_block; b-- > 0;) {
            const auto& cache = trace.cross[m - 1][b];
            const Matrix dinjected =
                transformer_block_backward(dx, params.cross_blocks[b], h.n_head, cache.block, grads.cross_blocks[b]);
            dx = inject_context_backward(dinjected, trace.centroid, params.correlation, cache, dcentroid,
                                         grads.correlation);
        }
        grads.rank_embedding.middleRows(offset, s) += dx;
    }

    Matrix dx = dencoded.topRows(s);
    dx.row(0) += dcentroid;
    for (std::size_t b = h.n_block; b-- > 0;)
        dx = transformer_block_backward(dx, params.self_blocks[b], h.n_head, trace.anchor[b], grads.self_blocks[b]);
    grads.rank_embedding.topRows(s) += dx;
}

IntraformerParams intraformer_backward(const ForwardTrace& trace, const IntraformerParams& params,
                                       std::span<const double> loss_grad) {
    IntraformerParams grads = IntraformerParams::zeros(params.hyper);
    intraformer_backward(trace, params, loss_grad, grads);
    return grads;
}

}  // namespace fairclust
