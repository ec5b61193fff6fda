#include "fairclust/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "json.hpp"

namespace fairclust {

namespace {

double sample_std(std::span<const double> values) {
    if (values.size() < 2) return 0.0;
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

template <typename Fn>
void zip_tensors(IntraformerParams& a, const IntraformerParams& b, Fn&& fn) {
    std::vector<const Matrix*> rhs;
    b.visit([&rhs](const std::string&, const Matrix& t) { rhs.push_back(&t); });
    std::size_t i = 0;
    a.visit([&](const std::string& name, Matrix& t) { fn(name, t, *rhs[i++]); });
}

void add_into(IntraformerParams& acc, const IntraformerParams& x) {
    zip_tensors(acc, x, [](const std::string&, Matrix& a, const Matrix& b) { a += b; });
}

}  // namespace

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (warmup_epochs > epochs) throw ConfigError("warmup_epochs must not exceed epochs");
    if (!(lr_min <= lr0) || !(lr_min >= 0.0)) throw ConfigError("learning rates need 0 <= lr_min <= lr0");
    if (!(lambda_max >= 0.0)) throw ConfigError("lambda_max must be non-negative");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw ConfigError("Adam epsilon must be positive");
    if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be non-negative");
}

OptimizerState OptimizerState::for_params(const IntraformerParams& params) {
    return {IntraformerParams::zeros(params.hyper), IntraformerParams::zeros(params.hyper), 0};
}

double cosine_lr(std::uint64_t step, std::uint64_t total_steps, const TrainConfig& cfg) {
    if (total_steps == 0) throw ConfigError("cosine schedule needs at least one step");
    if (step > total_steps) throw ConfigError("step beyond the end of the schedule");
    const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
    return cfg.lr_min + 0.5 * (cfg.lr0 - cfg.lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

double lambda_schedule(std::size_t epoch, const TrainConfig& cfg) {
    if (epoch < cfg.warmup_epochs || cfg.epochs <= cfg.warmup_epochs) return 0.0;
    const double ramp = static_cast<double>(epoch - cfg.warmup_epochs + 1) / static_cast<double>(cfg.epochs - cfg.warmup_epochs);
    return cfg.lambda_max * std::min(1.0, ramp);
}

void adam_step(IntraformerParams& params, const IntraformerParams& grads, OptimizerState& state, double lr,
               const TrainConfig& cfg) {
    if (!(grads.hyper == params.hyper) || !(state.first.hyper == params.hyper))
        throw ConfigError("optimizer state does not match parameter shapes");
    grads.visit([](const std::string& name, const Matrix& g) {
        if (!g.allFinite()) throw NumericError("non-finite gradient in " + name);
    });

    double scale = 1.0;
    if (cfg.clip_norm > 0.0) {
        double sq = 0.0;
        grads.visit([&sq](const std::string&, const Matrix& g) { sq += g.squaredNorm(); });
        const double norm = std::sqrt(sq);
        if (norm > cfg.clip_norm) scale = cfg.clip_norm / norm;
    }

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);

    std::vector<const Matrix*> g_list;
    grads.visit([&g_list](const std::string&, const Matrix& g) { g_list.push_back(&g); });
    std::vector<Matrix*> m_list, v_list;
    state.first.visit([&m_list](const std::string&, Matrix& m) { m_list.push_back(&m); });
    state.second.visit([&v_list](const std::string&, Matrix& v) { v_list.push_back(&v); });

    std::size_t i = 0;
    params.visit([&](const std::string&, Matrix& p) {
        const Matrix g = *g_list[i] * scale;
        Matrix& m = *m_list[i];
        Matrix& v = *v_list[i];
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.adam_eps);
        ++i;
    });
}

BatchEvaluation evaluate_batch(std::span<const SubClusterBatch> batch, const IntraformerParams& params, double lambda,
                               const TrainConfig& cfg, IntraformerParams* grads) {
    if (batch.empty()) throw ConfigError("empty mini-batch");
    const std::size_t count = batch.size();
    const double inv_b = 1.0 / static_cast<double>(count);

    std::vector<ForwardResult> forward(count);
    std::vector<std::vector<double>> probs(count);
    parallel_for(count, cfg.threads, [&](std::size_t c) {
        if (!batch[c].source.targets) throw DataError("training clusters need targets (labels)");
        if (grads) {
            forward[c] = intraformer_forward(batch[c], params);
            probs[c].assign(forward[c].probabilities.data(), forward[c].probabilities.data() + forward[c].probabilities.size());
        } else {
            const Vector q = intraformer_predict(batch[c], params);
            probs[c].assign(q.data(), q.data() + q.size());
        }
    });

    BatchEvaluation eval;
    eval.gammas.resize(count);
    double clustering = 0.0, fmi = 0.0;
    for (std::size_t c = 0; c < count; ++c) {
        const auto& t = *batch[c].source.targets;
        const double f = fmi_loss(confusion_counts(probs[c], t));
        fmi += f;
        clustering += cfg.loss == ClusteringLoss::fmi ? f : bce_loss(probs[c], t);
        eval.gammas[c] = purity(probs[c], t, std::nullopt, cfg.clamp_purity).gamma;
    }
    const FairnessReference reference{std::nullopt, cfg.detach_reference};
    eval.objective = combined_objective(clustering * inv_b, fairness_loss(eval.gammas, reference), lambda);
    eval.fmi_loss = fmi * inv_b;
    if (!grads) return eval;

    std::vector<double> dgamma(count, 0.0);
    if (lambda != 0.0) dgamma = fairness_loss_grad(eval.gammas, reference);

    std::vector<IntraformerParams> partial(count);
    parallel_for(count, cfg.threads, [&](std::size_t c) {
        const auto& t = *batch[c].source.targets;
        std::vector<double> dq =
            cfg.loss == ClusteringLoss::fmi ? fmi_loss_grad(probs[c], t) : bce_loss_grad(probs[c], t);
        for (auto& v : dq) v *= inv_b;
        if (lambda != 0.0 && dgamma[c] != 0.0) {
            const auto dp = purity_grad(probs[c], t, cfg.clamp_purity);
            for (std::size_t j = 0; j < dq.size(); ++j) dq[j] += lambda * dgamma[c] * dp[j];
        }
        partial[c] = intraformer_backward(forward[c].trace, params, dq);
    });

    // Fixed-order reduction: identical results for any thread count.
    *grads = std::move(partial[0]);
    for (std::size_t c = 1; c < count; ++c) add_into(*grads, partial[c]);
    return eval;
}

std::string to_json_line(const EpochLog& log, const std::string& provenance) {
    nlohmann::ordered_json j;
    j["epoch"] = log.epoch;
    j["step"] = log.step;
    j["lr"] = log.lr;
    j["lambda"] = log.lambda;
    j["fmi_loss"] = log.fmi_loss;
    j["fair_loss"] = log.objective.fairness_term;
    j["total"] = log.objective.total;
    j["gamma_mean"] = log.gamma_mean;
    j["gamma_std"] = log.gamma_std;
    j["clustering_loss"] = log.objective.clustering_term;
    if (!provenance.empty()) j["config_hash"] = provenance;
    return j.dump();
}

TrainResult train(const EmbeddingSet& set, IntraformerParams model, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch) {
    model.hyper.validate();
    return train(set, knn_all(set, model.hyper.n, cfg.threads), std::move(model), cfg, on_epoch);
}

TrainResult train(const EmbeddingSet& set, const std::vector<NeighborCluster>& clusters, IntraformerParams model,
                  const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch) {
    cfg.validate();
    model.hyper.validate();
    if (!set.labels) throw DataError("training requires labels");
    if (set.dim() != model.hyper.d)
        throw ConfigError("data dimension " + std::to_string(set.dim()) + " does not match model d=" +
                          std::to_string(model.hyper.d));

    TrainResult result;
    result.params = std::move(model);
    if (cfg.epochs == 0) return result;

    const Hyper& h = result.params.hyper;
    std::vector<SubClusterBatch> batches;
    batches.reserve(clusters.size());
    for (const auto& c : clusters) {
        if (c.size() != h.n) throw ConfigError("cluster size does not match model n=" + std::to_string(h.n));
        batches.push_back(decompose(c, h.k, set));
    }
    if (batches.empty()) throw DataError("no clusters to train on");

    const std::size_t per_epoch = (batches.size() + cfg.batch_size - 1) / cfg.batch_size;
    const std::uint64_t total_steps = static_cast<std::uint64_t>(per_epoch) * cfg.epochs;
    OptimizerState state = OptimizerState::for_params(result.params);
    IntraformerParams grads = IntraformerParams::zeros(h);
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(batches.size());
    std::vector<SubClusterBatch> mini;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        const double lambda = lambda_schedule(epoch, cfg);

        EpochLog log;
        log.epoch = epoch;
        log.lambda = lambda;
        double clustering = 0.0, fairness = 0.0, fmi = 0.0, gamma_sum = 0.0, gamma_std = 0.0, lr = 0.0;
        std::size_t gamma_count = 0;
        for (std::size_t b = 0; b < per_epoch; ++b) {
            const std::size_t begin = b * cfg.batch_size;
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            mini.clear();
            for (std::size_t i = begin; i < end; ++i) mini.push_back(batches[order[i]]);

            const BatchEvaluation eval = evaluate_batch(mini, result.params, lambda, cfg, &grads);
            lr = cosine_lr(state.step, total_steps, cfg);
            adam_step(result.params, grads, state, lr, cfg);

            clustering += eval.objective.clustering_term;
            fairness += eval.objective.fairness_term;
            fmi += eval.fmi_loss;
            for (double g : eval.gammas) gamma_sum += g;
            gamma_count += eval.gammas.size();
            gamma_std += sample_std(eval.gammas);
        }
        const double inv = 1.0 / static_cast<double>(per_epoch);
        log.step = state.step;
        log.lr = lr;
        log.objective = combined_objective(clustering * inv, fairness * inv, lambda);
        log.fmi_loss = fmi * inv;
        log.gamma_mean = gamma_sum / static_cast<double>(gamma_count);
        log.gamma_std = gamma_std * inv;
        result.log.push_back(log);
        if (on_epoch) on_epoch(log);
    }
    return result;
}

GradCheckReport gradient_check(const Hyper& hyper, std::size_t trials, std::uint64_t seed, double lambda, double step) {
    hyper.validate();
    GradCheckReport report;
    report.trials = trials;
    if (trials == 0) return report;

    TrainConfig cfg;
    cfg.loss = ClusteringLoss::fmi;
    constexpr std::size_t kBatch = 4;
    constexpr double kKinkGap = 1e-3;

    for (std::size_t trial = 0; trial < trials; ++trial) {
        const std::uint64_t trial_seed = seed + 7919 * trial;
        SyntheticSpec spec;
        spec.dim = hyper.d;
        spec.seed = trial_seed;
        spec.groups = {{0, 4, 3, 5, 0.4}, {1, 4, 3, 5, 0.9}};
        const EmbeddingSet set = generate_synthetic(spec);
        const auto clusters = knn_all(set, hyper.n);

        IntraformerParams params = init_params(hyper, trial_seed);
        std::mt19937_64 rng(trial_seed ^ 0x9e3779b97f4a7c15ULL);
        std::uniform_real_distribution<double> jitter(-0.1, 0.1);
        params.visit([&](const std::string&, Matrix& t) {
            for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] += jitter(rng);
        });

        // Pick a batch whose purities sit clear of the |gamma - gamma_f| kink.
        std::vector<SubClusterBatch> batch;
        std::vector<std::size_t> order(clusters.size());
        for (int attempt = 0; attempt < 100; ++attempt) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::shuffle(order.begin(), order.end(), rng);
            batch.clear();
            for (std::size_t i = 0; i < kBatch; ++i) batch.push_back(decompose(clusters[order[i]], hyper.k, set));
            const auto eval = evaluate_batch(batch, params, lambda, cfg);
            const double mean = std::accumulate(eval.gammas.begin(), eval.gammas.end(), 0.0) / kBatch;
            bool clear = true;
            for (double g : eval.gammas) clear = clear && std::abs(g - mean) > kKinkGap;
            if (clear) break;
        }

        IntraformerParams analytic;
        evaluate_batch(batch, params, lambda, cfg, &analytic);
        std::vector<const Matrix*> analytic_list;
        analytic.visit([&](const std::string&, const Matrix& t) { analytic_list.push_back(&t); });

        std::size_t idx = 0;
        IntraformerParams probe = params;
        probe.visit([&](const std::string& name, Matrix& t) {
            if (report.groups.size() <= idx) report.groups.push_back({name, 0.0, 0.0, 0});
            auto& entry = report.groups[idx];
            const Matrix& a = *analytic_list[idx];
            for (Eigen::Index i = 0; i < t.size(); ++i) {
                const double saved = t.data()[i];
                t.data()[i] = saved + step;
                const double up = evaluate_batch(batch, probe, lambda, cfg).objective.total;
                t.data()[i] = saved - step;
                const double down = evaluate_batch(batch, probe, lambda, cfg).objective.total;
                t.data()[i] = saved;
                const double numeric = (up - down) / (2.0 * step);
                const double abs_err = std::abs(a.data()[i] - numeric);
                const double rel_err = abs_err / std::max({std::abs(a.data()[i]), std::abs(numeric), kGradCheckFloor});
                entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
                entry.max_rel_error = std::max(entry.max_rel_error, rel_err);
                ++entry.checked;
            }
            ++idx;
        });
    }
    for (const auto& g : report.groups) report.worst = std::max(report.worst, g.max_rel_error);
    return report;
}

}  // namespace fairclust
