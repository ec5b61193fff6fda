#include "fairclust/pipeline.hpp"

#include <fstream>
#include <iostream>
#include <set>

#include "fairclust/fileutil.hpp"

namespace fairclust {

namespace {

using nlohmann::json;

constexpr std::uint64_t kEvalSeedOffset = 1000003;
constexpr std::uint64_t kInitSeedMix = 0x5851f42d4c957f2dULL;

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j.items())
        if (!ok.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

SyntheticSpec synthetic_from_json(const json& j, bool& explicit_seed) {
    reject_unknown(j, {"dim", "seed", "groups"}, "synthetic");
    SyntheticSpec spec;
    read(j, "dim", spec.dim);
    explicit_seed = j.contains("seed");
    read(j, "seed", spec.seed);
    if (!j.contains("groups") || !j.at("groups").is_array()) throw ConfigError("synthetic.groups must be an array");
    for (const auto& g : j.at("groups")) {
        reject_unknown(g, {"id", "identities", "images", "noise"}, "synthetic group");
        GroupSpec gs;
        read(g, "id", gs.group_id);
        read(g, "identities", gs.identity_count);
        if (g.contains("images")) {
            const auto& im = g.at("images");
            if (im.is_array() && im.size() == 2) {
                gs.min_images = im.at(0).get<std::size_t>();
                gs.max_images = im.at(1).get<std::size_t>();
            } else {
                gs.min_images = gs.max_images = im.get<std::size_t>();
            }
        }
        read(g, "noise", gs.noise_scale);
        spec.groups.push_back(gs);
    }
    return spec;
}

json synthetic_to_json(const SyntheticSpec& spec) {
    json groups = json::array();
    for (const auto& g : spec.groups)
        groups.push_back({{"id", g.group_id},
                          {"identities", g.identity_count},
                          {"images", {g.min_images, g.max_images}},
                          {"noise", g.noise_scale}});
    return {{"dim", spec.dim}, {"seed", spec.seed}, {"groups", groups}};
}

struct SourceSeed {
    bool explicit_seed = false;
};

DataSource source_from_json(const json& j, SourceSeed& seed, const std::string& where) {
    reject_unknown(j, {"path", "synthetic"}, where);
    DataSource src;
    if (j.contains("path")) src.path = j.at("path").get<std::string>();
    if (j.contains("synthetic")) src.synthetic = synthetic_from_json(j.at("synthetic"), seed.explicit_seed);
    if (src.path.has_value() == src.synthetic.has_value())
        throw ConfigError(where + " needs exactly one of 'path' or 'synthetic'");
    return src;
}

json source_to_json(const DataSource& src) {
    if (src.path) return {{"path", src.path->string()}};
    return {{"synthetic", synthetic_to_json(*src.synthetic)}};
}

std::string loss_name(ClusteringLoss loss) { return loss == ClusteringLoss::fmi ? "fmi" : "bce"; }

EmbeddingSet load_source(const PipelineConfig& cfg, const DataSource& src, const std::filesystem::path& generated) {
    EmbeddingSet set;
    if (src.path) {
        set = load_embeddings(*src.path);
    } else {
        if (!std::filesystem::exists(generated))
            throw DataError("missing " + generated.string() + "; run the generate stage first");
        set = load_embeddings(generated);
    }
    set = l2_normalize(std::move(set));
    if (set.dim() != cfg.model.d)
        throw ConfigError("data dimension " + std::to_string(set.dim()) + " does not match model.d=" +
                          std::to_string(cfg.model.d));
    return set;
}

const DataSource& eval_source(const PipelineConfig& cfg) { return cfg.eval_data ? *cfg.eval_data : cfg.train_data; }

std::vector<NeighborCluster> clusters_for(const PipelineConfig& cfg, const EmbeddingSet& set,
                                          const std::filesystem::path& cache) {
    if (std::filesystem::exists(cache)) {
        auto clusters = load_clusters(cache);
        if (clusters.size() == set.count() && !clusters.empty() && clusters.front().size() == cfg.model.n)
            return clusters;
    }
    return knn_all(set, cfg.model.n, cfg.threads);
}

}  // namespace

// --- config ---------------------------------------------------------------------------------

PipelineConfig PipelineConfig::from_json(const json& j) {
    PipelineConfig cfg;
    try {
        reject_unknown(j, {"seed", "threads", "data", "knn", "model", "train", "postprocess", "eval", "output_dir"},
                       "config");
        read(j, "seed", cfg.seed);
        read(j, "threads", cfg.threads);
        if (!j.contains("data")) throw ConfigError("config needs a 'data' section");
        const auto& data = j.at("data");
        reject_unknown(data, {"train", "eval"}, "data");
        if (!data.contains("train")) throw ConfigError("data.train is required");
        SourceSeed train_seed, eval_seed;
        cfg.train_data = source_from_json(data.at("train"), train_seed, "data.train");
        if (data.contains("eval")) cfg.eval_data = source_from_json(data.at("eval"), eval_seed, "data.eval");

        if (j.contains("knn")) {
            reject_unknown(j.at("knn"), {"n"}, "knn");
            read(j.at("knn"), "n", cfg.model.n);
        }
        if (j.contains("model")) {
            const auto& m = j.at("model");
            reject_unknown(m, {"d", "k", "n_block", "n_head", "ff_dim"}, "model");
            read(m, "d", cfg.model.d);
            read(m, "k", cfg.model.k);
            read(m, "n_block", cfg.model.n_block);
            read(m, "n_head", cfg.model.n_head);
            read(m, "ff_dim", cfg.model.ff_dim);
        }
        if (j.contains("train")) {
            const auto& t = j.at("train");
            reject_unknown(t, {"epochs", "batch_size", "lr0", "lr_min", "beta1", "beta2", "adam_eps", "warmup_epochs",
                               "lambda_max", "loss", "detach_reference", "clamp_purity", "clip_norm"},
                           "train");
            read(t, "epochs", cfg.train.epochs);
            read(t, "batch_size", cfg.train.batch_size);
            read(t, "lr0", cfg.train.lr0);
            read(t, "lr_min", cfg.train.lr_min);
            read(t, "beta1", cfg.train.beta1);
            read(t, "beta2", cfg.train.beta2);
            read(t, "adam_eps", cfg.train.adam_eps);
            read(t, "warmup_epochs", cfg.train.warmup_epochs);
            read(t, "lambda_max", cfg.train.lambda_max);
            read(t, "detach_reference", cfg.train.detach_reference);
            read(t, "clamp_purity", cfg.train.clamp_purity);
            read(t, "clip_norm", cfg.train.clip_norm);
            if (t.contains("loss")) {
                const auto name = t.at("loss").get<std::string>();
                if (name == "fmi") cfg.train.loss = ClusteringLoss::fmi;
                else if (name == "bce") cfg.train.loss = ClusteringLoss::bce;
                else throw ConfigError("train.loss must be 'fmi' or 'bce'");
            }
        }
        if (j.contains("postprocess")) {
            reject_unknown(j.at("postprocess"), {"threshold"}, "postprocess");
            read(j.at("postprocess"), "threshold", cfg.threshold);
        }
        if (j.contains("eval")) {
            const auto& e = j.at("eval");
            reject_unknown(e, {"metrics", "group_attribute", "delta_metric"}, "eval");
            if (e.contains("metrics")) {
                cfg.metrics.clear();
                for (const auto& name : e.at("metrics")) cfg.metrics.push_back(metric_from_name(name.get<std::string>()));
            }
            read(e, "group_attribute", cfg.group_attribute);
            if (e.contains("delta_metric")) cfg.delta_metric = metric_from_name(e.at("delta_metric").get<std::string>());
        }
        if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();

        // Synthetic seeds default to values derived from the global seed.
        cfg.train_seed_explicit_ = train_seed.explicit_seed;
        cfg.eval_seed_explicit_ = eval_seed.explicit_seed;
        cfg.set_seed(cfg.seed);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("cannot parse config " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

void PipelineConfig::set_seed(std::uint64_t value) {
    seed = value;
    train.seed = value;
    if (train_data.synthetic && !train_seed_explicit_) train_data.synthetic->seed = value;
    if (eval_data && eval_data->synthetic && !eval_seed_explicit_) eval_data->synthetic->seed = value + kEvalSeedOffset;
}

void PipelineConfig::validate() const {
    model.validate();
    train.validate();
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("postprocess.threshold must lie in (0, 1)");
    if (group_attribute != "groups")
        throw ConfigError("group attribute '" + group_attribute + "' is not available; embedding metadata provides 'groups'");
    for (const auto* src : {&train_data, eval_data ? &*eval_data : nullptr}) {
        if (!src || !src->synthetic) continue;
        src->synthetic->validate();
        if (src->synthetic->dim != model.d)
            throw ConfigError("synthetic dim " + std::to_string(src->synthetic->dim) + " does not match model.d=" +
                              std::to_string(model.d));
    }
}

json PipelineConfig::canonical_json() const {
    json j;
    j["seed"] = seed;
    j["data"]["train"] = source_to_json(train_data);
    if (eval_data) j["data"]["eval"] = source_to_json(*eval_data);
    j["knn"]["n"] = model.n;
    j["model"] = {{"d", model.d}, {"k", model.k}, {"n_block", model.n_block}, {"n_head", model.n_head}, {"ff_dim", model.ff_dim}};
    j["train"] = {{"epochs", train.epochs},
                  {"batch_size", train.batch_size},
                  {"lr0", train.lr0},
                  {"lr_min", train.lr_min},
                  {"beta1", train.beta1},
                  {"beta2", train.beta2},
                  {"adam_eps", train.adam_eps},
                  {"warmup_epochs", train.warmup_epochs},
                  {"lambda_max", train.lambda_max},
                  {"loss", loss_name(train.loss)},
                  {"detach_reference", train.detach_reference},
                  {"clamp_purity", train.clamp_purity},
                  {"clip_norm", train.clip_norm}};
    j["postprocess"]["threshold"] = threshold;
    json metric_names = json::array();
    for (auto m : metrics) metric_names.push_back(metric_name(m));
    j["eval"] = {{"metrics", metric_names}, {"group_attribute", group_attribute}, {"delta_metric", metric_name(delta_metric)}};
    return j;
}

std::uint64_t PipelineConfig::hash() const { return fnv1a64(canonical_json().dump()); }

std::string PipelineConfig::hash_hex() const { return hex64(hash()); }

// --- in-memory pieces -----------------------------------------------------------------------

std::vector<std::vector<double>> predict_clusters(const EmbeddingSet& set, const std::vector<NeighborCluster>& clusters,
                                                  const IntraformerParams& params, unsigned threads) {
    std::vector<std::vector<double>> out(clusters.size());
    parallel_for(clusters.size(), threads, [&](std::size_t c) {
        const Vector q = intraformer_predict(decompose(clusters[c], params.hyper.k, set), params);
        out[c].assign(q.data(), q.data() + q.size());
    });
    return out;
}

Partition cluster_embeddings(const EmbeddingSet& set, const std::vector<NeighborCluster>& clusters,
                             const IntraformerParams& params, double threshold, unsigned threads) {
    const auto predictions = predict_clusters(set, clusters, params, threads);
    return merge(extract_links(clusters, predictions, threshold), set.count());
}

FairnessReport evaluate_against(const Partition& pred, const EmbeddingSet& set, MetricKind delta_metric) {
    if (!set.labels) throw DataError("evaluation data has no labels");
    const Partition truth = Partition::from_labels(*set.labels);
    const std::vector<std::int64_t> single(set.count(), 0);
    return group_report(pred, truth, set.groups ? std::span<const std::int64_t>(*set.groups) : single, delta_metric);
}

// --- stages ---------------------------------------------------------------------------------

void ArtifactTracker::rollback() {
    for (const auto& p : written_) {
        std::error_code ec;
        std::filesystem::remove(p, ec);
    }
    written_.clear();
}

ArtifactPaths ArtifactPaths::in(const std::filesystem::path& dir) {
    ArtifactPaths p;
    p.train_embeddings = dir / "train.fce";
    p.eval_embeddings = dir / "eval.fce";
    p.train_clusters = dir / "train.knn";
    p.eval_clusters = dir / "eval.knn";
    p.checkpoint = dir / "model.fcpt";
    p.train_log = dir / "train_log.jsonl";
    p.partition = dir / "partition.csv";
    p.report_json = dir / "report.json";
    p.report_csv = dir / "report.csv";
    p.gradcheck = dir / "gradcheck.json";
    return p;
}

void run_generate(const PipelineConfig& cfg, ArtifactTracker& tracker) {
    cfg.validate();
    const auto paths = ArtifactPaths::in(cfg.output_dir);
    const auto tag = cfg.hash_hex();
    if (cfg.train_data.synthetic) {
        tracker.record(paths.train_embeddings);
        save_embeddings(generate_synthetic(*cfg.train_data.synthetic), paths.train_embeddings, EmbeddingFormat::binary, tag);
    }
    if (cfg.eval_data && cfg.eval_data->synthetic) {
        tracker.record(paths.eval_embeddings);
        save_embeddings(generate_synthetic(*cfg.eval_data->synthetic), paths.eval_embeddings, EmbeddingFormat::binary, tag);
    }
}

void run_knn(const PipelineConfig& cfg, ArtifactTracker& tracker) {
    cfg.validate();
    const auto paths = ArtifactPaths::in(cfg.output_dir);
    const auto train_set = load_source(cfg, cfg.train_data, paths.train_embeddings);
    tracker.record(paths.train_clusters);
    save_clusters(knn_all(train_set, cfg.model.n, cfg.threads), paths.train_clusters);
    if (cfg.eval_data) {
        const auto eval_set = load_source(cfg, *cfg.eval_data, paths.eval_embeddings);
        tracker.record(paths.eval_clusters);
        save_clusters(knn_all(eval_set, cfg.model.n, cfg.threads), paths.eval_clusters);
    }
}

void run_train(const PipelineConfig& cfg, ArtifactTracker& tracker) {
    cfg.validate();
    const auto paths = ArtifactPaths::in(cfg.output_dir);
    const auto tag = cfg.hash_hex();
    const auto set = load_source(cfg, cfg.train_data, paths.train_embeddings);
    const auto clusters = clusters_for(cfg, set, paths.train_clusters);

    TrainConfig tc = cfg.train;
    tc.threads = cfg.threads;
    std::string log_text;
    auto result = train(set, clusters, init_params(cfg.model, cfg.seed ^ kInitSeedMix), tc, [&](const EpochLog& e) {
        log_text += to_json_line(e, tag) + "\n";
        std::cerr << "epoch " << e.epoch << " lr=" << e.lr << " lambda=" << e.lambda << " fmi=" << e.fmi_loss
                  << " fair=" << e.objective.fairness_term << " total=" << e.objective.total << "\n";
    });
    tracker.record(paths.checkpoint);
    save_checkpoint(result.params, paths.checkpoint, cfg.hash());
    tracker.record(paths.train_log);
    write_file(paths.train_log, log_text);
}

void run_cluster(const PipelineConfig& cfg, ArtifactTracker& tracker) {
    cfg.validate();
    const auto paths = ArtifactPaths::in(cfg.output_dir);
    const auto params = load_checkpoint(paths.checkpoint);
    if (!(params.hyper == cfg.model)) throw ConfigError("checkpoint " + paths.checkpoint.string() + " does not match the configured model");
    const auto set = load_source(cfg, eval_source(cfg), cfg.eval_data ? paths.eval_embeddings : paths.train_embeddings);
    const auto clusters = clusters_for(cfg, set, cfg.eval_data ? paths.eval_clusters : paths.train_clusters);
    tracker.record(paths.partition);
    save_partition(cluster_embeddings(set, clusters, params, cfg.threshold, cfg.threads), paths.partition, cfg.hash_hex());
}

FairnessReport run_evaluate(const PipelineConfig& cfg, ArtifactTracker& tracker,
                            const std::optional<std::filesystem::path>& pred,
                            const std::optional<std::filesystem::path>& truth) {
    cfg.validate();
    const auto paths = ArtifactPaths::in(cfg.output_dir);
    const Partition predicted = load_partition(pred.value_or(paths.partition));

    std::optional<EmbeddingSet> set;
    const DataSource& src = eval_source(cfg);
    const auto generated = cfg.eval_data ? paths.eval_embeddings : paths.train_embeddings;
    if (!truth || src.path || std::filesystem::exists(generated)) set = load_source(cfg, src, generated);

    Partition reference;
    if (truth) reference = load_partition(*truth);
    else if (set && set->labels) reference = Partition::from_labels(*set->labels);
    else throw DataError("evaluation data has no labels and no truth partition was given");

    std::vector<std::int64_t> groups(predicted.size(), 0);
    if (set && set->groups && set->groups->size() == predicted.size()) groups = *set->groups;
    const FairnessReport report = group_report(predicted, reference, groups, cfg.delta_metric);

    const auto tag = cfg.hash_hex();
    tracker.record(paths.report_json);
    write_file(paths.report_json, report_to_json(report, tag));
    tracker.record(paths.report_csv);
    write_file(paths.report_csv, report_to_csv(report, cfg.metrics, tag));
    return report;
}

GradCheckReport run_gradcheck(const PipelineConfig& cfg, ArtifactTracker& tracker, const Hyper& hyper,
                              std::size_t trials) {
    const auto paths = ArtifactPaths::in(cfg.output_dir);
    auto report = gradient_check(hyper, trials, cfg.seed);
    tracker.record(paths.gradcheck);
    write_file(paths.gradcheck, gradcheck_to_json(report, cfg.hash_hex()));
    return report;
}

FairnessReport run_pipeline(const PipelineConfig& cfg) {
    ArtifactTracker tracker;
    run_generate(cfg, tracker);
    run_knn(cfg, tracker);
    run_train(cfg, tracker);
    run_cluster(cfg, tracker);
    auto report = run_evaluate(cfg, tracker);
    tracker.commit();
    return report;
}

std::string gradcheck_to_json(const GradCheckReport& report, const std::string& provenance) {
    nlohmann::ordered_json j;
    if (!provenance.empty()) j["config_hash"] = provenance;
    j["trials"] = report.trials;
    j["worst_relative_error"] = report.worst;
    j["relative_error_floor"] = kGradCheckFloor;
    nlohmann::ordered_json groups = nlohmann::ordered_json::array();
    for (const auto& g : report.groups)
        groups.push_back({{"tensor", g.name},
                          {"max_relative_error", g.max_rel_error},
                          {"max_absolute_error", g.max_abs_error},
                          {"entries_checked", g.checked}});
    j["groups"] = groups;
    return j.dump(2);
}

}  // namespace fairclust
