// Command-line front end: one subcommand per pipeline stage plus `pipeline` for the whole chain.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "fairclust/pipeline.hpp"

using namespace fairclust;

namespace {

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::optional<std::string> out;
    std::optional<double> threshold;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
    cmd->add_option("-c,--config", opts.config, "JSON pipeline config")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", opts.seed, "override the config seed");
    cmd->add_option("--threads", opts.threads, "worker thread cap");
    cmd->add_option("--out", opts.out, "output directory");
    cmd->add_option("--threshold", opts.threshold, "link threshold for the cluster stage");
}

PipelineConfig resolve(const CommonOptions& opts) {
    PipelineConfig cfg = PipelineConfig::load(opts.config);
    if (opts.seed) cfg.set_seed(*opts.seed);
    if (opts.threads) cfg.threads = *opts.threads;
    if (opts.out) cfg.output_dir = *opts.out;
    if (opts.threshold) cfg.threshold = *opts.threshold;
    if (cfg.threads == 0) throw ConfigError("--threads must be at least 1");
    cfg.validate();
    std::filesystem::create_directories(cfg.output_dir);
    return cfg;
}

void print_report(const FairnessReport& report) {
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "overall pairwise_f=" << report.overall.pairwise_f << " bcubed_f=" << report.overall.bcubed_f
              << " nmi=" << report.overall.nmi << "\n";
    for (const auto& [group, m] : report.per_group)
        std::cout << "group " << group << " pairwise_f=" << m.pairwise_f << " bcubed_f=" << m.bcubed_f
                  << " nmi=" << m.nmi << "\n";
    std::cout << "std pairwise_f=" << report.std.pairwise_f << " delta_dp(" << metric_name(report.delta_metric)
              << ")=" << report.delta_dp << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fair face-clustering engine"};
    app.require_subcommand(1);

    CommonOptions opts;
    std::optional<std::string> pred, truth;
    std::size_t trials = 5;
    Hyper grad_hyper;
    grad_hyper.d = 8;
    grad_hyper.n = 8;
    grad_hyper.k = 2;
    grad_hyper.n_block = 1;
    grad_hyper.n_head = 2;
    grad_hyper.ff_dim = 16;

    auto* generate = app.add_subcommand("generate", "write synthetic embedding sets");
    auto* knn = app.add_subcommand("knn", "build kNN cluster caches");
    auto* train = app.add_subcommand("train", "train the model and write a checkpoint and JSONL log");
    auto* cluster = app.add_subcommand("cluster", "predict links and write the partition CSV");
    auto* evaluate = app.add_subcommand("evaluate", "score a partition per group");
    auto* gradcheck = app.add_subcommand("gradcheck", "compare analytic gradients with finite differences");
    auto* pipeline = app.add_subcommand("pipeline", "generate, knn, train, cluster, evaluate");
    for (auto* cmd : {generate, knn, train, cluster, evaluate, gradcheck, pipeline}) add_common(cmd, opts);
    evaluate->add_option("--pred", pred, "predicted partition CSV")->check(CLI::ExistingFile);
    evaluate->add_option("--truth", truth, "ground-truth partition CSV")->check(CLI::ExistingFile);
    gradcheck->add_option("--trials", trials, "number of random models")->check(CLI::PositiveNumber);
    gradcheck->add_option("--d", grad_hyper.d, "embedding width of the probe model");
    gradcheck->add_option("--n", grad_hyper.n, "cluster size");
    gradcheck->add_option("--k", grad_hyper.k, "sub-clusters per cluster");
    gradcheck->add_option("--blocks", grad_hyper.n_block, "encoder blocks per stack");
    gradcheck->add_option("--heads", grad_hyper.n_head, "attention heads");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const PipelineConfig cfg = resolve(opts);
        std::cerr << "config " << cfg.hash_hex() << " -> " << cfg.output_dir.string() << "\n";
        if (pipeline->parsed()) {
            print_report(run_pipeline(cfg));
            return 0;
        }
        ArtifactTracker tracker;
        if (generate->parsed()) run_generate(cfg, tracker);
        if (knn->parsed()) run_knn(cfg, tracker);
        if (train->parsed()) run_train(cfg, tracker);
        if (cluster->parsed()) run_cluster(cfg, tracker);
        if (evaluate->parsed()) {
            std::optional<std::filesystem::path> p, t;
            if (pred) p = *pred;
            if (truth) t = *truth;
            print_report(run_evaluate(cfg, tracker, p, t));
        }
        if (gradcheck->parsed()) {
            grad_hyper.ff_dim = 2 * grad_hyper.d;
            grad_hyper.validate();
            const auto report = run_gradcheck(cfg, tracker, grad_hyper, trials);
            for (const auto& g : report.groups)
                std::cout << g.name << " max_rel=" << g.max_rel_error << " max_abs=" << g.max_abs_error << "\n";
            std::cout << "worst relative error " << report.worst << "\n";
            tracker.commit();
            if (!(report.worst < 1e-4)) {
                std::cerr << "error: gradient check exceeded 1e-4\n";
                return 4;
            }
            return 0;
        }
        tracker.commit();
        return 0;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
