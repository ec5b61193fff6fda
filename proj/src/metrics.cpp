#include "fairclust/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "json.hpp"

namespace fairclust {

namespace {

struct Contingency {
    std::map<std::pair<std::int64_t, std::int64_t>, double> joint;
    std::map<std::int64_t, double> pred;
    std::map<std::int64_t, double> truth;
    double total = 0.0;
};

Contingency contingency(const Partition& pred, const Partition& truth) {
    if (pred.size() != truth.size())
        throw DataError("partition sizes differ: " + std::to_string(pred.size()) + " vs " + std::to_string(truth.size()));
    Contingency c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        c.joint[{pred.assignment[i], truth.assignment[i]}] += 1.0;
        c.pred[pred.assignment[i]] += 1.0;
        c.truth[truth.assignment[i]] += 1.0;
    }
    c.total = static_cast<double>(pred.size());
    return c;
}

double pairs(double n) { return n * (n - 1.0) / 2.0; }

double harmonic(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

double entropy(const std::map<std::int64_t, double>& counts, double total) {
    double h = 0.0;
    for (const auto& [id, n] : counts) {
        const double p = n / total;
        h -= p * std::log(p);
    }
    return h;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

double pairwise_f(const Partition& pred, const Partition& truth) {
    const Contingency c = contingency(pred, truth);
    double tp = 0.0, pred_pairs = 0.0, truth_pairs = 0.0;
    for (const auto& [key, n] : c.joint) tp += pairs(n);
    for (const auto& [key, n] : c.pred) pred_pairs += pairs(n);
    for (const auto& [key, n] : c.truth) truth_pairs += pairs(n);
    if (pred_pairs == 0.0 && truth_pairs == 0.0) return 1.0;
    const double precision = pred_pairs > 0.0 ? tp / pred_pairs : 0.0;
    const double recall = truth_pairs > 0.0 ? tp / truth_pairs : 0.0;
    return harmonic(precision, recall);
}

double bcubed_f(const Partition& pred, const Partition& truth) {
    const Contingency c = contingency(pred, truth);
    if (c.total == 0.0) return 1.0;
    // Every sample in cell (a, b) has precision n_ab / |a| and recall n_ab / |b|.
    double precision = 0.0, recall = 0.0;
    for (const auto& [key, n] : c.joint) {
        precision += n * n / c.pred.at(key.first);
        recall += n * n / c.truth.at(key.second);
    }
    return harmonic(precision / c.total, recall / c.total);
}

double nmi(const Partition& pred, const Partition& truth) {
    const Contingency c = contingency(pred, truth);
    if (c.total == 0.0) return 1.0;
    const double h_pred = entropy(c.pred, c.total);
    const double h_truth = entropy(c.truth, c.total);
    if (h_pred == 0.0 && h_truth == 0.0) return 1.0;
    if (h_pred == 0.0 || h_truth == 0.0) return 0.0;
    double mi = 0.0;
    for (const auto& [key, n] : c.joint)
        mi += n / c.total * std::log(n * c.total / (c.pred.at(key.first) * c.truth.at(key.second)));
    return std::clamp(mi / (0.5 * (h_pred + h_truth)), 0.0, 1.0);
}

PartitionMetrics evaluate_partition(const Partition& pred, const Partition& truth) {
    return {pairwise_f(pred, truth), bcubed_f(pred, truth), nmi(pred, truth)};
}

MetricKind metric_from_name(const std::string& name) {
    if (name == "pairwise_f" || name == "F_P") return MetricKind::pairwise_f;
    if (name == "bcubed_f" || name == "F_B") return MetricKind::bcubed_f;
    if (name == "nmi" || name == "NMI") return MetricKind::nmi;
    throw ConfigError("unknown metric '" + name + "'");
}

std::string metric_name(MetricKind kind) {
    switch (kind) {
        case MetricKind::pairwise_f: return "pairwise_f";
        case MetricKind::bcubed_f: return "bcubed_f";
        case MetricKind::nmi: return "nmi";
    }
    return "?";
}

double metric_value(const PartitionMetrics& m, MetricKind kind) {
    switch (kind) {
        case MetricKind::pairwise_f: return m.pairwise_f;
        case MetricKind::bcubed_f: return m.bcubed_f;
        case MetricKind::nmi: return m.nmi;
    }
    return 0.0;
}

GroupSummary summarize(std::span<const double> per_group) {
    GroupSummary s;
    if (per_group.empty()) return s;
    const double count = static_cast<double>(per_group.size());
    s.mean = std::accumulate(per_group.begin(), per_group.end(), 0.0) / count;
    if (per_group.size() > 1) {
        double ss = 0.0;
        for (double v : per_group) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / (count - 1.0));
    }
    double dp = 0.0;
    for (double a : per_group)
        for (double b : per_group) dp += std::abs(a - b);
    s.delta_dp = 0.5 * dp;
    return s;
}

FairnessReport group_report(const Partition& pred, const Partition& truth, std::span<const std::int64_t> groups,
                            MetricKind delta_metric) {
    if (pred.size() != truth.size() || groups.size() != pred.size())
        throw DataError("prediction, truth and group vectors must have equal length");
    FairnessReport report;
    report.delta_metric = delta_metric;
    report.overall = evaluate_partition(pred, truth);

    std::map<std::int64_t, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < groups.size(); ++i) members[groups[i]].push_back(i);

    std::vector<double> fp, fb, nm, delta;
    for (const auto& [group, idx] : members) {
        if (idx.size() < 2) {
            report.warnings.push_back("group " + std::to_string(group) + " has fewer than 2 samples; excluded");
            continue;
        }
        std::vector<std::int64_t> p, t;
        p.reserve(idx.size());
        t.reserve(idx.size());
        for (auto i : idx) {
            p.push_back(pred.assignment[i]);
            t.push_back(truth.assignment[i]);
        }
        const PartitionMetrics m = evaluate_partition(Partition::from_labels(p), Partition::from_labels(t));
        report.per_group[group] = m;
        report.group_sizes[group] = idx.size();
        fp.push_back(m.pairwise_f);
        fb.push_back(m.bcubed_f);
        nm.push_back(m.nmi);
        delta.push_back(metric_value(m, delta_metric));
    }
    const auto sp = summarize(fp), sb = summarize(fb), sn = summarize(nm);
    report.mean = {sp.mean, sb.mean, sn.mean};
    report.std = {sp.std, sb.std, sn.std};
    report.delta_dp = summarize(delta).delta_dp;
    return report;
}

std::string report_to_json(const FairnessReport& report, const std::string& provenance) {
    auto metrics_json = [](const PartitionMetrics& m) {
        nlohmann::ordered_json j;
        j["pairwise_f"] = m.pairwise_f;
        j["bcubed_f"] = m.bcubed_f;
        j["nmi"] = m.nmi;
        return j;
    };
    nlohmann::ordered_json j;
    if (!provenance.empty()) j["config_hash"] = provenance;
    nlohmann::ordered_json groups = nlohmann::ordered_json::object();
    for (const auto& [group, m] : report.per_group) {
        auto g = metrics_json(m);
        g["samples"] = report.group_sizes.at(group);
        groups[std::to_string(group)] = g;
    }
    j["per_group"] = groups;
    j["overall"] = metrics_json(report.overall);
    j["mean"] = metrics_json(report.mean);
    j["std"] = metrics_json(report.std);
    j["delta_dp"] = report.delta_dp;
    j["delta_dp_metric"] = metric_name(report.delta_metric);
    j["warnings"] = report.warnings;
    return j.dump(2);
}

std::string report_to_csv(const FairnessReport& report, const std::string& provenance) {
    const MetricKind all[] = {MetricKind::pairwise_f, MetricKind::bcubed_f, MetricKind::nmi};
    return report_to_csv(report, all, provenance);
}

std::string report_to_csv(const FairnessReport& report, std::span<const MetricKind> rows,
                          const std::string& provenance) {
    std::string out;
    if (!provenance.empty()) out += "# config_hash=" + provenance + "\n";
    out += "metric";
    for (const auto& [group, m] : report.per_group) out += ",group_" + std::to_string(group);
    out += ",Mean,STD\n";
    for (MetricKind kind : rows) {
        out += metric_name(kind);
        for (const auto& [group, m] : report.per_group) out += "," + fmt(metric_value(m, kind));
        out += "," + fmt(metric_value(report.mean, kind)) + "," + fmt(metric_value(report.std, kind)) + "\n";
    }
    return out;
}

}  // namespace fairclust
