#include "provlens/eval.hpp"

#include <sys/resource.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <map>
#include <sstream>

#include "provlens/error.hpp"

namespace provlens {

TemporalGraph without_edge(const TemporalGraph& graph, const EdgeKey& edge) {
    TemporalGraph out;
    for (const auto& n : graph.nodes()) out.add_node(n);
    for (const Event& e : graph.events()) {
        if (key_of(e) != edge) out.append_event(e);
    }
    return out;
}

namespace {

struct Outcome {
    double score = 0.0;
    bool raised = false;
};

Outcome rescore(const TgnModel& model, const TemporalGraph& graph, const Alert& alert, const WindowStats& stats,
                const DetectorConfig& config) {
    const DetectionResult d = detect(model, graph, stats, config);
    Outcome o;
    for (const auto& v : d.verdicts) {
        if (std::find(alert.windows.begin(), alert.windows.end(), v.window) != alert.windows.end()) {
            o.score += v.flagged_loss;
        }
    }
    for (const auto& a : d.alerts) {
        if (a.raised && a.t_start < alert.t_end && alert.t_start < a.t_end) o.raised = true;
    }
    return o;
}

bool occurs_in(const TemporalGraph& graph, const Alert& alert, const EdgeKey& edge) {
    for (const auto& w : alert.windows) {
        const auto [first, last] = graph.window_range(w.t0, w.t1);
        const auto events = graph.events();
        for (std::size_t i = first; i < last; ++i) {
            if (key_of(events[i]) == edge) return true;
        }
    }
    return false;
}

std::string edge_name(const EdgeKey& k) {
    return std::to_string(k.src) + "->" + std::to_string(k.dst) + ":" + std::string(report_name(k.relation));
}

} // namespace

AblationResult ablate_edge(const TgnModel& model, const TemporalGraph& graph, const Alert& alert,
                           const WindowStats& stats, const DetectorConfig& config, std::optional<EdgeKey> edge,
                           double graphmask_score) {
    if (alert.windows.empty()) throw ArgumentError("alert has no windows");
    if (edge && !occurs_in(graph, alert, *edge)) {
        throw ArgumentError("edge " + edge_name(*edge) + " does not occur in the alert's windows");
    }
    const Outcome before = rescore(model, graph, alert, stats, config);
    AblationResult r;
    r.removed_edge = edge;
    r.graphmask_score = graphmask_score;
    r.score_before = before.score;
    if (!edge) {
        r.score_after = before.score;
        r.alert_still_raised = before.raised;
        return r;
    }
    const Outcome after = rescore(model, without_edge(graph, *edge), alert, stats, config);
    r.score_after = after.score;
    r.alert_still_raised = after.raised;
    r.delta_anomaly_pct = before.score > 0.0 ? 100.0 * (after.score - before.score) / before.score : 0.0;
    return r;
}

std::vector<AblationResult> ablation_table(const TgnModel& model, const TemporalGraph& graph, const Alert& alert,
                                           const WindowStats& stats, const DetectorConfig& config,
                                           std::span<const ExplanationReport> reports, std::size_t max_edges) {
    std::map<EdgeKey, double> weight;
    for (const auto& r : reports) {
        for (const auto& g : r.graphmask) {
            auto [it, fresh] = weight.try_emplace({g.src, g.dst, g.relation}, g.weight);
            if (!fresh) it->second = std::max(it->second, g.weight);
        }
    }
    std::vector<std::pair<EdgeKey, double>> ranked(weight.begin(), weight.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (max_edges > 0 && ranked.size() > max_edges) ranked.resize(max_edges);

    std::vector<AblationResult> rows;
    rows.push_back(ablate_edge(model, graph, alert, stats, config, std::nullopt));
    for (const auto& [edge, w] : ranked) {
        if (!occurs_in(graph, alert, edge)) continue;
        rows.push_back(ablate_edge(model, graph, alert, stats, config, edge, w));
    }
    return rows;
}

std::string ablation_csv(std::span<const AblationResult> rows) {
    std::ostringstream out;
    out << "removed_edge,graphmask_score,delta_anomaly_pct,alert_still_raised\n";
    char buf[64];
    for (const auto& r : rows) {
        out << (r.removed_edge ? edge_name(*r.removed_edge) : "NONE") << ',';
        std::snprintf(buf, sizeof buf, "%.4f,%.2f,", r.graphmask_score, r.delta_anomaly_pct);
        out << buf << (r.alert_still_raised ? "true" : "false") << '\n';
    }
    return out.str();
}

FidelityMetrics fidelity_summary(std::span<const FidelityMetrics> metrics) {
    if (metrics.empty()) throw ArgumentError("fidelity summary needs at least one explanation");
    FidelityMetrics m;
    for (const auto& f : metrics) {
        m.comprehensiveness += f.comprehensiveness;
        m.sufficiency += f.sufficiency;
    }
    m.comprehensiveness /= static_cast<double>(metrics.size());
    m.sufficiency /= static_cast<double>(metrics.size());
    return m;
}

FidelityMetrics fidelity_summary(std::span<const ExplanationReport> reports) {
    // An event explained for two nodes of the same window counts once.
    std::map<std::pair<std::size_t, std::size_t>, FidelityMetrics> unique;
    for (std::size_t w = 0; w < reports.size(); ++w) {
        for (const auto& b : reports[w].nodes) {
            for (const auto& g : b.gnn) unique.try_emplace({w, g.event_index}, FidelityMetrics{g.comprehensiveness, g.sufficiency});
        }
    }
    std::vector<FidelityMetrics> all;
    for (const auto& [key, f] : unique) all.push_back(f);
    return fidelity_summary(std::span<const FidelityMetrics>(all));
}

std::string_view to_string(ExplainerMethod m) {
    switch (m) {
    case ExplainerMethod::GraphMask: return "graphmask";
    case ExplainerMethod::GnnExplainer: return "gnnexplainer";
    case ExplainerMethod::Vatg: return "va_tg";
    }
    return "graphmask";
}

std::size_t peak_resident_bytes() {
    rusage u{};
    getrusage(RUSAGE_SELF, &u);
    return static_cast<std::size_t>(u.ru_maxrss) * 1024;
}

RuntimeRow measure_runtime(const TgnModel& model, std::span<const EventContext> contexts, ExplainerMethod method,
                           const PipelineConfig& config) {
    if (contexts.size() < 5) {
        throw ArgumentError("runtime measurement needs at least 5 contexts, got " + std::to_string(contexts.size()));
    }
    VatgConfig vatg = config.vatg;
    vatg.seed = config.seed;
    auto run = [&](const EventContext& ctx) {
        switch (method) {
        case ExplainerMethod::GraphMask: (void)graphmask_explain_event(model, ctx, config.graphmask); break;
        case ExplainerMethod::GnnExplainer: (void)gnn_explain_event(model, ctx, config.gnn); break;
        case ExplainerMethod::Vatg: (void)vatg_explain_event(model, ctx, vatg); break;
        }
    };
    run(contexts.front());

    RuntimeRow row;
    row.method = method;
    std::vector<double> seconds;
    seconds.reserve(contexts.size());
    for (const auto& ctx : contexts) {
        const auto t0 = std::chrono::steady_clock::now();
        run(ctx);
        seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        row.peak_memory = std::max(row.peak_memory, peak_resident_bytes());
    }
    const std::size_t mid = seconds.size() / 2;
    std::nth_element(seconds.begin(), seconds.begin() + static_cast<std::ptrdiff_t>(mid), seconds.end());
    double median = seconds[mid];
    if (seconds.size() % 2 == 0) {
        median = 0.5 * (median + *std::max_element(seconds.begin(), seconds.begin() + static_cast<std::ptrdiff_t>(mid)));
    }
    row.seconds_per_event = median;
    row.samples = seconds.size();
    return row;
}

} // namespace provlens
