#include "provlens/detector.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "provlens/error.hpp"

namespace provlens {

using json = nlohmann::json;

namespace {

Timestamp floor_to(Timestamp t, Timestamp length) {
    Timestamp q = t / length;
    if (t % length != 0 && t < 0) --q;
    return q * length;
}

} // namespace

std::vector<TimeWindow> tile_windows(Timestamp begin, Timestamp end, Timestamp length) {
    if (length <= 0) throw ArgumentError("window length must be positive");
    std::vector<TimeWindow> out;
    for (Timestamp t = floor_to(begin, length); t < end; t += length) out.push_back({t, t + length});
    return out;
}

WindowStats compute_threshold(std::span<const double> losses) {
    if (losses.size() < 2) {
        throw ArgumentError("threshold needs at least 2 benign losses, got " + std::to_string(losses.size()));
    }
    const double n = static_cast<double>(losses.size());
    double mu = 0.0;
    for (double l : losses) mu += l;
    mu /= n;
    double var = 0.0;
    for (double l : losses) var += (l - mu) * (l - mu);
    const double sigma = std::sqrt(var / n);
    return {mu, sigma, mu + 1.5 * sigma};
}

void DetectorConfig::validate() const {
    if (window_length <= 0) throw ArgumentError("window length must be positive");
    if (!(window_budget > 0.0)) throw ArgumentError("window_budget must be positive");
    if (alert_threshold < 0.0) throw ArgumentError("alert_threshold must be non-negative");
}

WindowVerdict score_window(std::span<const EventContext> evaluated, TimeWindow window,
                           const WindowStats& stats, const DetectorConfig& config) {
    WindowVerdict v;
    v.window = window;
    std::vector<const EventContext*> inside;
    for (const auto& ctx : evaluated) {
        if (window.contains(ctx.target.timestamp)) inside.push_back(&ctx);
    }
    std::sort(inside.begin(), inside.end(),
              [](const EventContext* a, const EventContext* b) { return a->target_index < b->target_index; });
    v.event_count = inside.size();
    for (const EventContext* ctx : inside) {
        if (!(ctx->loss > stats.threshold)) continue;
        v.high_loss_events.push_back(ctx->target_index);
        v.flagged_loss += ctx->loss;
        v.node_scores[ctx->target.src] += ctx->loss;
        if (ctx->target.dst != ctx->target.src) v.node_scores[ctx->target.dst] += ctx->loss;
    }
    for (const auto& [node, score] : v.node_scores) {
        if (score > stats.threshold) v.suspicious_nodes.push_back(node);
    }
    v.anomalous = (!v.high_loss_events.empty() && v.suspicious_nodes.size() >= config.min_suspicious_nodes) ||
                  v.flagged_loss > config.window_budget;
    return v;
}

WindowVerdict score_window(const TgnModel& model, const TemporalGraph& graph, TimeWindow window,
                           const WindowStats& stats, const DetectorConfig& config) {
    auto [first, last] = graph.window_range(window.t0, window.t1);
    first = std::max(first, first_unseen_index(model, graph));
    if (first >= last) return score_window(std::span<const EventContext>{}, window, stats, config);
    const auto contexts = evaluate_stream(model, graph, first, last);
    return score_window(contexts, window, stats, config);
}

std::vector<Alert> link_queues(std::span<const WindowVerdict> verdicts, const DetectorConfig& config) {
    for (std::size_t i = 1; i < verdicts.size(); ++i) {
        if (verdicts[i].window.t0 < verdicts[i - 1].window.t0) {
            throw OrderingError("window verdicts are not in time order");
        }
    }
    auto shares_node = [](const WindowVerdict& a, const WindowVerdict& b) {
        for (const auto& [node, score] : a.node_scores) {
            if (score <= 0.0) continue;
            auto it = b.node_scores.find(node);
            if (it != b.node_scores.end() && it->second > 0.0) return true;
        }
        return false;
    };

    std::vector<Alert> alerts;
    const WindowVerdict* prev = nullptr;
    for (const auto& v : verdicts) {
        if (!v.anomalous) {
            prev = nullptr;
            continue;
        }
        if (prev == nullptr || !shares_node(*prev, v)) alerts.emplace_back();
        Alert& a = alerts.back();
        a.windows.push_back(v.window);
        a.queue_score += v.flagged_loss;
        a.entities.insert(v.suspicious_nodes.begin(), v.suspicious_nodes.end());
        prev = &v;
    }
    for (auto& a : alerts) {
        a.t_start = a.windows.front().t0;
        a.t_end = a.windows.back().t1;
        a.raised = a.queue_score >= config.alert_threshold;
    }
    return alerts;
}

AttackSubgraph reconstruct_subgraph(const Alert& alert, const TemporalGraph& graph) {
    AttackSubgraph sub;
    sub.nodes = alert.entities;
    if (alert.t_start >= alert.t_end) return sub;
    const auto [first, last] = graph.window_range(alert.t_start, alert.t_end);
    const auto events = graph.events();
    for (std::size_t i = first; i < last; ++i) {
        const Event& e = events[i];
        if (!alert.entities.contains(e.src) && !alert.entities.contains(e.dst)) continue;
        sub.event_indexes.push_back(i);
        sub.events.push_back(e);
        sub.nodes.insert(e.src);
        sub.nodes.insert(e.dst);
    }
    return sub;
}

WindowStats calibrate(const TgnModel& model, const TemporalGraph& graph, const TrainingSplit& split) {
    const auto [first, last] = graph.window_range(split.train_end, std::max(split.validation_end, split.train_end + 1));
    const auto contexts = evaluate_stream(model, graph, std::max(first, first_unseen_index(model, graph)), last);
    std::vector<double> losses;
    losses.reserve(contexts.size());
    for (const auto& c : contexts) losses.push_back(c.loss);
    return compute_threshold(losses);
}

DetectionResult detect(const TgnModel& model, const TemporalGraph& graph, const WindowStats& stats,
                       const DetectorConfig& config) {
    config.validate();
    DetectionResult out;
    out.stats = stats;
    const std::size_t first = first_unseen_index(model, graph);
    out.evaluated = evaluate_stream(model, graph, first, graph.num_events());
    if (out.evaluated.empty()) return out;
    const auto windows = tile_windows(out.evaluated.front().target.timestamp,
                                      out.evaluated.back().target.timestamp + 1, config.window_length);
    out.verdicts.reserve(windows.size());
    for (const auto& w : windows) out.verdicts.push_back(score_window(out.evaluated, w, stats, config));
    out.alerts = link_queues(out.verdicts, config);
    return out;
}

json to_json(const WindowStats& s) { return {{"mu", s.mu}, {"sigma", s.sigma}, {"threshold", s.threshold}}; }

json to_json(const Alert& a) {
    json windows = json::array();
    for (const auto& w : a.windows) windows.push_back({w.t0, w.t1});
    return {{"t_start", a.t_start},
            {"t_end", a.t_end},
            {"windows", std::move(windows)},
            {"entities", std::vector<NodeId>(a.entities.begin(), a.entities.end())},
            {"queue_score", a.queue_score},
            {"raised", a.raised}};
}

Alert alert_from_json(const json& doc) {
    try {
        Alert a;
        a.t_start = doc.at("t_start").get<Timestamp>();
        a.t_end = doc.at("t_end").get<Timestamp>();
        for (const auto& w : doc.at("windows")) a.windows.push_back({w.at(0).get<Timestamp>(), w.at(1).get<Timestamp>()});
        for (const auto& n : doc.at("entities")) a.entities.insert(n.get<NodeId>());
        a.queue_score = doc.at("queue_score").get<double>();
        a.raised = doc.value("raised", true);
        return a;
    } catch (const json::exception& e) {
        throw FormatError(std::string("alert record: ") + e.what());
    }
}

json detector_config_to_json(const DetectorConfig& c) {
    return {{"min_suspicious_nodes", c.min_suspicious_nodes},
            {"window_budget", std::isfinite(c.window_budget) ? json(c.window_budget) : json(nullptr)},
            {"alert_threshold", c.alert_threshold}};
}

DetectorConfig detector_config_from_json(const json& doc) {
    DetectorConfig c;
    c.min_suspicious_nodes = doc.value("min_suspicious_nodes", c.min_suspicious_nodes);
    if (doc.contains("window_budget") && !doc.at("window_budget").is_null()) {
        c.window_budget = doc.at("window_budget").get<double>();
    }
    c.alert_threshold = doc.value("alert_threshold", c.alert_threshold);
    c.validate();
    return c;
}

} // namespace provlens
