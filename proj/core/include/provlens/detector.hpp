#pragma once

#include <limits>
#include <map>
#include <set>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "provlens/graph.hpp"
#include "provlens/model.hpp"

namespace provlens {

/// Half-open interval [t0, t1).
struct TimeWindow {
    Timestamp t0 = 0;
    Timestamp t1 = 0;

    bool contains(Timestamp t) const { return t >= t0 && t < t1; }
    auto operator<=>(const TimeWindow&) const = default;
};

/// Windows of `length` aligned to multiples of `length` since the epoch,
/// covering every timestamp in [begin, end).
std::vector<TimeWindow> tile_windows(Timestamp begin, Timestamp end, Timestamp length);

struct WindowStats {
    double mu = 0.0;
    double sigma = 0.0;
    double threshold = 0.0;

    bool operator==(const WindowStats&) const = default;
};

/// mu + 1.5 sigma with the population standard deviation.
/// Throws ArgumentError for fewer than two losses.
WindowStats compute_threshold(std::span<const double> benign_losses);

struct DetectorConfig {
    Timestamp window_length = 15 * kNanosPerMinute;
    /// A window is anomalous when at least this many nodes are suspicious...
    std::size_t min_suspicious_nodes = 1;
    /// ...or when its flagged loss exceeds this budget.
    double window_budget = std::numeric_limits<double>::infinity();
    /// A queue raises an alert when its score reaches this many nats.
    double alert_threshold = 5.0;

    void validate() const;
};

struct WindowVerdict {
    TimeWindow window;
    std::size_t event_count = 0;
    std::vector<std::size_t> high_loss_events;
    /// Cumulative loss of flagged events per incident node.
    std::map<NodeId, double> node_scores;
    /// Nodes with node_score above the threshold, ascending id.
    std::vector<NodeId> suspicious_nodes;
    double flagged_loss = 0.0;
    bool anomalous = false;

    bool operator==(const WindowVerdict&) const = default;
};

/// Verdict for `window` from already evaluated contexts (any order; those
/// outside the window are ignored). An event is flagged iff loss > threshold.
WindowVerdict score_window(std::span<const EventContext> evaluated, TimeWindow window,
                           const WindowStats& stats, const DetectorConfig& config = {});

/// Replays the model from its snapshot and scores the window's events. Events
/// before the snapshot time are not scored.
WindowVerdict score_window(const TgnModel& model, const TemporalGraph& graph, TimeWindow window,
                           const WindowStats& stats, const DetectorConfig& config = {});

struct Alert {
    std::vector<TimeWindow> windows;
    Timestamp t_start = 0;
    Timestamp t_end = 0; ///< exclusive
    double queue_score = 0.0;
    std::set<NodeId> entities;
    bool raised = false;

    bool operator==(const Alert&) const = default;
};

/// Groups maximal runs of consecutive anomalous windows whose neighbours share
/// a node with a positive score. Every queue is returned; `raised` marks the
/// ones reaching the alert threshold.
std::vector<Alert> link_queues(std::span<const WindowVerdict> verdicts, const DetectorConfig& config = {});

struct AttackSubgraph {
    std::set<NodeId> nodes;
    std::vector<std::size_t> event_indexes;
    std::vector<Event> events;
};

/// Events in [t_start, t_end) touching an alert entity, plus their endpoints.
AttackSubgraph reconstruct_subgraph(const Alert& alert, const TemporalGraph& graph);

/// Benign statistics from the model's scores on [split.train_end, split.validation_end).
WindowStats calibrate(const TgnModel& model, const TemporalGraph& graph, const TrainingSplit& split);

struct DetectionResult {
    WindowStats stats;
    std::vector<EventContext> evaluated;
    std::vector<WindowVerdict> verdicts;
    std::vector<Alert> alerts;
};

/// Scores every event after the snapshot, tiles windows over them, and links
/// anomalous windows into queues.
DetectionResult detect(const TgnModel& model, const TemporalGraph& graph, const WindowStats& stats,
                       const DetectorConfig& config = {});

nlohmann::json to_json(const WindowStats& stats);
nlohmann::json to_json(const Alert& alert);
Alert alert_from_json(const nlohmann::json& doc);

/// The window length is not part of this block; it follows the pipeline's
/// window_minutes.
nlohmann::json detector_config_to_json(const DetectorConfig& config);
DetectorConfig detector_config_from_json(const nlohmann::json& doc);

} // namespace provlens
