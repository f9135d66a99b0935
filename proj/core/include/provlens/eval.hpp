#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "provlens/detector.hpp"
#include "provlens/pipeline.hpp"

namespace provlens {

struct AblationResult {
    std::optional<EdgeKey> removed_edge; ///< nullopt is the NONE baseline
    double graphmask_score = 0.0;
    double score_before = 0.0; ///< flagged loss summed over the alert's windows
    double score_after = 0.0;
    double delta_anomaly_pct = 0.0;
    bool alert_still_raised = false;

    bool operator==(const AblationResult&) const = default;
};

/// Copy of `graph` with every occurrence of `edge` removed.
TemporalGraph without_edge(const TemporalGraph& graph, const EdgeKey& edge);

/// Re-runs detection on a copy of the stream without `edge`, replaying from
/// the model's snapshot with the original threshold. The alert counts as
/// still raised when a raised queue overlaps [t_start, t_end).
/// Throws ArgumentError when `edge` does not occur in the alert's windows.
AblationResult ablate_edge(const TgnModel& model, const TemporalGraph& graph, const Alert& alert,
                           const WindowStats& stats, const DetectorConfig& config, std::optional<EdgeKey> edge,
                           double graphmask_score = 0.0);

/// NONE baseline followed by every edge of the reports' GraphMask aggregates
/// (highest weight first, weight taken as the maximum across windows).
/// `max_edges` = 0 keeps them all.
std::vector<AblationResult> ablation_table(const TgnModel& model, const TemporalGraph& graph, const Alert& alert,
                                           const WindowStats& stats, const DetectorConfig& config,
                                           std::span<const ExplanationReport> reports, std::size_t max_edges = 0);

/// Columns removed_edge, graphmask_score, delta_anomaly_pct, alert_still_raised.
/// Edges are written "src->dst:rel".
std::string ablation_csv(std::span<const AblationResult> rows);

/// Means over every GNNExplainer record in scope. Throws ArgumentError when
/// there is none.
FidelityMetrics fidelity_summary(std::span<const ExplanationReport> reports);
FidelityMetrics fidelity_summary(std::span<const FidelityMetrics> metrics);

enum class ExplainerMethod { GraphMask, GnnExplainer, Vatg };
std::string_view to_string(ExplainerMethod method);

struct RuntimeRow {
    ExplainerMethod method = ExplainerMethod::GraphMask;
    double seconds_per_event = 0.0; ///< median
    std::size_t peak_memory = 0;    ///< bytes, process high-water mark
    std::size_t samples = 0;
};

/// One untimed warm-up on the first context, then every context timed once.
/// Throws ArgumentError for fewer than 5 contexts.
RuntimeRow measure_runtime(const TgnModel& model, std::span<const EventContext> contexts, ExplainerMethod method,
                           const PipelineConfig& config = {});

std::size_t peak_resident_bytes();

} // namespace provlens
