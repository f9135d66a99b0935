#pragma once

#include <optional>
#include <span>
#include <vector>

#include "provlens/graphmask.hpp"

namespace provlens {

/// What "model probability" P means in the fidelity metrics.
enum class FidelityConvention {
    /// P = loss(mask) / loss(all edges): the anomaly score relative to the
    /// unmasked event, so a comprehensiveness of 0.9 means removing the
    /// explanation cuts the anomaly score by 90%. Metrics are clamped to [-1, 1].
    RelativeAnomaly,
    /// P = probability of the event's true relation.
    TrueRelation,
};

struct GnnExplainerConfig {
    int epochs = 300;
    double learning_rate = 0.01;
    std::size_t top_k = 3;
    double sparsity_weight = 1e-3;
    double entropy_weight = 1e-3;
    FidelityConvention fidelity = FidelityConvention::RelativeAnomaly;

    void validate() const;
    bool operator==(const GnnExplainerConfig&) const = default;
};

struct FidelityMetrics {
    double comprehensiveness = 0.0;
    double sufficiency = 0.0;

    bool operator==(const FidelityMetrics&) const = default;
};

struct RankedEdge {
    EdgeKey edge;
    std::size_t position = 0; ///< index into ctx.neighborhood
    double importance = 0.0;

    bool operator==(const RankedEdge&) const = default;
};

struct EventExplanation {
    std::size_t event_index = 0;
    EdgeMask mask;
    std::vector<RankedEdge> top_edges;
    FidelityMetrics fidelity;

    bool operator==(const EventExplanation&) const = default;
};

/// Hard-mask fidelity of `edge_subset` (positions in ctx.neighborhood):
/// removed = all ones with the subset zeroed, kept = only the subset.
/// Throws ArgumentError for an out-of-range position.
FidelityMetrics fidelity(const TgnModel& model, const EventContext& ctx, std::span<const std::size_t> edge_subset,
                         FidelityConvention convention = FidelityConvention::RelativeAnomaly);
FidelityMetrics fidelity(const MaskedEvaluator& eval, std::span<const std::size_t> edge_subset,
                         FidelityConvention convention = FidelityConvention::RelativeAnomaly);

/// -log(1 - p_true(m)) + sparsity * sum(m) + entropy * sum(H(m)) at
/// m = sigmoid(logits): low when the masked graph keeps the event anomalous.
double gnn_objective(const MaskedEvaluator& eval, std::span<const double> logits, const GnnExplainerConfig& config,
                     std::vector<double>* grad = nullptr);

/// Returns std::nullopt when the neighborhood is empty.
std::optional<EventExplanation> gnn_explain_event(const TgnModel& model, const EventContext& ctx,
                                                  const GnnExplainerConfig& config = {});

/// Top `k` positions by descending importance; ties go to the lower position.
std::vector<std::size_t> top_positions(std::span<const double> importance, std::size_t k);

} // namespace provlens
