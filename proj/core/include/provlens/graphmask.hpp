#pragma once

#include <optional>
#include <span>
#include <vector>

#include "provlens/graph.hpp"
#include "provlens/model.hpp"

namespace provlens {

/// Per-neighborhood-edge importances, aligned with ctx.neighborhood.
struct EdgeMask {
    std::vector<double> values;
    double initial_objective = 0.0;
    double objective = 0.0; ///< objective at the returned iterate
    int best_epoch = 0;     ///< 0 = the initial point

    bool operator==(const EdgeMask&) const = default;
};

struct GraphMaskConfig {
    int epochs = 200;
    double learning_rate = 0.01;
    double sparsity_weight = 1e-3;
    double entropy_weight = 1e-3;

    void validate() const;
    bool operator==(const GraphMaskConfig&) const = default;
};

/// Element-wise binary entropy in nats; 0 at the endpoints.
double binary_entropy(double m);

/// J(m) = |loss(m) - loss(1)| + sparsity * sum(m) + entropy * sum(H(m)) at
/// m = sigmoid(logits), with its gradient with respect to the logits.
double graphmask_objective(const MaskedEvaluator& eval, double original_loss, std::span<const double> logits,
                           const GraphMaskConfig& config, std::vector<double>* grad = nullptr);

/// Plain gradient descent on mask logits from 0. Returns std::nullopt when
/// the neighborhood is empty.
std::optional<EdgeMask> graphmask_explain_event(const TgnModel& model, const EventContext& ctx,
                                                const GraphMaskConfig& config = {});

struct AggregateEdge {
    EdgeKey edge;
    double weight = 0.0;
    std::size_t count = 0;

    bool operator==(const AggregateEdge&) const = default;
};

struct WindowAggregate {
    /// Descending weight; ties by edge key.
    std::vector<AggregateEdge> edges;

    bool operator==(const WindowAggregate&) const = default;
};

struct MaskedContext {
    const EventContext* ctx = nullptr;
    const EdgeMask* mask = nullptr;
};

/// Mean mask value per canonical edge. Throws ArgumentError on empty input or
/// a mask whose length does not match its context.
WindowAggregate graphmask_aggregate(std::span<const MaskedContext> masks);

} // namespace provlens
