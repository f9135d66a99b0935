#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "provlens/graph.hpp"
#include "provlens/model.hpp"

namespace provlens {

/// Logistic-normal mask posterior: m = sigmoid(mu + eps * exp(log_var / 2)).
struct VariationalMaskParams {
    std::vector<double> mu;
    std::vector<double> log_var;

    std::size_t size() const { return mu.size(); }
    bool operator==(const VariationalMaskParams&) const = default;
};

struct VatgConfig {
    double lambda_kl = 1e-3;
    double lambda_sp = 1e-3;
    int mc_samples = 8;
    int epochs = 150;
    double learning_rate = 0.01;
    std::size_t sparsity_top_k = 5;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const VatgConfig&) const = default;
};

/// Throws ArgumentError when |epsilon| != |params|.
std::vector<double> sample_mask(const VariationalMaskParams& params, std::span<const double> epsilon);

/// KL(N(mu, sigma^2) || N(0, 1)) summed over edges.
double kl_term(const VariationalMaskParams& params);

/// Sum of the `k` largest sigmoid(mu).
double sparsity_term(const VariationalMaskParams& params, std::size_t k);

struct VatgGradient {
    std::vector<double> mu;
    std::vector<double> log_var;
};

/// Objective at fixed noise: `epsilon` holds S rows of |params| draws.
/// Mean masked cross-entropy against the true relation + lambda_kl * KL +
/// lambda_sp * sparsity.
double vatg_objective(const MaskedEvaluator& eval, const VariationalMaskParams& params,
                      std::span<const std::vector<double>> epsilon, const VatgConfig& config,
                      VatgGradient* grad = nullptr);

/// Same objective with config.mc_samples fresh draws from `rng`.
double vatg_loss(const TgnModel& model, const EventContext& ctx, const VariationalMaskParams& params,
                 const VatgConfig& config, std::mt19937_64& rng);

struct VatgExplanation {
    std::size_t event_index = 0;
    VariationalMaskParams params;
    std::vector<double> importance; ///< sigmoid(mu)
    std::vector<double> trace;      ///< objective per epoch, starting with the initial point
    int best_epoch = 0;

    bool operator==(const VatgExplanation&) const = default;
};

/// Random stream for one event, derived from (seed, event index) only.
std::mt19937_64 event_stream(std::uint64_t seed, std::size_t event_index);

/// Gradient descent on (mu, log_var) from the prior (0, 0), with fresh noise
/// every epoch; returns the best observed iterate. Returns std::nullopt for an
/// empty neighborhood and throws DivergenceError on a non-finite objective.
std::optional<VatgExplanation> vatg_explain_event(const TgnModel& model, const EventContext& ctx,
                                                  const VatgConfig& config = {});

struct NodeAggregateEdge {
    EdgeKey edge;
    double mean = 0.0;
    double var = 0.0;
    std::size_t count = 0;

    bool operator==(const NodeAggregateEdge&) const = default;
};

struct NodeAggregate {
    /// Descending mean; ties by edge key.
    std::vector<NodeAggregateEdge> edges;

    bool operator==(const NodeAggregate&) const = default;
};

struct ExplainedContext {
    const EventContext* ctx = nullptr;
    const VatgExplanation* explanation = nullptr;
};

/// Mean and population variance of importance per canonical edge across a
/// node's events. Throws ArgumentError on empty input.
NodeAggregate vatg_aggregate_node(std::span<const ExplainedContext> explanations);

} // namespace provlens
