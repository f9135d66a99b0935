#include "provlens/gnn_explainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dense.hpp"
#include "provlens/error.hpp"

namespace provlens {

void GnnExplainerConfig::validate() const {
    if (epochs <= 0 || !(learning_rate > 0.0) || top_k == 0 || !(sparsity_weight > 0.0) ||
        !(entropy_weight > 0.0)) {
        throw ArgumentError("gnn explainer epochs, learning rate, top_k and weights must be positive");
    }
}

std::vector<std::size_t> top_positions(std::span<const double> importance, std::size_t k) {
    std::vector<std::size_t> order(importance.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return importance[a] > importance[b]; });
    order.resize(std::min(k, order.size()));
    return order;
}

FidelityMetrics fidelity(const MaskedEvaluator& eval, std::span<const std::size_t> edge_subset,
                         FidelityConvention convention) {
    const std::size_t n = eval.num_edges();
    std::vector<double> removed(n, 1.0), kept(n, 0.0);
    for (std::size_t pos : edge_subset) {
        if (pos >= n) {
            throw ArgumentError("edge position " + std::to_string(pos) + " outside neighborhood of size " +
                                std::to_string(n));
        }
        removed[pos] = 0.0;
        kept[pos] = 1.0;
    }
    const Relation y = eval.target();
    if (convention == FidelityConvention::TrueRelation) {
        const double p_orig = std::exp(eval.forward(eval.ones()).log_prob(y));
        const double p_removed = std::exp(eval.forward(removed).log_prob(y));
        const double p_kept = std::exp(eval.forward(kept).log_prob(y));
        return {p_orig - p_removed, p_orig - p_kept};
    }
    const double l_orig = -eval.forward(eval.ones()).log_prob(y);
    if (!(l_orig > 0.0)) return {0.0, 0.0};
    const double l_removed = -eval.forward(removed).log_prob(y);
    const double l_kept = -eval.forward(kept).log_prob(y);
    // 1 - x/x is exactly 0, which keeps the identity anchors exact.
    return {std::clamp(1.0 - l_removed / l_orig, -1.0, 1.0), std::clamp(1.0 - l_kept / l_orig, -1.0, 1.0)};
}

FidelityMetrics fidelity(const TgnModel& model, const EventContext& ctx, std::span<const std::size_t> edge_subset,
                         FidelityConvention convention) {
    return fidelity(MaskedEvaluator(model, ctx), edge_subset, convention);
}

double gnn_objective(const MaskedEvaluator& eval, std::span<const double> logits, const GnnExplainerConfig& config,
                     std::vector<double>* grad) {
    const std::size_t n = logits.size();
    std::vector<double> m(n);
    for (std::size_t i = 0; i < n; ++i) m[i] = dense::sigmoid(logits[i]);
    const Logits lg = eval.forward(m);
    const Relation y = eval.target();
    double obj = -lg.log_complement(y);
    for (std::size_t i = 0; i < n; ++i) {
        obj += config.sparsity_weight * m[i] + config.entropy_weight * binary_entropy(m[i]);
    }
    if (grad) {
        // d/dz of -log sum_{k != y} p_k: p - softmax restricted to k != y.
        const RelationVector p = lg.probabilities();
        const std::size_t yi = index_of(y);
        const double rest = lg.log_complement(y) + lg.log_norm;
        RelationVector dz{};
        for (std::size_t k = 0; k < kNumRelations; ++k) {
            dz[k] = p[k] - (k == yi ? 0.0 : std::exp(lg.values[k] - rest));
        }
        const auto dm = eval.backward(m, dz);
        grad->resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double s = m[i] * (1.0 - m[i]);
            (*grad)[i] = (dm[i] + config.sparsity_weight - config.entropy_weight * logits[i]) * s;
        }
    }
    return obj;
}

std::optional<EventExplanation> gnn_explain_event(const TgnModel& model, const EventContext& ctx,
                                                  const GnnExplainerConfig& config) {
    config.validate();
    if (ctx.neighborhood.empty()) return std::nullopt;
    const MaskedEvaluator eval(model, ctx);

    std::vector<double> logits(eval.num_edges(), 0.0), grad;
    std::vector<double> best = logits;
    EventExplanation out;
    out.event_index = ctx.target_index;
    double best_obj = gnn_objective(eval, logits, config, &grad);
    out.mask.initial_objective = best_obj;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        for (std::size_t i = 0; i < logits.size(); ++i) logits[i] -= config.learning_rate * grad[i];
        const double obj = gnn_objective(eval, logits, config, &grad);
        if (obj < best_obj) {
            best_obj = obj;
            best = logits;
            out.mask.best_epoch = epoch;
        }
    }
    out.mask.objective = best_obj;
    out.mask.values.resize(best.size());
    for (std::size_t i = 0; i < best.size(); ++i) out.mask.values[i] = dense::sigmoid(best[i]);

    const auto top = top_positions(out.mask.values, config.top_k);
    for (std::size_t pos : top) out.top_edges.push_back({key_of(ctx.neighborhood[pos]), pos, out.mask.values[pos]});
    out.fidelity = fidelity(eval, top, config.fidelity);
    return out;
}

} // namespace provlens
