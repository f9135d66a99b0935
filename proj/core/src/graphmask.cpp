#include "provlens/graphmask.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "dense.hpp"
#include "provlens/error.hpp"

namespace provlens {

void GraphMaskConfig::validate() const {
    if (epochs <= 0 || !(learning_rate > 0.0) || !(sparsity_weight > 0.0) || !(entropy_weight > 0.0)) {
        throw ArgumentError("graphmask epochs, learning rate and weights must be positive");
    }
}

double binary_entropy(double m) {
    if (m <= 0.0 || m >= 1.0) return 0.0;
    return -m * std::log(m) - (1.0 - m) * std::log1p(-m);
}

double graphmask_objective(const MaskedEvaluator& eval, double original_loss, std::span<const double> logits,
                           const GraphMaskConfig& config, std::vector<double>* grad) {
    const std::size_t n = logits.size();
    std::vector<double> m(n);
    for (std::size_t i = 0; i < n; ++i) m[i] = dense::sigmoid(logits[i]);

    const Logits lg = eval.forward(m);
    const double diff = -lg.log_prob(eval.target()) - original_loss;
    double obj = std::abs(diff);
    for (std::size_t i = 0; i < n; ++i) {
        obj += config.sparsity_weight * m[i] + config.entropy_weight * binary_entropy(m[i]);
    }
    if (grad) {
        const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
        std::vector<double> dm(n, 0.0);
        if (sign != 0.0) dm = eval.backward(m, cross_entropy_logit_gradient(lg, eval.target()));
        grad->resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double s = m[i] * (1.0 - m[i]);
            // dH/dm = log((1-m)/m) = -logit
            (*grad)[i] = (sign * dm[i] + config.sparsity_weight - config.entropy_weight * logits[i]) * s;
        }
    }
    return obj;
}

std::optional<EdgeMask> graphmask_explain_event(const TgnModel& model, const EventContext& ctx,
                                                const GraphMaskConfig& config) {
    config.validate();
    if (ctx.neighborhood.empty()) return std::nullopt;
    const MaskedEvaluator eval(model, ctx);
    const double original = eval.cross_entropy(eval.ones());

    std::vector<double> logits(eval.num_edges(), 0.0), grad;
    EdgeMask out;
    std::vector<double> best = logits;
    double best_obj = graphmask_objective(eval, original, logits, config, &grad);
    out.initial_objective = best_obj;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        for (std::size_t i = 0; i < logits.size(); ++i) logits[i] -= config.learning_rate * grad[i];
        const double obj = graphmask_objective(eval, original, logits, config, &grad);
        if (obj < best_obj) {
            best_obj = obj;
            best = logits;
            out.best_epoch = epoch;
        }
    }
    out.objective = best_obj;
    out.values.resize(best.size());
    for (std::size_t i = 0; i < best.size(); ++i) out.values[i] = dense::sigmoid(best[i]);
    return out;
}

WindowAggregate graphmask_aggregate(std::span<const MaskedContext> masks) {
    if (masks.empty()) throw ArgumentError("graphmask aggregate needs at least one mask");
    struct Acc {
        double sum = 0.0;
        double lo = 1.0;
        double hi = 0.0;
        std::size_t count = 0;
    };
    std::map<EdgeKey, Acc> acc;
    for (const auto& mc : masks) {
        if (mc.mask->values.size() != mc.ctx->neighborhood.size()) {
            throw ArgumentError("mask length does not match neighborhood of event " +
                                std::to_string(mc.ctx->target_index));
        }
        for (std::size_t i = 0; i < mc.mask->values.size(); ++i) {
            Acc& a = acc[key_of(mc.ctx->neighborhood[i])];
            const double v = mc.mask->values[i];
            a.sum += v;
            a.lo = std::min(a.lo, v);
            a.hi = std::max(a.hi, v);
            ++a.count;
        }
    }
    WindowAggregate out;
    for (const auto& [key, a] : acc) {
        // Clamp away rounding so the mean never leaves [min, max].
        const double mean = std::clamp(a.sum / static_cast<double>(a.count), a.lo, a.hi);
        out.edges.push_back({key, mean, a.count});
    }
    std::stable_sort(out.edges.begin(), out.edges.end(),
                     [](const AggregateEdge& a, const AggregateEdge& b) { return a.weight > b.weight; });
    return out;
}

} // namespace provlens
