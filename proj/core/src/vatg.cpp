#include "provlens/vatg.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "dense.hpp"
#include "provlens/error.hpp"

namespace provlens {

void VatgConfig::validate() const {
    if (!(lambda_kl > 0.0) || !(lambda_sp > 0.0) || mc_samples < 1 || epochs <= 0 || !(learning_rate > 0.0) ||
        sparsity_top_k == 0) {
        throw ArgumentError("vatg weights, samples, epochs, learning rate and top-k must be positive");
    }
}

std::vector<double> sample_mask(const VariationalMaskParams& params, std::span<const double> epsilon) {
    if (epsilon.size() != params.size() || params.log_var.size() != params.size()) {
        throw ArgumentError("noise has " + std::to_string(epsilon.size()) + " draws for " +
                            std::to_string(params.size()) + " edges");
    }
    std::vector<double> m(params.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
        m[i] = dense::sigmoid(params.mu[i] + epsilon[i] * std::exp(0.5 * params.log_var[i]));
    }
    return m;
}

double kl_term(const VariationalMaskParams& params) {
    double kl = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double mu = params.mu[i];
        const double lv = params.log_var[i];
        kl += 0.5 * (mu * mu + std::expm1(lv) - lv);
    }
    return kl;
}

namespace {

std::vector<std::size_t> largest_means(const VariationalMaskParams& params, std::size_t k) {
    std::vector<std::size_t> order(params.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return params.mu[a] > params.mu[b]; });
    order.resize(std::min(k, order.size()));
    return order;
}

} // namespace

double sparsity_term(const VariationalMaskParams& params, std::size_t k) {
    double s = 0.0;
    for (std::size_t i : largest_means(params, k)) s += dense::sigmoid(params.mu[i]);
    return s;
}

double vatg_objective(const MaskedEvaluator& eval, const VariationalMaskParams& params,
                      std::span<const std::vector<double>> epsilon, const VatgConfig& config, VatgGradient* grad) {
    if (epsilon.empty()) throw ArgumentError("vatg objective needs at least one noise sample");
    const std::size_t n = params.size();
    const double inv_s = 1.0 / static_cast<double>(epsilon.size());
    if (grad) {
        grad->mu.assign(n, 0.0);
        grad->log_var.assign(n, 0.0);
    }
    double ce = 0.0;
    for (const auto& eps : epsilon) {
        const auto m = sample_mask(params, eps);
        std::vector<double> dm;
        ce += eval.cross_entropy(m, grad ? &dm : nullptr);
        if (!grad) continue;
        for (std::size_t i = 0; i < n; ++i) {
            const double g = dm[i] * m[i] * (1.0 - m[i]) * inv_s;
            grad->mu[i] += g;
            grad->log_var[i] += g * eps[i] * 0.5 * std::exp(0.5 * params.log_var[i]);
        }
    }
    ce *= inv_s;

    const auto top = largest_means(params, config.sparsity_top_k);
    double omega = 0.0;
    for (std::size_t i : top) omega += dense::sigmoid(params.mu[i]);
    if (grad) {
        for (std::size_t i = 0; i < n; ++i) {
            grad->mu[i] += config.lambda_kl * params.mu[i];
            grad->log_var[i] += config.lambda_kl * 0.5 * std::expm1(params.log_var[i]);
        }
        for (std::size_t i : top) {
            const double s = dense::sigmoid(params.mu[i]);
            grad->mu[i] += config.lambda_sp * s * (1.0 - s);
        }
    }
    return ce + config.lambda_kl * kl_term(params) + config.lambda_sp * omega;
}

namespace {

std::vector<std::vector<double>> draw_noise(std::mt19937_64& rng, int samples, std::size_t n) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::vector<double>> eps(static_cast<std::size_t>(samples), std::vector<double>(n));
    for (auto& row : eps) {
        for (double& e : row) e = normal(rng);
    }
    return eps;
}

} // namespace

double vatg_loss(const TgnModel& model, const EventContext& ctx, const VariationalMaskParams& params,
                 const VatgConfig& config, std::mt19937_64& rng) {
    config.validate();
    if (ctx.neighborhood.empty()) throw ArgumentError("vatg loss needs a non-empty neighborhood");
    if (params.size() != ctx.neighborhood.size() || params.log_var.size() != params.size()) {
        throw ArgumentError("variational parameters do not match the neighborhood");
    }
    const MaskedEvaluator eval(model, ctx);
    const auto eps = draw_noise(rng, config.mc_samples, params.size());
    return vatg_objective(eval, params, eps, config);
}

std::mt19937_64 event_stream(std::uint64_t seed, std::size_t event_index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(event_index),
                      static_cast<std::uint32_t>(static_cast<std::uint64_t>(event_index) >> 32)};
    return std::mt19937_64(seq);
}

std::optional<VatgExplanation> vatg_explain_event(const TgnModel& model, const EventContext& ctx,
                                                  const VatgConfig& config) {
    config.validate();
    if (ctx.neighborhood.empty()) return std::nullopt;
    const MaskedEvaluator eval(model, ctx);
    const std::size_t n = eval.num_edges();
    auto rng = event_stream(config.seed, ctx.target_index);

    VatgExplanation out;
    out.event_index = ctx.target_index;
    VariationalMaskParams params{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
    VariationalMaskParams best = params;
    double best_obj = std::numeric_limits<double>::infinity();
    VatgGradient grad;
    for (int epoch = 0; epoch <= config.epochs; ++epoch) {
        const auto eps = draw_noise(rng, config.mc_samples, n);
        const double obj = vatg_objective(eval, params, eps, config, &grad);
        if (!std::isfinite(obj)) {
            throw DivergenceError("vatg objective diverged at epoch " + std::to_string(epoch) + " for event " +
                                  std::to_string(ctx.target_index));
        }
        out.trace.push_back(obj);
        if (obj < best_obj) {
            best_obj = obj;
            best = params;
            out.best_epoch = epoch;
        }
        if (epoch == config.epochs) break;
        for (std::size_t i = 0; i < n; ++i) {
            params.mu[i] -= config.learning_rate * grad.mu[i];
            params.log_var[i] -= config.learning_rate * grad.log_var[i];
        }
    }
    out.params = std::move(best);
    out.importance.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.importance[i] = dense::sigmoid(out.params.mu[i]);
    return out;
}

NodeAggregate vatg_aggregate_node(std::span<const ExplainedContext> explanations) {
    if (explanations.empty()) throw ArgumentError("vatg aggregate needs at least one explanation");
    std::map<EdgeKey, std::vector<double>> values;
    for (const auto& ec : explanations) {
        if (ec.explanation->importance.size() != ec.ctx->neighborhood.size()) {
            throw ArgumentError("importance length does not match neighborhood of event " +
                                std::to_string(ec.ctx->target_index));
        }
        for (std::size_t i = 0; i < ec.explanation->importance.size(); ++i) {
            values[key_of(ec.ctx->neighborhood[i])].push_back(ec.explanation->importance[i]);
        }
    }
    NodeAggregate out;
    for (const auto& [key, v] : values) {
        const double n = static_cast<double>(v.size());
        const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        const double mean = std::clamp(std::accumulate(v.begin(), v.end(), 0.0) / n, *lo, *hi);
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        out.edges.push_back({key, mean, var / n, v.size()});
    }
    std::stable_sort(out.edges.begin(), out.edges.end(),
                     [](const NodeAggregateEdge& a, const NodeAggregateEdge& b) { return a.mean > b.mean; });
    return out;
}

} // namespace provlens
