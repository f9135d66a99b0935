#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "provlens/error.hpp"
#include "provlens/gnn_explainer.hpp"
#include "support.hpp"

namespace provlens {
namespace {

using testing::random_contexts;
using testing::small_model_config;

std::vector<std::size_t> all_positions(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

TEST(GnnObjective, GradientMatchesFiniteDifference) {
    const TgnModel model(small_model_config());
    const GnnExplainerConfig config{.sparsity_weight = 0.05, .entropy_weight = 0.02};
    for (const auto& ctx : random_contexts(model, 21, 10, 8)) {
        const MaskedEvaluator eval(model, ctx);
        std::vector<double> logits(ctx.neighborhood.size());
        for (std::size_t i = 0; i < logits.size(); ++i) logits[i] = 0.4 - 0.25 * static_cast<double>(i % 4);
        std::vector<double> grad;
        gnn_objective(eval, logits, config, &grad);
        const auto fd = testing::finite_difference(
            [&](std::span<const double> x) { return gnn_objective(eval, x, config); }, logits, 1e-5);
        EXPECT_LT(testing::max_relative_error(grad, fd, 1e-6), 1e-4);
    }
}

TEST(Fidelity, IdentityAnchorsAreExact) {
    const TgnModel model(small_model_config());
    for (const auto convention : {FidelityConvention::RelativeAnomaly, FidelityConvention::TrueRelation}) {
        for (const auto& ctx : random_contexts(model, 22, 20, 10)) {
            const auto all = all_positions(ctx.neighborhood.size());
            EXPECT_EQ(fidelity(model, ctx, all, convention).sufficiency, 0.0);
            EXPECT_EQ(fidelity(model, ctx, std::span<const std::size_t>{}, convention).comprehensiveness, 0.0);
        }
    }
}

TEST(Fidelity, SingleEdgeCollapsesToEmptyNeighborhood) {
    const TgnModel model(small_model_config());
    int checked = 0;
    for (const auto& ctx : random_contexts(model, 23, 60, 1)) {
        const std::size_t only[] = {0};
        const auto f = fidelity(model, ctx, only);
        const double full = model.masked_forward(ctx, std::vector<double>{1.0}).loss.loss;
        const double none = model.masked_forward(ctx, std::vector<double>{0.0}).loss.loss;
        EXPECT_EQ(f.sufficiency, 0.0);
        EXPECT_NEAR(f.comprehensiveness, std::clamp(1.0 - none / full, -1.0, 1.0), 1e-12);
        ++checked;
    }
    EXPECT_GT(checked, 3);
}

TEST(Fidelity, MatchesDirectMaskedForward) {
    const TgnModel model(small_model_config());
    for (const auto& ctx : random_contexts(model, 24, 10, 10)) {
        const std::size_t n = ctx.neighborhood.size();
        const std::vector<std::size_t> subset = {0, n - 1};
        std::vector<double> removed(n, 1.0), kept(n, 0.0);
        for (auto p : subset) removed[p] = 0.0, kept[p] = 1.0;
        const double full = model.masked_forward(ctx, std::vector<double>(n, 1.0)).loss.loss;
        const double l_removed = model.masked_forward(ctx, removed).loss.loss;
        const double l_kept = model.masked_forward(ctx, kept).loss.loss;
        const auto f = fidelity(model, ctx, subset);
        EXPECT_NEAR(f.comprehensiveness, std::clamp(1.0 - l_removed / full, -1.0, 1.0), 1e-9);
        EXPECT_NEAR(f.sufficiency, std::clamp(1.0 - l_kept / full, -1.0, 1.0), 1e-9);

        const auto p = [&](std::span<const double> m) {
            return model.masked_forward(ctx, m).prediction.probabilities[index_of(ctx.target.relation)];
        };
        const auto t = fidelity(model, ctx, subset, FidelityConvention::TrueRelation);
        EXPECT_NEAR(t.comprehensiveness, p(std::vector<double>(n, 1.0)) - p(removed), 1e-9);
        EXPECT_NEAR(t.sufficiency, p(std::vector<double>(n, 1.0)) - p(kept), 1e-9);
    }
}

TEST(Fidelity, BoundedAndRejectsBadPositions) {
    const TgnModel model(small_model_config());
    for (const auto& ctx : random_contexts(model, 25, 20, 10)) {
        const std::size_t first[] = {0};
        for (const auto convention : {FidelityConvention::RelativeAnomaly, FidelityConvention::TrueRelation}) {
            const auto f = fidelity(model, ctx, first, convention);
            EXPECT_GE(f.comprehensiveness, -1.0);
            EXPECT_LE(f.comprehensiveness, 1.0);
            EXPECT_GE(f.sufficiency, -1.0);
            EXPECT_LE(f.sufficiency, 1.0);
        }
        const std::size_t bad[] = {ctx.neighborhood.size()};
        EXPECT_THROW(fidelity(model, ctx, bad), ArgumentError);
    }
}

TEST(TopPositions, TiesGoToLowerPosition) {
    const double imp[] = {0.2, 0.9, 0.5, 0.9, 0.5};
    EXPECT_EQ(top_positions(imp, 3), (std::vector<std::size_t>{1, 3, 2}));
    EXPECT_EQ(top_positions(imp, 10).size(), 5u);
    EXPECT_TRUE(top_positions({}, 3).empty());
}

TEST(GnnExplainer, ExplanationIsConsistent) {
    const TgnModel model(small_model_config());
    for (const auto& ctx : random_contexts(model, 26, 8, 10)) {
        const auto ex = gnn_explain_event(model, ctx);
        ASSERT_TRUE(ex.has_value());
        EXPECT_EQ(ex->event_index, ctx.target_index);
        EXPECT_LE(ex->mask.objective, ex->mask.initial_objective);
        ASSERT_EQ(ex->top_edges.size(), std::min<std::size_t>(3, ctx.neighborhood.size()));
        const auto expected = top_positions(ex->mask.values, 3);
        std::vector<std::size_t> positions;
        for (const auto& e : ex->top_edges) {
            positions.push_back(e.position);
            EXPECT_EQ(e.edge, key_of(ctx.neighborhood[e.position]));
            EXPECT_EQ(e.importance, ex->mask.values[e.position]);
        }
        EXPECT_EQ(positions, expected);
        EXPECT_EQ(ex->fidelity, fidelity(model, ctx, positions));
        EXPECT_EQ(ex, gnn_explain_event(model, ctx));
    }
}

TEST(GnnExplainer, EmptyNeighborhoodAndBadConfig) {
    const TgnModel model(small_model_config());
    auto ctx = random_contexts(model, 27, 1, 10).front();
    EXPECT_THROW(gnn_explain_event(model, ctx, GnnExplainerConfig{.top_k = 0}), ArgumentError);
    ctx.neighborhood.clear();
    ctx.neighborhood_index.clear();
    EXPECT_FALSE(gnn_explain_event(model, ctx).has_value());
}

// Exhaustive search over every non-empty subset; ties go to the smaller one.
std::vector<std::size_t> best_subset(const MaskedEvaluator& eval) {
    const std::size_t n = eval.num_edges();
    std::vector<std::size_t> best;
    double best_comp = -2.0;
    for (unsigned bits = 1; bits < (1u << n); ++bits) {
        std::vector<std::size_t> subset;
        for (std::size_t i = 0; i < n; ++i) {
            if (bits >> i & 1u) subset.push_back(i);
        }
        const double c = fidelity(eval, subset).comprehensiveness;
        if (c > best_comp + 1e-12 || (std::abs(c - best_comp) <= 1e-12 && subset.size() < best.size())) {
            best_comp = c;
            best = subset;
        }
    }
    return best;
}

TEST(GnnExplainer, TopEdgesOverlapExhaustiveOptimum) {
    const TgnModel model(small_model_config());
    int hits = 0;
    const auto contexts = random_contexts(model, 28, 10, 10);
    for (const auto& ctx : contexts) {
        const auto ex = gnn_explain_event(model, ctx);
        const auto best = best_subset(MaskedEvaluator(model, ctx));
        bool shared = false;
        for (const auto& e : ex->top_edges) shared |= std::find(best.begin(), best.end(), e.position) != best.end();
        hits += shared;
    }
    EXPECT_GE(hits, 8);
}

TEST(GnnScenario, FlaggedAttackEventsLoseTheirAnomalyWithoutTheExplanation) {
    const auto& run = testing::default_run();
    const auto execute = run.execute_index();
    int checked = 0;
    for (auto idx : run.malicious_indexes()) {
        const auto& ctx = run.evaluated(idx);
        if (idx == execute || !(ctx.loss > run.stats.threshold)) continue;
        const auto ex = gnn_explain_event(run.tm.model, ctx);
        ASSERT_TRUE(ex.has_value());
        EXPECT_GT(ex->fidelity.comprehensiveness, 0.5) << "event " << idx;
        ++checked;
    }
    EXPECT_GE(checked, 2);
}

TEST(GnnScenario, ExfiltrationIsExplainedByTheExecution) {
    const auto& run = testing::default_run();
    const auto events = run.ds.graph.events();
    const auto execute = key_of(events[run.execute_index()]);
    for (auto idx : run.malicious_indexes()) {
        if (events[idx].relation != Relation::Send) continue;
        const auto ex = gnn_explain_event(run.tm.model, run.evaluated(idx));
        ASSERT_TRUE(ex.has_value());
        EXPECT_EQ(ex->top_edges.front().edge, execute);
        return;
    }
    FAIL() << "no malicious SEND event";
}

} // namespace
} // namespace provlens
