#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "provlens/error.hpp"
#include "provlens/model.hpp"
#include "support.hpp"

namespace provlens {
namespace {

using testing::finite_difference;
using testing::max_relative_error;
using testing::random_contexts;
using testing::small_model_config;

LabeledDataset repeated_write(std::size_t n) {
    testing::GraphBuilder b;
    const auto a = b.process("A");
    const auto f = b.file("B");
    for (std::size_t i = 0; i < n; ++i) b.event(a, f, Relation::Write, static_cast<std::int64_t>(i + 1));
    LabeledDataset ds;
    ds.graph = std::move(b.graph);
    ds.labels.assign(n, TruthLabel::Benign);
    return ds;
}

TEST(TgnModel, PredictionsAreNormalized) {
    const TgnModel model(small_model_config());
    for (const auto& ctx : random_contexts(model, 1, 40, 10)) {
        const auto p = model.predict(ctx).probabilities;
        EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-6);
        for (double v : p) EXPECT_GE(v, 0.0);
        EXPECT_GE(model.score_event(ctx).loss, 0.0);
    }
}

TEST(TgnModel, UniformDecoderGivesLogR) {
    TgnModel model(small_model_config());
    for (double& w : model.parameters()) w = 0.0;
    for (const auto& ctx : random_contexts(TgnModel(small_model_config()), 2, 5, 10)) {
        EXPECT_NEAR(model.score_event(ctx).loss, std::log(static_cast<double>(kNumRelations)), 1e-12);
    }
}

TEST(MaskedForward, OnesReproduceScoreEvent) {
    const TgnModel model(small_model_config());
    for (const auto& ctx : random_contexts(model, 3, 50, 10)) {
        const std::vector<double> ones(ctx.neighborhood.size(), 1.0);
        EXPECT_NEAR(model.masked_forward(ctx, ones).loss.loss, model.score_event(ctx).loss, 1e-9);
    }
}

TEST(MaskedForward, EmptyNeighborhoodVacuousMask) {
    const TgnModel model(small_model_config());
    auto ctx = random_contexts(model, 4, 1, 10).front();
    ctx.neighborhood.clear();
    ctx.neighborhood_index.clear();
    EXPECT_EQ(model.masked_forward(ctx, {}).loss.loss, model.score_event(ctx).loss);
}

TEST(MaskedForward, ZeroMaskEqualsEmptyNeighborhood) {
    const TgnModel model(small_model_config());
    for (const auto& ctx : random_contexts(model, 5, 20, 10)) {
        EventContext bare = ctx;
        bare.neighborhood.clear();
        bare.neighborhood_index.clear();
        const std::vector<double> zeros(ctx.neighborhood.size(), 0.0);
        EXPECT_NEAR(model.masked_forward(ctx, zeros).loss.loss, model.score_event(bare).loss, 1e-12);
    }
}

TEST(MaskedForward, RejectsBadMasks) {
    const TgnModel model(small_model_config());
    const auto ctx = random_contexts(model, 6, 1, 10).front();
    std::vector<double> mask(ctx.neighborhood.size() + 1, 0.5);
    EXPECT_THROW(model.masked_forward(ctx, mask), ArgumentError);
    mask.pop_back();
    mask[0] = 1.5;
    EXPECT_THROW(model.masked_forward(ctx, mask), ArgumentError);
    mask[0] = -0.1;
    EXPECT_THROW(model.masked_forward(ctx, mask), ArgumentError);
}

TEST(MaskedEvaluator, CrossEntropyGradientMatchesFiniteDifferences) {
    const TgnModel model(small_model_config());
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    for (const auto& ctx : random_contexts(model, 7, 20, 8)) {
        const MaskedEvaluator eval(model, ctx);
        std::vector<double> mask(ctx.neighborhood.size());
        for (double& m : mask) m = u(rng);
        std::vector<double> grad;
        eval.cross_entropy(mask, &grad);
        const auto fd = finite_difference([&](std::span<const double> m) { return eval.cross_entropy(m); }, mask, 1e-4);
        EXPECT_LT(max_relative_error(grad, fd, 1e-7), 1e-3);
    }
}

TEST(Replay, TouchesExactlyTwoNodes) {
    TgnModel model(small_model_config());
    const TemporalGraph g = testing::random_graph(3, 8, 20);
    for (std::size_t i = 0; i + 1 < g.num_events(); ++i) model.replay_update(g.events()[i]);
    const MemoryStore before = model.memory();
    const Event& e = g.events().back();
    model.replay_update(e);
    std::size_t changed = 0;
    for (const auto& [id, mem] : model.memory()) {
        auto it = before.find(id);
        if (it == before.end() || it->second != mem) {
            ++changed;
            EXPECT_TRUE(id == e.src || id == e.dst);
            EXPECT_EQ(mem.last_update, e.timestamp);
        }
    }
    EXPECT_EQ(changed, 2u);
}

TEST(Replay, DeterministicAndOrdered) {
    const TemporalGraph g = testing::random_graph(4, 8, 200);
    TgnModel a(small_model_config()), b(small_model_config());
    for (const auto& e : g.events()) a.replay_update(e);
    for (const auto& e : g.events()) b.replay_update(e);
    EXPECT_EQ(a.memory(), b.memory());
    a.reset_memory();
    for (const auto& e : g.events()) a.replay_update(e);
    EXPECT_EQ(a.memory(), b.memory());
    EXPECT_THROW(a.replay_update(g.events().front()), OrderingError);
}

TEST(Replay, MemoryStaysFiniteOverLongStreams) {
    TgnModel model(ModelConfig{});
    const TemporalGraph g = testing::random_graph(5, 30, 10'000);
    for (const auto& e : g.events()) model.replay_update(e);
    for (const auto& [id, mem] : model.memory()) {
        for (double v : mem.state) ASSERT_TRUE(std::isfinite(v)) << id;
    }
}

TEST(Train, RepeatedPatternIsLearned) {
    ModelConfig cfg = small_model_config();
    const auto tm = train(repeated_write(300), cfg);
    EXPECT_LT(tm.report.final_mean_loss, 0.1);
    EXPECT_EQ(tm.report.epoch_losses.size(), static_cast<std::size_t>(cfg.epochs));
    EXPECT_TRUE(tm.model.snapshot_time());
}

TEST(Train, SeededDeterminism) {
    const auto ds = repeated_write(120);
    const auto a = train(ds, small_model_config(5));
    const auto b = train(ds, small_model_config(5));
    EXPECT_EQ(a.model, b.model);
    const auto c = train(ds, small_model_config(6));
    EXPECT_NE(a.model.parameters()[0], c.model.parameters()[0]);
}

TEST(Train, EmptyAndDivergent) {
    EXPECT_THROW(train(LabeledDataset{}, small_model_config()), ArgumentError);
    ModelConfig wild = small_model_config();
    wild.learning_rate = 1e300;
    EXPECT_THROW(train(repeated_write(100), wild), DivergenceError);
}

TEST(ModelConfig, Validation) {
    ModelConfig c;
    c.memory_dim = 0;
    EXPECT_THROW(c.validate(), ArgumentError);
    c = {};
    c.learning_rate = 0;
    EXPECT_THROW(c.validate(), ArgumentError);
}

TEST(Checkpoint, RoundTripAndVersion) {
    const auto tm = train(repeated_write(100), small_model_config());
    EXPECT_EQ(model_from_json(model_to_json(tm.model)), tm.model);
    const auto path = std::filesystem::temp_directory_path() / "provlens_model_test.json";
    save_checkpoint(tm.model, path);
    EXPECT_EQ(load_checkpoint(path), tm.model);
    auto doc = model_to_json(tm.model);
    doc["version"] = kCheckpointVersion + 1;
    std::ofstream(path) << doc.dump();
    EXPECT_THROW(load_checkpoint(path), VersionError);
    std::filesystem::remove(path);
    EXPECT_THROW(load_checkpoint(path), NotFoundError);
}

TEST(EvaluateStream, ScoringLeavesModelUntouched) {
    const auto& run = testing::default_run();
    const TgnModel copy = run.tm.model;
    (void)evaluate_stream(run.tm.model, run.ds.graph, first_unseen_index(run.tm.model, run.ds.graph),
                          run.ds.graph.num_events());
    EXPECT_EQ(copy, run.tm.model);
    EXPECT_THROW(evaluate_stream(run.tm.model, run.ds.graph, 0, 10), ArgumentError);
}

TEST(Scenario, AttackExecuteLossAboveBenignMean) {
    const auto& run = testing::default_run();
    const double attack = run.evaluated(run.execute_index()).loss;
    EXPECT_GT(attack, run.stats.mu);
    EXPECT_GT(attack, run.stats.threshold);
}

} // namespace
} // namespace provlens
