#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <utility>

namespace provlens::testing {

NodeId GraphBuilder::node(NodeKind kind, const std::string& label) {
    const NodeId id = next_++;
    graph.add_node({id, kind, label});
    return id;
}

void GraphBuilder::event(NodeId src, NodeId dst, Relation rel, std::int64_t seconds) {
    graph.append_event({src, dst, rel, seconds * kNanosPerSecond});
}

TemporalGraph random_graph(std::uint64_t seed, std::size_t nodes, std::size_t events) {
    std::mt19937_64 rng(seed);
    TemporalGraph g;
    for (std::size_t i = 0; i < nodes; ++i) {
        g.add_node({static_cast<NodeId>(i), static_cast<NodeKind>(i % kNumNodeKinds), "n" + std::to_string(i)});
    }
    std::uniform_int_distribution<std::size_t> pick(0, nodes - 1);
    std::uniform_int_distribution<std::size_t> rel(0, kNumRelations - 1);
    for (std::size_t i = 0; i < events; ++i) {
        const auto s = static_cast<NodeId>(pick(rng));
        auto d = static_cast<NodeId>(pick(rng));
        if (d == s) d = static_cast<NodeId>((static_cast<std::size_t>(d) + 1) % nodes);
        g.append_event({s, d, kAllRelations[rel(rng)], static_cast<Timestamp>(i + 1) * kNanosPerSecond});
    }
    return g;
}

ModelConfig small_model_config(std::uint64_t seed) {
    ModelConfig c;
    c.memory_dim = 8;
    c.time_dim = 4;
    c.embed_dim = 8;
    c.seed = seed;
    c.context.horizon = 5;
    return c;
}

std::vector<EventContext> random_contexts(const TgnModel& model, std::uint64_t seed, std::size_t count,
                                          std::size_t max_edges) {
    std::vector<EventContext> out;
    for (std::uint64_t round = 0; out.size() < count && round < 50; ++round) {
        const TemporalGraph g = random_graph(seed * 7919 + round, 12, 120);
        for (auto& c : evaluate_stream(model, g, 0, g.num_events())) {
            if (c.neighborhood.empty() || c.neighborhood.size() > max_edges) continue;
            out.push_back(std::move(c));
            if (out.size() == count) break;
        }
    }
    if (out.size() < count) throw std::runtime_error("random_contexts: not enough contexts");
    return out;
}

std::vector<double> finite_difference(const std::function<double(std::span<const double>)>& f,
                                      std::vector<double> x, double step) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double x0 = x[i];
        x[i] = x0 + step;
        const double up = f(x);
        x[i] = x0 - step;
        const double down = f(x);
        x[i] = x0;
        g[i] = (up - down) / (2.0 * step);
    }
    return g;
}

double max_relative_error(std::span<const double> a, std::span<const double> b, double floor) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
    }
    return worst;
}

const Alert& ScenarioRun::raised_alert() const {
    for (const auto& a : det.alerts) {
        if (a.raised) return a;
    }
    throw std::runtime_error("default scenario raised no alert");
}

std::size_t ScenarioRun::execute_index() const {
    const auto events = ds.graph.events();
    for (std::size_t i = 0; i < events.size(); ++i) {
        if (ds.labels[i] == TruthLabel::Malicious && events[i].relation == Relation::Execute) return i;
    }
    throw std::runtime_error("no injected EXECUTE event");
}

const EventContext& ScenarioRun::evaluated(std::size_t event_index) const {
    for (const auto& c : det.evaluated) {
        if (c.target_index == event_index) return c;
    }
    throw std::runtime_error("event " + std::to_string(event_index) + " was not evaluated");
}

std::vector<std::size_t> ScenarioRun::malicious_indexes() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < ds.labels.size(); ++i) {
        if (ds.labels[i] == TruthLabel::Malicious) out.push_back(i);
    }
    return out;
}

TimeWindow ScenarioRun::attack_window() const {
    const Timestamp t = ds.attack_interval->first;
    for (const auto& v : det.verdicts) {
        if (v.window.contains(t)) return v.window;
    }
    throw std::runtime_error("attack lies outside every scored window");
}

const ScenarioRun& default_run() {
    static const ScenarioRun run = [] {
        LabeledDataset ds = generate_scenario(default_scenario_spec());
        TrainedModel tm = train(ds, ModelConfig{});
        ScenarioRun r{std::move(ds), std::move(tm), {}, {}};
        r.stats = calibrate(r.tm.model, r.ds.graph, default_split(r.ds));
        r.det = detect(r.tm.model, r.ds.graph, r.stats);
        return r;
    }();
    return run;
}

const PipelineResult& default_explanations() {
    static const PipelineResult result = [] {
        const auto& run = default_run();
        return run_pipeline(run.tm.model, run.ds.graph, run.raised_alert(), run.stats);
    }();
    return result;
}

} // namespace provlens::testing
