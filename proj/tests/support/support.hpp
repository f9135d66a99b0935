#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "provlens/detector.hpp"
#include "provlens/ingest.hpp"
#include "provlens/model.hpp"
#include "provlens/pipeline.hpp"

namespace provlens::testing {

/// Builds small graphs with readable labels; timestamps in whole seconds.
class GraphBuilder {
public:
    NodeId node(NodeKind kind, const std::string& label);
    NodeId process(const std::string& label) { return node(NodeKind::Process, label); }
    NodeId file(const std::string& label) { return node(NodeKind::File, label); }
    NodeId socket(const std::string& label) { return node(NodeKind::Socket, label); }
    void event(NodeId src, NodeId dst, Relation rel, std::int64_t seconds);

    TemporalGraph graph;

private:
    NodeId next_ = 0;
};

/// Random stream over `nodes` nodes with `events` events one second apart.
TemporalGraph random_graph(std::uint64_t seed, std::size_t nodes, std::size_t events);

/// Evaluated contexts from an untrained model over a random stream, keeping
/// those whose neighborhood has between 1 and `max_edges` edges.
std::vector<EventContext> random_contexts(const TgnModel& model, std::uint64_t seed, std::size_t count,
                                          std::size_t max_edges);

/// An untrained model with a small context horizon, for fast property tests.
ModelConfig small_model_config(std::uint64_t seed = 3);

/// Central finite difference of `f` along every coordinate of `x`.
std::vector<double> finite_difference(const std::function<double(std::span<const double>)>& f,
                                      std::vector<double> x, double step = 1e-5);

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor).
double max_relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-6);

/// Default scenario, trained and run through detection once per process.
struct ScenarioRun {
    LabeledDataset ds;
    TrainedModel tm;
    WindowStats stats;
    DetectionResult det;

    const Alert& raised_alert() const;
    /// Index of the injected EXECUTE event.
    std::size_t execute_index() const;
    const EventContext& evaluated(std::size_t event_index) const;
    std::vector<std::size_t> malicious_indexes() const;
    /// The detector window holding the first attack event.
    TimeWindow attack_window() const;
};

const ScenarioRun& default_run();

/// Default pipeline configuration run over default_run()'s raised alert.
const PipelineResult& default_explanations();

} // namespace provlens::testing
